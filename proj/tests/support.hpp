#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ebmc/autodiff.hpp"
#include "ebmc/settings.hpp"
#include "ebmc/synthetic.hpp"
#include "ebmc/trainer.hpp"

namespace ebmc::testing {

inline ad::Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = n(rng);
  return ad::Tensor(rows, cols, std::move(v));
}

inline std::vector<int> random_labels(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, static_cast<int>(k) - 1);
  std::vector<int> out(n);
  for (int& y : out) y = d(rng);
  return out;
}

/// Three modalities of widths 4, 3, 3 and K = 3.
inline data::GeneratorSpec micro_spec(std::uint64_t seed) {
  data::GeneratorSpec spec;
  spec.num_classes = 3;
  spec.modalities = {{"text", 4, 1.5, 1.0}, {"audio", 3, 0.8, 1.0}, {"visual", 3, 0.8, 1.0}};
  spec.samples_per_class = 4;
  spec.seed = seed;
  return spec;
}

inline ModelDims micro_dims() {
  ModelDims d;
  d.mlp_hidden = 5;
  d.rep = 4;
  d.shared = 3;
  d.specific = 3;
  d.noise = 2;
  d.fusion_hidden = 4;
  return d;
}

/// Marks modality m absent on the given rows, zeroing features and masks.
inline data::MultimodalBatch drop_rows(data::MultimodalBatch batch, std::size_t m, const std::vector<std::size_t>& rows) {
  auto x = batch.features[m].mutable_data();
  const std::size_t d = batch.features[m].cols();
  for (std::size_t i : rows) {
    batch.present.set(i, m, false);
    for (std::size_t j = 0; j < d; ++j) {
      x[i * d + j] = 0.0;
      batch.feature_mask[m].set(i, j, false);
    }
  }
  return batch;
}

/// n samples; sample 1 has only its first modality, sample 2 lacks its last.
inline data::MultimodalBatch micro_batch(std::size_t n, std::uint64_t seed, bool with_missing = true) {
  auto batch = data::generate(micro_spec(seed), n, 0);
  if (with_missing && n >= 3) {
    batch = drop_rows(batch, 1, {1});
    batch = drop_rows(batch, 2, {1, 2});
  }
  return batch;
}

inline TrainConfig micro_config(std::uint64_t seed) {
  TrainConfig c;
  c.stage1_epochs = 2;
  c.stage2_epochs = 2;
  c.batch_size = 8;
  c.learning_rate = 0.01;
  c.seed = seed;
  c.dims = micro_dims();
  return c;
}

inline train::Model micro_model(const data::MultimodalBatch& batch, std::uint64_t seed) {
  return train::Model::for_batch(batch, 3, micro_dims(), seed);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ebmc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ebmc::testing
