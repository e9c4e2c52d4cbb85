#pragma once

// Synthetic multimodal benchmark with a known Gaussian class-conditional model.
//
// For class y, modality m emits x = snr_m * mu_{m,y} + noise_m * N(0, I), where
// the class means mu_{m,y} are unit-norm simplex corners (equal pairwise inner
// product -1/(K-1)) rotated into R^{d_m} by a seeded orthogonal map. Because the
// model is known, the Bayes-optimal classifier is computed exactly.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ebmc/autodiff.hpp"

namespace ebmc::data {

struct ModalitySpec {
  std::string name;
  std::size_t dim = 0;
  double snr = 0.0;
  double noise = 1.0;
};

struct GeneratorSpec {
  std::size_t num_classes = 4;
  std::vector<ModalitySpec> modalities;
  std::size_t samples_per_class = 500;
  std::uint64_t seed = 0;
  bool regression = false;

  /// Throws ContractError on |M| < 2, K < 2, d_m < max(2, K - 1), negative snr
  /// or non-positive noise.
  void validate() const;

  /// One strong modality (snr 2.0) and two weak ones (snr 0.6), noise 1.0,
  /// dims 16/8/8, K = 4.
  static GeneratorSpec default_imbalanced(std::uint64_t seed);
};

class BoolMatrix {
 public:
  BoolMatrix() = default;
  BoolMatrix(std::size_t rows, std::size_t cols, bool fill) : rows_(rows), cols_(cols), bits_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { bits_[r * cols_ + c] = v ? 1 : 0; }
  std::size_t count() const;
  std::size_t count_row(std::size_t r) const;
  bool operator==(const BoolMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// 1.0/0.0 column for column m of a mask, rows x 1.
ad::Tensor mask_column(const BoolMatrix& mask, std::size_t m);

struct MultimodalBatch {
  std::vector<std::string> modalities;      // fixed layout order
  std::vector<ad::Tensor> features;         // per modality, n x d_m
  std::vector<int> labels;                  // class indices, always present
  std::vector<double> scores;               // regression targets in [-3, 3]; empty in classification
  BoolMatrix present;                       // n x |M|
  std::vector<BoolMatrix> feature_mask;     // per modality, n x d_m; false where zeroed

  std::size_t size() const { return labels.size(); }
  std::size_t num_modalities() const { return modalities.size(); }
  bool regression() const { return !scores.empty(); }
  /// Index of a modality by name; throws ContractError if unknown.
  std::size_t index_of(const std::string& name) const;
  /// 1.0/0.0 column for the presence of modality m, n x 1.
  ad::Tensor present_column(std::size_t m) const;
  /// Checks every structural invariant; throws ContractError on violation.
  void validate() const;
};

/// Unit-norm class means per modality, K x d_m (before snr scaling).
std::vector<ad::Tensor> class_means(const GeneratorSpec& spec);

/// Draws n samples. `stream` selects an independent sample stream (e.g. 0 for
/// train, 1 for test) over the same class geometry.
MultimodalBatch generate(const GeneratorSpec& spec, std::size_t n, std::uint64_t stream = 0);

/// Keeps only the named modalities; the rest are zeroed and marked absent.
MultimodalBatch apply_modality_missing(const MultimodalBatch& batch, std::span<const std::string> keep);

/// Zeroes each entry of present rows independently with probability p in [0, 1).
MultimodalBatch apply_feature_dropout(const MultimodalBatch& batch, double p, std::uint64_t seed);

/// Additive Gaussian noise on one modality's present rows.
MultimodalBatch apply_additive_noise(const MultimodalBatch& batch, const std::string& modality, double scale,
                                     std::uint64_t seed);

MultimodalBatch select_rows(const MultimodalBatch& batch, std::span<const std::size_t> rows);
MultimodalBatch concat(std::span<const MultimodalBatch> parts);

/// All non-empty subsets of the batch's modalities, in bitmask order.
std::vector<std::vector<std::string>> nonempty_subsets(std::span<const std::string> modalities);
/// "text+visual" style key, in layout order.
std::string subset_key(std::span<const std::string> subset);

struct BayesOracleReport {
  double bayes_accuracy_full = 0.0;
  std::map<std::string, double> bayes_accuracy_per_subset;
};

/// Accuracy of the exact argmax-posterior classifier using only `subset`.
/// Absent modalities and dropped features are marginalized out.
double bayes_accuracy(const GeneratorSpec& spec, const MultimodalBatch& batch, std::span<const std::string> subset);

/// Per-sample exact posterior argmax for `subset`.
std::vector<int> bayes_predict(const GeneratorSpec& spec, const MultimodalBatch& batch,
                               std::span<const std::string> subset);

BayesOracleReport bayes_oracle(const GeneratorSpec& spec, const MultimodalBatch& batch);

/// Directory layout: <modality>.csv (header f0..f{d-1}), labels.csv, masks.csv.
/// `header` is written as a leading "# ..." comment line in every file.
void write_batch(const MultimodalBatch& batch, const std::filesystem::path& dir, const std::string& header);
MultimodalBatch read_batch(const std::filesystem::path& dir);

}  // namespace ebmc::data
