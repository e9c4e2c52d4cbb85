#pragma once

// Typed run settings and their key = value form.

#include <cstdint>
#include <set>
#include <string>

#include "ebmc/cce.hpp"
#include "ebmc/config.hpp"
#include "ebmc/dims.hpp"
#include "ebmc/emc.hpp"
#include "ebmc/fusion.hpp"
#include "ebmc/imtd.hpp"
#include "ebmc/synthetic.hpp"

namespace ebmc {

enum class Module { Msd, Cce, Emc, Imtd };

const char* to_string(Module m);
/// Case-insensitive "msd", "cce", "emc", "imtd". Throws ConfigError otherwise.
Module parse_module(const std::string& name);
/// Comma list; empty string gives the empty set.
std::set<Module> parse_module_list(const std::string& list);
std::string format_module_list(const std::set<Module>& modules);

struct TrainConfig {
  std::size_t stage1_epochs = 60;
  std::size_t stage2_epochs = 60;
  double learning_rate = 1e-3;
  double momentum = 0.0;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool stage2_freeze_stage1 = false;
  bool keep_stage1_losses = true;
  std::set<Module> disabled;

  fusion::ObjectiveWeights objective;
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  double tau_inv = 0.1;
  double gamma_cce = 0.1;
  double noise_scale = 0.1;
  emc::EnergyCoefficients energy;
  imtd::DistillConfig distill;
  ModelDims dims;

  bool enabled(Module m) const { return disabled.count(m) == 0; }

  /// Throws ContractError: epochs >= 1, batch_size >= 2, learning_rate > 0
  /// (0 allowed only via allow_zero_lr), momentum in [0, 1), weights >= 0.
  void validate(bool allow_zero_lr = false) const;

  /// Required: train.stage1_epochs, train.stage2_epochs, train.learning_rate,
  /// train.batch_size. Unknown keys are rejected. Throws ConfigError.
  static TrainConfig from_config(const config::KeyValueConfig& kv);
  /// Every key with its resolved value.
  config::KeyValueConfig to_config() const;
};

/// [data] num_classes, samples_per_class, seed, regression, modalities;
/// [modality.<name>] dim, snr, noise.
data::GeneratorSpec generator_spec_from_config(const config::KeyValueConfig& kv);
config::KeyValueConfig generator_spec_to_config(const data::GeneratorSpec& spec);

}  // namespace ebmc
