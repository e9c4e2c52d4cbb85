#pragma once

// Fusion head: masked concatenation of per-modality slots, a two-layer
// perceptron and the task loss. Also assembles the weighted training
// objective.

#include <random>
#include <span>
#include <vector>

#include "ebmc/autodiff.hpp"
#include "ebmc/dims.hpp"
#include "ebmc/metrics.hpp"
#include "ebmc/nn.hpp"
#include "ebmc/synthetic.hpp"

namespace ebmc::fusion {

enum class TaskMode { Classification, Regression };

/// Input layout: one slot per modality in batch order, slot m = [z~_m | z_c_m]
/// (width h + h_c). Rows of absent modalities are zeroed at the concat.
struct FusionNetworks {
  nn::Mlp head;  // |M| * slot_width -> h_f (tanh) -> K
  std::size_t num_modalities = 0;
  std::size_t slot_width = 0;
  std::size_t num_classes = 0;
  TaskMode mode = TaskMode::Classification;

  static FusionNetworks create(nn::ParamStore& store, std::size_t num_modalities, std::size_t num_classes,
                               const ModelDims& dims, TaskMode mode, std::mt19937_64& rng);
};

struct FusionOutput {
  ad::Tensor z_fusion;  // n x h_f
  ad::Tensor logits;    // n x K
};

/// One slot input per modality.
struct SlotInput {
  ad::Tensor enhanced;  // n x h
  ad::Tensor shared;    // n x h_c
};

/// Throws DimensionError on any slot or mask shape mismatch.
FusionOutput fuse_predict(const FusionNetworks& nets, const nn::Bindings& params, std::span<const SlotInput> slots,
                          const data::BoolMatrix& present);

/// Score value of each of the K logit bins, evenly spaced on [-3, 3].
std::vector<double> score_grid(std::size_t num_classes);
/// Regression prediction: sum_k softmax(logits)_k * grid_k, n x 1.
ad::Tensor expected_scores(const ad::Tensor& logits);

/// Per-row task loss, n x 1: cross-entropy or absolute score error.
ad::Tensor task_loss_rows(const ad::Tensor& logits, std::span<const int> labels, std::span<const double> scores,
                          TaskMode mode);

/// Classification: mean cross-entropy. Regression: mean absolute error of
/// expected_scores against `scores`.
ad::Tensor loss_task(const ad::Tensor& logits, std::span<const int> labels, std::span<const double> scores,
                     TaskMode mode);

/// Argmax per row, first index on ties.
std::vector<int> predict_classes(const ad::Tensor& logits);

metrics::MetricRecord evaluate(const ad::Tensor& logits, std::span<const int> labels,
                               std::span<const double> scores, TaskMode mode);

struct ObjectiveWeights {
  double zeta = 0.5;     // MSD
  double beta_w = 0.1;   // CCE
  double gamma_w = 0.1;  // EMC
  double eta_w = 0.1;    // IMTD

  /// Throws ContractError on a negative weight.
  void validate() const;
};

struct TotalLossParts {
  ad::Tensor l_task;
  ad::Tensor l_msd;
  ad::Tensor l_cce;
  ad::Tensor l_emc;
  ad::Tensor l_imtd;
  ad::Tensor l_total;
};

/// l_total = l_task + zeta*l_msd + beta*l_cce + gamma*l_emc + eta*l_imtd.
/// Pass a detached zero for a term that is off.
TotalLossParts total_loss(const ObjectiveWeights& weights, ad::Tensor l_task, ad::Tensor l_msd, ad::Tensor l_cce,
                          ad::Tensor l_emc, ad::Tensor l_imtd);

}  // namespace ebmc::fusion
