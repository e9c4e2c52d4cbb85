#include "ebmc/fusion.hpp"

#include <string>

#include "ebmc/errors.hpp"
#include "ebmc/losses.hpp"

namespace ebmc::fusion {

using ad::Tensor;

FusionNetworks FusionNetworks::create(nn::ParamStore& store, std::size_t num_modalities, std::size_t num_classes,
                                      const ModelDims& dims, TaskMode mode, std::mt19937_64& rng) {
  if (num_classes < 2) throw ContractError("fusion: need at least 2 output bins");
  FusionNetworks nets;
  nets.num_modalities = num_modalities;
  nets.slot_width = dims.rep + dims.shared;
  nets.num_classes = num_classes;
  nets.mode = mode;
  nets.head = nn::Mlp::create(store, "fusion.head", num_modalities * nets.slot_width, dims.fusion_hidden,
                              num_classes, nn::ParamGroup::Fusion, rng);
  return nets;
}

FusionOutput fuse_predict(const FusionNetworks& nets, const nn::Bindings& params, std::span<const SlotInput> slots,
                          const data::BoolMatrix& present) {
  if (slots.size() != nets.num_modalities) {
    throw DimensionError("fuse_predict: " + std::to_string(slots.size()) + " slots, head expects " +
                         std::to_string(nets.num_modalities));
  }
  const std::size_t n = present.rows();
  if (present.cols() != nets.num_modalities) throw DimensionError("fuse_predict: mask column count mismatch");
  std::vector<Tensor> parts;
  for (std::size_t m = 0; m < slots.size(); ++m) {
    const Tensor joined = ad::concat_cols(std::vector<Tensor>{slots[m].enhanced, slots[m].shared});
    if (joined.rows() != n || joined.cols() != nets.slot_width) {
      throw DimensionError("fuse_predict: slot " + std::to_string(m) + " is " + joined.shape_string() +
                           ", expected " + std::to_string(n) + "x" + std::to_string(nets.slot_width));
    }
    parts.push_back(ad::scale_rows(joined, data::mask_column(present, m)));
  }
  FusionOutput out;
  out.logits = nets.head.forward(params, ad::concat_cols(parts), out.z_fusion);
  return out;
}

std::vector<double> score_grid(std::size_t num_classes) {
  std::vector<double> grid(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k)
    grid[k] = -3.0 + 6.0 * static_cast<double>(k) / static_cast<double>(num_classes - 1);
  return grid;
}

Tensor expected_scores(const Tensor& logits) {
  const auto grid = score_grid(logits.cols());
  return ad::matmul(ad::softmax_rows(logits), Tensor(logits.cols(), 1, grid));
}

Tensor task_loss_rows(const Tensor& logits, std::span<const int> labels, std::span<const double> scores,
                      TaskMode mode) {
  if (mode == TaskMode::Classification) {
    if (labels.size() != logits.rows()) throw DimensionError("loss_task: label count mismatch");
    return cross_entropy_rows(logits, labels);
  }
  if (scores.size() != logits.rows()) throw DimensionError("loss_task: score count mismatch");
  const Tensor target(logits.rows(), 1, std::vector<double>(scores.begin(), scores.end()));
  return ad::abs(ad::sub(expected_scores(logits), target));
}

Tensor loss_task(const Tensor& logits, std::span<const int> labels, std::span<const double> scores, TaskMode mode) {
  return ad::mean(task_loss_rows(logits, labels, scores, mode));
}

std::vector<int> predict_classes(const Tensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.cols(); ++k)
      if (logits(i, k) > logits(i, best)) best = k;
    out[i] = static_cast<int>(best);
  }
  return out;
}

metrics::MetricRecord evaluate(const Tensor& logits, std::span<const int> labels, std::span<const double> scores,
                               TaskMode mode) {
  if (mode == TaskMode::Classification) {
    return metrics::evaluate_classification(predict_classes(logits), labels, logits.cols());
  }
  const Tensor pred = expected_scores(logits.detach());
  return metrics::evaluate_regression(pred.data(), scores);
}

void ObjectiveWeights::validate() const {
  if (!(zeta >= 0.0) || !(beta_w >= 0.0) || !(gamma_w >= 0.0) || !(eta_w >= 0.0)) {
    throw ContractError("objective weights must be non-negative");
  }
}

TotalLossParts total_loss(const ObjectiveWeights& weights, Tensor l_task, Tensor l_msd, Tensor l_cce, Tensor l_emc,
                          Tensor l_imtd) {
  weights.validate();
  TotalLossParts parts;
  Tensor total = ad::add(l_task, ad::scale(l_msd, weights.zeta));
  total = ad::add(total, ad::scale(l_cce, weights.beta_w));
  total = ad::add(total, ad::scale(l_emc, weights.gamma_w));
  parts.l_total = ad::add(total, ad::scale(l_imtd, weights.eta_w));
  parts.l_task = std::move(l_task);
  parts.l_msd = std::move(l_msd);
  parts.l_cce = std::move(l_cce);
  parts.l_emc = std::move(l_emc);
  parts.l_imtd = std::move(l_imtd);
  return parts;
}

}  // namespace ebmc::fusion
