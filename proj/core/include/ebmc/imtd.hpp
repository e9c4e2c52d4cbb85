#pragma once

// Instance-aware trust distillation. Each frozen teacher's predictive
// variance under small input perturbations becomes a per-sample confidence
// c = exp(-sigma) and reliability rho = 1 / log(1 + ||var||_1); their product,
// normalized over present modalities, weights a KL term pulling the fused
// student toward each teacher.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ebmc/autodiff.hpp"
#include "ebmc/synthetic.hpp"

namespace ebmc::imtd {

struct DistillConfig {
  double tau_kd = 2.0;
  std::size_t mc_passes = 8;
  double perturbation = 0.05;  // std of the Gaussian input noise per pass

  /// Throws ContractError on tau_kd <= 0, mc_passes < 2 or negative perturbation.
  void validate() const;
};

struct TeacherStatistics {
  ad::Tensor mean_probs;      // n x K, mean of the per-pass probabilities
  ad::Tensor variance;        // n x K, per-class population variance across passes
  std::vector<double> sigma;  // per sample, mean of the variance row
  std::vector<double> variance_l1;
};

/// Statistics from already computed per-pass probability matrices.
/// Throws ContractError with fewer than 2 passes.
TeacherStatistics statistics_from_passes(std::span<const ad::Tensor> pass_probs);

/// Runs `teacher` (logits from inputs) on z_s + perturbation * N(0, I) for
/// mc_passes passes. The noise draw depends on `seed` only.
TeacherStatistics teacher_statistics(const std::function<ad::Tensor(const ad::Tensor&)>& teacher,
                                     const ad::Tensor& z_s, std::size_t mc_passes, double perturbation,
                                     std::uint64_t seed);

/// Per-sample, per-modality weights, row-major n x |M|.
struct TrustWeights {
  std::size_t samples = 0;
  std::size_t modalities = 0;
  std::vector<double> sigma;
  std::vector<double> confidence;
  std::vector<double> reliability;
  std::vector<double> alpha;

  double at(const std::vector<double>& field, std::size_t i, std::size_t m) const { return field[i * modalities + m]; }
  /// alpha column m as an n x 1 tensor.
  ad::Tensor alpha_column(std::size_t m) const;
};

/// Smallest ||var||_1 used in rho; keeps rho finite for a deterministic teacher.
inline constexpr double kMinVarianceL1 = 1e-12;

/// sigma and variance_l1 are n x |M|. Absent modalities get alpha 0; alpha is
/// renormalized over the present ones. Throws ContractError if a sample has
/// no present modality or a sigma is negative.
TrustWeights trust_weights(const ad::Tensor& sigma, const ad::Tensor& variance_l1, const data::BoolMatrix& present);

/// mean_i sum_m alpha[i,m] * KL(softmax(student_i / tau) || softmax(teacher_m,i / tau)).
/// Teacher logits are used detached.
ad::Tensor loss_imtd(const TrustWeights& weights, const ad::Tensor& student_logits,
                     std::span<const ad::Tensor> teacher_logits, double tau_kd);

struct TrustSummaryRow {
  std::string modality;
  double mean_sigma = 0.0;
  double mean_c = 0.0;
  double mean_rho = 0.0;
  double mean_alpha = 0.0;
};

/// Means over rows where each modality is present.
std::vector<TrustSummaryRow> trust_summary(const TrustWeights& weights, const data::BoolMatrix& present,
                                           std::span<const std::string> names);

}  // namespace ebmc::imtd
