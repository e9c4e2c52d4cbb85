#include "ebmc/imtd.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ebmc/errors.hpp"

namespace ebmc::imtd {

using ad::Tensor;

void DistillConfig::validate() const {
  if (!(tau_kd > 0.0)) throw ContractError("distill: tau_kd must be positive");
  if (mc_passes < 2) throw ContractError("distill: mc_passes must be at least 2");
  if (!(perturbation >= 0.0)) throw ContractError("distill: perturbation must be non-negative");
}

TeacherStatistics statistics_from_passes(std::span<const Tensor> pass_probs) {
  if (pass_probs.size() < 2) throw ContractError("teacher_statistics: need at least 2 passes");
  const std::size_t n = pass_probs[0].rows(), k = pass_probs[0].cols();
  const double passes = static_cast<double>(pass_probs.size());
  std::vector<double> mean(n * k, 0.0), var(n * k, 0.0);
  for (const auto& p : pass_probs) {
    if (p.rows() != n || p.cols() != k) throw DimensionError("teacher_statistics: pass shape mismatch");
    for (std::size_t j = 0; j < n * k; ++j) mean[j] += p.data()[j];
  }
  for (double& v : mean) v /= passes;
  for (const auto& p : pass_probs)
    for (std::size_t j = 0; j < n * k; ++j) {
      const double d = p.data()[j] - mean[j];
      var[j] += d * d;
    }
  for (double& v : var) v /= passes;

  TeacherStatistics stats;
  stats.sigma.resize(n);
  stats.variance_l1.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double l1 = 0.0;
    for (std::size_t c = 0; c < k; ++c) l1 += var[i * k + c];
    stats.variance_l1[i] = l1;
    stats.sigma[i] = l1 / static_cast<double>(k);
  }
  stats.mean_probs = Tensor(n, k, std::move(mean));
  stats.variance = Tensor(n, k, std::move(var));
  return stats;
}

TeacherStatistics teacher_statistics(const std::function<Tensor(const Tensor&)>& teacher, const Tensor& z_s,
                                     std::size_t mc_passes, double perturbation, std::uint64_t seed) {
  if (mc_passes < 2) throw ContractError("teacher_statistics: mc_passes must be at least 2");
  if (!(perturbation >= 0.0)) throw ContractError("teacher_statistics: perturbation must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Tensor base = z_s.detach();
  std::vector<Tensor> passes;
  for (std::size_t p = 0; p < mc_passes; ++p) {
    Tensor noisy = base;
    if (perturbation > 0.0)
      for (double& v : noisy.mutable_data()) v += perturbation * normal(rng);
    passes.push_back(ad::softmax_rows(teacher(noisy).detach()));
  }
  return statistics_from_passes(passes);
}

Tensor TrustWeights::alpha_column(std::size_t m) const {
  Tensor col(samples, 1, 0.0);
  auto d = col.mutable_data();
  for (std::size_t i = 0; i < samples; ++i) d[i] = alpha[i * modalities + m];
  return col;
}

TrustWeights trust_weights(const Tensor& sigma, const Tensor& variance_l1, const data::BoolMatrix& present) {
  const std::size_t n = present.rows(), M = present.cols();
  if (sigma.rows() != n || sigma.cols() != M || variance_l1.rows() != n || variance_l1.cols() != M) {
    throw DimensionError("trust_weights: expected " + std::to_string(n) + "x" + std::to_string(M) + " inputs, got " +
                         sigma.shape_string() + " and " + variance_l1.shape_string());
  }
  TrustWeights w;
  w.samples = n;
  w.modalities = M;
  w.sigma.assign(n * M, 0.0);
  w.confidence.assign(n * M, 0.0);
  w.reliability.assign(n * M, 0.0);
  w.alpha.assign(n * M, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (present.count_row(i) == 0) throw ContractError("trust_weights: sample " + std::to_string(i) + " has no modality");
    double norm = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t j = i * M + m;
      const double s = sigma(i, m);
      if (!(s >= 0.0)) throw ContractError("trust_weights: negative sigma at sample " + std::to_string(i));
      w.sigma[j] = s;
      w.confidence[j] = std::exp(-s);
      w.reliability[j] = 1.0 / std::log1p(std::max(variance_l1(i, m), kMinVarianceL1));
      if (present(i, m)) norm += w.confidence[j] * w.reliability[j];
    }
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t j = i * M + m;
      if (present(i, m)) w.alpha[j] = w.confidence[j] * w.reliability[j] / norm;
    }
  }
  return w;
}

Tensor loss_imtd(const TrustWeights& weights, const Tensor& student_logits, std::span<const Tensor> teacher_logits,
                 double tau_kd) {
  if (!(tau_kd > 0.0)) throw ContractError("loss_imtd: tau_kd must be positive");
  if (teacher_logits.size() != weights.modalities) throw DimensionError("loss_imtd: teacher count mismatch");
  if (student_logits.rows() != weights.samples) throw DimensionError("loss_imtd: sample count mismatch");
  const Tensor log_student = ad::log_softmax_rows(student_logits, tau_kd);
  const Tensor student = ad::softmax_rows(student_logits, tau_kd);
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t m = 0; m < weights.modalities; ++m) {
    if (teacher_logits[m].rows() != student_logits.rows() || teacher_logits[m].cols() != student_logits.cols()) {
      throw DimensionError("loss_imtd: teacher " + teacher_logits[m].shape_string() + " vs student " +
                           student_logits.shape_string());
    }
    const Tensor log_teacher = ad::log_softmax_rows(teacher_logits[m].detach(), tau_kd);
    const Tensor kl = ad::row_sum(ad::mul(student, ad::sub(log_student, log_teacher)));
    total = ad::add(total, ad::sum(ad::scale_rows(kl, weights.alpha_column(m))));
  }
  return ad::scale(total, 1.0 / static_cast<double>(weights.samples));
}

std::vector<TrustSummaryRow> trust_summary(const TrustWeights& weights, const data::BoolMatrix& present,
                                           std::span<const std::string> names) {
  std::vector<TrustSummaryRow> rows;
  for (std::size_t m = 0; m < weights.modalities; ++m) {
    TrustSummaryRow r;
    r.modality = names[m];
    double count = 0.0;
    for (std::size_t i = 0; i < weights.samples; ++i) {
      if (!present(i, m)) continue;
      count += 1.0;
      r.mean_sigma += weights.at(weights.sigma, i, m);
      r.mean_c += weights.at(weights.confidence, i, m);
      r.mean_rho += weights.at(weights.reliability, i, m);
      r.mean_alpha += weights.at(weights.alpha, i, m);
    }
    if (count > 0.0) {
      r.mean_sigma /= count;
      r.mean_c /= count;
      r.mean_rho /= count;
      r.mean_alpha /= count;
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace ebmc::imtd
