#include "ebmc/emc.hpp"

#include <cmath>

#include "ebmc/errors.hpp"
#include "ebmc/losses.hpp"

namespace ebmc::emc {

using ad::Tensor;

void EnergyCoefficients::validate() const {
  if (!(alpha_e >= 0.0) || !(beta_e >= 0.0) || !(gamma_e >= 0.0) || !(lambda_flow >= 0.0) || !(delta_e >= 0.0)) {
    throw ContractError("energy coefficients must be non-negative");
  }
}

double entropy_uncertainty(const Tensor& probs) {
  if (probs.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double row_sum = 0.0, h = 0.0;
    for (std::size_t k = 0; k < probs.cols(); ++k) {
      const double p = probs(i, k);
      if (p < 0.0) throw ContractError("entropy_uncertainty: negative probability in row " + std::to_string(i));
      row_sum += p;
      if (p > 0.0) h -= p * std::log(p);
    }
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw ContractError("entropy_uncertainty: row " + std::to_string(i) + " sums to " + std::to_string(row_sum));
    }
    total += h;
  }
  return total / static_cast<double>(probs.rows());
}

Tensor entropy_rows(const Tensor& logits) {
  return ad::scale(ad::row_sum(ad::mul(ad::softmax_rows(logits), ad::log_softmax_rows(logits))), -1.0);
}

EnergyParts modality_energy(const EnergyCoefficients& coeffs, const Tensor& mean_sq_norm, const Tensor& loss,
                            const Tensor& uncertainty) {
  EnergyParts parts;
  parts.magnitude = ad::scale(mean_sq_norm, coeffs.alpha_e);
  parts.loss = ad::scale(loss, coeffs.beta_e);
  parts.uncertainty = ad::scale(uncertainty, coeffs.gamma_e);
  parts.total = ad::add(ad::add(parts.magnitude, parts.loss), parts.uncertainty);
  return parts;
}

Tensor loss_gap(std::span<const Tensor> energies) {
  if (energies.size() < 2) throw ContractError("loss_gap: need at least 2 modalities");
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t a = 0; a < energies.size(); ++a)
    for (std::size_t b = a + 1; b < energies.size(); ++b)
      total = ad::add(total, ad::square(ad::sub(energies[a], energies[b])));
  return total;
}

namespace {
double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}
}  // namespace

std::vector<double> implicit_weights(std::span<const double> energies) {
  if (energies.size() < 2) throw ContractError("implicit weights: need at least 2 modalities");
  const double mu = mean_of(energies);
  std::vector<double> w;
  for (double e : energies) w.push_back(e - mu);
  return w;
}

std::vector<double> gap_gradient(std::span<const double> energies) {
  auto w = implicit_weights(energies);
  for (double& v : w) v *= 2.0 * static_cast<double>(energies.size());
  return w;
}

std::vector<std::vector<double>> pairwise_gaps(std::span<const double> energies) {
  std::vector<std::vector<double>> g(energies.size(), std::vector<double>(energies.size(), 0.0));
  for (std::size_t a = 0; a < energies.size(); ++a)
    for (std::size_t b = 0; b < energies.size(); ++b) g[a][b] = energies[a] - energies[b];
  return g;
}

double gap_variance(std::span<const double> energies) {
  if (energies.empty()) return 0.0;
  const double mu = mean_of(energies);
  double s = 0.0;
  for (double e : energies) s += (e - mu) * (e - mu);
  return s / static_cast<double>(energies.size());
}

Tensor auxiliary_gradient(const EnergyCoefficients& coeffs, const msd::MsdNetworks& nets, const nn::Bindings& params,
                          std::size_t m, const Tensor& z, std::span<const int> labels, const Tensor& include) {
  if (!(coeffs.beta_e > 0.0 || coeffs.gamma_e > 0.0) || count_included(include) == 0.0)
    return Tensor(z.rows(), z.cols(), 0.0);
  ad::Tape local;
  const auto& mn = nets.modalities.at(m);
  std::vector<std::size_t> used;
  for (const auto* net : {&mn.specific, &mn.teacher})
    for (std::size_t i : net->parameters()) used.push_back(i);
  const nn::Bindings frozen = params.detached(used);
  const Tensor zv = local.variable(z.detach());
  const Tensor lv = mn.teacher.forward(frozen, mn.specific.forward(frozen, zv));
  const Tensor per_row = ad::add(ad::scale(cross_entropy_rows(lv, labels), coeffs.beta_e),
                                 ad::scale(entropy_rows(lv), coeffs.gamma_e));
  return ad::grad_of_scalar_wrt(zv, ad::sum(ad::mul(per_row, include)));
}

Tensor energy_gradient(const EnergyCoefficients& coeffs, const Tensor& z, const Tensor& include,
                       const Tensor& auxiliary) {
  if (auxiliary.rows() != z.rows() || auxiliary.cols() != z.cols())
    throw DimensionError("energy gradient: auxiliary " + auxiliary.shape_string() + " vs z " + z.shape_string());
  return ad::add(ad::scale(ad::scale_rows(z, include), 2.0 * coeffs.alpha_e), auxiliary.detach());
}

Tensor energy_gradient(const EnergyCoefficients& coeffs, const msd::MsdNetworks& nets, const nn::Bindings& params,
                       std::size_t m, const Tensor& z, std::span<const int> labels, const Tensor& include) {
  return energy_gradient(coeffs, z, include, auxiliary_gradient(coeffs, nets, params, m, z, labels, include));
}

ModalityEnergy evaluate_energy(const EnergyCoefficients& coeffs, const msd::MsdNetworks& nets,
                               const nn::Bindings& params, std::size_t m, const msd::DisentangledRep& rep,
                               std::span<const int> labels, const Tensor& include, const Tensor* auxiliary) {
  const Tensor& z = rep.z;
  const Tensor logits = msd::teacher_logits(nets, params, m, rep.z_s);
  ModalityEnergy out;
  out.parts = modality_energy(coeffs, masked_mean(ad::row_sum(ad::square(z)), include),
                              masked_mean(cross_entropy_rows(logits, labels), include),
                              masked_mean(entropy_rows(logits), include));
  out.gradient = auxiliary ? energy_gradient(coeffs, z, include, *auxiliary)
                           : energy_gradient(coeffs, nets, params, m, z, labels, include);
  out.grad_norm_sq = masked_mean(ad::row_sum(ad::square(out.gradient)), include);
  return out;
}

Tensor energy_descent_step(const EnergyCoefficients& coeffs, const Tensor& z, const Tensor& gradient) {
  if (!(coeffs.lambda_flow >= 0.0)) throw ContractError("energy descent: lambda_flow must be non-negative");
  if (coeffs.lambda_flow == 0.0) return z;
  return ad::sub(z, ad::scale(gradient, coeffs.lambda_flow));
}

Tensor loss_emc(const EnergyCoefficients& coeffs, std::span<const Tensor> energies, std::span<const Tensor> grad_norms) {
  Tensor penalty = Tensor::scalar(0.0);
  for (const auto& g : grad_norms) penalty = ad::add(penalty, g);
  return ad::add(loss_gap(energies), ad::scale(penalty, coeffs.delta_e));
}

EnergyReport implicit_weight_report(std::vector<ModalityEnergyRow> rows) {
  std::vector<double> totals;
  for (const auto& r : rows) totals.push_back(r.e_total);
  EnergyReport report;
  report.e_mean = mean_of(totals);
  report.implicit_weights = implicit_weights(totals);
  report.pairwise_gaps = pairwise_gaps(totals);
  for (std::size_t m = 0; m < rows.size(); ++m) rows[m].implicit_weight = report.implicit_weights[m];
  report.modalities = std::move(rows);
  return report;
}

}  // namespace ebmc::emc
