#pragma once

// Energy-guided modality coordination.
//
// Each modality gets a scalar energy
//   E(m) = alpha_e * mean ||z||^2 + beta_e * teacher CE + gamma_e * mean entropy
// (means over present rows). The gap loss sums (E(a) - E(b))^2 over unordered
// pairs, so dL/dE(m) = 2 * sum_{b != m} (E(m) - E(b)) = 2 |M| (E(m) - mean E).
// During the forward pass each representation takes one descent step
// z <- z - lambda_flow * dE_i/dz_i on its per-sample energy.

#include <span>
#include <string>
#include <vector>

#include "ebmc/autodiff.hpp"
#include "ebmc/msd.hpp"
#include "ebmc/nn.hpp"

namespace ebmc::emc {

struct EnergyCoefficients {
  double alpha_e = 1.0;
  double beta_e = 1.0;
  double gamma_e = 1.0;
  double lambda_flow = 0.05;
  double delta_e = 0.1;

  /// Throws ContractError on a negative coefficient.
  void validate() const;
};

/// Mean Shannon entropy (natural log) of probability rows, 0 log 0 = 0.
/// Throws ContractError if a row sum is off by more than 1e-6.
double entropy_uncertainty(const ad::Tensor& probs);

/// Differentiable per-row entropy of softmax(logits), n x 1.
ad::Tensor entropy_rows(const ad::Tensor& logits);

struct EnergyParts {
  ad::Tensor magnitude;    // alpha_e * mean ||z||^2
  ad::Tensor loss;         // beta_e * l_m
  ad::Tensor uncertainty;  // gamma_e * u_m
  ad::Tensor total;        // magnitude + loss + uncertainty
};

/// Scalars in, weighted components and their sum out.
EnergyParts modality_energy(const EnergyCoefficients& coeffs, const ad::Tensor& mean_sq_norm, const ad::Tensor& loss,
                            const ad::Tensor& uncertainty);

/// Sum over unordered pairs of squared energy differences. Needs >= 2 entries.
ad::Tensor loss_gap(std::span<const ad::Tensor> energies);

/// 2 |M| (E(m) - mean E): the gradient of loss_gap in closed form.
std::vector<double> gap_gradient(std::span<const double> energies);
/// E(m) - mean E.
std::vector<double> implicit_weights(std::span<const double> energies);
/// |M| x |M| matrix of E(a) - E(b).
std::vector<std::vector<double>> pairwise_gaps(std::span<const double> energies);
/// Population variance.
double gap_variance(std::span<const double> energies);

struct ModalityEnergy {
  EnergyParts parts;
  ad::Tensor gradient;      // n x h, per-sample dE_i/dz_i, zero on excluded rows
  ad::Tensor grad_norm_sq;  // mean over included rows of ||gradient_i||^2
};

/// Per-sample gradient of the loss and entropy terms of E(m) with respect to
/// z, n x h, computed on a private tape and returned detached. Zero on
/// excluded rows.
ad::Tensor auxiliary_gradient(const EnergyCoefficients& coeffs, const msd::MsdNetworks& nets,
                              const nn::Bindings& params, std::size_t m, const ad::Tensor& z,
                              std::span<const int> labels, const ad::Tensor& include);

/// 2 alpha_e z on included rows (differentiable) plus `auxiliary` (constant).
ad::Tensor energy_gradient(const EnergyCoefficients& coeffs, const ad::Tensor& z, const ad::Tensor& include,
                           const ad::Tensor& auxiliary);
/// Same, with the auxiliary part computed from z.
ad::Tensor energy_gradient(const EnergyCoefficients& coeffs, const msd::MsdNetworks& nets,
                           const nn::Bindings& params, std::size_t m, const ad::Tensor& z,
                           std::span<const int> labels, const ad::Tensor& include);

/// Energy of modality m over the rows flagged in `include` (n x 1, 0/1).
///
/// The energy itself is differentiable through `params`. Of the gradient,
/// only the 2 alpha_e z part stays on the tape; the loss and entropy parts
/// enter as constants, taken from `auxiliary` when given.
ModalityEnergy evaluate_energy(const EnergyCoefficients& coeffs, const msd::MsdNetworks& nets,
                               const nn::Bindings& params, std::size_t m, const msd::DisentangledRep& rep,
                               std::span<const int> labels, const ad::Tensor& include,
                               const ad::Tensor* auxiliary = nullptr);

/// z - lambda_flow * gradient.
ad::Tensor energy_descent_step(const EnergyCoefficients& coeffs, const ad::Tensor& z, const ad::Tensor& gradient);

/// loss_gap(energies) + delta_e * sum of grad_norms.
ad::Tensor loss_emc(const EnergyCoefficients& coeffs, std::span<const ad::Tensor> energies,
                    std::span<const ad::Tensor> grad_norms);

struct ModalityEnergyRow {
  std::string modality;
  double e_magnitude = 0.0;
  double e_loss = 0.0;
  double e_uncertainty = 0.0;
  double e_total = 0.0;
  double grad_norm_sq = 0.0;
  double implicit_weight = 0.0;
};

struct EnergyReport {
  std::vector<ModalityEnergyRow> modalities;
  double e_mean = 0.0;
  std::vector<std::vector<double>> pairwise_gaps;
  std::vector<double> implicit_weights;
};

/// Fills mean, gaps and implicit weights from the per-modality rows.
EnergyReport implicit_weight_report(std::vector<ModalityEnergyRow> rows);

}  // namespace ebmc::emc
