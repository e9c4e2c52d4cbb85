#pragma once

// Cross-modal complementary enhancement: each modality's representation is
// regenerated from its own shared component, the other modalities' shared and
// specific components, and an optional noise input.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ebmc/autodiff.hpp"
#include "ebmc/dims.hpp"
#include "ebmc/fusion.hpp"
#include "ebmc/msd.hpp"
#include "ebmc/nn.hpp"
#include "ebmc/synthetic.hpp"

namespace ebmc::cce {

/// Generator input per modality m:
///   [z_c_m | mean of other present z_c | mean of other present z_s | eps]
/// with eps ~ N(0, noise_scale^2) of width dims.noise. Output width h.
struct CceNetworks {
  std::vector<nn::Mlp> generators;
  ModelDims dims;
  double noise_scale = 0.1;
  double gamma_cce = 0.1;

  static CceNetworks create(nn::ParamStore& store, std::span<const std::string> names, const ModelDims& dims,
                            std::mt19937_64& rng);
};

/// Rows where modality m is present and at least one other modality is
/// present; other present rows pass z through unchanged.
data::BoolMatrix enhanced_rows(const data::BoolMatrix& present);

/// z~ for every modality, n x h each. Absent rows are zero. The noise draw is
/// a function of `seed` only; noise_scale 0 gives a deterministic output.
std::vector<ad::Tensor> enhance(const CceNetworks& nets, const nn::Bindings& params,
                                std::span<const msd::DisentangledRep> reps, const data::BoolMatrix& present,
                                double noise_scale, std::uint64_t seed);

struct CceLossParts {
  ad::Tensor l_rec;
  ad::Tensor l_task_enh;
  ad::Tensor l_cce;  // l_rec + gamma_cce * l_task_enh
  double gamma_cce = 0.1;
};

/// l_rec: mean over modalities of the mean squared distance ||z~_m - z_m||^2
/// over enhanced rows. l_task_enh: mean over modalities of the task loss of
/// the fusion head fed z~_m in slot m and the unenhanced z in every other
/// slot, over enhanced rows.
CceLossParts loss_cce(std::span<const ad::Tensor> enhanced, std::span<const msd::DisentangledRep> reps,
                      const fusion::FusionNetworks& head, const nn::Bindings& params, std::span<const int> labels,
                      std::span<const double> scores, const data::BoolMatrix& present, double gamma_cce = 0.1);

/// Exact l_rec + gamma * l_task_enh. Throws ContractError on negative gamma.
CceLossParts combine(ad::Tensor l_rec, ad::Tensor l_task_enh, double gamma_cce);

}  // namespace ebmc::cce
