#pragma once

// Modality semantic disentanglement: each modality's representation z is split
// into a shared component z_c (aligned across modalities by InfoNCE) and a
// specific component z_s (decorrelated across modalities, and kept predictive
// through a unimodal teacher head).

#include <random>
#include <span>
#include <string>
#include <vector>

#include "ebmc/autodiff.hpp"
#include "ebmc/dims.hpp"
#include "ebmc/nn.hpp"
#include "ebmc/synthetic.hpp"

namespace ebmc::msd {

struct ModalityNets {
  nn::Mlp encoder;   // d_m -> h
  nn::Mlp shared;    // h -> h_c
  nn::Mlp specific;  // h -> h_s
  nn::Mlp teacher;   // h_s -> K
};

struct MsdNetworks {
  std::vector<ModalityNets> modalities;
  std::vector<std::size_t> input_dims;
  std::size_t num_classes = 0;
  ModelDims dims;

  static MsdNetworks create(nn::ParamStore& store, std::span<const std::string> names,
                            std::span<const std::size_t> input_dims, std::size_t num_classes, const ModelDims& dims,
                            std::mt19937_64& rng);
};

struct DisentangledRep {
  ad::Tensor z;    // n x h, zero on absent rows
  ad::Tensor z_c;  // n x h_c
  ad::Tensor z_s;  // n x h_s
};

/// Encoder output for modality m with absent rows zeroed.
ad::Tensor encode(const MsdNetworks& nets, const nn::Bindings& params, const data::MultimodalBatch& batch,
                  std::size_t m);
/// Shared/specific split of an existing representation.
DisentangledRep decompose(const MsdNetworks& nets, const nn::Bindings& params, std::size_t m, const ad::Tensor& z);
std::vector<DisentangledRep> disentangle(const MsdNetworks& nets, const nn::Bindings& params,
                                         const data::MultimodalBatch& batch);

ad::Tensor teacher_logits(const MsdNetworks& nets, const nn::Bindings& params, std::size_t m, const ad::Tensor& z_s);

/// InfoNCE invariant alignment.
///
/// Anchor (i, m): shared component z_c[m][i] of a sample with at least two
/// present modalities. Positive: z_agg[i], the mean of sample i's present
/// shared components. Denominator: the positive term plus one term per
/// negative, where the negatives are every present shared component (any
/// modality) of every other sample j != i in the batch. Similarity is cosine.
/// The loss is -log(exp(s_pos / tau) / denominator) averaged over anchors.
ad::Tensor loss_inv(std::span<const ad::Tensor> shared, const data::BoolMatrix& present, double tau);

/// Sum over unordered modality pairs of the mean cosine between specific
/// components, over rows where both modalities are present.
ad::Tensor loss_dis(std::span<const ad::Tensor> specific, const data::BoolMatrix& present);

/// Mean over modalities of the teacher cross-entropy on present rows.
ad::Tensor loss_uni(const MsdNetworks& nets, const nn::Bindings& params, std::span<const DisentangledRep> reps,
                    std::span<const int> labels, const data::BoolMatrix& present);

struct MsdLossParts {
  ad::Tensor l_inv;
  ad::Tensor l_dis;
  ad::Tensor l_uni;
  ad::Tensor l_msd;  // l_inv + lambda1 * l_dis + lambda2 * l_uni
  double lambda1 = 0.1;
  double lambda2 = 0.1;
};

/// Throws ContractError on negative weights.
MsdLossParts loss_msd(ad::Tensor l_inv, ad::Tensor l_dis, ad::Tensor l_uni, double lambda1 = 0.1,
                      double lambda2 = 0.1);

}  // namespace ebmc::msd
