#include "ebmc/msd.hpp"

#include "ebmc/errors.hpp"
#include "ebmc/losses.hpp"

namespace ebmc::msd {

using ad::Tensor;

namespace {
constexpr double kStableEps = 1e-12;
}  // namespace

MsdNetworks MsdNetworks::create(nn::ParamStore& store, std::span<const std::string> names,
                                std::span<const std::size_t> input_dims, std::size_t num_classes,
                                const ModelDims& dims, std::mt19937_64& rng) {
  if (names.size() != input_dims.size()) throw ContractError("msd: names/dims length mismatch");
  MsdNetworks nets;
  nets.num_classes = num_classes;
  nets.dims = dims;
  nets.input_dims.assign(input_dims.begin(), input_dims.end());
  for (std::size_t m = 0; m < names.size(); ++m) {
    const std::string p = "msd." + names[m];
    ModalityNets mn;
    mn.encoder = nn::Mlp::create(store, p + ".encoder", input_dims[m], dims.mlp_hidden, dims.rep,
                                 nn::ParamGroup::Encoder, rng);
    mn.shared = nn::Mlp::create(store, p + ".shared", dims.rep, dims.mlp_hidden, dims.shared,
                                nn::ParamGroup::Shared, rng);
    mn.specific = nn::Mlp::create(store, p + ".specific", dims.rep, dims.mlp_hidden, dims.specific,
                                  nn::ParamGroup::Specific, rng);
    mn.teacher = nn::Mlp::create(store, p + ".teacher", dims.specific, dims.mlp_hidden, num_classes,
                                 nn::ParamGroup::Teacher, rng);
    nets.modalities.push_back(mn);
  }
  return nets;
}

Tensor encode(const MsdNetworks& nets, const nn::Bindings& params, const data::MultimodalBatch& batch,
              std::size_t m) {
  const Tensor& x = batch.features.at(m);
  if (x.cols() != nets.input_dims.at(m)) {
    throw DimensionError("msd: modality '" + batch.modalities[m] + "' features " + x.shape_string() +
                         " do not match encoder input width " + std::to_string(nets.input_dims[m]));
  }
  return ad::scale_rows(nets.modalities[m].encoder.forward(params, x), batch.present_column(m));
}

DisentangledRep decompose(const MsdNetworks& nets, const nn::Bindings& params, std::size_t m, const Tensor& z) {
  const auto& mn = nets.modalities.at(m);
  return {z, mn.shared.forward(params, z), mn.specific.forward(params, z)};
}

std::vector<DisentangledRep> disentangle(const MsdNetworks& nets, const nn::Bindings& params,
                                         const data::MultimodalBatch& batch) {
  if (batch.num_modalities() != nets.modalities.size()) {
    throw DimensionError("msd: batch has " + std::to_string(batch.num_modalities()) + " modalities, networks have " +
                         std::to_string(nets.modalities.size()));
  }
  std::vector<DisentangledRep> reps;
  for (std::size_t m = 0; m < batch.num_modalities(); ++m) {
    reps.push_back(decompose(nets, params, m, encode(nets, params, batch, m)));
  }
  return reps;
}

Tensor teacher_logits(const MsdNetworks& nets, const nn::Bindings& params, std::size_t m, const Tensor& z_s) {
  return nets.modalities.at(m).teacher.forward(params, z_s);
}

Tensor loss_inv(std::span<const Tensor> shared, const data::BoolMatrix& present, double tau) {
  if (!(tau > 0.0)) throw ContractError("loss_inv: temperature must be positive");
  const std::size_t M = shared.size();
  if (M < 2) throw ContractError("loss_inv: need at least 2 modalities");
  const std::size_t n = shared[0].rows();
  if (present.rows() != n || present.cols() != M) throw DimensionError("loss_inv: mask shape mismatch");

  // Per-sample aggregation weights present(i,m) / count_i.
  std::vector<double> count(n);
  for (std::size_t i = 0; i < n; ++i) count[i] = static_cast<double>(present.count_row(i));
  Tensor agg;
  for (std::size_t m = 0; m < M; ++m) {
    Tensor w(n, 1, 0.0);
    auto d = w.mutable_data();
    for (std::size_t i = 0; i < n; ++i) d[i] = present(i, m) && count[i] > 0 ? 1.0 / count[i] : 0.0;
    Tensor term = ad::scale_rows(shared[m], w);
    agg = m == 0 ? term : ad::add(agg, term);
  }

  std::vector<Tensor> normalized;
  for (std::size_t m = 0; m < M; ++m) normalized.push_back(ad::normalize_rows(shared[m], kStableEps));
  const Tensor all_t = ad::transpose(ad::concat_rows(normalized));  // h_c x (M n), column block m' holds modality m'

  // Negatives: column (m', j) for j != i with modality m' present for sample j.
  Tensor negatives(n, M * n, 0.0);
  {
    auto d = negatives.mutable_data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t mp = 0; mp < M; ++mp)
        for (std::size_t j = 0; j < n; ++j) d[i * M * n + mp * n + j] = (j != i && present(j, mp)) ? 1.0 : 0.0;
  }

  Tensor total;
  double anchors = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    Tensor include(n, 1, 0.0);
    auto inc = include.mutable_data();
    for (std::size_t i = 0; i < n; ++i) inc[i] = present(i, m) && count[i] >= 2 ? 1.0 : 0.0;
    const double k = count_included(include);
    if (k == 0.0) continue;
    anchors += k;
    const Tensor pos = ad::scale(ad::row_cosine_stable(shared[m], agg), 1.0 / tau);
    const Tensor sims = ad::scale(ad::matmul(normalized[m], all_t), 1.0 / tau);
    const Tensor denom = ad::add(ad::row_sum(ad::mul(ad::exp(sims), negatives)), ad::exp(pos));
    const Tensor per_anchor = ad::sub(ad::log(denom), pos);
    const Tensor s = ad::sum(ad::mul(per_anchor, include));
    total = total.size() == 0 ? s : ad::add(total, s);
  }
  if (anchors == 0.0) return Tensor::scalar(0.0);
  return ad::scale(total, 1.0 / anchors);
}

Tensor loss_dis(std::span<const Tensor> specific, const data::BoolMatrix& present) {
  const std::size_t M = specific.size();
  if (M < 2) throw ContractError("loss_dis: need at least 2 modalities");
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t a = 0; a < M; ++a) {
    for (std::size_t b = a + 1; b < M; ++b) {
      const Tensor both = ad::mul(data::mask_column(present, a), data::mask_column(present, b));
      total = ad::add(total, masked_mean(ad::row_cosine_stable(specific[a], specific[b]), both));
    }
  }
  return total;
}

Tensor loss_uni(const MsdNetworks& nets, const nn::Bindings& params, std::span<const DisentangledRep> reps,
                std::span<const int> labels, const data::BoolMatrix& present) {
  const std::size_t M = reps.size();
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t m = 0; m < M; ++m) {
    const Tensor ce = cross_entropy_rows(teacher_logits(nets, params, m, reps[m].z_s), labels);
    total = ad::add(total, masked_mean(ce, data::mask_column(present, m)));
  }
  return ad::scale(total, 1.0 / static_cast<double>(M));
}

MsdLossParts loss_msd(Tensor l_inv, Tensor l_dis, Tensor l_uni, double lambda1, double lambda2) {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ContractError("loss_msd: weights must be non-negative");
  MsdLossParts parts;
  parts.lambda1 = lambda1;
  parts.lambda2 = lambda2;
  parts.l_msd = ad::add(ad::add(l_inv, ad::scale(l_dis, lambda1)), ad::scale(l_uni, lambda2));
  parts.l_inv = std::move(l_inv);
  parts.l_dis = std::move(l_dis);
  parts.l_uni = std::move(l_uni);
  return parts;
}

}  // namespace ebmc::msd
