#include "ebmc/cce.hpp"

#include "ebmc/errors.hpp"
#include "ebmc/losses.hpp"

namespace ebmc::cce {

using ad::Tensor;

CceNetworks CceNetworks::create(nn::ParamStore& store, std::span<const std::string> names, const ModelDims& dims,
                                std::mt19937_64& rng) {
  CceNetworks nets;
  nets.dims = dims;
  const std::size_t in = 2 * dims.shared + dims.specific + dims.noise;
  for (const auto& name : names) {
    nets.generators.push_back(
        nn::Mlp::create(store, "cce." + name + ".generator", in, dims.mlp_hidden, dims.rep, nn::ParamGroup::Enhancer, rng));
  }
  return nets;
}

data::BoolMatrix enhanced_rows(const data::BoolMatrix& present) {
  data::BoolMatrix out(present.rows(), present.cols(), false);
  for (std::size_t i = 0; i < present.rows(); ++i) {
    const bool multi = present.count_row(i) >= 2;
    for (std::size_t m = 0; m < present.cols(); ++m) out.set(i, m, multi && present(i, m));
  }
  return out;
}

namespace {

// Mean of the other modalities' components per row, over present ones.
Tensor mean_of_others(std::span<const Tensor> parts, const data::BoolMatrix& present, std::size_t m) {
  const std::size_t n = present.rows();
  Tensor acc;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (k == m) continue;
    Tensor w(n, 1, 0.0);
    auto d = w.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t others = present.count_row(i) - (present(i, m) ? 1 : 0);
      d[i] = present(i, k) && others > 0 ? 1.0 / static_cast<double>(others) : 0.0;
    }
    Tensor term = ad::scale_rows(parts[k], w);
    acc = acc.size() == 0 ? term : ad::add(acc, term);
  }
  return acc;
}

}  // namespace

std::vector<Tensor> enhance(const CceNetworks& nets, const nn::Bindings& params,
                            std::span<const msd::DisentangledRep> reps, const data::BoolMatrix& present,
                            double noise_scale, std::uint64_t seed) {
  const std::size_t M = reps.size();
  if (M != nets.generators.size() || present.cols() != M) throw DimensionError("enhance: modality count mismatch");
  if (!(noise_scale >= 0.0)) throw ContractError("enhance: noise scale must be non-negative");
  const std::size_t n = present.rows();
  std::vector<Tensor> shared, specific;
  for (const auto& r : reps) {
    shared.push_back(r.z_c);
    specific.push_back(r.z_s);
  }
  const data::BoolMatrix gen_rows = enhanced_rows(present);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Tensor> out;
  for (std::size_t m = 0; m < M; ++m) {
    Tensor eps(n, nets.dims.noise, 0.0);
    {
      auto d = eps.mutable_data();
      for (auto& v : d) v = noise_scale * normal(rng);
    }
    const Tensor input = ad::concat_cols(
        std::vector<Tensor>{reps[m].z_c, mean_of_others(shared, present, m), mean_of_others(specific, present, m), eps});
    const Tensor generated = nets.generators[m].forward(params, input);
    Tensor keep(n, 1, 0.0), pass(n, 1, 0.0);
    {
      auto k = keep.mutable_data();
      auto p = pass.mutable_data();
      for (std::size_t i = 0; i < n; ++i) {
        k[i] = gen_rows(i, m) ? 1.0 : 0.0;
        p[i] = present(i, m) && !gen_rows(i, m) ? 1.0 : 0.0;
      }
    }
    out.push_back(ad::add(ad::scale_rows(generated, keep), ad::scale_rows(reps[m].z, pass)));
  }
  return out;
}

CceLossParts combine(Tensor l_rec, Tensor l_task_enh, double gamma_cce) {
  if (!(gamma_cce >= 0.0)) throw ContractError("loss_cce: gamma must be non-negative");
  CceLossParts parts;
  parts.gamma_cce = gamma_cce;
  parts.l_cce = ad::add(l_rec, ad::scale(l_task_enh, gamma_cce));
  parts.l_rec = std::move(l_rec);
  parts.l_task_enh = std::move(l_task_enh);
  return parts;
}

CceLossParts loss_cce(std::span<const Tensor> enhanced, std::span<const msd::DisentangledRep> reps,
                      const fusion::FusionNetworks& head, const nn::Bindings& params, std::span<const int> labels,
                      std::span<const double> scores, const data::BoolMatrix& present, double gamma_cce) {
  const std::size_t M = reps.size();
  if (enhanced.size() != M) throw DimensionError("loss_cce: enhanced/rep count mismatch");
  const data::BoolMatrix rows = enhanced_rows(present);
  const double inv_m = 1.0 / static_cast<double>(M);

  Tensor rec = Tensor::scalar(0.0);
  Tensor task = Tensor::scalar(0.0);
  for (std::size_t m = 0; m < M; ++m) {
    const Tensor include = data::mask_column(rows, m);
    if (count_included(include) == 0.0) continue;
    rec = ad::add(rec, masked_mean(ad::row_sum(ad::square(ad::sub(enhanced[m], reps[m].z))), include));

    std::vector<fusion::SlotInput> slots;
    for (std::size_t k = 0; k < M; ++k) slots.push_back({k == m ? enhanced[k] : reps[k].z, reps[k].z_c});
    const auto out = fusion::fuse_predict(head, params, slots, present);
    task = ad::add(task, masked_mean(fusion::task_loss_rows(out.logits, labels, scores, head.mode), include));
  }
  return combine(ad::scale(rec, inv_m), ad::scale(task, inv_m), gamma_cce);
}

}  // namespace ebmc::cce
