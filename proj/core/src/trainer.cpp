#include "ebmc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ebmc/csv.hpp"
#include "ebmc/errors.hpp"
#include "ebmc/losses.hpp"
#include "ebmc/seed.hpp"

namespace ebmc::train {

using ad::Tensor;
using data::MultimodalBatch;

Model Model::create(const std::vector<std::string>& modalities, const std::vector<std::size_t>& input_dims,
                    std::size_t num_classes, fusion::TaskMode mode, const ModelDims& dims, std::uint64_t seed) {
  if (modalities.size() < 2) throw ContractError("model: need at least 2 modalities");
  Model m;
  m.modalities = modalities;
  m.input_dims = input_dims;
  m.num_classes = num_classes;
  m.mode = mode;
  m.dims = dims;
  std::mt19937_64 rng(seed);
  m.msd = msd::MsdNetworks::create(m.store, modalities, input_dims, num_classes, dims, rng);
  m.cce = cce::CceNetworks::create(m.store, modalities, dims, rng);
  m.head = fusion::FusionNetworks::create(m.store, modalities.size(), num_classes, dims, mode, rng);
  return m;
}

Model Model::for_batch(const MultimodalBatch& batch, std::size_t num_classes, const ModelDims& dims,
                       std::uint64_t seed) {
  std::vector<std::size_t> in;
  for (const auto& f : batch.features) in.push_back(f.cols());
  return create(batch.modalities, in, num_classes,
                batch.regression() ? fusion::TaskMode::Regression : fusion::TaskMode::Classification, dims, seed);
}

void Model::check_compatible(const MultimodalBatch& batch) const {
  std::string have, want;
  for (std::size_t m = 0; m < modalities.size(); ++m)
    want += (m ? "," : "") + modalities[m] + ":" + std::to_string(input_dims[m]);
  for (std::size_t m = 0; m < batch.num_modalities(); ++m)
    have += (m ? "," : "") + batch.modalities[m] + ":" + std::to_string(batch.features[m].cols());
  if (have != want) throw DimensionError("model expects modalities [" + want + "], data has [" + have + "]");
  for (int y : batch.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw DimensionError("label " + std::to_string(y) + " outside the model's " + std::to_string(num_classes) +
                           " classes");
}

TrainingAbort::TrainingAbort(const std::string& what, Stage stage_, std::size_t epoch_, std::size_t batch_,
                             std::uint64_t batch_seed_, std::vector<double> energies_)
    : std::runtime_error(what),
      stage(stage_),
      epoch(epoch_),
      batch(batch_),
      batch_seed(batch_seed_),
      energies(std::move(energies_)) {}

namespace {

using Reps = std::vector<msd::DisentangledRep>;

Tensor zero() { return Tensor::scalar(0.0); }

std::vector<int> argmax_labels(const Tensor& logits) { return fusion::predict_classes(logits.detach()); }

std::vector<emc::ModalityEnergy> energies_of(const Model& model, const TrainConfig& cfg, const nn::Bindings& params,
                                             const MultimodalBatch& batch, const Reps& reps,
                                             const std::vector<Tensor>* auxiliaries = nullptr) {
  std::vector<emc::ModalityEnergy> out;
  for (std::size_t m = 0; m < reps.size(); ++m)
    out.push_back(emc::evaluate_energy(cfg.energy, model.msd, params, m, reps[m], batch.labels,
                                       batch.present_column(m), auxiliaries ? &(*auxiliaries)[m] : nullptr));
  return out;
}

std::vector<Tensor> descent_auxiliaries(const Model& model, const TrainConfig& cfg, const nn::Bindings& params,
                                        const MultimodalBatch& batch, const Reps& reps) {
  std::vector<Tensor> out;
  for (std::size_t m = 0; m < reps.size(); ++m) {
    const auto pseudo = argmax_labels(msd::teacher_logits(model.msd, params, m, reps[m].z_s));
    out.push_back(emc::auxiliary_gradient(cfg.energy, model.msd, params, m, reps[m].z, pseudo,
                                          batch.present_column(m)));
  }
  return out;
}

bool refines(const TrainConfig& cfg) { return cfg.enabled(Module::Emc) && cfg.energy.lambda_flow != 0.0; }

// One energy-descent step per modality, labelled by each teacher's own argmax.
Reps refine(const Model& model, const TrainConfig& cfg, const nn::Bindings& params, const MultimodalBatch& batch,
            const Reps& reps, const std::vector<Tensor>& auxiliaries) {
  if (!refines(cfg)) return reps;
  Reps out;
  for (std::size_t m = 0; m < reps.size(); ++m) {
    const Tensor g = emc::energy_gradient(cfg.energy, reps[m].z, batch.present_column(m), auxiliaries[m]);
    out.push_back(msd::decompose(model.msd, params, m, emc::energy_descent_step(cfg.energy, reps[m].z, g)));
  }
  return out;
}

Reps refine(const Model& model, const TrainConfig& cfg, const nn::Bindings& params, const MultimodalBatch& batch,
            const Reps& reps) {
  if (!refines(cfg)) return reps;
  return refine(model, cfg, params, batch, reps, descent_auxiliaries(model, cfg, params, batch, reps));
}

std::vector<fusion::SlotInput> slots_of(const std::vector<Tensor>& enhanced, const Reps& reps) {
  std::vector<fusion::SlotInput> slots;
  for (std::size_t m = 0; m < reps.size(); ++m) slots.push_back({enhanced[m], reps[m].z_c});
  return slots;
}

struct MsdTerms {
  Tensor l_inv = zero(), l_dis = zero(), l_uni = zero(), l_msd = zero();
};

MsdTerms msd_terms(const Model& model, const TrainConfig& cfg, const nn::Bindings& params,
                   const MultimodalBatch& batch, const Reps& reps) {
  std::vector<Tensor> shared, specific;
  for (const auto& r : reps) {
    shared.push_back(r.z_c);
    specific.push_back(r.z_s);
  }
  auto parts = msd::loss_msd(msd::loss_inv(shared, batch.present, cfg.tau_inv),
                             msd::loss_dis(specific, batch.present),
                             msd::loss_uni(model.msd, params, reps, batch.labels, batch.present), cfg.lambda1,
                             cfg.lambda2);
  return {parts.l_inv, parts.l_dis, parts.l_uni, parts.l_msd};
}

}  // namespace

StepObjective stage1_objective(const Model& model, const TrainConfig& cfg, const nn::Bindings& params,
                               const MultimodalBatch& batch, std::uint64_t step_seed) {
  StepObjective r;
  const Reps reps = msd::disentangle(model.msd, params, batch);
  MsdTerms ms;
  if (cfg.enabled(Module::Msd)) ms = msd_terms(model, cfg, params, batch, reps);
  const auto enhanced =
      cce::enhance(model.cce, params, reps, batch.present, cfg.noise_scale, derive_seed(step_seed, "cce/noise"));
  cce::CceLossParts cp = cce::combine(zero(), zero(), cfg.gamma_cce);
  if (cfg.enabled(Module::Cce))
    cp = cce::loss_cce(enhanced, reps, model.head, params, batch.labels, batch.scores, batch.present, cfg.gamma_cce);

  const double w_msd = cfg.enabled(Module::Msd) ? 1.0 : 0.0;
  const double w_cce = cfg.enabled(Module::Cce) ? cfg.objective.beta_w : 0.0;
  r.total = ad::add(ad::scale(ms.l_msd, w_msd), ad::scale(cp.l_cce, w_cce));
  r.logits = fusion::fuse_predict(model.head, params, slots_of(enhanced, reps), batch.present).logits.detach();

  auto& L = r.losses;
  L.l_inv = ms.l_inv.item();
  L.l_dis = ms.l_dis.item();
  L.l_uni = ms.l_uni.item();
  L.l_msd = ms.l_msd.item();
  L.l_rec = cp.l_rec.item();
  L.l_task_enh = cp.l_task_enh.item();
  L.l_cce = cp.l_cce.item();
  L.l_total = r.total.item();
  L.w_msd = w_msd;
  L.w_cce = w_cce;
  return r;
}

HeldTerms held_terms(const Model& model, const TrainConfig& cfg, const nn::Bindings& params,
                     const nn::Bindings& frozen, const MultimodalBatch& batch, std::uint64_t step_seed) {
  HeldTerms held;
  const std::size_t M = batch.num_modalities();
  const Reps reps = msd::disentangle(model.msd, params, batch);
  if (cfg.enabled(Module::Emc)) {
    for (std::size_t m = 0; m < M; ++m)
      held.energy_auxiliary.push_back(emc::auxiliary_gradient(cfg.energy, model.msd, params, m, reps[m].z,
                                                              batch.labels, batch.present_column(m)));
  }
  if (refines(cfg)) held.descent_auxiliary = descent_auxiliaries(model, cfg, params, batch, reps);

  // Trust weights from the frozen teachers on the unrefined specific parts.
  Tensor sigma(batch.size(), M, 0.0), l1(batch.size(), M, 0.0);
  auto sd = sigma.mutable_data();
  auto ld = l1.mutable_data();
  for (std::size_t m = 0; m < M; ++m) {
    const auto& teacher = model.msd.modalities[m].teacher;
    const Tensor zs = reps[m].z_s.detach();
    const auto stats = imtd::teacher_statistics([&](const Tensor& x) { return teacher.forward(frozen, x); }, zs,
                                                cfg.distill.mc_passes, cfg.distill.perturbation,
                                                derive_seed(step_seed, "imtd/mc/" + batch.modalities[m]));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      sd[i * M + m] = stats.sigma[i];
      ld[i * M + m] = stats.variance_l1[i];
    }
    held.teacher_logits.push_back(teacher.forward(frozen, zs).detach());
  }
  held.trust = imtd::trust_weights(sigma, l1, batch.present);
  return held;
}

StepObjective stage2_objective(const Model& model, const TrainConfig& cfg, const nn::Bindings& params,
                               const MultimodalBatch& batch, std::uint64_t step_seed, const HeldTerms& held) {
  StepObjective r;
  const Reps reps = msd::disentangle(model.msd, params, batch);
  if (cfg.enabled(Module::Emc)) r.energies = energies_of(model, cfg, params, batch, reps, &held.energy_auxiliary);
  const Reps refined = refine(model, cfg, params, batch, reps, held.descent_auxiliary);
  const auto enhanced =
      cce::enhance(model.cce, params, refined, batch.present, cfg.noise_scale, derive_seed(step_seed, "cce/noise"));
  const auto fused = fusion::fuse_predict(model.head, params, slots_of(enhanced, refined), batch.present);
  r.logits = fused.logits.detach();
  const Tensor l_task = fusion::loss_task(fused.logits, batch.labels, batch.scores, model.mode);

  MsdTerms ms;
  if (cfg.keep_stage1_losses && cfg.enabled(Module::Msd)) ms = msd_terms(model, cfg, params, batch, reps);
  cce::CceLossParts cp = cce::combine(zero(), zero(), cfg.gamma_cce);
  if (cfg.keep_stage1_losses && cfg.enabled(Module::Cce))
    cp = cce::loss_cce(enhanced, refined, model.head, params, batch.labels, batch.scores, batch.present,
                       cfg.gamma_cce);

  Tensor l_emc = zero(), l_gap = zero();
  if (cfg.enabled(Module::Emc)) {
    std::vector<Tensor> totals, norms;
    for (const auto& e : r.energies) {
      totals.push_back(e.parts.total);
      norms.push_back(e.grad_norm_sq);
    }
    l_gap = emc::loss_gap(totals);
    l_emc = emc::loss_emc(cfg.energy, totals, norms);
  }

  r.trust = held.trust;
  Tensor l_imtd = zero();
  if (cfg.enabled(Module::Imtd))
    l_imtd = imtd::loss_imtd(held.trust, fused.logits, held.teacher_logits, cfg.distill.tau_kd);

  fusion::ObjectiveWeights w = cfg.objective;
  if (!cfg.keep_stage1_losses || !cfg.enabled(Module::Msd)) w.zeta = 0.0;
  if (!cfg.keep_stage1_losses || !cfg.enabled(Module::Cce)) w.beta_w = 0.0;
  if (!cfg.enabled(Module::Emc)) w.gamma_w = 0.0;
  if (!cfg.enabled(Module::Imtd)) w.eta_w = 0.0;
  const auto total = fusion::total_loss(w, l_task, ms.l_msd, cp.l_cce, l_emc, l_imtd);
  r.total = total.l_total;

  auto& L = r.losses;
  L.l_task = l_task.item();
  L.l_inv = ms.l_inv.item();
  L.l_dis = ms.l_dis.item();
  L.l_uni = ms.l_uni.item();
  L.l_msd = ms.l_msd.item();
  L.l_rec = cp.l_rec.item();
  L.l_task_enh = cp.l_task_enh.item();
  L.l_cce = cp.l_cce.item();
  L.l_gap = l_gap.item();
  L.l_emc = l_emc.item();
  L.l_imtd = l_imtd.item();
  L.l_total = r.total.item();
  L.w_task = 1.0;
  L.w_msd = w.zeta;
  L.w_cce = w.beta_w;
  L.w_emc = w.gamma_w;
  L.w_imtd = w.eta_w;
  return r;
}

namespace {

void accumulate(StepLosses& acc, const StepLosses& s) {
  acc.l_task += s.l_task;
  acc.l_msd += s.l_msd;
  acc.l_inv += s.l_inv;
  acc.l_dis += s.l_dis;
  acc.l_uni += s.l_uni;
  acc.l_cce += s.l_cce;
  acc.l_rec += s.l_rec;
  acc.l_task_enh += s.l_task_enh;
  acc.l_emc += s.l_emc;
  acc.l_gap += s.l_gap;
  acc.l_imtd += s.l_imtd;
  acc.l_total += s.l_total;
  acc.w_task = s.w_task;
  acc.w_msd = s.w_msd;
  acc.w_cce = s.w_cce;
  acc.w_emc = s.w_emc;
  acc.w_imtd = s.w_imtd;
}

void divide(StepLosses& acc, double n) {
  for (double* v : {&acc.l_task, &acc.l_msd, &acc.l_inv, &acc.l_dis, &acc.l_uni, &acc.l_cce, &acc.l_rec,
                    &acc.l_task_enh, &acc.l_emc, &acc.l_gap, &acc.l_imtd, &acc.l_total})
    *v /= n;
}

std::vector<emc::ModalityEnergyRow> energy_rows(const std::vector<emc::ModalityEnergy>& energies,
                                                const std::vector<std::string>& names) {
  std::vector<emc::ModalityEnergyRow> rows;
  for (std::size_t m = 0; m < energies.size(); ++m) {
    emc::ModalityEnergyRow r;
    r.modality = names[m];
    r.e_magnitude = energies[m].parts.magnitude.item();
    r.e_loss = energies[m].parts.loss.item();
    r.e_uncertainty = energies[m].parts.uncertainty.item();
    r.e_total = energies[m].parts.total.item();
    r.grad_norm_sq = energies[m].grad_norm_sq.item();
    rows.push_back(r);
  }
  return rows;
}

// Shuffled minibatches; a trailing batch smaller than 2 joins the previous one.
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch_size)));
  if (out.size() > 1 && out.back().size() < 2) {
    out[out.size() - 2].insert(out[out.size() - 2].end(), out.back().begin(), out.back().end());
    out.pop_back();
  }
  return out;
}

double batch_accuracy(const Tensor& logits, const MultimodalBatch& batch) {
  const auto pred = fusion::predict_classes(logits);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == batch.labels[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

void run_stage(Model& model, const TrainConfig& cfg, const MultimodalBatch& train, RunLog& log,
               const TrainHooks& hooks, Stage stage) {
  cfg.validate(true);
  model.check_compatible(train);
  if (train.size() < 2) throw ContractError("train: need at least 2 samples");
  const bool second = stage == Stage::Two;
  const std::size_t epochs = second ? cfg.stage2_epochs : cfg.stage1_epochs;
  const std::string tag = second ? "stage2" : "stage1";
  const auto trainable = [&](nn::ParamGroup g) {
    if (!second) return true;
    if (g == nn::ParamGroup::Teacher) return false;
    return !cfg.stage2_freeze_stage1 || g == nn::ParamGroup::Fusion;
  };
  nn::Sgd opt(cfg.learning_rate, cfg.momentum);
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, "train/shuffle/" + tag));
  const std::uint64_t step_base = derive_seed(cfg.seed, "train/step/" + tag);
  std::size_t step = 0;
  std::size_t epoch_base = log.epochs.empty() ? 0 : log.epochs.back().epoch;

  for (std::size_t e = 1; e <= epochs; ++e) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.stage = stage;
    rec.epoch = epoch_base + e;
    std::vector<imtd::TrustSummaryRow> trust_acc;
    double acc_sum = 0.0;
    const auto batches = minibatches(train.size(), cfg.batch_size, shuffle_rng);
    for (std::size_t b = 0; b < batches.size(); ++b, ++step) {
      const MultimodalBatch batch = data::select_rows(train, batches[b]);
      const std::uint64_t step_seed = step_base + step;
      ad::Tape tape;
      const nn::Bindings params = nn::Bindings::on_tape(model.store, tape, trainable);
      const auto abort = [&](const std::string& what, const std::vector<emc::ModalityEnergy>& energies) {
        std::vector<double> totals;
        try {
          const auto rows = energies.empty() ? energy_report(model, cfg, batch).modalities
                                             : energy_rows(energies, model.modalities);
          for (const auto& row : rows) totals.push_back(row.e_total);
        } catch (const NumericError&) {
          totals.assign(model.modalities.size(), std::numeric_limits<double>::quiet_NaN());
        }
        return TrainingAbort(what + " in " + tag + " epoch " + std::to_string(rec.epoch) + " batch " +
                                 std::to_string(b) + " (batch seed " + std::to_string(step_seed) + ")",
                             stage, rec.epoch, b, step_seed, totals);
      };
      StepObjective r;
      try {
        if (second) {
          const nn::Bindings frozen = nn::Bindings::constant(model.store);
          r = stage2_objective(model, cfg, params, batch, step_seed,
                               held_terms(model, cfg, params, frozen, batch, step_seed));
        } else {
          r = stage1_objective(model, cfg, params, batch, step_seed);
        }
      } catch (const NumericError& e) {
        throw abort(e.what(), {});
      }
      if (!std::isfinite(r.losses.l_total)) throw abort("non-finite loss", r.energies);
      ad::backward(r.total);
      opt.step(model.store, params);

      accumulate(rec.losses, r.losses);
      acc_sum += batch_accuracy(r.logits, batch);
      if (r.trust) {
        if (hooks.on_trust) hooks.on_trust(*r.trust, batch.present);
        const auto summary = imtd::trust_summary(*r.trust, batch.present, batch.modalities);
        if (trust_acc.empty()) {
          trust_acc = summary;
        } else {
          for (std::size_t m = 0; m < summary.size(); ++m) {
            trust_acc[m].mean_sigma += summary[m].mean_sigma;
            trust_acc[m].mean_c += summary[m].mean_c;
            trust_acc[m].mean_rho += summary[m].mean_rho;
            trust_acc[m].mean_alpha += summary[m].mean_alpha;
          }
        }
      }
    }
    const double nb = static_cast<double>(batches.size());
    divide(rec.losses, nb);
    rec.train_accuracy = acc_sum / nb;
    for (auto& row : trust_acc) {
      row.mean_sigma /= nb;
      row.mean_c /= nb;
      row.mean_rho /= nb;
      row.mean_alpha /= nb;
    }
    rec.energy = energy_report(model, cfg, train);
    rec.trust = std::move(trust_acc);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(log.epochs.back());
  }
}

}  // namespace

void train_stage1(Model& model, const TrainConfig& config, const MultimodalBatch& train, RunLog& log,
                  const TrainHooks& hooks) {
  run_stage(model, config, train, log, hooks, Stage::One);
}

void train_stage2(Model& model, const TrainConfig& config, const MultimodalBatch& train, RunLog& log,
                  const TrainHooks& hooks) {
  run_stage(model, config, train, log, hooks, Stage::Two);
}

Model train_model(const TrainConfig& config, const MultimodalBatch& train, std::size_t num_classes, RunLog& log,
                  const TrainHooks& hooks) {
  Model model = Model::for_batch(train, num_classes, config.dims, derive_seed(config.seed, "model/init"));
  train_stage1(model, config, train, log, hooks);
  train_stage2(model, config, train, log, hooks);
  return model;
}

Tensor predict_logits(const Model& model, const TrainConfig& config, const MultimodalBatch& batch) {
  model.check_compatible(batch);
  const nn::Bindings params = nn::Bindings::constant(model.store);
  const Reps reps = msd::disentangle(model.msd, params, batch);
  const Reps refined = refine(model, config, params, batch, reps);
  const auto enhanced = cce::enhance(model.cce, params, refined, batch.present, 0.0, 0);
  return fusion::fuse_predict(model.head, params, slots_of(enhanced, refined), batch.present).logits.detach();
}

metrics::MetricRecord evaluate(const Model& model, const TrainConfig& config, const MultimodalBatch& batch) {
  return fusion::evaluate(predict_logits(model, config, batch), batch.labels, batch.scores, model.mode);
}

double teacher_accuracy(const Model& model, const MultimodalBatch& batch, std::size_t m) {
  model.check_compatible(batch);
  const nn::Bindings params = nn::Bindings::constant(model.store);
  const auto rep = msd::decompose(model.msd, params, m, msd::encode(model.msd, params, batch, m));
  const auto pred = fusion::predict_classes(msd::teacher_logits(model.msd, params, m, rep.z_s));
  double ok = 0.0, n = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.present(i, m)) continue;
    n += 1.0;
    ok += pred[i] == batch.labels[i];
  }
  return n == 0.0 ? 0.0 : ok / n;
}

AlignmentReport alignment(const Model& model, const MultimodalBatch& batch) {
  model.check_compatible(batch);
  const nn::Bindings params = nn::Bindings::constant(model.store);
  const Reps reps = msd::disentangle(model.msd, params, batch);
  AlignmentReport r;
  double pairs = 0.0;
  for (std::size_t a = 0; a < reps.size(); ++a) {
    for (std::size_t b = a + 1; b < reps.size(); ++b) {
      const Tensor both = ad::mul(batch.present_column(a), batch.present_column(b));
      r.shared_cosine += masked_mean(ad::row_cosine_stable(reps[a].z_c, reps[b].z_c), both).item();
      r.specific_cosine += masked_mean(ad::row_cosine_stable(reps[a].z_s, reps[b].z_s), both).item();
      pairs += 1.0;
    }
  }
  r.shared_cosine /= pairs;
  r.specific_cosine /= pairs;
  return r;
}

std::vector<ConditionMetrics> run_ablation(const TrainConfig& config, const MultimodalBatch& train,
                                           const MultimodalBatch& test, std::size_t num_classes,
                                           const std::set<Module>& disable) {
  std::vector<ConditionMetrics> rows;
  RunLog log;
  const Model full = train_model(config, train, num_classes, log);
  rows.push_back({"full", evaluate(full, config, test)});
  if (disable.empty()) return rows;
  TrainConfig ablated = config;
  ablated.disabled.insert(disable.begin(), disable.end());
  RunLog alog;
  const Model model = train_model(ablated, train, num_classes, alog);
  rows.push_back({"w/o " + format_module_list(disable), evaluate(model, ablated, test)});
  return rows;
}

Protocol parse_protocol(const std::string& name) {
  if (name == "modality-missing") return Protocol::ModalityMissing;
  if (name == "feature-dropout") return Protocol::FeatureDropout;
  throw ConfigError("unknown protocol '" + name + "' (expected modality-missing or feature-dropout)");
}

const char* to_string(Protocol p) {
  return p == Protocol::ModalityMissing ? "modality-missing" : "feature-dropout";
}

std::vector<double> dropout_rates() {
  std::vector<double> rates;
  for (int k = 0; k < 10; ++k) rates.push_back(k / 10.0);
  return rates;
}

std::string dropout_condition(double p) { return "p=" + csv::format_double(p); }

MultimodalBatch apply_dropout_condition(const MultimodalBatch& test, double p, std::uint64_t seed) {
  return data::apply_feature_dropout(test, p, derive_seed(seed, "robust/dropout/" + dropout_condition(p)));
}

std::vector<ConditionMetrics> run_robustness(const Model& model, const TrainConfig& config,
                                             const MultimodalBatch& test, Protocol protocol, std::uint64_t seed) {
  std::vector<ConditionMetrics> rows;
  if (protocol == Protocol::ModalityMissing) {
    for (const auto& subset : data::nonempty_subsets(test.modalities)) {
      rows.push_back({data::subset_key(subset),
                      evaluate(model, config, data::apply_modality_missing(test, subset))});
    }
    return rows;
  }
  for (double p : dropout_rates())
    rows.push_back({dropout_condition(p), evaluate(model, config, apply_dropout_condition(test, p, seed))});
  ConditionMetrics avg{"average", {}};
  for (const auto& [name, value] : rows.front().metrics.values) {
    double s = 0.0;
    for (const auto& r : rows) s += r.metrics.get(name);
    avg.metrics.add(name, s / static_cast<double>(rows.size()));
  }
  rows.push_back(avg);
  return rows;
}

emc::EnergyReport energy_report(const Model& model, const TrainConfig& config, const MultimodalBatch& batch) {
  model.check_compatible(batch);
  const nn::Bindings params = nn::Bindings::constant(model.store);
  const Reps reps = msd::disentangle(model.msd, params, batch);
  return emc::implicit_weight_report(energy_rows(energies_of(model, config, params, batch, reps), model.modalities));
}

}  // namespace ebmc::train
