// Acceptance suite: one PASS/FAIL line per criterion. Arguments select a
// subset of criteria by number; no arguments runs all of them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "ebmc/cce.hpp"
#include "ebmc/checkpoint.hpp"
#include "ebmc/csv.hpp"
#include "ebmc/emc.hpp"
#include "ebmc/fusion.hpp"
#include "ebmc/imtd.hpp"
#include "ebmc/metrics.hpp"
#include "ebmc/msd.hpp"
#include "ebmc/seed.hpp"
#include "ebmc/trainer.hpp"
#include "oracles/naive_metrics.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace ebmc;
using ad::Tensor;
using ebmc::testing::random_tensor;

namespace {

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};
constexpr std::size_t kTrainSamples = 2000;
constexpr std::size_t kTestSamples = 4000;
constexpr int kGradSeeds = 20;
constexpr double kGradTolerance = 1e-4;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, a);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

// ---------------------------------------------------------------- gradients

struct GradTally {
  double worst = 0.0;
  std::string worst_name;
  int checks = 0;

  void add(const std::string& name, double err) {
    ++checks;
    if (!(err <= worst)) {
      worst = err;
      worst_name = name;
    }
  }
};

Tensor weigh(const Tensor& t, std::uint64_t seed) {
  return ad::sum(ad::mul(t, random_tensor(t.rows(), t.cols(), seed ^ 0x5bd1e995u)));
}

Tensor away_from_zero(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Tensor t = random_tensor(rows, cols, seed);
  for (double& v : t.mutable_data()) v = (v < 0 ? -1.0 : 1.0) * (0.1 + std::fabs(v));
  return t;
}

Tensor positive(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Tensor t = random_tensor(rows, cols, seed);
  for (double& v : t.mutable_data()) v = 0.2 + std::fabs(v);
  return t;
}

struct OpCase {
  std::string name;
  std::function<Tensor(std::uint64_t)> input;
  std::function<Tensor(const Tensor&, std::uint64_t)> f;
};

std::vector<OpCase> op_cases() {
  auto plain = [](std::size_t r, std::size_t c) { return [r, c](std::uint64_t s) { return random_tensor(r, c, s); }; };
  auto other = [](std::size_t r, std::size_t c, std::uint64_t s) { return random_tensor(r, c, s + 1000); };
  const std::vector<int> index{2, 0, 1, 2};
  std::vector<OpCase> cases{
      {"matmul.lhs", plain(4, 3), [=](const Tensor& x, auto s) { return weigh(ad::matmul(x, other(3, 2, s)), s); }},
      {"matmul.rhs", plain(3, 2), [=](const Tensor& x, auto s) { return weigh(ad::matmul(other(4, 3, s), x), s); }},
      {"transpose", plain(4, 3), [](const Tensor& x, auto s) { return weigh(ad::transpose(x), s); }},
      {"add", plain(4, 3), [=](const Tensor& x, auto s) { return weigh(ad::add(other(4, 3, s), x), s); }},
      {"sub.lhs", plain(4, 3), [=](const Tensor& x, auto s) { return weigh(ad::sub(x, other(4, 3, s)), s); }},
      {"sub.rhs", plain(4, 3), [=](const Tensor& x, auto s) { return weigh(ad::sub(other(4, 3, s), x), s); }},
      {"mul", plain(4, 3), [=](const Tensor& x, auto s) { return weigh(ad::mul(x, other(4, 3, s)), s); }},
      {"mul.self", plain(4, 3), [](const Tensor& x, auto s) { return weigh(ad::mul(x, x), s); }},
      {"scale", plain(4, 3), [](const Tensor& x, auto s) { return weigh(ad::scale(x, -1.7), s); }},
      {"add_scalar", plain(4, 3), [](const Tensor& x, auto s) { return weigh(ad::add_scalar(x, 0.3), s); }},
      {"relu", [](auto s) { return away_from_zero(4, 3, s); }, [](const Tensor& x, auto s) { return weigh(ad::relu(x), s); }},
      {"tanh", plain(4, 3), [](const Tensor& x, auto s) { return weigh(ad::tanh(x), s); }},
      {"exp", plain(4, 3), [](const Tensor& x, auto s) { return weigh(ad::exp(x), s); }},
      {"log", [](auto s) { return positive(4, 3, s); }, [](const Tensor& x, auto s) { return weigh(ad::log(x), s); }},
      {"square", plain(4, 3), [](const Tensor& x, auto s) { return weigh(ad::square(x), s); }},
      {"abs", [](auto s) { return away_from_zero(4, 3, s); }, [](const Tensor& x, auto s) { return weigh(ad::abs(x), s); }},
      {"add_row.matrix", plain(4, 3), [=](const Tensor& x, auto s) { return weigh(ad::add_row(x, other(1, 3, s)), s); }},
      {"add_row.row", plain(1, 3), [=](const Tensor& x, auto s) { return weigh(ad::add_row(other(4, 3, s), x), s); }},
      {"scale_rows.matrix", plain(4, 3), [=](const Tensor& x, auto s) { return weigh(ad::scale_rows(x, other(4, 1, s)), s); }},
      {"scale_rows.column", plain(4, 1), [=](const Tensor& x, auto s) { return weigh(ad::scale_rows(other(4, 3, s), x), s); }},
      {"softmax_rows", plain(4, 5), [](const Tensor& x, auto s) { return weigh(ad::softmax_rows(x, 0.7), s); }},
      {"log_softmax_rows", plain(4, 5), [](const Tensor& x, auto s) { return weigh(ad::log_softmax_rows(x, 1.3), s); }},
      {"sum", plain(4, 3), [](const Tensor& x, auto) { return ad::sum(ad::tanh(x)); }},
      {"mean", plain(4, 3), [](const Tensor& x, auto) { return ad::mean(ad::tanh(x)); }},
      {"l2_norm_sq", plain(4, 3), [](const Tensor& x, auto) { return ad::l2_norm_sq(x); }},
      {"row_sum", plain(4, 3), [](const Tensor& x, auto s) { return weigh(ad::row_sum(x), s); }},
      {"normalize_rows", plain(4, 3), [](const Tensor& x, auto s) { return weigh(ad::normalize_rows(x, 1e-8), s); }},
      {"row_cosine.lhs", plain(4, 3), [=](const Tensor& x, auto s) { return weigh(ad::row_cosine(x, other(4, 3, s)), s); }},
      {"row_cosine.rhs", plain(4, 3), [=](const Tensor& x, auto s) { return weigh(ad::row_cosine(other(4, 3, s), x), s); }},
      {"row_cosine_stable", plain(4, 3),
       [=](const Tensor& x, auto s) { return weigh(ad::row_cosine_stable(x, other(4, 3, s)), s); }},
      {"concat_cols", plain(4, 2),
       [=](const Tensor& x, auto s) {
         const std::vector<Tensor> parts{other(4, 3, s), x};
         return weigh(ad::concat_cols(parts), s);
       }},
      {"concat_rows", plain(2, 3),
       [=](const Tensor& x, auto s) {
         const std::vector<Tensor> parts{x, other(3, 3, s)};
         return weigh(ad::concat_rows(parts), s);
       }},
      {"slice_cols", plain(4, 5), [](const Tensor& x, auto s) { return weigh(ad::slice_cols(x, 1, 3), s); }},
      {"pick", plain(4, 3), [=](const Tensor& x, auto s) { return weigh(ad::pick(x, index), s); }},
  };
  return cases;
}

std::vector<Tensor> shared_of(const std::vector<msd::DisentangledRep>& reps) {
  std::vector<Tensor> out;
  for (const auto& r : reps) out.push_back(r.z_c);
  return out;
}

std::vector<Tensor> specific_of(const std::vector<msd::DisentangledRep>& reps) {
  std::vector<Tensor> out;
  for (const auto& r : reps) out.push_back(r.z_s);
  return out;
}

void check_params(GradTally& tally, const std::string& name, const train::Model& model,
                  std::initializer_list<std::size_t> params,
                  const std::function<Tensor(const nn::Bindings&)>& loss) {
  for (const std::size_t w : params) {
    const double err = ad::grad_check(
        [&](const Tensor& x) { return loss(nn::Bindings::substitute(model.store, w, x)); }, model.store.value(w));
    tally.add(name + "/" + model.store.name(w), err);
  }
}

void composite_checks(GradTally& tally, std::uint64_t seed) {
  const auto batch = ebmc::testing::micro_batch(5, seed);
  auto model = ebmc::testing::micro_model(batch, seed);
  const auto base = nn::Bindings::constant(model.store);
  const auto base_reps = msd::disentangle(model.msd, base, batch);
  const std::size_t M = batch.num_modalities();

  check_params(tally, "L_MSD", model,
               {model.msd.modalities[0].encoder.hidden.weight, model.msd.modalities[1].shared.output.weight,
                model.msd.modalities[2].teacher.hidden.weight},
               [&](const nn::Bindings& p) {
                 const auto reps = msd::disentangle(model.msd, p, batch);
                 return msd::loss_msd(msd::loss_inv(shared_of(reps), batch.present, 0.1),
                                      msd::loss_dis(specific_of(reps), batch.present),
                                      msd::loss_uni(model.msd, p, reps, batch.labels, batch.present))
                     .l_msd;
               });

  check_params(tally, "L_CCE", model,
               {model.cce.generators[1].hidden.weight, model.cce.generators[0].output.bias,
                model.msd.modalities[0].shared.hidden.weight},
               [&](const nn::Bindings& p) {
                 const auto reps = msd::disentangle(model.msd, p, batch);
                 const auto enh = cce::enhance(model.cce, p, reps, batch.present, 0.1, seed + 7);
                 return cce::loss_cce(enh, reps, model.head, p, batch.labels, batch.scores, batch.present).l_cce;
               });

  emc::EnergyCoefficients coeffs;
  std::vector<Tensor> aux;
  for (std::size_t m = 0; m < M; ++m)
    aux.push_back(emc::auxiliary_gradient(coeffs, model.msd, base, m, base_reps[m].z, batch.labels,
                                          data::mask_column(batch.present, m)));
  check_params(tally, "L_EMC", model,
               {model.msd.modalities[0].encoder.hidden.weight, model.msd.modalities[2].teacher.output.weight},
               [&](const nn::Bindings& p) {
                 const auto reps = msd::disentangle(model.msd, p, batch);
                 std::vector<Tensor> energies, norms;
                 for (std::size_t m = 0; m < M; ++m) {
                   const auto e = emc::evaluate_energy(coeffs, model.msd, p, m, reps[m], batch.labels,
                                                       data::mask_column(batch.present, m), &aux[m]);
                   energies.push_back(e.parts.total);
                   norms.push_back(e.grad_norm_sq);
                 }
                 return emc::loss_emc(coeffs, energies, norms);
               });

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  Tensor sigma(batch.size(), M), l1(batch.size(), M);
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    sigma.mutable_data()[i] = u(rng);
    l1.mutable_data()[i] = 3.0 * sigma.data()[i] + 1e-3;
  }
  const auto trust = imtd::trust_weights(sigma, l1, batch.present);
  std::vector<Tensor> teachers;
  for (std::size_t m = 0; m < M; ++m) teachers.push_back(msd::teacher_logits(model.msd, base, m, base_reps[m].z_s));
  auto fused = [&](const nn::Bindings& p) {
    const auto reps = msd::disentangle(model.msd, p, batch);
    std::vector<fusion::SlotInput> slots;
    for (const auto& r : reps) slots.push_back({r.z, r.z_c});
    return fusion::fuse_predict(model.head, p, slots, batch.present).logits;
  };
  check_params(tally, "L_IMTD", model,
               {model.head.head.output.weight, model.msd.modalities[1].encoder.hidden.weight},
               [&](const nn::Bindings& p) { return imtd::loss_imtd(trust, fused(p), teachers, 2.0); });

  check_params(tally, "L_task", model, {model.head.head.hidden.weight, model.head.head.output.bias},
               [&](const nn::Bindings& p) {
                 return fusion::loss_task(fused(p), batch.labels, {}, fusion::TaskMode::Classification);
               });
  const std::vector<double> scores{-2.1, 0.3, 1.4, 2.9, -0.6};
  check_params(tally, "L_task.regression", model, {model.head.head.output.weight},
               [&](const nn::Bindings& p) {
                 return fusion::loss_task(fused(p), {}, scores, fusion::TaskMode::Regression);
               });

  const auto cfg = ebmc::testing::micro_config(seed);
  const std::uint64_t step_seed = derive_seed(seed, "acceptance/step");
  const auto held = train::held_terms(model, cfg, base, base, batch, step_seed);
  check_params(tally, "L_total", model,
               {model.head.head.output.weight, model.cce.generators[0].hidden.weight,
                model.msd.modalities[1].encoder.hidden.weight, model.msd.modalities[0].specific.output.bias},
               [&](const nn::Bindings& p) { return train::stage2_objective(model, cfg, p, batch, step_seed, held).total; });
}

Outcome gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  GradTally ops, composite;
  for (const auto& c : op_cases())
    for (int s = 0; s < kGradSeeds; ++s) {
      const auto seed = static_cast<std::uint64_t>(s);
      ops.add(c.name, ad::grad_check([&](const Tensor& x) { return c.f(x, seed); }, c.input(seed)));
    }
  for (int s = 0; s < kGradSeeds; ++s) composite_checks(composite, 100 + static_cast<std::uint64_t>(s));
  const double secs = elapsed(t0);
  const bool pass = ops.worst < kGradTolerance && composite.worst < kGradTolerance && secs < 120.0;
  std::ostringstream d;
  d << ops.checks << " op checks (worst " << fmt("%.2e", ops.worst) << " " << ops.worst_name << "), "
    << composite.checks << " loss checks (worst " << fmt("%.2e", composite.worst) << " " << composite.worst_name
    << "), " << fmt("%.1f", secs) << " s";
  return {pass, d.str()};
}

// ---------------------------------------------------------------- closed-form energy checks

Outcome closed_form_energy() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 2.0);
  double grad_err = 0.0;
  int sign_violations = 0;
  bool shift_exact = true;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t M = 2 + static_cast<std::size_t>(t % 4);
    std::vector<double> e(M);
    for (double& v : e) v = n(rng);
    ad::Tape tape;
    const Tensor ev = tape.variable(Tensor(M, 1, e));
    std::vector<Tensor> parts;
    for (std::size_t m = 0; m < M; ++m) parts.push_back(ad::pick(ad::transpose(ev), std::vector<int>{static_cast<int>(m)}));
    const Tensor g = ad::grad_of_scalar_wrt(ev, emc::loss_gap(parts));
    double mean = 0.0;
    for (double v : e) mean += v / static_cast<double>(M);
    for (std::size_t m = 0; m < M; ++m) {
      const double closed = 2.0 * static_cast<double>(M) * (e[m] - mean);
      grad_err = std::max(grad_err, std::fabs(g(m, 0) - closed));
      // Descending the gap gradient lowers above-mean energies and raises below-mean ones.
      const double dev = e[m] - mean;
      if (dev != 0.0 && ((g(m, 0) > 0) != (dev > 0))) ++sign_violations;
    }

    // Dyadic energies and shifts keep every sum exact.
    std::vector<Tensor> dyadic, shifted;
    const double shift = std::ldexp(static_cast<double>(static_cast<int>(rng() % 64) - 32), -3);
    for (std::size_t m = 0; m < M; ++m) {
      const double v = std::ldexp(static_cast<double>(static_cast<int>(rng() % 512) - 256), -6);
      dyadic.push_back(Tensor::scalar(v));
      shifted.push_back(Tensor::scalar(v + shift));
    }
    shift_exact = shift_exact && emc::loss_gap(dyadic).item() == emc::loss_gap(shifted).item();
  }

  // Stationary point: equal energies and zero energy gradients.
  emc::EnergyCoefficients coeffs;
  coeffs.beta_e = 0.0;
  coeffs.gamma_e = 0.0;
  coeffs.delta_e = 0.3;
  const std::size_t rows = 4;
  const Tensor include(rows, 1, 1.0);
  ad::Tape tape;
  std::vector<Tensor> zs, energies, norms;
  for (std::size_t m = 0; m < 3; ++m) zs.push_back(tape.variable(Tensor(rows, 5, 0.0)));
  for (const auto& z : zs) {
    const Tensor g = emc::energy_gradient(coeffs, z, include, Tensor(rows, 5, 0.0));
    energies.push_back(
        emc::modality_energy(coeffs, ad::mean(ad::row_sum(ad::square(z))), Tensor::scalar(0), Tensor::scalar(0)).total);
    norms.push_back(ad::mean(ad::row_sum(ad::square(g))));
  }
  const Tensor loss = emc::loss_emc(coeffs, energies, norms);
  double stationary = 0.0;
  for (const auto& z : zs)
    for (double v : ad::grad_of_scalar_wrt(z, loss).data()) stationary = std::max(stationary, std::fabs(v));

  const bool pass = grad_err <= 1e-10 && sign_violations == 0 && stationary <= 1e-10 && shift_exact;
  std::ostringstream d;
  d << "gap gradient max err " << fmt("%.1e", grad_err) << ", sign violations " << sign_violations
    << ", stationary grad " << fmt("%.1e", stationary) << ", shift " << (shift_exact ? "exact" : "inexact");
  return {pass, d.str()};
}

// ---------------------------------------------------------------- hand values

Outcome hand_values() {
  struct Fixture {
    const char* name;
    double got, want;
  };
  const auto w = imtd::trust_weights(Tensor(1, 1, 0.2), Tensor(1, 1, std::exp(1.0) - 1.0), data::BoolMatrix(1, 1, true));
  const auto one = Tensor::scalar(1.0);
  const std::vector<Fixture> fixtures{
      {"entropy", emc::entropy_uncertainty(Tensor(3, 4, 0.25)), std::log(4.0)},
      {"gap", emc::loss_gap(std::vector<Tensor>{Tensor::scalar(0), Tensor::scalar(1), Tensor::scalar(2)}).item(), 6.0},
      {"rho", w.reliability[0], 1.0},
      {"kl",
       imtd::loss_imtd(w, Tensor::from_rows({{0.0, 0.0}}), std::vector<Tensor>{Tensor::from_rows({{std::log(3.0), 0.0}})},
                       1.0)
           .item(),
       0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25)},
      {"total", fusion::total_loss(fusion::ObjectiveWeights{}, one, one, one, one, one).l_total.item(), 1.8},
  };
  bool pass = std::fabs(fixtures[3].want - 0.14384) < 5e-6;
  std::ostringstream d;
  for (const auto& f : fixtures) {
    const double err = std::fabs(f.got - f.want);
    pass = pass && err <= 1e-9;
    d << f.name << "=" << fmt("%.6g", f.got) << " ";
  }
  return {pass, d.str()};
}

// ---------------------------------------------------------------- trained runs

struct Data {
  data::GeneratorSpec spec;
  data::MultimodalBatch train, test;
  double bayes_full = 0.0;
};

Data make_data(std::uint64_t seed) {
  Data d;
  d.spec = data::GeneratorSpec::default_imbalanced(seed);
  d.train = data::generate(d.spec, kTrainSamples, 0);
  d.test = data::generate(d.spec, kTestSamples, 1);
  d.bayes_full = data::bayes_oracle(d.spec, d.test).bayes_accuracy_full;
  return d;
}

struct RunResult {
  double accuracy = 0.0;
  double seconds = 0.0;
  double first_gap_variance = 0.0;
  double final_gap_variance = 0.0;
  double weak_single_drop = 0.0;  // mean relative drop over single weak-modality conditions
  double dropout_drop = 0.0;      // relative drop of the dropout-averaged accuracy
};

double gap_variance(const emc::EnergyReport& r) {
  std::vector<double> e;
  for (const auto& row : r.modalities) e.push_back(row.e_total);
  return emc::gap_variance(e);
}

RunResult train_and_measure(const Data& d, std::uint64_t seed, const std::set<Module>& disabled, bool robustness) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.disabled = disabled;
  RunResult r;
  train::RunLog log;
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = train::train_model(cfg, d.train, d.spec.num_classes, log);
  r.seconds = elapsed(t0);
  r.accuracy = train::evaluate(model, cfg, d.test).get("accuracy");
  r.first_gap_variance = gap_variance(log.epochs.front().energy);
  r.final_gap_variance = gap_variance(log.epochs.back().energy);
  if (robustness) {
    const auto missing = train::run_robustness(model, cfg, d.test, train::Protocol::ModalityMissing, seed);
    std::vector<double> drops;
    for (const auto& row : missing)
      for (std::size_t m = 1; m < d.spec.modalities.size(); ++m)
        if (row.condition == d.spec.modalities[m].name)
          drops.push_back((r.accuracy - row.metrics.get("accuracy")) / r.accuracy);
    for (double v : drops) r.weak_single_drop += v / static_cast<double>(drops.size());
    for (const auto& row : train::run_robustness(model, cfg, d.test, train::Protocol::FeatureDropout, seed))
      if (row.condition == "average") r.dropout_drop = (r.accuracy - row.metrics.get("accuracy")) / r.accuracy;
  }
  return r;
}

const std::vector<std::pair<std::string, std::set<Module>>>& arms() {
  static const std::vector<std::pair<std::string, std::set<Module>>> a{
      {"full", {}},
      {"w/o msd", {Module::Msd}},
      {"w/o cce", {Module::Cce}},
      {"w/o emc", {Module::Emc}},
      {"w/o imtd", {Module::Imtd}},
      {"w/o emc,imtd", {Module::Emc, Module::Imtd}},
  };
  return a;
}

struct SeedRuns {
  std::uint64_t seed = 0;
  double bayes_full = 0.0;
  std::map<std::string, RunResult> arm;
};

std::vector<SeedRuns> study(const std::set<std::string>& wanted) {
  std::vector<SeedRuns> out;
  for (const auto seed : kSeeds) {
    const auto d = make_data(seed);
    SeedRuns s;
    s.seed = seed;
    s.bayes_full = d.bayes_full;
    for (const auto& [name, disabled] : arms()) {
      if (!wanted.count(name)) continue;
      const bool robust = name == "full" || name == "w/o emc,imtd";
      s.arm[name] = train_and_measure(d, seed, disabled, robust);
      std::fprintf(stderr, "  seed %llu %-13s acc %.4f (%.1f s)\n", static_cast<unsigned long long>(seed),
                   name.c_str(), s.arm[name].accuracy, s.arm[name].seconds);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Outcome trust_simplex() {
  const std::uint64_t seed = kSeeds[0];
  const auto d = make_data(seed);
  // Random modality availability per training sample so that masking is exercised.
  const auto& mods = d.train.modalities;
  const auto subsets = data::nonempty_subsets(mods);
  std::mt19937_64 rng(derive_seed(seed, "acceptance/missing"));
  std::vector<std::vector<std::size_t>> rows(subsets.size());
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    const std::size_t pick = (rng() % 2 == 0) ? subsets.size() - 1 : rng() % subsets.size();
    rows[pick].push_back(i);
  }
  std::vector<data::MultimodalBatch> parts;
  for (std::size_t k = 0; k < subsets.size(); ++k)
    if (!rows[k].empty()) parts.push_back(data::apply_modality_missing(data::select_rows(d.train, rows[k]), subsets[k]));
  const auto train_set = data::concat(parts);

  TrainConfig cfg;
  cfg.seed = seed;
  std::size_t batches = 0, samples = 0, masked = 0;
  double worst_sum = 0.0;
  bool masked_exact = true;
  train::TrainHooks hooks;
  hooks.on_trust = [&](const imtd::TrustWeights& w, const data::BoolMatrix& present) {
    ++batches;
    for (std::size_t i = 0; i < w.samples; ++i) {
      ++samples;
      double s = 0.0;
      for (std::size_t m = 0; m < w.modalities; ++m) {
        const double a = w.at(w.alpha, i, m);
        if (!present(i, m)) {
          ++masked;
          masked_exact = masked_exact && a == 0.0;
        } else {
          masked_exact = masked_exact && a >= 0.0;
        }
        s += a;
      }
      worst_sum = std::max(worst_sum, std::fabs(s - 1.0));
    }
  };
  train::RunLog log;
  train::train_model(cfg, train_set, d.spec.num_classes, log, hooks);
  const bool pass = batches > 0 && masked > 0 && worst_sum <= 1e-12 && masked_exact;
  std::ostringstream d2;
  d2 << batches << " batches, " << samples << " sample rows, " << masked << " masked entries, max |sum-1| "
     << fmt("%.1e", worst_sum) << ", masked alpha " << (masked_exact ? "exactly 0" : "NOT 0");
  return {pass, d2.str()};
}

Outcome bayes_sanity(const std::vector<SeedRuns>& runs) {
  int ok = 0;
  bool fast = true;
  std::ostringstream d;
  for (const auto& s : runs) {
    const auto& r = s.arm.at("full");
    const double ratio = r.accuracy / s.bayes_full;
    ok += ratio >= 0.9;
    fast = fast && r.seconds < 600.0;
    d << fmt("%.3f", ratio) << " ";
  }
  d << "of Bayes (" << ok << "/5 >= 0.90)";
  return {ok >= 4 && fast, d.str()};
}

Outcome energy_trend(const std::vector<SeedRuns>& runs) {
  int halved = 0, below = 0;
  std::ostringstream d;
  for (const auto& s : runs) {
    const auto& on = s.arm.at("full");
    const auto& off = s.arm.at("w/o emc");
    halved += on.final_gap_variance <= 0.5 * on.first_gap_variance;
    below += on.final_gap_variance < off.final_gap_variance;
    d << fmt("%.3g", on.first_gap_variance) << "->" << fmt("%.3g", on.final_gap_variance) << " vs "
      << fmt("%.3g", off.final_gap_variance) << "; ";
  }
  d << "halved " << halved << "/5, below w/o emc " << below << "/5";
  return {halved >= 4 && below >= 4, d.str()};
}

Outcome ablation_direction(const std::vector<SeedRuns>& runs) {
  std::map<std::string, double> mean;
  int emc_worst = 0;
  for (const auto& s : runs) {
    double worst = 1.0;
    for (const char* a : {"w/o msd", "w/o cce", "w/o emc", "w/o imtd"}) worst = std::min(worst, s.arm.at(a).accuracy);
    emc_worst += s.arm.at("w/o emc").accuracy == worst;
    for (const char* a : {"full", "w/o msd", "w/o cce", "w/o emc", "w/o imtd"})
      mean[a] += s.arm.at(a).accuracy / static_cast<double>(runs.size());
  }
  bool full_best = true;
  std::ostringstream d;
  for (const auto& [name, acc] : mean) {
    d << name << " " << fmt("%.4f", acc) << ", ";
    if (name != "full") full_best = full_best && mean["full"] >= acc;
  }
  d << "w/o emc worst in " << emc_worst << "/5";
  return {full_best && emc_worst >= 3, d.str()};
}

Outcome robustness_direction(const std::vector<SeedRuns>& runs) {
  int weak = 0, dropout = 0;
  std::ostringstream d;
  for (const auto& s : runs) {
    const auto& full = s.arm.at("full");
    const auto& base = s.arm.at("w/o emc,imtd");
    weak += full.weak_single_drop < base.weak_single_drop;
    dropout += full.dropout_drop < base.dropout_drop;
    d << fmt("%.3f", full.weak_single_drop) << "/" << fmt("%.3f", base.weak_single_drop) << " "
      << fmt("%.3f", full.dropout_drop) << "/" << fmt("%.3f", base.dropout_drop) << "; ";
  }
  d << "weak-only " << weak << "/5, dropout " << dropout << "/5";
  return {weak >= 4 && dropout >= 4, d.str()};
}

// ---------------------------------------------------------------- determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

std::map<std::string, std::string> metric_values(const fs::path& p) {
  const auto t = csv::read(p);
  std::map<std::string, std::string> out;
  for (const auto& row : t.rows) out[row[t.column("condition")] + "/" + row[t.column("metric")]] = row[t.column("value")];
  return out;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "ebmc_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream cfg(root / "run.cfg");
    cfg << "[train]\nstage1_epochs = 60\nstage2_epochs = 60\nlearning_rate = 0.001\nbatch_size = 32\n";
  }
  const auto data = (root / "data").string();
  if (cli({"generate", "--out", data, "--seed", "1"}) != 0) return {false, "generate failed"};
  for (const char* run : {"a", "b"})
    if (cli({"train", "--config", (root / "run.cfg").string(), "--data", data, "--out", (root / run).string(),
             "--seed", "1"}) != 0)
      return {false, std::string("train ") + run + " failed"};
  const bool same_metrics = slurp(root / "a" / "metrics.csv") == slurp(root / "b" / "metrics.csv");

  if (cli({"eval", "--checkpoint", (root / "a" / "final.ckpt").string(), "--data", data, "--out",
           (root / "eval").string()}) != 0)
    return {false, "eval failed"};
  const auto trained = metric_values(root / "a" / "metrics.csv");
  const auto reloaded = metric_values(root / "eval" / "metrics.csv");
  bool eval_equal = !reloaded.empty();
  for (const auto& [key, value] : reloaded) eval_equal = eval_equal && trained.count(key) && trained.at(key) == value;

  const auto first = checkpoint::load(root / "a" / "final.ckpt");
  const auto second = checkpoint::load(root / "b" / "final.ckpt");
  const auto test = data::generate(data::GeneratorSpec::default_imbalanced(1), kTestSamples, 1);
  TrainConfig cfg;
  cfg.seed = 1;
  const auto la = train::predict_logits(first.model, cfg, test);
  const auto lb = train::predict_logits(second.model, cfg, test);
  const bool logits_equal = la.data().size() == lb.data().size() &&
                            std::equal(la.data().begin(), la.data().end(), lb.data().begin());
  fs::remove_all(root);
  std::ostringstream d;
  d << "metrics.csv " << (same_metrics ? "byte-identical" : "DIFFERENT") << ", reloaded evaluation "
    << (eval_equal ? "identical" : "DIFFERENT") << ", checkpoint logits " << (logits_equal ? "bit-identical" : "DIFFERENT");
  return {same_metrics && eval_equal && logits_equal, d.str()};
}

// ---------------------------------------------------------------- metrics

Outcome metric_equivalence() {
  std::mt19937_64 rng(10);
  double worst = 0.0;
  auto track = [&](double a, double b) {
    if (std::isnan(a) && std::isnan(b)) return;
    worst = std::max(worst, std::isfinite(a - b) ? std::fabs(a - b) : INFINITY);
  };
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 5 + rng() % 60, k = 2 + rng() % 6;
    std::vector<int> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng() % k);
      y[i] = static_cast<int>(rng() % k);
    }
    const auto r = metrics::evaluate_classification(p, y, k);
    track(r.get("accuracy"), oracle::naive_accuracy(p, y));
    double macro = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double f = oracle::naive_f1(p, y, static_cast<int>(c));
      track(r.get("f1.class" + std::to_string(c)), f);
      macro += f / static_cast<double>(k);
    }
    track(r.get("macro_f1"), macro);
  }
  std::uniform_real_distribution<double> u(-3.5, 3.5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 5 + rng() % 60;
    std::vector<double> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = u(rng);
      y[i] = rng() % 5 == 0 ? 0.0 : u(rng);
    }
    const auto r = metrics::evaluate_regression(p, y);
    std::vector<int> ph, th, pn, tn, p7, t7;
    double mae = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ph.push_back(p[i] >= 0);
      th.push_back(y[i] >= 0);
      if (y[i] != 0) {
        pn.push_back(p[i] > 0);
        tn.push_back(y[i] > 0);
      }
      p7.push_back(oracle::naive_bin(p[i]));
      t7.push_back(oracle::naive_bin(y[i]));
      mae += std::fabs(p[i] - y[i]) / static_cast<double>(n);
    }
    track(r.get("acc2_has0"), oracle::naive_accuracy(ph, th));
    track(r.get("acc2_non0"), oracle::naive_accuracy(pn, tn));
    track(r.get("f1_has0"), oracle::naive_weighted_f1(ph, th));
    track(r.get("f1_non0"), oracle::naive_weighted_f1(pn, tn));
    track(r.get("acc7"), oracle::naive_accuracy(p7, t7));
    track(r.get("corr"), oracle::naive_pearson(p, y));
    track(r.get("mae"), mae);
  }
  return {worst <= 1e-10, "200 fixtures, max deviation " + fmt("%.1e", worst)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  auto want = [&](int c) { return selected.empty() || selected.count(c) > 0; };

  std::set<std::string> arms_needed;
  if (want(5)) arms_needed.insert("full");
  if (want(6)) arms_needed.insert({"full", "w/o emc"});
  if (want(7)) arms_needed.insert({"full", "w/o msd", "w/o cce", "w/o emc", "w/o imtd"});
  if (want(8)) arms_needed.insert({"full", "w/o emc,imtd"});
  std::vector<SeedRuns> runs;

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient oracle", gradient_oracle},
      {"closed-form energy checks", closed_form_energy},
      {"hand-value fixtures", hand_values},
      {"trust-weight simplex", trust_simplex},
      {"bayes-oracle sanity", [&] { return bayes_sanity(runs); }},
      {"energy-equilibrium trend", [&] { return energy_trend(runs); }},
      {"ablation direction", [&] { return ablation_direction(runs); }},
      {"robustness direction", [&] { return robustness_direction(runs); }},
      {"determinism and round-trip", determinism},
      {"metric equivalence", metric_equivalence},
  };

  int failed = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    const int number = static_cast<int>(c) + 1;
    if (!want(number)) continue;
    if (number >= 5 && number <= 8 && runs.empty() && !arms_needed.empty()) runs = study(arms_needed);
    Outcome o;
    try {
      o = criteria[c].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", number, criteria[c].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
