#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ebmc/errors.hpp"
#include "ebmc/imtd.hpp"
#include "support.hpp"

using namespace ebmc;
using ad::Tensor;
using ebmc::testing::random_tensor;

namespace {

Tensor column(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(1, n, std::move(v));
}

imtd::TrustWeights random_weights(std::size_t n, std::size_t m, std::uint64_t seed, const data::BoolMatrix& present) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  Tensor sigma(n, m), l1(n, m);
  for (std::size_t i = 0; i < n * m; ++i) {
    sigma.mutable_data()[i] = u(rng);
    l1.mutable_data()[i] = 3.0 * sigma.data()[i] + 1e-3;
  }
  return imtd::trust_weights(sigma, l1, present);
}

// Independent KL between softened distributions of two logit rows.
double kl_rows(const Tensor& s, const Tensor& t, std::size_t i, double tau) {
  const std::size_t k = s.cols();
  auto soft = [&](const Tensor& x) {
    std::vector<double> p(k);
    double mx = -1e300, z = 0.0;
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, x(i, j) / tau);
    for (std::size_t j = 0; j < k; ++j) z += p[j] = std::exp(x(i, j) / tau - mx);
    for (double& v : p) v /= z;
    return p;
  };
  const auto p = soft(s), q = soft(t);
  double kl = 0.0;
  for (std::size_t j = 0; j < k; ++j) kl += p[j] * std::log(p[j] / q[j]);
  return kl;
}

}  // namespace

TEST(Imtd, ConfigValidation) {
  imtd::DistillConfig c;
  EXPECT_NO_THROW(c.validate());
  c.mc_passes = 1;
  EXPECT_THROW(c.validate(), ContractError);
  c = {};
  c.tau_kd = 0.0;
  EXPECT_THROW(c.validate(), ContractError);
  c = {};
  c.perturbation = -0.01;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(Imtd, ZeroPerturbationGivesFullConfidence) {
  const Tensor w = random_tensor(3, 4, 1);
  const auto teacher = [&](const Tensor& x) { return ad::matmul(x, w); };
  const auto stats = imtd::teacher_statistics(teacher, random_tensor(5, 3, 2), 4, 0.0, 9);
  for (double s : stats.sigma) EXPECT_EQ(s, 0.0);
  Tensor sigma(5, 1), l1(5, 1);
  for (std::size_t i = 0; i < 5; ++i) l1.mutable_data()[i] = stats.variance_l1[i];
  const auto weights = imtd::trust_weights(sigma, l1, data::BoolMatrix(5, 1, true));
  for (double c : weights.confidence) EXPECT_EQ(c, 1.0);
  for (double a : weights.alpha) EXPECT_EQ(a, 1.0);
}

TEST(Imtd, TwoOppositePasses) {
  const std::vector<Tensor> passes{Tensor::from_rows({{1, 0}}), Tensor::from_rows({{0, 1}})};
  const auto stats = imtd::statistics_from_passes(passes);
  EXPECT_DOUBLE_EQ(stats.variance(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(stats.variance(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(stats.sigma[0], 0.25);
  EXPECT_DOUBLE_EQ(stats.variance_l1[0], 0.5);
  EXPECT_DOUBLE_EQ(stats.mean_probs(0, 0), 0.5);
  EXPECT_THROW(imtd::statistics_from_passes(std::vector<Tensor>{passes[0]}), ContractError);
}

TEST(Imtd, SigmaInvariantToPassOrder) {
  std::vector<Tensor> passes;
  for (std::uint64_t s = 0; s < 6; ++s) passes.push_back(ad::softmax_rows(random_tensor(4, 3, s)));
  const auto a = imtd::statistics_from_passes(passes);
  std::reverse(passes.begin(), passes.end());
  std::rotate(passes.begin(), passes.begin() + 2, passes.end());
  const auto b = imtd::statistics_from_passes(passes);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.sigma[i], b.sigma[i], 1e-15);
}

TEST(Imtd, TeacherStatisticsSeeded) {
  const Tensor w = random_tensor(3, 4, 3);
  const auto teacher = [&](const Tensor& x) { return ad::matmul(x, w); };
  const Tensor z = random_tensor(5, 3, 4);
  const auto a = imtd::teacher_statistics(teacher, z, 8, 0.05, 1);
  const auto b = imtd::teacher_statistics(teacher, z, 8, 0.05, 1);
  const auto c = imtd::teacher_statistics(teacher, z, 8, 0.05, 2);
  EXPECT_EQ(a.sigma, b.sigma);
  EXPECT_NE(a.sigma, c.sigma);
  for (double s : a.sigma) EXPECT_GT(s, 0.0);
}

TEST(Imtd, ReliabilityAtEMinusOne) {
  const auto w = imtd::trust_weights(column({0.2, 0.2}), column({std::exp(1.0) - 1.0, std::exp(1.0) - 1.0}),
                                     data::BoolMatrix(1, 2, true));
  EXPECT_NEAR(w.reliability[0], 1.0, 1e-12);
  EXPECT_NEAR(w.confidence[0], std::exp(-0.2), 1e-15);
  EXPECT_NEAR(w.alpha[0], 0.5, 1e-15);
}

TEST(Imtd, SymmetricModalitiesShareEvenly) {
  for (std::size_t m = 2; m <= 5; ++m) {
    const auto w = imtd::trust_weights(Tensor(3, m, 0.1), Tensor(3, m, 0.4), data::BoolMatrix(3, m, true));
    for (double a : w.alpha) EXPECT_NEAR(a, 1.0 / static_cast<double>(m), 1e-15);
  }
}

TEST(Imtd, ConfidenceIsExpNegSigmaExactly) {
  const data::BoolMatrix present(6, 3, true);
  const auto w = random_weights(6, 3, 5, present);
  for (std::size_t k = 0; k < w.sigma.size(); ++k) {
    EXPECT_EQ(w.confidence[k], std::exp(-w.sigma[k]));
    EXPECT_GT(w.confidence[k], 0.0);
    EXPECT_LE(w.confidence[k], 1.0);
  }
}

TEST(Imtd, AlphaSimplexWithMissingModalities) {
  data::BoolMatrix present(40, 3, true);
  std::mt19937_64 rng(6);
  for (std::size_t i = 0; i < 40; ++i) {
    const std::size_t keep = rng() % 3;
    for (std::size_t m = 0; m < 3; ++m)
      if (m != keep && rng() % 2) present.set(i, m, false);
  }
  const auto w = random_weights(40, 3, 7, present);
  for (std::size_t i = 0; i < 40; ++i) {
    double s = 0.0;
    for (std::size_t m = 0; m < 3; ++m) {
      const double a = w.at(w.alpha, i, m);
      EXPECT_GE(a, 0.0);
      if (!present(i, m)) {
        EXPECT_EQ(a, 0.0);
      }
      s += a;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const Tensor col = w.alpha_column(1);
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(col(i, 0), w.at(w.alpha, i, 1));
}

TEST(Imtd, TrustErrors) {
  data::BoolMatrix present(2, 2, true);
  present.set(1, 0, false);
  present.set(1, 1, false);
  EXPECT_THROW(imtd::trust_weights(Tensor(2, 2, 0.1), Tensor(2, 2, 0.1), present), ContractError);
  EXPECT_THROW(imtd::trust_weights(Tensor(1, 2, -0.1), Tensor(1, 2, 0.1), data::BoolMatrix(1, 2, true)),
               ContractError);
}

TEST(Imtd, MonotoneTrust) {
  const Tensor l1 = column({0.5, 0.5, 0.5});
  double prev_self = 2.0, prev_other = -1.0;
  for (double s : {0.0, 0.05, 0.1, 0.4, 1.0, 3.0}) {
    const auto w = imtd::trust_weights(column({s, 0.2, 0.2}), l1, data::BoolMatrix(1, 3, true));
    EXPECT_LT(w.alpha[0], prev_self);
    EXPECT_GT(w.alpha[1], prev_other);
    EXPECT_EQ(w.alpha[1], w.alpha[2]);
    prev_self = w.alpha[0];
    prev_other = w.alpha[1];
  }
}

TEST(Imtd, KlExample) {
  imtd::TrustWeights w;
  w.samples = 1;
  w.modalities = 1;
  w.alpha = {1.0};
  const Tensor student = Tensor::from_rows({{0.0, 0.0}});
  const Tensor teacher = Tensor::from_rows({{std::log(3.0), 0.0}});
  const double kl = imtd::loss_imtd(w, student, std::vector<Tensor>{teacher}, 1.0).item();
  EXPECT_NEAR(kl, 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25), 1e-12);
  EXPECT_NEAR(kl, 0.14384, 1e-5);
  EXPECT_THROW(imtd::loss_imtd(w, student, std::vector<Tensor>{teacher}, 0.0), ContractError);
}

TEST(Imtd, SelfDivergenceIsZero) {
  const data::BoolMatrix present(5, 3, true);
  const auto w = random_weights(5, 3, 8, present);
  const Tensor logits = random_tensor(5, 4, 9);
  EXPECT_NEAR(imtd::loss_imtd(w, logits, std::vector<Tensor>(3, logits), 2.0).item(), 0.0, 1e-15);
}

TEST(Imtd, ConcentratedAlphaPicksOneTerm) {
  const std::size_t n = 4;
  const Tensor student = random_tensor(n, 3, 10);
  const std::vector<Tensor> teachers{random_tensor(n, 3, 11), random_tensor(n, 3, 12), random_tensor(n, 3, 13)};
  imtd::TrustWeights w;
  w.samples = n;
  w.modalities = 3;
  w.alpha.assign(n * 3, 0.0);
  for (std::size_t i = 0; i < n; ++i) w.alpha[i * 3 + 1] = 1.0;
  double expected = 0.0;
  for (std::size_t i = 0; i < n; ++i) expected += kl_rows(student, teachers[1], i, 2.0) / static_cast<double>(n);
  EXPECT_NEAR(imtd::loss_imtd(w, student, teachers, 2.0).item(), expected, 1e-12);
}

TEST(Imtd, LossMatchesNaiveAndIsNonNegative) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::size_t n = 6;
    data::BoolMatrix present(n, 3, true);
    present.set(1, 2, false);
    present.set(3, 0, false);
    const auto w = random_weights(n, 3, s, present);
    const Tensor student = random_tensor(n, 4, s + 100);
    const std::vector<Tensor> teachers{random_tensor(n, 4, s + 200), random_tensor(n, 4, s + 300),
                                       random_tensor(n, 4, s + 400)};
    double expected = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t m = 0; m < 3; ++m) expected += w.at(w.alpha, i, m) * kl_rows(student, teachers[m], i, 1.5);
    expected /= static_cast<double>(n);
    const double got = imtd::loss_imtd(w, student, teachers, 1.5).item();
    EXPECT_NEAR(got, expected, 1e-12);
    EXPECT_GE(got, 0.0);
  }
}

TEST(Imtd, StudentGradCheckAndTeachersDetached) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const data::BoolMatrix present(5, 3, true);
    const auto w = random_weights(5, 3, s, present);
    const std::vector<Tensor> teachers{random_tensor(5, 3, s + 1), random_tensor(5, 3, s + 2), random_tensor(5, 3, s + 3)};
    EXPECT_LT(ad::grad_check([&](const Tensor& x) { return imtd::loss_imtd(w, x, teachers, 2.0); },
                             random_tensor(5, 3, s + 50)),
              1e-4);
  }
  const data::BoolMatrix present(3, 1, true);
  const auto w = random_weights(3, 1, 1, present);
  ad::Tape tape;
  const Tensor t = tape.variable(random_tensor(3, 2, 5));
  const Tensor student = tape.variable(random_tensor(3, 2, 6));
  const Tensor g = ad::grad_of_scalar_wrt(t, imtd::loss_imtd(w, student, std::vector<Tensor>{t}, 2.0));
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(Imtd, TrustSummaryMeansOverPresentRows) {
  data::BoolMatrix present(3, 2, true);
  present.set(0, 1, false);
  const auto w = imtd::trust_weights(Tensor::from_rows({{0.1, 9.0}, {0.3, 0.2}, {0.5, 0.4}}), Tensor(3, 2, 0.5), present);
  const std::vector<std::string> names{"a", "b"};
  const auto rows = imtd::trust_summary(w, present, names);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].modality, "b");
  EXPECT_NEAR(rows[0].mean_sigma, 0.3, 1e-15);
  EXPECT_NEAR(rows[1].mean_sigma, 0.3, 1e-15);
  EXPECT_NEAR(rows[0].mean_alpha, (1.0 + w.alpha[2] + w.alpha[4]) / 3.0, 1e-15);
  EXPECT_NEAR(rows[1].mean_alpha, (w.alpha[3] + w.alpha[5]) / 2.0, 1e-15);
}
