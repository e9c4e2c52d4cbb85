#include <gtest/gtest.h>

#include <vector>

#include "ebmc/cce.hpp"
#include "ebmc/errors.hpp"
#include "support.hpp"

using namespace ebmc;
using ad::Tensor;

namespace {

struct Setup {
  data::MultimodalBatch batch;
  train::Model model;
  std::vector<msd::DisentangledRep> reps;
};

Setup make(std::size_t n, std::uint64_t seed, bool missing = true) {
  Setup s{ebmc::testing::micro_batch(n, seed, missing), {}, {}};
  s.model = ebmc::testing::micro_model(s.batch, seed + 100);
  s.reps = msd::disentangle(s.model.msd, nn::Bindings::constant(s.model.store), s.batch);
  return s;
}

bool equal(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

std::vector<Tensor> reps_z(const std::vector<msd::DisentangledRep>& reps) {
  std::vector<Tensor> out;
  for (const auto& r : reps) out.push_back(r.z);
  return out;
}

}  // namespace

TEST(Cce, ShapesMatchEncoderWidth) {
  auto s = make(6, 1);
  const auto params = nn::Bindings::constant(s.model.store);
  const auto out = cce::enhance(s.model.cce, params, s.reps, s.batch.present, 0.1, 7);
  ASSERT_EQ(out.size(), 3u);
  for (const auto& t : out) {
    EXPECT_EQ(t.rows(), 6u);
    EXPECT_EQ(t.cols(), ebmc::testing::micro_dims().rep);
  }
}

TEST(Cce, ZeroNoiseIsDeterministic) {
  auto s = make(6, 2);
  const auto params = nn::Bindings::constant(s.model.store);
  const auto a = cce::enhance(s.model.cce, params, s.reps, s.batch.present, 0.0, 1);
  const auto b = cce::enhance(s.model.cce, params, s.reps, s.batch.present, 0.0, 99);
  for (std::size_t m = 0; m < a.size(); ++m) EXPECT_TRUE(equal(a[m], b[m]));
}

TEST(Cce, NoiseDependsOnSeedOnly) {
  auto s = make(6, 3, false);
  const auto params = nn::Bindings::constant(s.model.store);
  const auto a = cce::enhance(s.model.cce, params, s.reps, s.batch.present, 0.1, 5);
  const auto b = cce::enhance(s.model.cce, params, s.reps, s.batch.present, 0.1, 5);
  const auto c = cce::enhance(s.model.cce, params, s.reps, s.batch.present, 0.1, 6);
  EXPECT_TRUE(equal(a[0], b[0]));
  EXPECT_FALSE(equal(a[0], c[0]));
}

TEST(Cce, SingleModalityRowsPassThrough) {
  auto s = make(6, 4);
  const auto params = nn::Bindings::constant(s.model.store);
  const auto out = cce::enhance(s.model.cce, params, s.reps, s.batch.present, 0.1, 3);
  // Sample 1 has only the first modality.
  for (std::size_t j = 0; j < out[0].cols(); ++j) EXPECT_EQ(out[0](1, j), s.reps[0].z(1, j));
  for (std::size_t m = 1; m < 3; ++m)
    for (std::size_t j = 0; j < out[m].cols(); ++j) EXPECT_EQ(out[m](1, j), 0.0);
  // Sample 2 still has two modalities and is regenerated.
  bool changed = false;
  for (std::size_t j = 0; j < out[0].cols(); ++j) changed |= out[0](2, j) != s.reps[0].z(2, j);
  EXPECT_TRUE(changed);

  const auto rows = cce::enhanced_rows(s.batch.present);
  EXPECT_FALSE(rows(1, 0));
  EXPECT_TRUE(rows(2, 0));
  EXPECT_TRUE(rows(2, 1));
  EXPECT_FALSE(rows(2, 2));
}

TEST(Cce, MeanOfOthersIgnoresAbsentModalities) {
  auto s = make(6, 5);
  const auto params = nn::Bindings::constant(s.model.store);
  // Row 2 lacks the last modality; garbage in its components must not leak.
  auto reps = s.reps;
  for (auto* t : {&reps[2].z_c, &reps[2].z_s}) {
    auto d = t->mutable_data();
    for (std::size_t j = 0; j < t->cols(); ++j) d[2 * t->cols() + j] = 1e3;
  }
  const auto a = cce::enhance(s.model.cce, params, s.reps, s.batch.present, 0.0, 0);
  const auto b = cce::enhance(s.model.cce, params, reps, s.batch.present, 0.0, 0);
  for (std::size_t j = 0; j < a[0].cols(); ++j) EXPECT_EQ(a[0](2, j), b[0](2, j));
}

TEST(Cce, RejectsBadInputs) {
  auto s = make(6, 6);
  const auto params = nn::Bindings::constant(s.model.store);
  EXPECT_THROW(cce::enhance(s.model.cce, params, s.reps, s.batch.present, -0.1, 0), ContractError);
  const std::vector<msd::DisentangledRep> two(s.reps.begin(), s.reps.begin() + 2);
  EXPECT_THROW(cce::enhance(s.model.cce, params, two, s.batch.present, 0.1, 0), DimensionError);
  EXPECT_THROW(cce::combine(Tensor::scalar(1), Tensor::scalar(1), -1.0), ContractError);
}

TEST(Cce, ReconstructionExamples) {
  auto s = make(6, 7, false);
  const auto params = nn::Bindings::constant(s.model.store);
  const auto same = reps_z(s.reps);
  const auto none = cce::loss_cce(same, s.reps, s.model.head, params, s.batch.labels, s.batch.scores,
                                  s.batch.present);
  EXPECT_EQ(none.l_rec.item(), 0.0);

  std::vector<Tensor> shifted;
  for (const auto& z : same) shifted.push_back(ad::add_scalar(z, 1.0));
  const auto ones = cce::loss_cce(shifted, s.reps, s.model.head, params, s.batch.labels, s.batch.scores,
                                  s.batch.present);
  EXPECT_NEAR(ones.l_rec.item(), static_cast<double>(ebmc::testing::micro_dims().rep), 1e-12);
}

TEST(Cce, ReconstructionOnlyCountsEnhancedRows) {
  auto s = make(6, 8);
  const auto params = nn::Bindings::constant(s.model.store);
  auto z = reps_z(s.reps);
  // Row 1 is single-modality: its difference must not count.
  auto d = z[0].mutable_data();
  for (std::size_t j = 0; j < z[0].cols(); ++j) d[1 * z[0].cols() + j] += 10.0;
  const auto parts = cce::loss_cce(z, s.reps, s.model.head, params, s.batch.labels, s.batch.scores, s.batch.present);
  EXPECT_EQ(parts.l_rec.item(), 0.0);
}

TEST(Cce, GammaZeroAndExactSum) {
  auto s = make(7, 9);
  const auto params = nn::Bindings::constant(s.model.store);
  const auto enh = cce::enhance(s.model.cce, params, s.reps, s.batch.present, 0.1, 11);
  const auto zero = cce::loss_cce(enh, s.reps, s.model.head, params, s.batch.labels, s.batch.scores,
                                  s.batch.present, 0.0);
  EXPECT_EQ(zero.l_cce.item(), zero.l_rec.item());
  for (double g : {0.1, 0.37, 2.0}) {
    const auto p = cce::loss_cce(enh, s.reps, s.model.head, params, s.batch.labels, s.batch.scores,
                                 s.batch.present, g);
    EXPECT_NEAR(p.l_cce.item(), p.l_rec.item() + g * p.l_task_enh.item(), 1e-12);
    EXPECT_GT(p.l_task_enh.item(), 0.0);
  }
}

TEST(Cce, TaskTermUsesEnhancedSlot) {
  auto s = make(6, 10, false);
  const auto params = nn::Bindings::constant(s.model.store);
  const auto z = reps_z(s.reps);
  const auto base = cce::loss_cce(z, s.reps, s.model.head, params, s.batch.labels, s.batch.scores, s.batch.present);

  // With z~ = z, every modality's pass sees the plain fused input.
  std::vector<fusion::SlotInput> slots;
  for (const auto& r : s.reps) slots.push_back({r.z, r.z_c});
  const auto out = fusion::fuse_predict(s.model.head, params, slots, s.batch.present);
  const double plain = fusion::loss_task(out.logits, s.batch.labels, s.batch.scores, s.model.head.mode).item();
  EXPECT_NEAR(base.l_task_enh.item(), plain, 1e-12);
}

TEST(Cce, GradCheckWithFrozenNoise) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto s = make(5, 20 + seed);
    const auto& gen = s.model.cce.generators[1];
    for (const std::size_t w : {gen.hidden.weight, gen.output.bias, s.model.msd.modalities[0].shared.hidden.weight}) {
      const double err = ad::grad_check(
          [&](const Tensor& x) {
            const auto params = nn::Bindings::substitute(s.model.store, w, x);
            const auto reps = msd::disentangle(s.model.msd, params, s.batch);
            const auto enh = cce::enhance(s.model.cce, params, reps, s.batch.present, 0.1, 42);
            return cce::loss_cce(enh, reps, s.model.head, params, s.batch.labels, s.batch.scores, s.batch.present)
                .l_cce;
          },
          s.model.store.value(w));
      EXPECT_LT(err, 1e-4) << s.model.store.name(w);
    }
  }
}
