#include <gtest/gtest.h>

#include <cmath>

#include "metasemi/meta_reweight.hpp"

using namespace metasemi;

namespace {

Batch random_soft_batch(Rng& rng, std::size_t n, std::size_t d, std::size_t k) {
  std::vector<Vec64> xs, ys;
  for (std::size_t r = 0; r < n; ++r) {
    Vec64 x(d), z(k);
    for (double& v : x) v = rng.normal();
    for (double& v : z) v = rng.normal();
    xs.push_back(x);
    ys.push_back(softmax(z));
  }
  return Batch{Mat64::from_rows(xs), Mat64::from_rows(ys)};
}

}  // namespace

TEST(MetaGradients, Examples) {
  const MetaGradients mg = meta_gradients(Vec64{2.0, 0.0, -1.5}, 0.1);
  EXPECT_EQ(mg.alpha, 0.1);
  EXPECT_NEAR(mg.g[0], -0.2, 1e-16);
  EXPECT_EQ(mg.g[1], 0.0);
  EXPECT_NEAR(mg.g[2], 0.15, 1e-16);
  for (double alpha : {1e-3, 1.0, 7.5}) EXPECT_EQ(meta_gradients(Vec64{0.0}, alpha).g[0], 0.0);
}

TEST(AssignWeights, MetaModeIncludesTheTie) {
  MetaGradients mg;
  mg.g = {-0.5, 0.0, 0.3};
  const WeightVector w = assign_weights(mg, WeightMode::meta);
  EXPECT_EQ(w.w, (Vec64{1.0, 1.0, 0.0}));
  EXPECT_EQ(w.mode, WeightMode::meta);
  EXPECT_EQ(w.selected(), 2u);
  EXPECT_EQ(w.sum(), 2.0);
}

TEST(AssignWeights, AblationModes) {
  MetaGradients mg;
  mg.g = {-0.5, 0.3};
  EXPECT_EQ(assign_weights(mg, WeightMode::pm1).w, (Vec64{1.0, -1.0}));
  EXPECT_EQ(assign_weights(mg, WeightMode::const1).w, (Vec64{1.0, 1.0}));
  EXPECT_EQ(to_string(WeightMode::pm1), "pm1");
}

TEST(AssignWeights, EntriesAreZeroOrOne) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    Vec64 dots(20);
    for (double& v : dots) v = rng.normal();
    for (double v : assign_weights(meta_gradients(dots, 0.1), WeightMode::meta).w) {
      EXPECT_TRUE(v == 0.0 || v == 1.0);
    }
  }
}

TEST(AssignWeights, InvariantToGradientScaleAndLearningRate) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Vec64 dots(16);
    for (double& v : dots) v = rng.normal() * std::pow(10.0, rng.normal());
    if (trial % 10 == 0) dots[0] = 0.0;
    const Vec64 reference = assign_weights(meta_gradients(dots, 0.1), WeightMode::meta).w;
    for (double c : {1e-3, 1.0, 1e3}) {
      Vec64 scaled = dots;
      for (double& v : scaled) v *= c;
      for (double alpha : {1e-3, 0.1}) {
        EXPECT_EQ(assign_weights(meta_gradients(scaled, alpha), WeightMode::meta).w, reference);
      }
    }
  }
}

TEST(AssignWeights, SelectsSamplesAlignedWithTheSupervisedGradient) {
  // w_j = 1 exactly when the sample gradient makes an angle of at most 90
  // degrees with the summed supervised gradient.
  Rng rng(3);
  const MlpArch arch{{3, 5, 3}, Activation::tanh};
  const ParamVector p = init_params(arch, rng);
  const Batch sup = random_soft_batch(rng, 4, 3, 3);
  const Batch unl = random_soft_batch(rng, 10, 3, 3);
  const ParamVector g_sup = grad_weighted_loss(p, arch, sup, Vec64(4, 1.0)).grad;
  const Vec64 dots = per_sample_grad_dots(p, arch, unl, g_sup);
  const WeightVector w = assign_weights(meta_gradients(dots, 0.05), WeightMode::meta);
  for (std::size_t j = 0; j < 10; ++j) {
    Vec64 e(10, 0.0);
    e[j] = 1.0;
    const ParamVector gj = grad_weighted_loss(p, arch, unl, e).grad;
    const double cos_angle = dot(g_sup.span(), gj.span()) /
                             std::sqrt(squared_norm(g_sup.span()) * squared_norm(gj.span()));
    EXPECT_EQ(w.w[j] == 1.0, cos_angle >= 0.0) << "sample " << j;
  }
}

TEST(MetaLoss, Examples) {
  WeightVector zero{{0.0, 0.0}, WeightMode::meta};
  EXPECT_EQ(meta_loss(zero, Vec64{1.0, 2.0}), 0.0);
  EXPECT_EQ(meta_loss(WeightVector{{1.0, 0.0}, WeightMode::meta}, Vec64{0.4, 9.9}), 0.4);
  EXPECT_NEAR(meta_loss(WeightVector{{1.0, 1.0}, WeightMode::meta}, Vec64{0.2, 0.4}), 0.3, 1e-16);
  EXPECT_THROW(meta_loss(zero, Vec64{1.0}), ShapeError);
}

TEST(MetaLoss, Pm1UsesTheSignedSum) {
  // (1 * 0.5 - 1 * 0.2 + 1 * 0.3) / (1 - 1 + 1)
  EXPECT_NEAR(meta_loss(WeightVector{{1.0, -1.0, 1.0}, WeightMode::pm1}, Vec64{0.5, 0.2, 0.3}),
              0.6, 1e-15);
  EXPECT_EQ(meta_loss(WeightVector{{1.0, -1.0}, WeightMode::pm1}, Vec64{0.5, 0.2}), 0.0);
}

TEST(MetaLossGrad, ZeroWeightsGiveZeroGradient) {
  Rng rng(4);
  const MlpArch arch{{2, 4, 2}, Activation::relu};
  const ParamVector p = init_params(arch, rng);
  const Batch b = random_soft_batch(rng, 3, 2, 2);
  const ParamVector g = meta_loss_grad(p, arch, b, WeightVector{{0, 0, 0}, WeightMode::meta});
  EXPECT_EQ(g, ParamVector(p.size()));
  EXPECT_THROW(meta_loss_grad(p, arch, b, WeightVector{{1, 0}, WeightMode::meta}), ShapeError);
}

TEST(MetaLossGrad, UnitWeightIsThatSampleAlone) {
  Rng rng(5);
  const MlpArch arch{{2, 4, 2}, Activation::tanh};
  const ParamVector p = init_params(arch, rng);
  const Batch b = random_soft_batch(rng, 3, 2, 2);
  const ParamVector g = meta_loss_grad(p, arch, b, WeightVector{{0, 1, 0}, WeightMode::meta});
  const ParamVector ref = grad_weighted_loss(p, arch, b, Vec64{0, 1, 0}).grad;
  EXPECT_EQ(g, ref);
}

TEST(MetaLossGrad, MatchesFiniteDifferencesOfMetaLoss) {
  Rng rng(6);
  for (Activation act : {Activation::relu, Activation::tanh}) {
    const MlpArch arch{{3, 6, 3}, act};
    ParamVector p = init_params(arch, rng);
    for (double& v : p.values) v += 0.05 * rng.normal();
    const Batch b = random_soft_batch(rng, 7, 3, 3);
    const WeightVector w{{1, 0, 1, 1, 0, 1, 0}, WeightMode::meta};
    const ParamVector g = meta_loss_grad(p, arch, b, w);
    const ParamVector fd = finite_diff_grad(
        p, [&](const ParamVector& q) { return meta_loss(w, per_sample_losses(q, arch, b)); },
        1e-6);
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_NEAR(g[i], fd[i], std::max(1e-6 * std::abs(fd[i]), 1e-9)) << "coordinate " << i;
    }
  }
}
