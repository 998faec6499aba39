#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "metasemi/diagnostics.hpp"

using namespace metasemi;

namespace {

SplitDataset moons(std::uint64_t seed) {
  Rng gen(seed);
  const Dataset d = gen_two_moons(300, 0.1, gen);
  Rng split(seed + 1);
  return split_dataset(d, 4, 0.2, split);
}

TrainConfig small_config() {
  TrainConfig c;
  c.arch = MlpArch{{2, 6, 2}, Activation::tanh};
  c.labeled_batch = 4;
  c.unlabeled_batch = 12;
  c.seed = 2;
  return c;
}

Prop1Report prop1_for(std::uint64_t seed, std::size_t index, std::size_t steps,
                      double alpha = 0.1) {
  Rng rng = Rng(seed).stream("prop1");
  const Prop1Instance inst = random_prop1_instance(rng, index);
  return verify_prop1(inst.arch, inst.params, inst.labeled, inst.unlabeled, alpha, steps);
}

}  // namespace

TEST(RandomProp1Instance, ShapesAndSimplexLabels) {
  Rng rng(1);
  for (std::size_t i = 0; i < 6; ++i) {
    const Prop1Instance inst = random_prop1_instance(rng, i);
    EXPECT_EQ(inst.arch.activation, i % 2 ? Activation::tanh : Activation::relu);
    EXPECT_EQ(inst.params.size(), inst.arch.num_params());
    EXPECT_EQ(inst.labeled.size(), 4u);
    EXPECT_EQ(inst.unlabeled.size(), 6u);
    EXPECT_LE(inst.arch.input_dim(), 4u);
    EXPECT_LE(inst.arch.num_classes(), 3u);
    for (std::size_t r = 0; r < inst.unlabeled.size(); ++r) {
      double s = 0.0;
      for (double v : inst.unlabeled.labels.row(r)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(VerifyProp1, OneStepMatchesTheClosedForm) {
  for (std::size_t i = 0; i < 8; ++i) {
    const Prop1Report r = prop1_for(3, i, 1);
    ASSERT_EQ(r.fd.size(), 6u);
    EXPECT_EQ(r.within_tolerance, 6u) << "instance " << i << " max_rel " << r.max_rel_deviation;
    for (std::size_t j = 0; j < 6; ++j) {
      const double cf = r.closed_form[j];
      EXPECT_NEAR(r.fd[j], cf, std::max(kProp1RelTol * std::abs(cf), kProp1AbsTol));
      EXPECT_EQ(cf, -0.1 * r.dots[j]);
    }
    EXPECT_GE(r.max_rel_deviation, 0.0);
    EXPECT_GE(r.max_abs_deviation, 0.0);
  }
}

TEST(VerifyProp1, SignsAgreeAwayFromTies) {
  for (std::size_t i = 0; i < 8; ++i) {
    const Prop1Report r = prop1_for(4, i, 1);
    EXPECT_EQ(r.sign_agreements, r.sign_checked) << "instance " << i;
  }
}

TEST(VerifyProp1, MultiStepScalesLinearly) {
  for (std::size_t i = 0; i < 6; ++i) {
    const Prop1Report one = prop1_for(5, i, 1);
    for (std::size_t m : {2u, 5u}) {
      const Prop1Report multi = prop1_for(5, i, m);
      EXPECT_EQ(multi.within_tolerance, 6u) << "instance " << i << " M=" << m;
      for (std::size_t j = 0; j < 6; ++j) {
        if (std::abs(one.fd[j]) <= 1e-7) continue;
        EXPECT_NEAR(multi.fd[j] / one.fd[j], static_cast<double>(m), 2e-3 * m)
            << "instance " << i << " sample " << j;
      }
    }
  }
}

TEST(VerifyProp1, ZeroLearningRateMeansNoDependence) {
  const Prop1Report r = prop1_for(6, 0, 3, 0.0);
  for (std::size_t j = 0; j < r.fd.size(); ++j) {
    EXPECT_EQ(r.fd[j], 0.0);
    EXPECT_EQ(r.closed_form[j], 0.0);
  }
}

TEST(GradientCheckSuite, WorstErrorIsSmallAndDeterministic) {
  Rng a(7), b(7);
  const GradCheckResult ra = gradient_check_suite(a, 20);
  const GradCheckResult rb = gradient_check_suite(b, 20);
  EXPECT_LT(ra.max_rel_err, 1e-5);
  EXPECT_GT(ra.coordinates_checked, 100u);
  EXPECT_EQ(ra.max_rel_err, rb.max_rel_err);
  EXPECT_EQ(ra.coordinates_checked, rb.coordinates_checked);
}

TEST(SoftmaxRegressionCheck, MatchesOuterProductFormula) {
  for (std::uint64_t seed : {8u, 9u, 10u}) {
    Rng rng(seed);
    EXPECT_LT(softmax_regression_check(rng), 1e-10);
  }
}

TEST(AssumptionRatio, AllWeightsCancellingGivesZero) {
  // Softmax regression on identical points: the labeled entry is always
  // selected (+1) and the pseudo-labeled entry, labelled by a teacher that
  // predicts the other class, always opposes it (-1), so every draw has
  // sum w = 0.
  SplitDataset data;
  data.num_classes = 2;
  data.labeled = {{{1.0}, {1.0, 0.0}}};
  data.unlabeled = std::vector<Vec64>(10, Vec64{1.0});
  TrainConfig c;
  c.arch = MlpArch{{1, 2}, Activation::relu};
  c.method = Method::pm1;
  c.flags.no_mixup = true;
  c.flags.one_hot_pseudo = true;
  c.labeled_batch = 1;
  c.unlabeled_batch = 1;
  TrainState s = init_state(c);
  s.student = ParamVector(4);
  s.teacher.params = ParamVector(Vec64{0.0, 0.0, 0.0, 1.0});
  const AssumptionRatioEstimate est = assumption_ratio(s, c, data, 20, Rng(3), 100);
  EXPECT_EQ(est.numerator, 0.0);
  EXPECT_GT(est.denominator, 0.0);
  EXPECT_EQ(est.ratio, 0.0);
  EXPECT_EQ(est.sample_count, 20u);
}

TEST(AssumptionRatio, FiniteNonNegativeAndDrawOrderFree) {
  const SplitDataset data = moons(11);
  const TrainConfig c = small_config();
  const TrainState s = init_state(c);
  const Rng base = Rng(12).stream("assumption");
  const AssumptionRatioEstimate est = assumption_ratio(s, c, data, 16, base, 100);
  EXPECT_TRUE(std::isfinite(est.ratio));
  EXPECT_GT(est.ratio, 0.0);
  EXPECT_GE(est.numerator, 0.0);
  ASSERT_EQ(est.draws.size(), 16u);

  // Re-evaluate each draw from its own stream in reverse order.
  const double alpha = lr_at(c, s.t, 100);
  double sum = 0.0;
  for (std::size_t d = 16; d-- > 0;) {
    const double v = assumption_draw(s, c, data, base.stream("draw", d), alpha);
    EXPECT_EQ(std::memcmp(&v, &est.draws[d], sizeof v), 0) << "draw " << d;
    sum += v;
  }
  EXPECT_NEAR(sum / 16.0, est.numerator, 1e-14 * est.numerator);
}

TEST(AssumptionRatio, DoublingDrawsShrinksTheSpread) {
  const SplitDataset data = moons(13);
  const TrainConfig c = small_config();
  const TrainState s = init_state(c);
  auto spread = [&](std::size_t n_mc) {
    const int repeats = 40;
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < repeats; ++r) {
      const double v =
          assumption_ratio(s, c, data, n_mc, Rng(1000 + r).stream("assumption"), 100).numerator;
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / repeats;
    return std::sqrt((sum2 - repeats * mean * mean) / (repeats - 1));
  };
  const double ratio = spread(16) / spread(8);
  EXPECT_GT(ratio, 0.707 * 0.7);
  EXPECT_LT(ratio, 0.707 * 1.3);
}

TEST(AssumptionRatio, RejectsEmptyInputs) {
  const SplitDataset data = moons(14);
  const TrainConfig c = small_config();
  const TrainState s = init_state(c);
  EXPECT_THROW(assumption_ratio(s, c, data, 0, Rng(1), 100), InvalidHyperparameter);
  SplitDataset no_unlabeled = data;
  no_unlabeled.unlabeled.clear();
  EXPECT_THROW(assumption_ratio(s, c, no_unlabeled, 4, Rng(1), 100), DataError);
}

TEST(SelectionPrecision, Examples) {
  const std::vector<LabeledExample> x{{{0.0}, {1.0, 0.0}}};
  const std::vector<PseudoLabeledExample> pseudo{
      {{1.0}, {0.9, 0.1}}, {{2.0}, {0.2, 0.8}}, {{3.0}, {0.4, 0.6}}};
  const MixedBatch mixed = unmixed_unlabeled_batch(x, pseudo);
  const std::vector<int> truth{0, 1, 1};
  const std::vector<int> half_wrong{0, 0, 0};

  const WeightVector all{{1, 1, 1, 1}, WeightMode::meta};
  const WeightVector some{{1, 0, 1, 1}, WeightMode::meta};
  const WeightVector labeled_only{{1, 0, 0, 0}, WeightMode::meta};
  EXPECT_EQ(selection_precision(all, mixed, 1, truth, pseudo), 1.0);
  EXPECT_EQ(selection_precision(some, mixed, 1, truth, pseudo), 1.0);
  EXPECT_EQ(selection_precision(all, mixed, 1, half_wrong, pseudo), 1.0 / 3.0);
  EXPECT_EQ(selection_precision(some, mixed, 1, half_wrong, pseudo), 0.0);
  EXPECT_FALSE(selection_precision(labeled_only, mixed, 1, truth, pseudo).has_value());
  EXPECT_FALSE(selection_precision(all, mixed, 1, {}, pseudo).has_value());
}
