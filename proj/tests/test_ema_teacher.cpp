#include <gtest/gtest.h>

#include <cmath>

#include "metasemi/ema_teacher.hpp"

using namespace metasemi;

TEST(EmaUpdate, Examples) {
  const ParamVector student(Vec64{0.0, 2.0, -3.0});
  const TeacherState start{ParamVector(Vec64{1.0, 1.0, 1.0}), 0.0};
  EXPECT_EQ(ema_update(start, student).params, student);

  TeacherState frozen = start;
  frozen.decay = 1.0;
  EXPECT_EQ(ema_update(frozen, student).params, start.params);

  const TeacherState t{ParamVector(Vec64{1.0}), 0.999};
  EXPECT_EQ(ema_update(t, ParamVector(Vec64{0.0})).params[0], 0.999);
}

TEST(EmaUpdate, InPlaceMatchesFunctionalForm) {
  Rng rng(1);
  TeacherState t{ParamVector(10), 0.9};
  for (double& v : t.params.values) v = rng.normal();
  ParamVector s(10);
  for (double& v : s.values) v = rng.normal();
  const TeacherState next = ema_update(t, s);
  ema_update_inplace(t, s);
  EXPECT_EQ(t.params, next.params);
  EXPECT_THROW(ema_update(t, ParamVector(9)), ShapeError);
}

TEST(EmaUpdate, GeometricClosedForm) {
  Rng rng(2);
  const double decay = 0.999;
  ParamVector t0(6), s(6);
  for (double& v : t0.values) v = rng.normal();
  for (double& v : s.values) v = rng.normal();
  TeacherState t{t0, decay};
  for (int n = 1; n <= 3000; ++n) {
    ema_update_inplace(t, s);
    if (n % 500 == 0) {
      const double dn = std::pow(decay, n);
      for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_NEAR(t.params[i], dn * t0[i] + (1.0 - dn) * s[i], 1e-10) << "n=" << n;
      }
    }
  }
}

TEST(PseudoLabel, ZeroTeacherIsUniform) {
  const MlpArch arch{{3, 4, 5}, Activation::relu};
  const Vec64 y = pseudo_label(ParamVector(arch.num_params()), arch, Vec64{1.0, -2.0, 0.5});
  for (double v : y) EXPECT_EQ(v, 0.2);
}

TEST(PseudoLabel, OneHotTakesTheArgmax) {
  // Softmax regression whose bias reproduces the probabilities [0.2, 0.5, 0.3].
  const MlpArch arch{{1, 3}, Activation::relu};
  const ParamVector p(Vec64{0.0, 0.0, 0.0, std::log(0.2), std::log(0.5), std::log(0.3)});
  const Vec64 soft = pseudo_label(p, arch, Vec64{4.0});
  EXPECT_NEAR(soft[0], 0.2, 1e-15);
  EXPECT_NEAR(soft[1], 0.5, 1e-15);
  EXPECT_NEAR(soft[2], 0.3, 1e-15);
  EXPECT_EQ(pseudo_label(p, arch, Vec64{4.0}, true), (Vec64{0.0, 1.0, 0.0}));

  const ParamVector tie(Vec64{0.0, 0.0, 0.0, 1.0, 1.0, 0.0});
  EXPECT_EQ(pseudo_label(tie, arch, Vec64{0.0}, true), (Vec64{1.0, 0.0, 0.0}));
}

TEST(PseudoLabel, TeacherCopyMatchesStudentForward) {
  Rng rng(3);
  const MlpArch arch{{2, 6, 3}, Activation::tanh};
  const ParamVector student = init_params(arch, rng);
  const TeacherState teacher{student, 0.999};
  const std::vector<Vec64> us{{0.3, -0.7}, {1.5, 2.0}, {-1.0, 0.0}};
  const Mat64 probs = forward(student, arch, Mat64::from_rows(us));
  const auto batch = pseudo_label_batch(teacher.params, arch, us);
  ASSERT_EQ(batch.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(batch[r].u, us[r]);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(batch[r].y_hat[k], probs(r, k));
    const Vec64 single = pseudo_label(teacher.params, arch, us[r]);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(single[k], probs(r, k), 1e-15);
  }
  EXPECT_THROW(pseudo_label(student, arch, Vec64{1.0, 2.0, 3.0}), ShapeError);
}

TEST(PseudoLabel, SoftLabelsLieOnTheSimplex) {
  Rng rng(4);
  const MlpArch arch{{4, 8, 6}, Activation::relu};
  ParamVector p = init_params(arch, rng);
  for (double& v : p.values) v *= 20.0;
  std::vector<Vec64> us(50, Vec64(4));
  for (auto& u : us) {
    for (double& v : u) v = 10.0 * rng.normal();
  }
  for (const auto& e : pseudo_label_batch(p, arch, us)) {
    double s = 0.0;
    for (double v : e.y_hat) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}
