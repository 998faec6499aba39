#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <sstream>

#include "metasemi/checkpoint.hpp"

using namespace metasemi;

namespace {

bool bitwise_equal(const ParamVector& a, const ParamVector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.values.data(), b.values.data(), a.size() * sizeof(double)) == 0;
}

Checkpoint round_trip(const Checkpoint& c) {
  std::stringstream ss;
  write_checkpoint(ss, c);
  return read_checkpoint(ss);
}

std::string corrupt(const std::string& text) {
  std::istringstream in(text);
  try {
    read_checkpoint(in);
  } catch (const CheckpointError& e) {
    return e.what();
  }
  return "<accepted>";
}

}  // namespace

TEST(Checkpoint, RandomParametersRoundTripBitwise) {
  Rng rng(1);
  const MlpArch arch{{3, 7, 4}, Activation::relu};
  for (int trial = 0; trial < 20; ++trial) {
    Checkpoint c{arch.layer_sizes, ParamVector(arch.num_params()), std::nullopt};
    for (double& v : c.student.values) v = rng.normal() * std::pow(10.0, 30.0 * rng.normal());
    if (trial % 2) {
      c.teacher = ParamVector(arch.num_params());
      for (double& v : c.teacher->values) v = rng.normal();
    }
    const Checkpoint back = round_trip(c);
    EXPECT_EQ(back.layer_sizes, c.layer_sizes);
    EXPECT_TRUE(bitwise_equal(back.student, c.student));
    ASSERT_EQ(back.teacher.has_value(), c.teacher.has_value());
    if (c.teacher) {
      EXPECT_TRUE(bitwise_equal(*back.teacher, *c.teacher));
    }
  }
}

TEST(Checkpoint, ExtremeValuesRoundTripBitwise) {
  using lim = std::numeric_limits<double>;
  const Vec64 extremes{0.0,        -0.0,           lim::min(),     -lim::min(),
                       lim::max(), -lim::max(),    lim::denorm_min(), -lim::denorm_min(),
                       1.0 / 3.0,  0.1,            lim::epsilon(), 1e308};
  const Checkpoint c{{2, 4}, ParamVector(extremes), ParamVector(extremes)};
  const Checkpoint back = round_trip(c);
  EXPECT_TRUE(bitwise_equal(back.student, c.student));
  EXPECT_TRUE(bitwise_equal(*back.teacher, *c.teacher));
  EXPECT_TRUE(std::signbit(back.student[1]));
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "metasemi_ckpt_test.txt";
  const Checkpoint c{{1, 2}, ParamVector(Vec64{0.5, -1.25, 3.0, 1e-300}), std::nullopt};
  save_checkpoint(path.string(), c);
  EXPECT_EQ(load_checkpoint(path.string()), c);
  std::filesystem::remove(path);
  EXPECT_THROW(save_checkpoint("/nonexistent/dir/ckpt.txt", c), std::ios_base::failure);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/ckpt.txt"), std::ios_base::failure);
}

TEST(Checkpoint, HeaderLayout) {
  std::stringstream ss;
  write_checkpoint(ss, Checkpoint{{1, 2}, ParamVector(Vec64{1, 2, 3, 4}), std::nullopt});
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "metasemi-checkpoint 1");
  std::getline(ss, line);
  EXPECT_EQ(line, "layers 2 1 2");
  std::getline(ss, line);
  EXPECT_EQ(line, "params 4");
  std::getline(ss, line);
  EXPECT_EQ(line, "teacher 0");
}

TEST(Checkpoint, MalformedInputIsRejected) {
  const std::string good = "metasemi-checkpoint 1\nlayers 2 1 2\nparams 4\nteacher 0\n1 2 3 4\n";
  EXPECT_EQ(corrupt(good), "<accepted>");
  EXPECT_NE(corrupt("metasemi-checkpoint 2\nlayers 2 1 2\nparams 4\nteacher 0\n1 2 3 4\n"),
            "<accepted>");
  EXPECT_NE(corrupt("not a checkpoint\n"), "<accepted>");
  EXPECT_NE(corrupt("metasemi-checkpoint 1\nlayers 2 1 2\nparams 5\nteacher 0\n1 2 3 4 5\n"),
            "<accepted>");
  EXPECT_NE(corrupt("metasemi-checkpoint 1\nlayers 2 1 2\nparams 4\nteacher 0\n1 2 3\n"),
            "<accepted>");
  EXPECT_NE(corrupt("metasemi-checkpoint 1\nlayers 2 1 2\nparams 4\nteacher 0\n1 2 x 4\n"),
            "<accepted>");
  EXPECT_NE(corrupt("metasemi-checkpoint 1\nlayers 2 1 2\nparams 4\nteacher 1\n1 2 3 4\n"),
            "<accepted>");
  EXPECT_NE(corrupt(good + "5\n"), "<accepted>");
  EXPECT_NE(corrupt(""), "<accepted>");
}
