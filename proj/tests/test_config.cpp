#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "metasemi/config.hpp"

using namespace metasemi;

namespace {

std::string failing_key(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<no error>";
}

}  // namespace

TEST(ParseConfig, EmptyTextGivesDefaults) {
  EXPECT_EQ(render_config(parse_config("")), render_config(ExperimentConfig{}));
  EXPECT_EQ(render_config(parse_config("# only a comment\n\n   \n")),
            render_config(ExperimentConfig{}));
}

TEST(ParseConfig, ReadsValuesAndComments) {
  const ExperimentConfig c = parse_config(
      "beta = 0.25   # mixing\n"
      "  epochs=7\n"
      "hidden = 16,8\n"
      "activation = tanh\n"
      "method = const1\n"
      "no_ema = true\n"
      "dataset = blobs\n"
      "blob_centers = -1,0; 1,0 ; 0,2\n"
      "labels_per_class = all\n"
      "seeds = 4,5\n"
      "schedule = inv_t\n");
  EXPECT_EQ(c.train.beta, 0.25);
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_EQ(c.hidden, (std::vector<std::size_t>{16, 8}));
  EXPECT_EQ(c.train.arch.activation, Activation::tanh);
  EXPECT_EQ(c.train.method, Method::const1);
  EXPECT_TRUE(c.train.flags.no_ema);
  EXPECT_EQ(c.data.dataset, "blobs");
  EXPECT_EQ(c.data.blob_centers, (std::vector<Vec64>{{-1, 0}, {1, 0}, {0, 2}}));
  EXPECT_EQ(c.data.labels_per_class, kAllLabels);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(c.train.schedule, Schedule::inv_t);
  EXPECT_TRUE(parse_config("hidden = none\n").hidden.empty());
}

TEST(ParseConfig, StrictErrorsNameTheKey) {
  EXPECT_EQ(failing_key("betta = 0.5\n"), "betta");
  EXPECT_EQ(failing_key("beta = 0.5\nbeta = 0.6\n"), "beta");
  EXPECT_EQ(failing_key("beta = half\n"), "beta");
  EXPECT_EQ(failing_key("beta = 0\n"), "beta");
  EXPECT_EQ(failing_key("beta = nan\n"), "beta");
  EXPECT_EQ(failing_key("epochs = -3\n"), "epochs");
  EXPECT_EQ(failing_key("epochs = 2.5\n"), "epochs");
  EXPECT_EQ(failing_key("no_ema = maybe\n"), "no_ema");
  EXPECT_EQ(failing_key("method = mean_teacher\n"), "method");
  EXPECT_EQ(failing_key("dataset = cifar\n"), "dataset");
  EXPECT_EQ(failing_key("ema_decay = 1.5\n"), "ema_decay");
  EXPECT_EQ(failing_key("labeled_batch = 0\n"), "labeled_batch");
  EXPECT_EQ(failing_key("val_fraction = 1\n"), "val_fraction");
  EXPECT_EQ(failing_key("just some words\n"), "just some words");
}

TEST(RenderConfig, RoundTripIsExact) {
  ExperimentConfig c;
  c.train.beta = 0.1 + 0.2;
  c.train.alpha0 = 1.0 / 3.0;
  c.train.weight_decay = 5e-324;
  c.train.method = Method::pm1;
  c.train.flags.mixup_labeled_only = true;
  c.train.consistency_coeff = 0.7;
  c.hidden = {5};
  c.data.dataset = "csv";
  c.data.csv_path = "data/points.csv";
  c.data.labels_per_class = kAllLabels;
  c.seeds = {9, 0, 18446744073709551615ULL};
  c.prop1_eps = 3e-5;
  const std::string text = render_config(c);
  const ExperimentConfig back = parse_config(text);
  EXPECT_EQ(render_config(back), text);
  EXPECT_EQ(back.train.beta, c.train.beta);
  EXPECT_EQ(back.train.alpha0, c.train.alpha0);
  EXPECT_EQ(back.train.weight_decay, c.train.weight_decay);
  EXPECT_EQ(back.seeds, c.seeds);
  EXPECT_EQ(back.data, c.data);
}

TEST(RenderConfig, EveryKeyAppearsOnceInOrder) {
  const std::string text = render_config(ExperimentConfig{});
  std::istringstream in(text);
  std::string line;
  std::size_t i = 0;
  const auto keys = config_keys();
  while (std::getline(in, line)) {
    ASSERT_LT(i, keys.size());
    EXPECT_EQ(line.substr(0, line.find(" = ")), keys[i]);
    ++i;
  }
  EXPECT_EQ(i, keys.size());
}

TEST(FormatDouble, SeventeenDigitsAndNan) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(2.0), "2");
  EXPECT_EQ(format_double(std::nan("")), "nan");
}

TEST(DefaultsFile, MatchesTheBuiltInDefaults) {
  const ExperimentConfig c = load_config(METASEMI_DEFAULTS_CONF);
  EXPECT_EQ(render_config(c), render_config(ExperimentConfig{}));
  // Every key is documented in the reference file.
  std::ifstream in(METASEMI_DEFAULTS_CONF);
  std::stringstream ss;
  ss << in.rdbuf();
  for (const auto& key : config_keys()) {
    EXPECT_NE(ss.str().find("\n" + key + " = "), std::string::npos) << key;
  }
}

TEST(LoadConfig, MissingFileIsAnIoError) {
  EXPECT_THROW(load_config("/nonexistent/dir/run.conf"), std::ios_base::failure);
}
