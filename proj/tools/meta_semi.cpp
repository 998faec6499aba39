// meta_semi: train, check, sweep and compare from the command line.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metasemi/experiment.hpp"

namespace {

void add_common(CLI::App* cmd, metasemi::CommandOptions& opts, std::uint64_t& seed, bool& has_seed) {
  cmd->add_option("--config", opts.config_path, "key = value config file (defaults if omitted)");
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", seed, "override the seed")->each([&](const std::string&) { has_seed = true; });
  cmd->add_option("--data-idx-images", opts.idx_images, "IDX image file");
  cmd->add_option("--data-idx-labels", opts.idx_labels, "IDX label file");
  cmd->add_option("--data-csv", opts.csv_path, "CSV file (label in the last column)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-Semi semi-supervised learning lab"};
  app.require_subcommand(1);

  metasemi::CommandOptions opts;
  std::uint64_t seed = 0;
  bool has_seed = false;

  auto* train = app.add_subcommand("train", "train one model and write metrics, manifest, checkpoint");
  add_common(train, opts, seed, has_seed);

  auto* check = app.add_subcommand("check", "run a diagnostic: gradcheck | prop1 | assumption");
  std::string what;
  check->add_option("what", what, "diagnostic to run")
      ->required()
      ->check(CLI::IsMember({"gradcheck", "prop1", "assumption"}));
  add_common(check, opts, seed, has_seed);

  auto* sweep = app.add_subcommand("sweep", "sweep a hyper-parameter over the seed set");
  std::string param = "beta";
  std::vector<double> values;
  sweep->add_option("--param", param, "parameter to sweep (beta)");
  sweep->add_option("--values", values, "values to try")->required()->delimiter(',');
  add_common(sweep, opts, seed, has_seed);

  auto* compare = app.add_subcommand("compare", "paired runs of several methods");
  std::vector<std::string> methods;
  compare->add_option("--methods", methods, "methods, optionally with +flag ablations")
      ->required()
      ->delimiter(',');
  add_common(compare, opts, seed, has_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : metasemi::kExitConfig;
  }
  if (has_seed) opts.seed = seed;

  if (*train) return metasemi::cmd_train(opts, std::cout, std::cerr);
  if (*check) return metasemi::cmd_check(what, opts, std::cout, std::cerr);
  if (*sweep) return metasemi::cmd_sweep(opts, param, values, std::cout, std::cerr);
  return metasemi::cmd_compare(opts, methods, std::cout, std::cerr);
}
