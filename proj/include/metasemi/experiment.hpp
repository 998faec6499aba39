#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metasemi/config.hpp"
#include "metasemi/data.hpp"
#include "metasemi/trainer.hpp"

namespace metasemi {

inline constexpr const char* kToolVersion = "meta_semi 1.0.0";

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;

/// Command-line inputs common to all subcommands.
struct CommandOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string idx_images;
  std::string idx_labels;
  std::string csv_path;
};

/// Loads the config file (or the defaults when no path is given) and applies
/// the command-line overrides. `--seed` sets the training seed and replaces
/// the seed set used by sweep and compare.
ExperimentConfig resolve_config(const CommandOptions& opts);

/// Synthetic data is generated from `seed` ("data" and "test" streams); file
/// data has a test split held out with the "test" stream. The train/val and
/// labeled/unlabeled split uses the "split" stream.
SplitDataset build_dataset(const DataConfig& cfg, std::uint64_t seed);

/// One-line summary of the split sizes, written into manifests.
std::string describe_dataset(const DataConfig& cfg, const SplitDataset& data);

/// Training config with the architecture [d_in, hidden..., K] taken from the data.
TrainConfig resolve_train_config(const ExperimentConfig& cfg, const SplitDataset& data,
                                 std::uint64_t seed);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& rec);
std::string render_metrics_csv(std::span<const MetricsRecord> history);

/// Resolved config followed by `#` comment lines; parse_config accepts it.
std::string render_manifest(const ExperimentConfig& cfg, const std::string& dataset_descriptor,
                            const std::vector<std::string>& artifacts);

struct RunOutcome {
  std::vector<MetricsRecord> history;
  double student_error = 0.0;
  double teacher_error = 0.0;
};

/// Trains one seed. With a non-empty `out_dir` writes manifest.conf (before
/// training), metrics.csv, assumption.csv when the ratio is tracked, periodic
/// and final checkpoints.
RunOutcome run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                          const std::string& out_dir);

/// A method name optionally joined with ablation flags by '+', e.g.
/// "meta_semi+one_hot_pseudo". A bare flag means meta_semi with that flag.
struct MethodSpec {
  std::string label;
  Method method = Method::meta_semi;
  AblationFlags flags;
};
MethodSpec parse_method_spec(const std::string& text);

/// Mean and sample standard deviation (0 for a single value).
struct Summary {
  double mean = 0.0;
  double std_dev = 0.0;
};
Summary summarize(std::span<const double> values);

/// Worker count: META_SEMI_THREADS when set to a positive integer, otherwise
/// the hardware concurrency; never more than `tasks`.
std::size_t worker_count(std::size_t tasks);

/// Runs fn(0..n-1) on worker_count(n) threads. The first exception (by task
/// index) is rethrown after all tasks finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

int cmd_train(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_check(const std::string& what, const CommandOptions& opts, std::ostream& out,
              std::ostream& err);
int cmd_sweep(const CommandOptions& opts, const std::string& param,
              const std::vector<double>& values, std::ostream& out, std::ostream& err);
int cmd_compare(const CommandOptions& opts, const std::vector<std::string>& methods,
                std::ostream& out, std::ostream& err);

}  // namespace metasemi
