#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "metasemi/trainer.hpp"

namespace metasemi {

/// Bad, unknown or malformed configuration entry; `key()` names it.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error("config key '" + key + "': " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct DataConfig {
  std::string dataset = "two_moons";  // two_moons | blobs | idx | csv
  std::size_t n_samples = 1000;
  std::size_t n_test = 1000;
  double noise = 0.1;
  std::vector<Vec64> blob_centers = {{-5.0, 0.0}, {5.0, 0.0}};
  double blob_std = 1.0;
  std::size_t labels_per_class = 3;  // kAllLabels keeps every label
  double val_fraction = 0.2;
  double test_fraction = 0.2;  // file datasets only
  bool standardize = true;
  std::string idx_images;
  std::string idx_labels;
  std::string csv_path;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

/// Everything a run needs: training hyper-parameters, data, and the knobs of
/// the sweep/compare/check commands. The network's input and output sizes
/// come from the data; `hidden` holds the sizes in between.
struct ExperimentConfig {
  TrainConfig train;
  std::vector<std::size_t> hidden = {32, 32};
  DataConfig data;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::size_t checkpoint_every = 0;
  std::size_t gradcheck_cases = 20;
  std::size_t prop1_cases = 10;
  std::size_t prop1_steps = 5;
  double prop1_eps = 1e-4;
  double prop1_alpha = 0.1;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, repeated
/// keys and unparsable values raise ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Applies a single key (used for command-line overrides as well).
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Every key in canonical order, doubles with 17 significant digits, so that
/// parse_config(render_config(c)) reproduces c exactly.
std::string render_config(const ExperimentConfig& cfg);

std::vector<std::string> config_keys();

/// "%.17g", with NaN printed as "nan".
std::string format_double(double v);

}  // namespace metasemi
