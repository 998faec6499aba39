#include "metasemi/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace metasemi {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(trim(item));
  return parts;
}

double to_double(const std::string& key, const std::string& v) {
  // Underflow to a subnormal sets ERANGE but is a valid value; overflow is caught by isfinite.
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d)) {
    throw ConfigError(key, "expected a finite number, got '" + v + "'");
  }
  return d;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  if (v.empty() || v.front() == '-') {
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  }
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE) {
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key, "expected true|false, got '" + v + "'");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& v, F conv) {
  std::vector<T> out;
  if (v.empty() || v == "none") return out;
  for (const auto& p : split(v, ',')) out.push_back(conv(p));
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F fmt) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ",";
    s += fmt(xs[i]);
  }
  return s;
}

struct Entry {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define DOUBLE_ENTRY(name, field)                                                    \
  Entry {                                                                            \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = to_double(name, v); }, \
        [](const ExperimentConfig& c) { return format_double(c.field); }             \
  }
#define SIZE_ENTRY(name, field)                                                    \
  Entry {                                                                          \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = to_size(name, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }          \
  }
#define BOOL_ENTRY(name, field)                                                    \
  Entry {                                                                          \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = to_bool(name, v); }, \
        [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); } \
  }
#define STRING_ENTRY(name, field)                                                  \
  Entry {                                                                          \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = v; },          \
        [](const ExperimentConfig& c) { return c.field; }                          \
  }

template <typename Parse>
auto wrap(const char* key, Parse parse) {
  return [key, parse](const std::string& v) {
    try {
      return parse(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, e.what());
    }
  };
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      // data
      STRING_ENTRY("dataset", data.dataset),
      SIZE_ENTRY("n_samples", data.n_samples),
      SIZE_ENTRY("n_test", data.n_test),
      DOUBLE_ENTRY("noise", data.noise),
      Entry{"blob_centers",
            [](ExperimentConfig& c, const std::string& v) {
              std::vector<Vec64> centers;
              for (const auto& pt : split(v, ';')) {
                centers.push_back(to_list<double>(
                    pt, [](const std::string& s) { return to_double("blob_centers", s); }));
              }
              if (centers.empty()) throw ConfigError("blob_centers", "need at least one center");
              c.data.blob_centers = std::move(centers);
            },
            [](const ExperimentConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.data.blob_centers.size(); ++i) {
                if (i) s += ";";
                s += join(c.data.blob_centers[i], format_double);
              }
              return s;
            }},
      DOUBLE_ENTRY("blob_std", data.blob_std),
      Entry{"labels_per_class",
            [](ExperimentConfig& c, const std::string& v) {
              c.data.labels_per_class = v == "all" ? kAllLabels : to_size("labels_per_class", v);
            },
            [](const ExperimentConfig& c) {
              return c.data.labels_per_class == kAllLabels
                         ? std::string("all")
                         : std::to_string(c.data.labels_per_class);
            }},
      DOUBLE_ENTRY("val_fraction", data.val_fraction),
      DOUBLE_ENTRY("test_fraction", data.test_fraction),
      BOOL_ENTRY("standardize", data.standardize),
      STRING_ENTRY("idx_images", data.idx_images),
      STRING_ENTRY("idx_labels", data.idx_labels),
      STRING_ENTRY("csv_path", data.csv_path),
      // network
      Entry{"hidden",
            [](ExperimentConfig& c, const std::string& v) {
              c.hidden = to_list<std::size_t>(
                  v, [](const std::string& s) { return to_size("hidden", s); });
            },
            [](const ExperimentConfig& c) {
              return c.hidden.empty() ? std::string("none")
                                      : join(c.hidden, [](std::size_t h) {
                                          return std::to_string(h);
                                        });
            }},
      Entry{"activation",
            [](ExperimentConfig& c, const std::string& v) {
              c.train.arch.activation = wrap("activation", parse_activation)(v);
            },
            [](const ExperimentConfig& c) { return to_string(c.train.arch.activation); }},
      // training
      DOUBLE_ENTRY("beta", train.beta),
      DOUBLE_ENTRY("alpha0", train.alpha0),
      SIZE_ENTRY("epochs", train.epochs),
      SIZE_ENTRY("labeled_batch", train.labeled_batch),
      SIZE_ENTRY("unlabeled_batch", train.unlabeled_batch),
      DOUBLE_ENTRY("ema_decay", train.ema_decay),
      Entry{"schedule",
            [](ExperimentConfig& c, const std::string& v) {
              c.train.schedule = wrap("schedule", parse_schedule)(v);
            },
            [](const ExperimentConfig& c) { return to_string(c.train.schedule); }},
      Entry{"method",
            [](ExperimentConfig& c, const std::string& v) {
              c.train.method = wrap("method", parse_method)(v);
            },
            [](const ExperimentConfig& c) { return to_string(c.train.method); }},
      BOOL_ENTRY("no_ema", train.flags.no_ema),
      BOOL_ENTRY("one_hot_pseudo", train.flags.one_hot_pseudo),
      BOOL_ENTRY("mixup_labeled_only", train.flags.mixup_labeled_only),
      BOOL_ENTRY("mixup_unlabeled_only", train.flags.mixup_unlabeled_only),
      BOOL_ENTRY("no_mixup", train.flags.no_mixup),
      BOOL_ENTRY("augment_shift", train.flags.augment_shift),
      DOUBLE_ENTRY("consistency_coeff", train.consistency_coeff),
      DOUBLE_ENTRY("consistency_noise_std", train.consistency_noise_std),
      Entry{"seed",
            [](ExperimentConfig& c, const std::string& v) { c.train.seed = to_u64("seed", v); },
            [](const ExperimentConfig& c) { return std::to_string(c.train.seed); }},
      DOUBLE_ENTRY("weight_decay", train.weight_decay),
      DOUBLE_ENTRY("momentum", train.momentum),
      SIZE_ENTRY("assumption_samples", train.assumption_samples),
      SIZE_ENTRY("checkpoint_every", checkpoint_every),
      // experiments and checks
      Entry{"seeds",
            [](ExperimentConfig& c, const std::string& v) {
              c.seeds = to_list<std::uint64_t>(
                  v, [](const std::string& s) { return to_u64("seeds", s); });
              if (c.seeds.empty()) throw ConfigError("seeds", "need at least one seed");
            },
            [](const ExperimentConfig& c) {
              return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
            }},
      SIZE_ENTRY("gradcheck_cases", gradcheck_cases),
      SIZE_ENTRY("prop1_cases", prop1_cases),
      SIZE_ENTRY("prop1_steps", prop1_steps),
      DOUBLE_ENTRY("prop1_eps", prop1_eps),
      DOUBLE_ENTRY("prop1_alpha", prop1_alpha),
  };
  return table;
}

#undef DOUBLE_ENTRY
#undef SIZE_ENTRY
#undef BOOL_ENTRY
#undef STRING_ENTRY

void check_ranges(const ExperimentConfig& c) {
  static const std::set<std::string> datasets = {"two_moons", "blobs", "idx", "csv"};
  if (!datasets.count(c.data.dataset)) {
    throw ConfigError("dataset", "expected two_moons|blobs|idx|csv, got '" + c.data.dataset + "'");
  }
  if (c.data.val_fraction < 0.0 || c.data.val_fraction >= 1.0) {
    throw ConfigError("val_fraction", "must lie in [0, 1)");
  }
  if (c.data.test_fraction < 0.0 || c.data.test_fraction >= 1.0) {
    throw ConfigError("test_fraction", "must lie in [0, 1)");
  }
  if (c.data.noise < 0.0) throw ConfigError("noise", "must be >= 0");
  if (c.data.blob_std < 0.0) throw ConfigError("blob_std", "must be >= 0");
  for (std::size_t h : c.hidden) {
    if (h == 0) throw ConfigError("hidden", "layer sizes must be positive");
  }
  if (c.prop1_steps == 0) throw ConfigError("prop1_steps", "must be >= 1");
  if (!(c.prop1_eps > 0.0)) throw ConfigError("prop1_eps", "must be positive");
  if (c.prop1_alpha < 0.0) throw ConfigError("prop1_alpha", "must be >= 0");

  // Reuse the trainer's own validation; the message starts with the field name.
  TrainConfig probe = c.train;
  probe.arch.layer_sizes = {1, 2};
  try {
    probe.validate();
  } catch (const InvalidHyperparameter& e) {
    const std::string msg = e.what();
    const auto colon = msg.find(':');
    throw ConfigError(msg.substr(0, colon), colon == std::string::npos ? msg : trim(msg.substr(colon + 1)));
  }
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.emplace_back(e.key);
  return keys;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& e : entries()) {
    if (key == e.key) {
      e.set(cfg, value);
      return;
    }
  }
  throw ConfigError(key, "unknown key");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::stringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(line, "line " + std::to_string(line_no) + " is not of the form key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(key, "given more than once");
    set_config_value(cfg, key, value);
  }
  check_ranges(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string render_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) {
    out += e.key;
    out += " = ";
    out += e.get(cfg);
    out += "\n";
  }
  return out;
}

}  // namespace metasemi
