#include "metasemi/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "metasemi/checkpoint.hpp"
#include "metasemi/diagnostics.hpp"

namespace metasemi {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write '" + path.string() + "'");
  out << text;
  out.flush();
  if (!out) throw std::ios_base::failure("write failed for '" + path.string() + "'");
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::ios_base::failure("cannot create output directory '" + dir + "'");
  }
}

std::string require_out_dir(const CommandOptions& opts) {
  if (opts.out_dir.empty()) throw ConfigError("--out", "an output directory is required");
  make_dir(opts.out_dir);
  return opts.out_dir;
}

// Maps exceptions onto the documented exit codes.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidHyperparameter& e) {
    err << "error: invalid config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DataError& e) {
    err << "error: data: " << e.what() << '\n';
    return kExitIo;
  } catch (const CheckpointError& e) {
    err << "error: checkpoint: " << e.what() << '\n';
    return kExitIo;
  } catch (const ShapeError& e) {
    err << "error: data does not fit the config: " << e.what() << '\n';
    return kExitConfig;
  }
}

std::string checkpoint_name(std::size_t epoch) {
  return "checkpoint_epoch_" + std::to_string(epoch) + ".txt";
}

Checkpoint snapshot(const TrainState& state, const MlpArch& arch) {
  return Checkpoint{arch.layer_sizes, state.student, state.teacher.params};
}

}  // namespace

ExperimentConfig resolve_config(const CommandOptions& opts) {
  ExperimentConfig cfg = opts.config_path.empty() ? ExperimentConfig{} : load_config(opts.config_path);
  if (!opts.idx_images.empty() || !opts.idx_labels.empty()) {
    if (opts.idx_images.empty() || opts.idx_labels.empty()) {
      throw ConfigError("--data-idx-images", "IDX data needs both images and labels");
    }
    cfg.data.dataset = "idx";
    cfg.data.idx_images = opts.idx_images;
    cfg.data.idx_labels = opts.idx_labels;
  }
  if (!opts.csv_path.empty()) {
    if (cfg.data.dataset == "idx" && !opts.idx_images.empty()) {
      throw ConfigError("--data-csv", "cannot combine CSV and IDX data");
    }
    cfg.data.dataset = "csv";
    cfg.data.csv_path = opts.csv_path;
  }
  if (opts.seed) {
    cfg.train.seed = *opts.seed;
    cfg.seeds = {*opts.seed};
  }
  if (cfg.data.dataset == "idx" && (cfg.data.idx_images.empty() || cfg.data.idx_labels.empty())) {
    throw ConfigError("idx_images", "dataset = idx needs idx_images and idx_labels");
  }
  if (cfg.data.dataset == "csv" && cfg.data.csv_path.empty()) {
    throw ConfigError("csv_path", "dataset = csv needs csv_path");
  }
  return cfg;
}

SplitDataset build_dataset(const DataConfig& cfg, std::uint64_t seed) {
  const Rng root(seed);
  Dataset pool, test;
  if (cfg.dataset == "two_moons" || cfg.dataset == "blobs") {
    Rng data_rng = root.stream("data");
    Rng test_rng = root.stream("test");
    if (cfg.dataset == "two_moons") {
      pool = gen_two_moons(cfg.n_samples, cfg.noise, data_rng);
      test = gen_two_moons(cfg.n_test, cfg.noise, test_rng);
    } else {
      pool = gen_blobs(cfg.n_samples, cfg.blob_centers, cfg.blob_std, data_rng);
      test = gen_blobs(cfg.n_test, cfg.blob_centers, cfg.blob_std, test_rng);
    }
  } else if (cfg.dataset == "idx" || cfg.dataset == "csv") {
    const Dataset all =
        cfg.dataset == "idx" ? load_idx(cfg.idx_images, cfg.idx_labels) : load_csv(cfg.csv_path);
    Rng test_rng = root.stream("test");
    std::tie(pool, test) = holdout(all, cfg.test_fraction, test_rng);
  } else {
    throw ConfigError("dataset", "unknown dataset '" + cfg.dataset + "'");
  }
  Rng split_rng = root.stream("split");
  SplitDataset split =
      split_dataset(pool, cfg.labels_per_class, cfg.val_fraction, split_rng, &test);
  if (cfg.standardize) standardize(split);
  return split;
}

std::string describe_dataset(const DataConfig& cfg, const SplitDataset& data) {
  std::ostringstream s;
  s << cfg.dataset << ": classes=" << data.num_classes
    << " features=" << (data.labeled.empty() ? 0 : data.labeled.front().x.size())
    << " labeled=" << data.labeled.size() << " unlabeled=" << data.unlabeled.size()
    << " validation=" << data.validation.size() << " test=" << data.test.size();
  return s.str();
}

TrainConfig resolve_train_config(const ExperimentConfig& cfg, const SplitDataset& data,
                                 std::uint64_t seed) {
  if (data.labeled.empty()) throw DataError("no labeled examples after splitting");
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  tc.arch.layer_sizes.clear();
  tc.arch.layer_sizes.push_back(data.labeled.front().x.size());
  for (std::size_t h : cfg.hidden) tc.arch.layer_sizes.push_back(h);
  tc.arch.layer_sizes.push_back(data.num_classes);
  tc.validate();
  return tc;
}

std::string metrics_csv_header() {
  return "epoch,meta_loss,selected_fraction,student_test_error,teacher_test_error,"
         "sup_grad_norm,lr,assumption_ratio,selection_precision\n";
}

std::string metrics_csv_row(const MetricsRecord& r) {
  std::string s = std::to_string(r.epoch);
  for (double v : {r.meta_loss, r.selected_fraction, r.student_test_error, r.teacher_test_error,
                   r.sup_grad_norm, r.lr, r.assumption_ratio, r.selection_precision}) {
    s += ',';
    s += format_double(v);
  }
  s += '\n';
  return s;
}

std::string render_metrics_csv(std::span<const MetricsRecord> history) {
  std::string s = metrics_csv_header();
  for (const auto& r : history) s += metrics_csv_row(r);
  return s;
}

std::string render_manifest(const ExperimentConfig& cfg, const std::string& dataset_descriptor,
                            const std::vector<std::string>& artifacts) {
  std::string s = "# run manifest\n";
  s += "# tool: " + std::string(kToolVersion) + "\n";
  s += "# data: " + dataset_descriptor + "\n";
  for (const auto& a : artifacts) s += "# artifact: " + a + "\n";
  s += render_config(cfg);
  return s;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                          const std::string& out_dir) {
  const SplitDataset data = build_dataset(cfg.data, seed);
  const TrainConfig tc = resolve_train_config(cfg, data, seed);

  std::ofstream metrics;
  if (!out_dir.empty()) {
    make_dir(out_dir);
    ExperimentConfig resolved = cfg;
    resolved.train.seed = seed;
    std::vector<std::string> artifacts = {"metrics.csv", "checkpoint.txt"};
    if (tc.assumption_samples > 0) artifacts.push_back("assumption.csv");
    if (cfg.checkpoint_every > 0) artifacts.push_back(checkpoint_name(cfg.checkpoint_every) + " ...");
    write_text(fs::path(out_dir) / "manifest.conf",
               render_manifest(resolved, describe_dataset(cfg.data, data), artifacts));
    const fs::path metrics_path = fs::path(out_dir) / "metrics.csv";
    metrics.open(metrics_path, std::ios::binary);
    if (!metrics) throw std::ios_base::failure("cannot write '" + metrics_path.string() + "'");
    metrics << metrics_csv_header() << std::flush;
  }

  auto on_epoch = [&](const TrainState& state, const MetricsRecord& rec) {
    if (out_dir.empty()) return;
    metrics << metrics_csv_row(rec) << std::flush;
    if (!metrics) throw std::ios_base::failure("write failed for metrics.csv");
    if (cfg.checkpoint_every > 0 && rec.epoch % cfg.checkpoint_every == 0) {
      save_checkpoint((fs::path(out_dir) / checkpoint_name(rec.epoch)).string(),
                      snapshot(state, tc.arch));
    }
  };
  const TrainResult result = train(tc, data, on_epoch);

  RunOutcome outcome;
  outcome.history = result.history;
  outcome.student_error = evaluate(result.state.student, tc.arch, data.test);
  outcome.teacher_error = evaluate(result.state.teacher.params, tc.arch, data.test);

  if (!out_dir.empty()) {
    save_checkpoint((fs::path(out_dir) / "checkpoint.txt").string(), snapshot(result.state, tc.arch));
    if (tc.assumption_samples > 0) {
      std::string csv = "epoch,assumption_ratio\n";
      for (const auto& r : result.history) {
        csv += std::to_string(r.epoch) + "," + format_double(r.assumption_ratio) + "\n";
      }
      write_text(fs::path(out_dir) / "assumption.csv", csv);
    }
  }
  return outcome;
}

MethodSpec parse_method_spec(const std::string& text) {
  MethodSpec spec;
  spec.label = text;
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, '+')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("methods", "empty method name");

  std::size_t first_flag = 0;
  try {
    spec.method = parse_method(parts[0]);
    first_flag = 1;
  } catch (const std::invalid_argument&) {
    spec.method = Method::meta_semi;
  }
  for (std::size_t i = first_flag; i < parts.size(); ++i) {
    const std::string& f = parts[i];
    if (f == "no_ema") spec.flags.no_ema = true;
    else if (f == "one_hot_pseudo") spec.flags.one_hot_pseudo = true;
    else if (f == "mixup_labeled_only") spec.flags.mixup_labeled_only = true;
    else if (f == "mixup_unlabeled_only") spec.flags.mixup_unlabeled_only = true;
    else if (f == "no_mixup") spec.flags.no_mixup = true;
    else if (f == "augment_shift") spec.flags.augment_shift = true;
    else throw ConfigError("methods", "unknown method or flag '" + f + "' in '" + text + "'");
  }
  return spec;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std_dev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::size_t worker_count(std::size_t tasks) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("META_SEMI_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, tasks));
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = worker_count(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

int cmd_train(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = resolve_config(opts);
    const std::string dir = require_out_dir(opts);
    const RunOutcome r = run_experiment(cfg, cfg.train.seed, dir);
    out << "trained " << r.history.size() << " epochs; student_test_error="
        << format_double(r.student_error) << " teacher_test_error="
        << format_double(r.teacher_error) << "; artifacts in " << dir << '\n';
    return kExitOk;
  });
}

int cmd_check(const std::string& what, const CommandOptions& opts, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&]() -> int {
    const ExperimentConfig cfg = resolve_config(opts);
    const Rng root(cfg.train.seed);
    if (what == "gradcheck") {
      constexpr double kThreshold = 1e-5;
      Rng rng = root.stream("gradcheck");
      const GradCheckResult res = gradient_check_suite(rng, cfg.gradcheck_cases);
      const bool pass = res.max_rel_err < kThreshold;
      out << (pass ? "PASS" : "FAIL") << " gradcheck max_rel_err=" << format_double(res.max_rel_err)
          << " threshold=" << format_double(kThreshold) << " cases=" << cfg.gradcheck_cases
          << " checked=" << res.coordinates_checked << " excluded=" << res.coordinates_excluded
          << '\n';
      return pass ? kExitOk : kExitFail;
    }
    if (what == "prop1") {
      Rng rng = root.stream("prop1");
      double worst = 0.0;
      std::size_t samples = 0, within = 0, checked = 0, agree = 0;
      for (std::size_t c = 0; c < cfg.prop1_cases; ++c) {
        const Prop1Instance inst = random_prop1_instance(rng, c);
        const Prop1Report rep = verify_prop1(inst.arch, inst.params, inst.labeled, inst.unlabeled,
                                             cfg.prop1_alpha, cfg.prop1_steps, cfg.prop1_eps);
        worst = std::max(worst, rep.max_rel_deviation);
        samples += rep.fd.size();
        within += rep.within_tolerance;
        checked += rep.sign_checked;
        agree += rep.sign_agreements;
      }
      const bool pass = within == samples && agree == checked;
      out << (pass ? "PASS" : "FAIL") << " prop1 M=" << cfg.prop1_steps
          << " max_rel_deviation=" << format_double(worst)
          << " threshold=" << format_double(kProp1RelTol) << " (abs floor "
          << format_double(kProp1AbsTol) << ") within=" << within << "/" << samples
          << " sign_agreement=" << agree << "/" << checked << '\n';
      return pass ? kExitOk : kExitFail;
    }
    if (what == "assumption") {
      const SplitDataset data = build_dataset(cfg.data, cfg.train.seed);
      const TrainConfig tc = resolve_train_config(cfg, data, cfg.train.seed);
      const TrainState state = init_state(tc);
      const std::size_t n_mc = cfg.train.assumption_samples > 0 ? cfg.train.assumption_samples : 100;
      const std::uint64_t total = static_cast<std::uint64_t>(iterations_per_epoch(tc, data)) * tc.epochs;
      const AssumptionRatioEstimate est =
          assumption_ratio(state, tc, data, n_mc, root.stream("assumption"), total);
      out << "assumption n_mc=" << n_mc << " numerator=" << format_double(est.numerator)
          << " denominator=" << format_double(est.denominator)
          << " ratio=" << format_double(est.ratio) << '\n';
      return kExitOk;
    }
    throw ConfigError("check", "unknown check '" + what + "' (expected gradcheck|prop1|assumption)");
  });
}

int cmd_sweep(const CommandOptions& opts, const std::string& param,
              const std::vector<double>& values, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig base = resolve_config(opts);
    if (param != "beta") throw ConfigError("--param", "only 'beta' can be swept, got '" + param + "'");
    if (values.empty()) throw ConfigError("--values", "need at least one value");
    for (double v : values) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError("beta", "sweep value " + format_double(v) + " must be positive");
      }
    }
    const std::string dir = require_out_dir(opts);

    const std::size_t n_seeds = base.seeds.size();
    const std::size_t n_runs = values.size() * n_seeds;
    std::vector<RunOutcome> outcomes(n_runs);
    parallel_for(n_runs, [&](std::size_t i) {
      ExperimentConfig cfg = base;
      cfg.train.beta = values[i / n_seeds];
      const std::uint64_t seed = base.seeds[i % n_seeds];
      const std::string sub = (fs::path(dir) / ("beta_" + format_double(cfg.train.beta) +
                                                "_seed_" + std::to_string(seed)))
                                  .string();
      outcomes[i] = run_experiment(cfg, seed, sub);
    });

    std::string runs = "beta,seed,student_test_error,teacher_test_error\n";
    std::string summary = "beta,mean_error,std_error\n";
    for (std::size_t v = 0; v < values.size(); ++v) {
      std::vector<double> errs;
      for (std::size_t s = 0; s < n_seeds; ++s) {
        const RunOutcome& r = outcomes[v * n_seeds + s];
        errs.push_back(r.student_error);
        runs += format_double(values[v]) + "," + std::to_string(base.seeds[s]) + "," +
                format_double(r.student_error) + "," + format_double(r.teacher_error) + "\n";
      }
      const Summary sm = summarize(errs);
      summary += format_double(values[v]) + "," + format_double(sm.mean) + "," +
                 format_double(sm.std_dev) + "\n";
      out << "beta=" << format_double(values[v]) << " mean_error=" << format_double(sm.mean)
          << " std_error=" << format_double(sm.std_dev) << '\n';
    }
    write_text(fs::path(dir) / "runs.csv", runs);
    write_text(fs::path(dir) / "summary.csv", summary);
    return kExitOk;
  });
}

int cmd_compare(const CommandOptions& opts, const std::vector<std::string>& methods,
                std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig base = resolve_config(opts);
    if (methods.empty()) throw ConfigError("--methods", "need at least one method");
    std::vector<MethodSpec> specs;
    for (const auto& m : methods) specs.push_back(parse_method_spec(m));
    const std::string dir = require_out_dir(opts);

    const std::size_t n_seeds = base.seeds.size();
    const std::size_t n_runs = specs.size() * n_seeds;
    std::vector<RunOutcome> outcomes(n_runs);
    parallel_for(n_runs, [&](std::size_t i) {
      const MethodSpec& spec = specs[i / n_seeds];
      ExperimentConfig cfg = base;
      cfg.train.method = spec.method;
      cfg.train.flags = spec.flags;
      const std::uint64_t seed = base.seeds[i % n_seeds];
      const std::string sub =
          (fs::path(dir) / (spec.label + "_seed_" + std::to_string(seed))).string();
      outcomes[i] = run_experiment(cfg, seed, sub);
    });

    std::string runs = "method,seed,student_test_error,teacher_test_error\n";
    std::string table =
        "method,runs,mean_error,std_error,mean_teacher_error,std_teacher_error\n";
    for (std::size_t m = 0; m < specs.size(); ++m) {
      std::vector<double> student, teacher;
      for (std::size_t s = 0; s < n_seeds; ++s) {
        const RunOutcome& r = outcomes[m * n_seeds + s];
        student.push_back(r.student_error);
        teacher.push_back(r.teacher_error);
        runs += specs[m].label + "," + std::to_string(base.seeds[s]) + "," +
                format_double(r.student_error) + "," + format_double(r.teacher_error) + "\n";
      }
      const Summary st = summarize(student);
      const Summary te = summarize(teacher);
      table += specs[m].label + "," + std::to_string(n_seeds) + "," + format_double(st.mean) +
               "," + format_double(st.std_dev) + "," + format_double(te.mean) + "," +
               format_double(te.std_dev) + "\n";
      out << specs[m].label << " mean_error=" << format_double(st.mean)
          << " std_error=" << format_double(st.std_dev) << '\n';
    }
    write_text(fs::path(dir) / "runs.csv", runs);
    write_text(fs::path(dir) / "comparison.csv", table);
    return kExitOk;
  });
}

}  // namespace metasemi
