#include "metasemi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/beta.hpp>

#include "metasemi/diagnostics.hpp"

namespace metasemi {

std::string to_string(Schedule s) { return s == Schedule::cosine ? "cosine" : "inv_t"; }

std::string to_string(Method m) {
  switch (m) {
    case Method::meta_semi: return "meta_semi";
    case Method::supervised: return "supervised";
    case Method::supervised_mixup: return "supervised_mixup";
    case Method::const1: return "const1";
    case Method::pm1: return "pm1";
  }
  return "?";
}

Schedule parse_schedule(const std::string& name) {
  if (name == "cosine") return Schedule::cosine;
  if (name == "inv_t") return Schedule::inv_t;
  throw std::invalid_argument("unknown schedule '" + name + "' (expected cosine|inv_t)");
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::meta_semi, Method::supervised, Method::supervised_mixup,
                   Method::const1, Method::pm1}) {
    if (name == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown method '" + name +
                              "' (expected meta_semi|supervised|supervised_mixup|const1|pm1)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw InvalidHyperparameter(field + ": " + why);
  };
  try {
    arch.validate();
  } catch (const ShapeError& e) {
    fail("arch", e.what());
  }
  if (!(beta > 0.0) || !std::isfinite(beta)) fail("beta", "must be positive");
  if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) fail("alpha0", "must be positive");
  if (labeled_batch == 0) fail("labeled_batch", "must be at least 1");
  if (unlabeled_batch == 0) fail("unlabeled_batch", "must be at least 1");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) fail("ema_decay", "must lie in [0, 1]");
  if (!(consistency_coeff >= 0.0)) fail("consistency_coeff", "must be >= 0");
  if (!(consistency_noise_std >= 0.0)) fail("consistency_noise_std", "must be >= 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must lie in [0, 1)");
}

bool TrainConfig::uses_meta_weights() const {
  return method == Method::meta_semi || method == Method::const1 || method == Method::pm1;
}

WeightMode TrainConfig::weight_mode() const {
  switch (method) {
    case Method::const1: return WeightMode::const1;
    case Method::pm1: return WeightMode::pm1;
    default: return WeightMode::meta;
  }
}

TrainState init_state(const TrainConfig& config) {
  config.validate();
  const Rng root(config.seed);
  Rng init = root.stream("init");
  TrainState s{
      .t = 0,
      .student = init_params(config.arch, init),
      .momentum_buffer = {},
      .teacher = {},
      .batches = root.stream("batches"),
      .mixup = root.stream("mixup"),
      .noise = root.stream("noise"),
      .augment = root.stream("augment"),
      .labeled_order = {},
      .history = {},
  };
  s.momentum_buffer = ParamVector(s.student.size());
  s.teacher = TeacherState{s.student, config.ema_decay};
  return s;
}

double lr_at(const TrainConfig& config, std::uint64_t t, std::uint64_t total_iters) {
  if (total_iters == 0) return config.alpha0;
  const double frac = static_cast<double>(t) / static_cast<double>(total_iters);
  if (config.schedule == Schedule::cosine) {
    return 0.5 * config.alpha0 * (1.0 + std::cos(std::numbers::pi * frac));
  }
  return config.alpha0 / (1.0 + 10.0 * frac);
}

void sgd_step(ParamVector& params, ParamVector& momentum_buffer, const ParamVector& grad,
              double lr, double momentum, double weight_decay) {
  if (params.size() != grad.size() || params.size() != momentum_buffer.size()) {
    throw ShapeError("sgd_step: parameter, gradient and momentum sizes differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i] + weight_decay * params[i];
    if (momentum == 0.0) {
      params[i] -= lr * g;
      continue;
    }
    momentum_buffer[i] = momentum * momentum_buffer[i] + g;
    params[i] -= lr * (g + momentum * momentum_buffer[i]);
  }
}

LossAndGrad consistency_loss(const ParamVector& params, const MlpArch& arch,
                             const Mat64& features, double noise_std, Rng& rng) {
  if (noise_std < 0.0) throw InvalidHyperparameter("consistency_loss: noise_std must be >= 0");
  const std::size_t n = features.rows();
  const std::size_t k = arch.num_classes();
  if (n == 0) return {0.0, ParamVector(params.size())};

  Mat64 noisy = features;
  if (noise_std > 0.0) {
    for (double& v : noisy.data()) v += noise_std * rng.normal();
  }
  const ForwardCache clean = forward_cached(params, arch, features);
  const ForwardCache pert = forward_cached(params, arch, noisy);

  const double scale = 1.0 / static_cast<double>(n * k);
  double loss = 0.0;
  Mat64 d_clean(n, k), d_pert(n, k);
  Vec64 gp(k);
  for (std::size_t r = 0; r < n; ++r) {
    auto p = clean.probs.row(r);
    auto q = pert.probs.row(r);
    for (std::size_t c = 0; c < k; ++c) {
      const double diff = p[c] - q[c];
      loss += diff * diff;
      gp[c] = 2.0 * scale * diff;
    }
    // Softmax Jacobian-vector products: dz = p * (g - <g, p>).
    const double gp_dot_p = dot(gp, p);
    double gq_dot_q = 0.0;
    for (std::size_t c = 0; c < k; ++c) gq_dot_q -= gp[c] * q[c];
    for (std::size_t c = 0; c < k; ++c) {
      d_clean(r, c) = p[c] * (gp[c] - gp_dot_p);
      d_pert(r, c) = q[c] * (-gp[c] - gq_dot_q);
    }
  }
  ParamVector grad = backward(params, arch, clean, d_clean);
  const ParamVector grad_pert = backward(params, arch, pert, d_pert);
  axpy(1.0, grad_pert.span(), grad.span());
  return {loss * scale, std::move(grad)};
}

MetaStep compute_meta_step(const ParamVector& student, const ParamVector& labeler,
                           const TrainConfig& config, double alpha,
                           std::span<const LabeledExample> labeled,
                           std::span<const Vec64> unlabeled, Rng& mixup) {
  MetaStep step;
  step.pseudo =
      pseudo_label_batch(labeler, config.arch, unlabeled, config.flags.one_hot_pseudo);
  step.mixed_labeled = config.flags.mix_labeled()
                           ? make_labeled_batch(labeled, config.beta, mixup)
                           : unmixed_labeled_batch(labeled);
  step.mixed_unlabeled = config.flags.mix_unlabeled()
                             ? make_unlabeled_batch(labeled, step.pseudo, config.beta, mixup)
                             : unmixed_unlabeled_batch(labeled, step.pseudo);

  const Batch xb = step.mixed_labeled.to_batch();
  const Batch ub = step.mixed_unlabeled.to_batch();
  const Vec64 ones(xb.size(), 1.0);
  step.sup_grad = grad_weighted_loss(student, config.arch, xb, ones).grad;
  step.losses = per_sample_losses(student, config.arch, ub);

  const WeightMode mode = config.weight_mode();
  if (mode == WeightMode::const1) {
    step.dots.assign(ub.size(), 0.0);
    step.weights = WeightVector{Vec64(ub.size(), 1.0), mode};
  } else {
    step.dots = per_sample_grad_dots(student, config.arch, ub, step.sup_grad);
    step.weights = assign_weights(meta_gradients(step.dots, alpha), mode);
  }
  step.meta_loss = meta_loss(step.weights, step.losses);
  return step;
}

namespace {

void score_selection(const MetaStep& step, std::size_t n_labeled, std::span<const int> shadow,
                     IterationStats& stats) {
  if (shadow.empty()) return;
  const MixedBatch& mb = step.mixed_unlabeled;
  for (std::size_t j = 0; j < mb.size(); ++j) {
    if (mb.origin[j] != Origin::unlabeled_mix) continue;
    const std::size_t src = j - n_labeled;
    const bool correct =
        static_cast<int>(argmax(step.pseudo[src].y_hat)) == shadow[src];
    if (step.weights.w[j] == 1.0) {
      ++stats.selected_scored;
      stats.selected_correct += correct;
    } else {
      ++stats.rejected_scored;
      stats.rejected_correct += correct;
    }
  }
}

}  // namespace

IterationStats train_iteration(TrainState& state, const TrainConfig& config,
                               std::span<const LabeledExample> labeled,
                               std::span<const Vec64> unlabeled, std::uint64_t total_iters,
                               std::span<const int> shadow) {
  if (labeled.empty()) throw DataError("train_iteration: empty labeled batch");
  IterationStats stats;
  const double lr = lr_at(config, state.t, total_iters);
  stats.lr = lr;
  ParamVector grad;

  if (config.uses_meta_weights()) {
    if (unlabeled.empty()) throw DataError("train_iteration: empty unlabeled batch");
    const ParamVector& labeler = config.flags.no_ema ? state.student : state.teacher.params;
    MetaStep step =
        compute_meta_step(state.student, labeler, config, lr, labeled, unlabeled, state.mixup);
    stats.loss = step.meta_loss;
    stats.candidates = step.weights.size();
    stats.selected = step.weights.selected();
    stats.sup_grad_norm = std::sqrt(squared_norm(step.sup_grad.span()));
    score_selection(step, labeled.size(), shadow, stats);

    if (step.weights.sum() == 0.0) {
      // L_meta = 0: no parameter update this iteration; the teacher still moves.
      stats.skipped = true;
      ema_update_inplace(state.teacher, state.student);
      ++state.t;
      return stats;
    }
    const Batch ub = step.mixed_unlabeled.to_batch();
    grad = meta_loss_grad(state.student, config.arch, ub, step.weights);
    if (config.consistency_coeff > 0.0) {
      const LossAndGrad cons = consistency_loss(state.student, config.arch, ub.inputs,
                                                config.consistency_noise_std, state.noise);
      axpy(config.consistency_coeff, cons.grad.span(), grad.span());
    }
  } else {
    const MixedBatch xm = config.method == Method::supervised_mixup
                              ? make_labeled_batch(labeled, config.beta, state.mixup)
                              : unmixed_labeled_batch(labeled);
    const Batch xb = xm.to_batch();
    const Vec64 w(xb.size(), 1.0 / static_cast<double>(xb.size()));
    LossAndGrad lg = grad_weighted_loss(state.student, config.arch, xb, w);
    stats.loss = lg.loss;
    grad = std::move(lg.grad);
    stats.sup_grad_norm = std::sqrt(squared_norm(grad.span())) * static_cast<double>(xb.size());
  }

  sgd_step(state.student, state.momentum_buffer, grad, lr, config.momentum,
           config.weight_decay);
  ema_update_inplace(state.teacher, state.student);
  ++state.t;
  return stats;
}

double evaluate(const ParamVector& params, const MlpArch& arch,
                std::span<const LabeledExample> testset) {
  if (testset.empty()) throw DataError("evaluate: empty test set");
  const Batch b = to_batch(testset);
  const Mat64 probs = forward(params, arch, b.inputs);
  std::size_t wrong = 0;
  for (std::size_t r = 0; r < b.size(); ++r) {
    if (argmax(probs.row(r)) != argmax(b.labels.row(r))) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(b.size());
}

double expected_supervised_grad_norm(const ParamVector& params, const TrainConfig& config,
                                     std::span<const LabeledExample> labeled) {
  if (labeled.empty()) return 0.0;
  const std::size_t n = labeled.size();
  if (!config.flags.mix_labeled() || config.method == Method::supervised) {
    const Batch b = to_batch(labeled);
    const Vec64 w(n, 1.0 / static_cast<double>(n));
    const ParamVector g = grad_weighted_loss(params, config.arch, b, w).grad;
    return std::sqrt(squared_norm(g.span()));
  }

  constexpr std::size_t kQuantiles = 16;
  constexpr std::size_t kMaxPartners = 16;
  Vec64 lambdas(kQuantiles);
  for (std::size_t q = 0; q < kQuantiles; ++q) {
    const double p = (static_cast<double>(q) + 0.5) / kQuantiles;
    lambdas[q] = boost::math::ibeta_inv(config.beta, config.beta, p);
  }
  const std::size_t partners = std::min(n, kMaxPartners);
  const std::size_t stride = n / partners;
  const double w = 1.0 / static_cast<double>(n * partners * kQuantiles);

  ParamVector total(params.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Vec64> xs, ys;
    for (std::size_t m = 0; m < partners; ++m) {
      const LabeledExample& b = labeled[(i + m * stride) % n];
      for (double lam : lambdas) {
        auto [x, y] = mixup_pair(labeled[i].x, labeled[i].y, b.x, b.y, lam);
        xs.push_back(std::move(x));
        ys.push_back(std::move(y));
      }
    }
    const Batch b{Mat64::from_rows(xs), Mat64::from_rows(ys)};
    const Vec64 weights(b.size(), w);
    const ParamVector g = grad_weighted_loss(params, config.arch, b, weights).grad;
    axpy(1.0, g.span(), total.span());
  }
  return std::sqrt(squared_norm(total.span()));
}

std::size_t iterations_per_epoch(const TrainConfig& config, const SplitDataset& data) {
  const std::size_t nu = data.unlabeled.size();
  if (nu == 0) {
    return std::max<std::size_t>(
        1, (data.labeled.size() + config.labeled_batch - 1) / config.labeled_batch);
  }
  return std::max<std::size_t>(1, nu / config.unlabeled_batch);
}

namespace {

std::vector<LabeledExample> next_labeled_batch(TrainState& state, const TrainConfig& config,
                                               const SplitDataset& data) {
  std::vector<LabeledExample> batch;
  batch.reserve(config.labeled_batch);
  const bool shift = config.flags.augment_shift && data.image_rows > 0;
  while (batch.size() < config.labeled_batch) {
    if (state.labeled_order.empty()) {
      auto perm = random_permutation(data.labeled.size(), state.batches);
      state.labeled_order.assign(perm.rbegin(), perm.rend());
    }
    const std::size_t idx = state.labeled_order.back();
    state.labeled_order.pop_back();
    LabeledExample e = data.labeled[idx];
    if (shift) e.x = random_shift(e.x, data.image_rows, data.image_cols, state.augment);
    batch.push_back(std::move(e));
  }
  return batch;
}

}  // namespace

TrainResult train(const TrainConfig& config, const SplitDataset& data,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (data.labeled.empty()) throw DataError("train: no labeled examples");
  if (!data.labeled.empty() && data.labeled.front().x.size() != config.arch.input_dim()) {
    throw ShapeError("train: data has " + std::to_string(data.labeled.front().x.size()) +
                     " features, network expects " + std::to_string(config.arch.input_dim()));
  }
  if (data.num_classes != config.arch.num_classes()) {
    throw ShapeError("train: data has " + std::to_string(data.num_classes) +
                     " classes, network outputs " + std::to_string(config.arch.num_classes()));
  }

  TrainState state = init_state(config);
  const std::size_t per_epoch = iterations_per_epoch(config, data);
  const std::uint64_t total = static_cast<std::uint64_t>(per_epoch) * config.epochs;
  const std::size_t nu = data.unlabeled.size();
  const std::size_t ub = std::min(config.unlabeled_batch, nu);
  const bool shift = config.flags.augment_shift && data.image_rows > 0;
  const Rng assumption_root = Rng(config.seed).stream("assumption");

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = random_permutation(nu, state.batches);
    double loss_sum = 0.0;
    std::size_t selected = 0, candidates = 0, sel_correct = 0, sel_scored = 0;
    double last_lr = 0.0;
    for (std::size_t it = 0; it < per_epoch; ++it) {
      const auto x = next_labeled_batch(state, config, data);
      std::vector<Vec64> u;
      std::vector<int> shadow;
      u.reserve(ub);
      for (std::size_t k = 0; k < ub; ++k) {
        const std::size_t idx = order[it * ub + k];
        u.push_back(shift ? random_shift(data.unlabeled[idx], data.image_rows,
                                         data.image_cols, state.augment)
                          : data.unlabeled[idx]);
        if (!data.unlabeled_shadow.empty()) shadow.push_back(data.unlabeled_shadow[idx]);
      }
      const IterationStats s = train_iteration(state, config, x, u, total, shadow);
      loss_sum += s.loss;
      selected += s.selected;
      candidates += s.candidates;
      sel_correct += s.selected_correct;
      sel_scored += s.selected_scored;
      last_lr = s.lr;
    }

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.meta_loss = loss_sum / static_cast<double>(per_epoch);
    if (candidates > 0) {
      rec.selected_fraction = static_cast<double>(selected) / static_cast<double>(candidates);
    }
    if (!data.test.empty()) {
      rec.student_test_error = evaluate(state.student, config.arch, data.test);
      rec.teacher_test_error = evaluate(state.teacher.params, config.arch, data.test);
    }
    rec.sup_grad_norm = expected_supervised_grad_norm(state.student, config, data.labeled);
    rec.lr = last_lr;
    if (config.assumption_samples > 0 && config.uses_meta_weights() && nu > 0) {
      const auto est = assumption_ratio(state, config, data, config.assumption_samples,
                                        assumption_root.stream("epoch", epoch), total);
      rec.assumption_ratio = est.ratio;
    }
    if (sel_scored > 0) {
      rec.selection_precision =
          static_cast<double>(sel_correct) / static_cast<double>(sel_scored);
    }
    state.history.push_back(rec);
    if (on_epoch) on_epoch(state, rec);
  }
  TrainResult result{state, state.history};
  return result;
}

}  // namespace metasemi
