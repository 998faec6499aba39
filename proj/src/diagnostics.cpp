#include "metasemi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace metasemi {

namespace {

Batch single_row(const Batch& b, std::size_t r) {
  Batch out{Mat64(1, b.inputs.cols()), Mat64(1, b.labels.cols())};
  std::copy(b.inputs.row(r).begin(), b.inputs.row(r).end(), out.inputs.row(0).begin());
  std::copy(b.labels.row(r).begin(), b.labels.row(r).end(), out.labels.row(0).begin());
  return out;
}

double summed_loss(const ParamVector& params, const MlpArch& arch, const Batch& b) {
  const Vec64 losses = per_sample_losses(params, arch, b);
  double s = 0.0;
  for (double l : losses) s += l;
  return s;
}

// theta after `steps` descent steps on w * CE(sample) with step size alpha.
ParamVector unrolled(const ParamVector& start, const MlpArch& arch, const Batch& sample,
                     double w, double alpha, std::size_t steps) {
  ParamVector theta = start;
  const double weight[1] = {w};
  for (std::size_t m = 0; m < steps; ++m) {
    const ParamVector g = grad_weighted_loss(theta, arch, sample, weight).grad;
    axpy(-alpha, g.span(), theta.span());
  }
  return theta;
}

Vec64 random_simplex(std::size_t k, Rng& rng) {
  Vec64 v(k);
  double s = 0.0;
  for (double& x : v) {
    x = std::exp(rng.normal());
    s += x;
  }
  for (double& x : v) x /= s;
  return v;
}

}  // namespace

Prop1Instance random_prop1_instance(Rng& rng, std::size_t index) {
  Prop1Instance inst;
  inst.arch.activation = index % 2 == 0 ? Activation::relu : Activation::tanh;
  const std::size_t d_in = 2 + rng.below(3);
  const std::size_t k = 2 + rng.below(2);
  inst.arch.layer_sizes = {d_in, 4 + rng.below(5), k};
  inst.params = init_params(inst.arch, rng);
  for (std::size_t l = 0; l < inst.arch.depth(); ++l) {
    for (std::size_t o = 0; o < inst.arch.layer_sizes[l + 1]; ++o) {
      inst.params[inst.arch.bias_offset(l) + o] = 0.1 * rng.normal();
    }
  }
  auto make = [&](std::size_t rows) {
    std::vector<Vec64> xs, ys;
    for (std::size_t r = 0; r < rows; ++r) {
      Vec64 x(d_in);
      for (double& v : x) v = rng.normal();
      xs.push_back(std::move(x));
      ys.push_back(random_simplex(k, rng));
    }
    return Batch{Mat64::from_rows(xs), Mat64::from_rows(ys)};
  };
  inst.labeled = make(4);
  inst.unlabeled = make(6);
  return inst;
}

Prop1Report verify_prop1(const MlpArch& arch, const ParamVector& params, const Batch& labeled,
                         const Batch& unlabeled, double alpha, std::size_t steps, double eps) {
  if (steps == 0) throw InvalidHyperparameter("verify_prop1: need at least one step");
  if (!(eps > 0.0)) throw InvalidHyperparameter("verify_prop1: eps must be positive");

  Prop1Report rep;
  rep.steps = steps;
  const Vec64 ones(labeled.size(), 1.0);
  const ParamVector sup = grad_weighted_loss(params, arch, labeled, ones).grad;
  rep.sup_grad_norm = std::sqrt(squared_norm(sup.span()));
  rep.dots = per_sample_grad_dots(params, arch, unlabeled, sup);
  rep.closed_form = meta_gradients(rep.dots, alpha).g;

  const std::size_t n = unlabeled.size();
  rep.fd.resize(n);
  rep.sample_grad_norms.resize(n);
  const double m = static_cast<double>(steps);
  for (std::size_t j = 0; j < n; ++j) {
    const Batch sample = single_row(unlabeled, j);
    const double one[1] = {1.0};
    rep.sample_grad_norms[j] =
        std::sqrt(squared_norm(grad_weighted_loss(params, arch, sample, one).grad.span()));

    const double up = summed_loss(unrolled(params, arch, sample, eps, alpha, steps), arch,
                                  labeled);
    const double down = summed_loss(unrolled(params, arch, sample, -eps, alpha, steps), arch,
                                    labeled);
    const double fd = (up - down) / (2.0 * eps);
    if (!std::isfinite(fd)) {
      throw DiagnosticFailure("verify_prop1: non-finite finite difference for sample " +
                                  std::to_string(j),
                              j);
    }
    rep.fd[j] = fd;

    const double expected = m * rep.closed_form[j];
    const double abs_dev = std::abs(fd - expected);
    const double rel_dev =
        abs_dev / std::max(std::abs(expected), std::numeric_limits<double>::min());
    rep.max_abs_deviation = std::max(rep.max_abs_deviation, abs_dev);
    if (abs_dev > kProp1AbsTol) rep.max_rel_deviation = std::max(rep.max_rel_deviation, rel_dev);
    if (abs_dev <= std::max(kProp1RelTol * std::abs(expected), kProp1AbsTol)) {
      ++rep.within_tolerance;
    }

    const double tie_band = 1e-6 * rep.sup_grad_norm * rep.sample_grad_norms[j];
    if (std::abs(rep.dots[j]) > tie_band) {
      ++rep.sign_checked;
      if ((fd > 0.0) == (-rep.dots[j] > 0.0) && fd != 0.0) ++rep.sign_agreements;
    }
  }
  return rep;
}

GradCheckResult gradient_check_suite(Rng& rng, std::size_t n_cases) {
  constexpr double kEps = 1e-5;
  constexpr double kKink = 1e-6;
  constexpr double kFloor = 1e-8;
  GradCheckResult res;
  for (std::size_t c = 0; c < n_cases; ++c) {
    MlpArch arch;
    arch.activation = (c % 2 == 0) ? Activation::relu : Activation::tanh;
    const std::size_t d_in = 1 + rng.below(5);
    const std::size_t k = 2 + rng.below(3);
    arch.layer_sizes = {d_in};
    if (c % 4 != 3) arch.layer_sizes.push_back(1 + rng.below(8));
    arch.layer_sizes.push_back(k);

    ParamVector params = init_params(arch, rng);
    for (std::size_t l = 0; l < arch.depth(); ++l) {
      for (std::size_t o = 0; o < arch.layer_sizes[l + 1]; ++o) {
        params[arch.bias_offset(l) + o] = 0.5 * rng.normal();
      }
    }
    const std::size_t n = 1 + rng.below(6);
    std::vector<Vec64> xs, ys;
    Vec64 w(n);
    for (std::size_t r = 0; r < n; ++r) {
      Vec64 x(d_in);
      for (double& v : x) v = rng.normal();
      xs.push_back(std::move(x));
      ys.push_back(random_simplex(k, rng));
      w[r] = rng.normal();
    }
    const Batch batch{Mat64::from_rows(xs), Mat64::from_rows(ys)};

    const ParamVector analytic = grad_weighted_loss(params, arch, batch, w).grad;
    const ParamVector numeric = finite_diff_grad(
        params,
        [&](const ParamVector& p) { return grad_weighted_loss(p, arch, batch, w).loss; }, kEps);

    // Mark parameters whose effect passes through a ReLU unit sitting on its kink.
    std::vector<bool> excluded(params.size(), false);
    if (arch.activation == Activation::relu) {
      const ForwardCache cache = forward_cached(params, arch, batch.inputs);
      for (std::size_t l = 0; l + 1 < arch.depth(); ++l) {
        const Mat64& z = cache.pre_activations[l];
        for (std::size_t o = 0; o < z.cols(); ++o) {
          bool near = false;
          for (std::size_t r = 0; r < z.rows(); ++r) near |= std::abs(z(r, o)) < kKink;
          if (!near) continue;
          // Everything at or below layer l can move this unit.
          for (std::size_t i = 0; i < arch.bias_offset(l) + arch.layer_sizes[l + 1]; ++i) {
            excluded[i] = true;
          }
        }
      }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (excluded[i]) {
        ++res.coordinates_excluded;
        continue;
      }
      const double a = analytic[i];
      const double f = numeric[i];
      const double rel = std::abs(a - f) / std::max({std::abs(a), std::abs(f), kFloor});
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.coordinates_checked;
    }
  }
  return res;
}

double softmax_regression_check(Rng& rng) {
  const std::size_t d = 4, k = 3, n = 5;
  const MlpArch arch{{d, k}, Activation::relu};
  ParamVector params = init_params(arch, rng);
  for (std::size_t o = 0; o < k; ++o) params[arch.bias_offset(0) + o] = rng.normal();
  std::vector<Vec64> xs, ys;
  for (std::size_t r = 0; r < n; ++r) {
    Vec64 x(d);
    for (double& v : x) v = rng.normal();
    xs.push_back(std::move(x));
    ys.push_back(one_hot(rng.below(k), k));
  }
  const Batch batch{Mat64::from_rows(xs), Mat64::from_rows(ys)};
  const ParamVector analytic = grad_weighted_loss(params, arch, batch, Vec64(n, 1.0)).grad;

  // Closed form: dW = sum_r (p_r - y_r) x_r^T, db = sum_r (p_r - y_r).
  const Mat64 probs = forward(params, arch, batch.inputs);
  Vec64 closed(params.size(), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < k; ++o) {
      const double e = probs(r, o) - batch.labels(r, o);
      for (std::size_t i = 0; i < d; ++i) closed[o * d + i] += e * batch.inputs(r, i);
      closed[arch.bias_offset(0) + o] += e;
    }
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < closed.size(); ++i) {
    worst = std::max(worst, std::abs(closed[i] - analytic[i]));
  }
  return worst;
}

namespace {

std::vector<LabeledExample> sample_labeled(const SplitDataset& data, std::size_t count,
                                           Rng& rng) {
  std::vector<LabeledExample> out;
  out.reserve(count);
  while (out.size() < count) {
    for (std::size_t idx : random_permutation(data.labeled.size(), rng)) {
      if (out.size() == count) break;
      out.push_back(data.labeled[idx]);
    }
  }
  return out;
}

}  // namespace

double assumption_draw(const TrainState& state, const TrainConfig& config,
                       const SplitDataset& data, Rng draw_rng, double alpha) {
  const auto x = sample_labeled(data, config.labeled_batch, draw_rng);
  const auto order = random_permutation(data.unlabeled.size(), draw_rng);
  const std::size_t ub = std::min(config.unlabeled_batch, data.unlabeled.size());
  std::vector<Vec64> u;
  u.reserve(ub);
  for (std::size_t k = 0; k < ub; ++k) u.push_back(data.unlabeled[order[k]]);

  const ParamVector& labeler = config.flags.no_ema ? state.student : state.teacher.params;
  const MetaStep step =
      compute_meta_step(state.student, labeler, config, alpha, x, u, draw_rng);
  const ParamVector g =
      meta_loss_grad(state.student, config.arch, step.mixed_unlabeled.to_batch(), step.weights);
  return squared_norm(g.span());
}

double supervised_pool_grad_sq(const ParamVector& params, const TrainConfig& config,
                               std::span<const LabeledExample> labeled, Rng& rng) {
  const std::size_t n = labeled.size();
  if (n == 0) return 0.0;
  const auto order = random_permutation(n, rng);
  ParamVector total(params.size());
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t start = 0; start < n; start += config.labeled_batch) {
    std::vector<LabeledExample> chunk;
    for (std::size_t k = start; k < std::min(n, start + config.labeled_batch); ++k) {
      chunk.push_back(labeled[order[k]]);
    }
    const MixedBatch mb = config.flags.mix_labeled() ? make_labeled_batch(chunk, config.beta, rng)
                                                     : unmixed_labeled_batch(chunk);
    const Batch b = mb.to_batch();
    const ParamVector g = grad_weighted_loss(params, config.arch, b, Vec64(b.size(), w)).grad;
    axpy(1.0, g.span(), total.span());
  }
  return squared_norm(total.span());
}

AssumptionRatioEstimate assumption_ratio(const TrainState& state, const TrainConfig& config,
                                         const SplitDataset& data, std::size_t n_mc,
                                         const Rng& base, std::uint64_t total_iters) {
  if (n_mc == 0) throw InvalidHyperparameter("assumption_ratio: need at least one draw");
  if (data.labeled.empty() || data.unlabeled.empty()) {
    throw DataError("assumption_ratio: need labeled and unlabeled data");
  }
  AssumptionRatioEstimate est;
  est.sample_count = n_mc;
  const double alpha = lr_at(config, state.t, total_iters);
  est.draws.reserve(n_mc);
  for (std::size_t d = 0; d < n_mc; ++d) {
    est.draws.push_back(assumption_draw(state, config, data, base.stream("draw", d), alpha));
  }
  double sum = 0.0;
  for (double v : est.draws) sum += v;
  est.numerator = sum / static_cast<double>(n_mc);

  Rng denom_rng = base.stream("denominator");
  est.denominator = supervised_pool_grad_sq(state.student, config, data.labeled, denom_rng);
  est.ratio = est.denominator > 1e-18 ? est.numerator / est.denominator
                                      : std::numeric_limits<double>::quiet_NaN();
  return est;
}

std::optional<double> selection_precision(const WeightVector& weights, const MixedBatch& mixed,
                                          std::size_t n_labeled,
                                          std::span<const int> shadow_labels,
                                          std::span<const PseudoLabeledExample> pseudo) {
  if (shadow_labels.empty()) return std::nullopt;
  if (weights.size() != mixed.size()) throw ShapeError("selection_precision: size mismatch");
  std::size_t scored = 0, correct = 0;
  for (std::size_t j = 0; j < mixed.size(); ++j) {
    if (mixed.origin[j] != Origin::unlabeled_mix || weights.w[j] != 1.0) continue;
    const std::size_t src = j - n_labeled;
    ++scored;
    if (static_cast<int>(argmax(pseudo[src].y_hat)) == shadow_labels[src]) ++correct;
  }
  if (scored == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(scored);
}

}  // namespace metasemi
