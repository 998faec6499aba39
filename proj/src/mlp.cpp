#include "metasemi/mlp.hpp"

#include <algorithm>
#include <cmath>

namespace metasemi {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + name + "' (expected relu|tanh)");
}

void MlpArch::validate() const {
  if (layer_sizes.size() < 2) {
    throw ShapeError("MlpArch: need at least input and output sizes");
  }
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw ShapeError("MlpArch: layer sizes must be positive");
  }
}

std::size_t MlpArch::num_params() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  }
  return n;
}

std::size_t MlpArch::weight_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) {
    off += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  }
  return off;
}

std::size_t MlpArch::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + layer_sizes[layer] * layer_sizes[layer + 1];
}

namespace {

void check_params(const ParamVector& params, const MlpArch& arch) {
  arch.validate();
  if (params.size() != arch.num_params()) {
    throw ShapeError("parameter vector has " + std::to_string(params.size()) +
                     " entries, architecture needs " + std::to_string(arch.num_params()));
  }
}

double activate(Activation a, double z) {
  return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative expressed through the pre-activation z and activation value h.
// ReLU at exactly 0 uses subgradient 0.
double activate_grad(Activation a, double z, double h) {
  return a == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - h * h;
}

}  // namespace

ParamVector init_params(const MlpArch& arch, Rng& rng) {
  arch.validate();
  ParamVector p(arch.num_params());
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    const std::size_t fan_in = arch.layer_sizes[l];
    const std::size_t fan_out = arch.layer_sizes[l + 1];
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    const std::size_t w0 = arch.weight_offset(l);
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) p[w0 + i] = scale * rng.normal();
  }
  return p;
}

ForwardCache forward_cached(const ParamVector& params, const MlpArch& arch,
                            const Mat64& inputs) {
  check_params(params, arch);
  if (inputs.cols() != arch.input_dim()) {
    throw ShapeError("forward: inputs have " + std::to_string(inputs.cols()) +
                     " columns, network expects " + std::to_string(arch.input_dim()));
  }
  const std::size_t n = inputs.rows();
  const std::size_t depth = arch.depth();
  ForwardCache cache;
  cache.activations.reserve(depth);
  cache.pre_activations.reserve(depth);
  cache.activations.push_back(inputs);

  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t in = arch.layer_sizes[l];
    const std::size_t out = arch.layer_sizes[l + 1];
    const double* w = params.values.data() + arch.weight_offset(l);
    const double* b = params.values.data() + arch.bias_offset(l);
    const Mat64& a = cache.activations.back();
    Mat64 z(n, out);
    for (std::size_t r = 0; r < n; ++r) {
      auto ar = a.row(r);
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        const double* wo = w + o * in;
        for (std::size_t i = 0; i < in; ++i) s += wo[i] * ar[i];
        z(r, o) = s;
      }
    }
    if (l + 1 < depth) {
      Mat64 h(n, out);
      for (std::size_t k = 0; k < z.data().size(); ++k) {
        h.data()[k] = activate(arch.activation, z.data()[k]);
      }
      cache.pre_activations.push_back(std::move(z));
      cache.activations.push_back(std::move(h));
    } else {
      cache.pre_activations.push_back(std::move(z));
    }
  }

  const Mat64& logits = cache.pre_activations.back();
  cache.probs = Mat64(n, arch.num_classes());
  for (std::size_t r = 0; r < n; ++r) {
    const Vec64 p = softmax(logits.row(r));
    std::copy(p.begin(), p.end(), cache.probs.row(r).begin());
  }
  return cache;
}

Mat64 forward(const ParamVector& params, const MlpArch& arch, const Mat64& inputs) {
  return forward_cached(params, arch, inputs).probs;
}

double cross_entropy(std::span<const double> probs, std::span<const double> soft_label) {
  if (probs.size() != soft_label.size()) {
    throw ShapeError("cross_entropy: length mismatch (" + std::to_string(probs.size()) +
                     " vs " + std::to_string(soft_label.size()) + ")");
  }
  double loss = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (soft_label[k] != 0.0) loss -= soft_label[k] * std::log(std::max(probs[k], kProbClamp));
  }
  return loss;
}

void cross_entropy_logit_grad(std::span<const double> probs,
                              std::span<const double> soft_label, std::span<double> out) {
  // dCE/dz_c = p_c * sum_{k unclamped} y_k - [c unclamped] * y_c
  double live_mass = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] > kProbClamp) live_mass += soft_label[k];
  }
  for (std::size_t c = 0; c < probs.size(); ++c) {
    out[c] = probs[c] * live_mass - (probs[c] > kProbClamp ? soft_label[c] : 0.0);
  }
}

namespace {

// Accumulates the parameter gradient of one row into `grad` given the
// derivative at the logits. `delta` and `scratch` are reused buffers.
void backprop_row(const ParamVector& params, const MlpArch& arch, const ForwardCache& cache,
                  std::size_t row, Vec64& delta, Vec64& scratch, ParamVector& grad) {
  for (std::size_t l = arch.depth(); l-- > 0;) {
    const std::size_t in = arch.layer_sizes[l];
    const std::size_t out = arch.layer_sizes[l + 1];
    const double* w = params.values.data() + arch.weight_offset(l);
    double* gw = grad.values.data() + arch.weight_offset(l);
    double* gb = grad.values.data() + arch.bias_offset(l);
    auto a = cache.activations[l].row(row);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      double* gwo = gw + o * in;
      for (std::size_t i = 0; i < in; ++i) gwo[i] += d * a[i];
    }
    if (l == 0) break;
    scratch.assign(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      const double* wo = w + o * in;
      for (std::size_t i = 0; i < in; ++i) scratch[i] += d * wo[i];
    }
    auto z = cache.pre_activations[l - 1].row(row);
    for (std::size_t i = 0; i < in; ++i) {
      scratch[i] *= activate_grad(arch.activation, z[i], a[i]);
    }
    delta.swap(scratch);
  }
}

}  // namespace

ParamVector backward(const ParamVector& params, const MlpArch& arch,
                     const ForwardCache& cache, const Mat64& logit_grads) {
  check_params(params, arch);
  const std::size_t n = cache.probs.rows();
  if (logit_grads.rows() != n || logit_grads.cols() != arch.num_classes()) {
    throw ShapeError("backward: logit gradient shape does not match the cache");
  }
  ParamVector grad(arch.num_params());
  Vec64 delta, scratch;
  for (std::size_t r = 0; r < n; ++r) {
    auto g = logit_grads.row(r);
    delta.assign(g.begin(), g.end());
    backprop_row(params, arch, cache, r, delta, scratch, grad);
  }
  return grad;
}

void backward_row(const ParamVector& params, const MlpArch& arch, const ForwardCache& cache,
                  std::size_t row, std::span<const double> logit_grad, ParamVector& grad) {
  grad.values.assign(arch.num_params(), 0.0);
  Vec64 delta(logit_grad.begin(), logit_grad.end());
  Vec64 scratch;
  backprop_row(params, arch, cache, row, delta, scratch, grad);
}

namespace {

void check_batch(const MlpArch& arch, const Batch& batch) {
  if (batch.labels.rows() != batch.inputs.rows()) {
    throw ShapeError("batch: " + std::to_string(batch.inputs.rows()) + " inputs but " +
                     std::to_string(batch.labels.rows()) + " labels");
  }
  if (batch.labels.cols() != arch.num_classes()) {
    throw ShapeError("batch: labels have " + std::to_string(batch.labels.cols()) +
                     " classes, network has " + std::to_string(arch.num_classes()));
  }
}

}  // namespace

LossAndGrad grad_weighted_loss(const ParamVector& params, const MlpArch& arch,
                               const Batch& batch, std::span<const double> weights) {
  check_batch(arch, batch);
  if (weights.size() != batch.size()) {
    throw ShapeError("grad_weighted_loss: " + std::to_string(weights.size()) +
                     " weights for a batch of " + std::to_string(batch.size()));
  }
  const ForwardCache cache = forward_cached(params, arch, batch.inputs);
  const std::size_t k = arch.num_classes();
  Mat64 logit_grads(batch.size(), k);
  double loss = 0.0;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    if (weights[r] == 0.0) continue;
    loss += weights[r] * cross_entropy(cache.probs.row(r), batch.labels.row(r));
    auto g = logit_grads.row(r);
    cross_entropy_logit_grad(cache.probs.row(r), batch.labels.row(r), g);
    for (double& v : g) v *= weights[r];
  }
  return {loss, backward(params, arch, cache, logit_grads)};
}

Vec64 per_sample_losses(const ParamVector& params, const MlpArch& arch, const Batch& batch) {
  check_batch(arch, batch);
  const Mat64 probs = forward(params, arch, batch.inputs);
  Vec64 losses(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    losses[r] = cross_entropy(probs.row(r), batch.labels.row(r));
  }
  return losses;
}

Vec64 per_sample_grad_dots(const ParamVector& params, const MlpArch& arch,
                           const Batch& batch, const ParamVector& ref_grad) {
  check_batch(arch, batch);
  if (ref_grad.size() != params.size()) {
    throw ShapeError("per_sample_grad_dots: reference gradient has " +
                     std::to_string(ref_grad.size()) + " entries, expected " +
                     std::to_string(params.size()));
  }
  const ForwardCache cache = forward_cached(params, arch, batch.inputs);
  Vec64 dots(batch.size());
  Vec64 logit_grad(arch.num_classes());
  ParamVector g;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    cross_entropy_logit_grad(cache.probs.row(r), batch.labels.row(r), logit_grad);
    backward_row(params, arch, cache, r, logit_grad, g);
    dots[r] = dot(ref_grad.span(), g.span());
  }
  return dots;
}

ParamVector finite_diff_grad(const ParamVector& params,
                             const std::function<double(const ParamVector&)>& loss,
                             double eps) {
  if (!(eps > 0.0)) throw InvalidHyperparameter("finite_diff_grad: eps must be positive");
  ParamVector grad(params.size());
  ParamVector probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + eps;
    const double up = loss(probe);
    probe[i] = params[i] - eps;
    const double down = loss(probe);
    probe[i] = params[i];
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace metasemi
