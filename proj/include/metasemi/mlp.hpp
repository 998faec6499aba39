#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "metasemi/tensor.hpp"

namespace metasemi {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

/// Fully connected network [d_in, h_1, ..., h_L, K] with softmax output.
/// A two-entry architecture is plain softmax regression.
struct MlpArch {
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::relu;

  /// Throws ShapeError unless there are >= 2 positive sizes.
  void validate() const;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t num_classes() const { return layer_sizes.back(); }
  /// Number of affine layers.
  std::size_t depth() const { return layer_sizes.size() - 1; }
  std::size_t num_params() const;

  // Flat layout: for each affine layer in order, the weight matrix
  // (out x in, row-major) followed by the bias (out).
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;

  friend bool operator==(const MlpArch&, const MlpArch&) = default;
};

/// All weights and biases of one network, in the MlpArch flat layout.
struct ParamVector {
  Vec64 values;

  ParamVector() = default;
  explicit ParamVector(std::size_t n, double fill = 0.0) : values(n, fill) {}
  explicit ParamVector(Vec64 v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  std::span<const double> span() const { return values; }
  std::span<double> span() { return values; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

/// Inputs with soft label rows; labels rows lie on the simplex.
struct Batch {
  Mat64 inputs;
  Mat64 labels;

  std::size_t size() const { return inputs.rows(); }
};

struct ForwardCache {
  // activations[0] is the input; activations[l] is the output of hidden layer l.
  std::vector<Mat64> activations;
  // pre_activations[l] feeds layer l+1's nonlinearity; the last entry holds logits.
  std::vector<Mat64> pre_activations;
  Mat64 probs;
};

/// He initialisation: weights ~ N(0, 2 / fan_in), biases zero.
ParamVector init_params(const MlpArch& arch, Rng& rng);

ForwardCache forward_cached(const ParamVector& params, const MlpArch& arch,
                            const Mat64& inputs);

/// Row-wise softmax probabilities.
Mat64 forward(const ParamVector& params, const MlpArch& arch, const Mat64& inputs);

inline constexpr double kProbClamp = 1e-12;

/// -sum_k y_k * ln(max(p_k, 1e-12)).
double cross_entropy(std::span<const double> probs, std::span<const double> soft_label);

/// Exact derivative of cross_entropy with respect to the logits, accounting
/// for the clamp (clamped components contribute nothing).
void cross_entropy_logit_grad(std::span<const double> probs,
                              std::span<const double> soft_label, std::span<double> out);

/// Reverse pass for the whole batch given d(loss)/d(logits) per row.
ParamVector backward(const ParamVector& params, const MlpArch& arch,
                     const ForwardCache& cache, const Mat64& logit_grads);

/// Reverse pass for one row of the cache; overwrites `grad`.
void backward_row(const ParamVector& params, const MlpArch& arch, const ForwardCache& cache,
                  std::size_t row, std::span<const double> logit_grad, ParamVector& grad);

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// loss = sum_j w_j * CE_j and its exact gradient.
LossAndGrad grad_weighted_loss(const ParamVector& params, const MlpArch& arch,
                               const Batch& batch, std::span<const double> weights);

/// CE of every row at `params`.
Vec64 per_sample_losses(const ParamVector& params, const MlpArch& arch, const Batch& batch);

/// Entry j = <ref_grad, grad of CE_j>. One per-sample gradient buffer is
/// reused, so memory stays O(num_params).
Vec64 per_sample_grad_dots(const ParamVector& params, const MlpArch& arch,
                           const Batch& batch, const ParamVector& ref_grad);

/// Central differences of `loss` at `params`, one coordinate at a time.
ParamVector finite_diff_grad(const ParamVector& params,
                             const std::function<double(const ParamVector&)>& loss,
                             double eps);

}  // namespace metasemi
