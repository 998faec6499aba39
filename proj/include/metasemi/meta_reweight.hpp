#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "metasemi/mlp.hpp"
#include "metasemi/tensor.hpp"

namespace metasemi {

/// How pseudo-labeled samples are weighted.
///   meta   -- 1 when the meta gradient is <= 0, else 0
///   const1 -- every sample weighted 1
///   pm1    -- 1 when the meta gradient is <= 0, else -1
enum class WeightMode { meta, const1, pm1 };

std::string to_string(WeightMode m);

struct WeightVector {
  Vec64 w;
  WeightMode mode = WeightMode::meta;

  std::size_t size() const { return w.size(); }
  double sum() const;
  /// Number of entries equal to 1.
  std::size_t selected() const;
};

/// Derivative of the summed supervised loss after one virtual SGD step,
/// taken with respect to each sample weight at w = 0.
struct MetaGradients {
  Vec64 g;
  double alpha = 0.0;
};

/// g_j = -alpha * dots_j, where dots_j = <sum_i grad CE(x~_i), grad CE(u~_j)>
/// comes from per_sample_grad_dots with the summed supervised gradient.
MetaGradients meta_gradients(std::span<const double> dots, double alpha);

WeightVector assign_weights(const MetaGradients& mg, WeightMode mode);

/// (1 / sum w) * sum_j w_j L_j, or 0 when sum w == 0.
double meta_loss(const WeightVector& weights, std::span<const double> losses);

/// Gradient of meta_loss through the network; the zero vector when sum w == 0.
ParamVector meta_loss_grad(const ParamVector& params, const MlpArch& arch, const Batch& batch,
                           const WeightVector& weights);

}  // namespace metasemi
