#include "metasemi/meta_reweight.hpp"

#include <algorithm>

namespace metasemi {

std::string to_string(WeightMode m) {
  switch (m) {
    case WeightMode::meta: return "meta";
    case WeightMode::const1: return "const1";
    case WeightMode::pm1: return "pm1";
  }
  return "?";
}

double WeightVector::sum() const {
  double s = 0.0;
  for (double v : w) s += v;
  return s;
}

std::size_t WeightVector::selected() const {
  return static_cast<std::size_t>(std::count(w.begin(), w.end(), 1.0));
}

MetaGradients meta_gradients(std::span<const double> dots, double alpha) {
  MetaGradients mg;
  mg.alpha = alpha;
  mg.g.resize(dots.size());
  for (std::size_t j = 0; j < dots.size(); ++j) mg.g[j] = -alpha * dots[j];
  return mg;
}

WeightVector assign_weights(const MetaGradients& mg, WeightMode mode) {
  WeightVector wv;
  wv.mode = mode;
  wv.w.resize(mg.g.size());
  for (std::size_t j = 0; j < mg.g.size(); ++j) {
    // A meta gradient of exactly zero selects the sample.
    const bool helps = mg.g[j] <= 0.0;
    switch (mode) {
      case WeightMode::meta: wv.w[j] = helps ? 1.0 : 0.0; break;
      case WeightMode::const1: wv.w[j] = 1.0; break;
      case WeightMode::pm1: wv.w[j] = helps ? 1.0 : -1.0; break;
    }
  }
  return wv;
}

double meta_loss(const WeightVector& weights, std::span<const double> losses) {
  if (weights.size() != losses.size()) {
    throw ShapeError("meta_loss: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(losses.size()) + " losses");
  }
  const double total = weights.sum();
  if (total == 0.0) return 0.0;
  double s = 0.0;
  for (std::size_t j = 0; j < losses.size(); ++j) {
    if (weights.w[j] != 0.0) s += weights.w[j] * losses[j];
  }
  return s / total;
}

ParamVector meta_loss_grad(const ParamVector& params, const MlpArch& arch, const Batch& batch,
                           const WeightVector& weights) {
  if (weights.size() != batch.size()) {
    throw ShapeError("meta_loss_grad: " + std::to_string(weights.size()) +
                     " weights for a batch of " + std::to_string(batch.size()));
  }
  const double total = weights.sum();
  if (total == 0.0) return ParamVector(params.size());
  ParamVector grad = grad_weighted_loss(params, arch, batch, weights.w).grad;
  for (double& v : grad.values) v /= total;
  return grad;
}

}  // namespace metasemi
