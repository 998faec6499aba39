#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "metasemi/data.hpp"
#include "metasemi/mlp.hpp"
#include "metasemi/trainer.hpp"

namespace metasemi {

class DiagnosticFailure : public std::runtime_error {
 public:
  DiagnosticFailure(const std::string& what, std::size_t sample)
      : std::runtime_error(what), sample_(sample) {}
  std::size_t sample() const { return sample_; }

 private:
  std::size_t sample_;
};

/// Finite-difference check of the one-step meta-gradient closed form.
struct Prop1Report {
  std::size_t steps = 1;
  Vec64 fd;           // d SupLoss(theta_M(w)) / d w_j at w = 0, by central differences
  Vec64 closed_form;  // -alpha * dots_j (one step)
  Vec64 dots;
  Vec64 sample_grad_norms;
  double sup_grad_norm = 0.0;
  // max_j |fd_j - steps * closed_form_j| / max(|steps * closed_form_j|, tiny)
  double max_rel_deviation = 0.0;
  double max_abs_deviation = 0.0;
  // Samples with |fd_j - M cf_j| <= max(rel_tol |M cf_j|, abs_tol).
  std::size_t within_tolerance = 0;
  std::size_t sign_agreements = 0;
  std::size_t sign_checked = 0;
};

/// A small random network with a labeled and an unlabeled batch whose label
/// rows are random points of the simplex.
struct Prop1Instance {
  MlpArch arch;
  ParamVector params;
  Batch labeled;
  Batch unlabeled;
};

/// Instance `index` alternates ReLU and tanh; sizes stay within [4, 8, 3] with
/// 4 labeled and 6 unlabeled rows.
Prop1Instance random_prop1_instance(Rng& rng, std::size_t index);

inline constexpr double kProp1RelTol = 1e-3;
inline constexpr double kProp1AbsTol = 1e-9;

/// For every unlabeled sample j runs `steps` plain gradient-descent steps of
/// the weighted unlabeled loss with w = +-eps e_j (no momentum, no weight
/// decay) and differentiates the summed supervised loss over `labeled` by
/// central differences in w_j.
Prop1Report verify_prop1(const MlpArch& arch, const ParamVector& params, const Batch& labeled,
                         const Batch& unlabeled, double alpha, std::size_t steps,
                         double eps = 1e-4);

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t coordinates_excluded = 0;
};

/// Analytic vs central-difference gradients (eps = 1e-5) of sum_j w_j CE_j on
/// random ReLU/tanh networks no larger than [5, 8, 4] with batches of at most
/// 6 rows and random real weights. Parameters adjacent to a ReLU pre-activation
/// with magnitude below 1e-6 are skipped. Relative error per coordinate is
/// |a - f| / max(|a|, |f|, 1e-8).
GradCheckResult gradient_check_suite(Rng& rng, std::size_t n_cases);

/// Largest |analytic - (p - y) x^T| entry for softmax regression on a random batch.
double softmax_regression_check(Rng& rng);

struct AssumptionRatioEstimate {
  double numerator = 0.0;    // mean of ||grad L_meta||^2 over draws
  double denominator = 0.0;  // ||grad of mean supervised loss over all labeled data||^2
  double ratio = 0.0;        // NaN when denominator <= 1e-18
  std::size_t sample_count = 0;
  Vec64 draws;  // ||grad L_meta||^2 per draw, in draw order
};

/// ||grad L_meta||^2 for one freshly sampled (X, U) pair at the current state.
double assumption_draw(const TrainState& state, const TrainConfig& config,
                       const SplitDataset& data, Rng draw_rng, double alpha);

/// Squared norm of the gradient of the mean supervised loss over all labeled
/// data, each labeled batch pass mixed with a fresh lambda when MixUp on
/// labeled data is enabled.
double supervised_pool_grad_sq(const ParamVector& params, const TrainConfig& config,
                               std::span<const LabeledExample> labeled, Rng& rng);

/// Monte-Carlo estimate of E||grad L_meta||^2 / ||grad E G||^2. Draw d uses
/// `base.stream("draw", d)`, so every draw is reproducible on its own.
/// `total_iters` fixes the learning rate used by the weight rule.
AssumptionRatioEstimate assumption_ratio(const TrainState& state, const TrainConfig& config,
                                         const SplitDataset& data, std::size_t n_mc,
                                         const Rng& base, std::uint64_t total_iters);

/// Among selected unlabeled-origin entries of a mixed batch, the fraction
/// whose source pseudo label argmax equals the hidden true label. Entry j of
/// `mixed` originates from W_j; the unlabeled sources start at `n_labeled`.
/// Returns nullopt when nothing is selected or no shadow labels exist.
std::optional<double> selection_precision(const WeightVector& weights, const MixedBatch& mixed,
                                          std::size_t n_labeled,
                                          std::span<const int> shadow_labels,
                                          std::span<const PseudoLabeledExample> pseudo);

}  // namespace metasemi
