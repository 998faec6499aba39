#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metasemi/data.hpp"
#include "metasemi/ema_teacher.hpp"
#include "metasemi/meta_reweight.hpp"
#include "metasemi/mlp.hpp"

namespace metasemi {

enum class Schedule { cosine, inv_t };
enum class Method { meta_semi, supervised, supervised_mixup, const1, pm1 };

std::string to_string(Schedule s);
std::string to_string(Method m);
Schedule parse_schedule(const std::string& name);
Method parse_method(const std::string& name);

struct AblationFlags {
  bool no_ema = false;
  bool one_hot_pseudo = false;
  bool mixup_labeled_only = false;
  bool mixup_unlabeled_only = false;
  bool no_mixup = false;
  bool augment_shift = false;

  bool mix_labeled() const { return !no_mixup && !mixup_unlabeled_only; }
  bool mix_unlabeled() const { return !no_mixup && !mixup_labeled_only; }
};

struct TrainConfig {
  MlpArch arch{{2, 32, 32, 2}, Activation::relu};
  double beta = 0.5;
  double alpha0 = 0.1;
  std::size_t epochs = 100;
  std::size_t labeled_batch = 8;
  std::size_t unlabeled_batch = 24;
  double ema_decay = 0.999;
  Schedule schedule = Schedule::cosine;
  Method method = Method::meta_semi;
  AblationFlags flags;
  double consistency_coeff = 0.0;
  double consistency_noise_std = 0.05;
  std::uint64_t seed = 0;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  // Monte-Carlo draws for the per-epoch Assumption-1 ratio; 0 disables it.
  std::size_t assumption_samples = 0;

  /// Throws InvalidHyperparameter naming the offending field.
  void validate() const;
  bool uses_meta_weights() const;
  WeightMode weight_mode() const;
};

struct MetricsRecord {
  std::size_t epoch = 0;
  double meta_loss = 0.0;
  double selected_fraction = std::numeric_limits<double>::quiet_NaN();
  double student_test_error = std::numeric_limits<double>::quiet_NaN();
  double teacher_test_error = std::numeric_limits<double>::quiet_NaN();
  double sup_grad_norm = 0.0;
  double lr = 0.0;
  double assumption_ratio = std::numeric_limits<double>::quiet_NaN();
  double selection_precision = std::numeric_limits<double>::quiet_NaN();
};

struct TrainState {
  std::uint64_t t = 0;
  ParamVector student;
  ParamVector momentum_buffer;
  TeacherState teacher;
  Rng batches;   // unlabeled shuffles and labeled cycling
  Rng mixup;     // lambda draws and MixUp pairings
  Rng noise;     // consistency perturbations
  Rng augment;   // image shifts
  std::vector<std::size_t> labeled_order;  // pending labeled indices
  std::vector<MetricsRecord> history;
};

/// Fresh state: He-initialised student, teacher copied from it, zero momentum.
TrainState init_state(const TrainConfig& config);

/// Learning rate at iteration t of total_iters.
///   cosine: alpha0 / 2 * (1 + cos(pi * t / total))
///   inv_t:  alpha0 / (1 + t / tau), tau = total / 10
double lr_at(const TrainConfig& config, std::uint64_t t, std::uint64_t total_iters);

/// Nesterov momentum SGD with additive weight decay:
///   g <- grad + weight_decay * theta
///   v <- momentum * v + g
///   theta <- theta - lr * (g + momentum * v)
/// With momentum = 0 this is theta - lr * g.
void sgd_step(ParamVector& params, ParamVector& momentum_buffer, const ParamVector& grad,
              double lr, double momentum, double weight_decay);

/// Mean over batch rows and classes of (p(u) - p(u + noise))^2; the gradient
/// flows through both predictions. Noise is drawn from `rng`.
LossAndGrad consistency_loss(const ParamVector& params, const MlpArch& arch,
                             const Mat64& features, double noise_std, Rng& rng);

/// Everything the meta step decides for one (X, U) pair, before the update.
struct MetaStep {
  MixedBatch mixed_labeled;
  MixedBatch mixed_unlabeled;
  std::vector<PseudoLabeledExample> pseudo;
  ParamVector sup_grad;  // gradient of the summed CE over the mixed labeled batch
  Vec64 losses;          // per-sample CE over the mixed unlabeled batch
  Vec64 dots;
  WeightVector weights;
  double meta_loss = 0.0;
};

/// Pseudo-labels U, builds both mixed batches and applies the weight rule at
/// the current student. Draws come from `mixup`.
MetaStep compute_meta_step(const ParamVector& student, const ParamVector& labeler,
                           const TrainConfig& config, double alpha,
                           std::span<const LabeledExample> labeled,
                           std::span<const Vec64> unlabeled, Rng& mixup);

struct IterationStats {
  double loss = 0.0;
  std::size_t selected = 0;
  std::size_t candidates = 0;
  bool skipped = false;
  double sup_grad_norm = 0.0;
  double lr = 0.0;
  // Selected / rejected unlabeled-origin samples whose pseudo-label argmax
  // matches the hidden true label.
  std::size_t selected_correct = 0;
  std::size_t selected_scored = 0;
  std::size_t rejected_correct = 0;
  std::size_t rejected_scored = 0;
};

/// One training iteration on a labeled batch X and an unlabeled batch U.
/// `shadow` (optional) holds the true labels of U for diagnostics only.
IterationStats train_iteration(TrainState& state, const TrainConfig& config,
                               std::span<const LabeledExample> labeled,
                               std::span<const Vec64> unlabeled, std::uint64_t total_iters,
                               std::span<const int> shadow = {});

/// Fraction of argmax-misclassified examples (ties go to the lowest index).
double evaluate(const ParamVector& params, const MlpArch& arch,
                std::span<const LabeledExample> testset);

/// Norm of the gradient of the expected mean supervised loss over all labeled
/// data. With MixUp on labeled data the expectation pairs every example with
/// every partner and integrates lambda on fixed Beta quantiles.
double expected_supervised_grad_norm(const ParamVector& params, const TrainConfig& config,
                                     std::span<const LabeledExample> labeled);

std::size_t iterations_per_epoch(const TrainConfig& config, const SplitDataset& data);

using EpochCallback = std::function<void(const TrainState&, const MetricsRecord&)>;

struct TrainResult {
  TrainState state;
  std::vector<MetricsRecord> history;
};

TrainResult train(const TrainConfig& config, const SplitDataset& data,
                  const EpochCallback& on_epoch = {});

}  // namespace metasemi
