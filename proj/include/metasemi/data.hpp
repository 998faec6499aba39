#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "metasemi/mlp.hpp"
#include "metasemi/tensor.hpp"

namespace metasemi {

struct LabeledExample {
  Vec64 x;
  Vec64 y;  // one-hot
};

struct PseudoLabeledExample {
  Vec64 u;
  Vec64 y_hat;  // on the simplex
};

enum class Origin { labeled_mix, unlabeled_mix };

/// Output of one MixUp call. Entry j mixes source j with source partner[j]
/// (the shuffled copy) using a single lambda for the whole batch; origin[j]
/// tags where source j came from.
struct MixedBatch {
  std::vector<PseudoLabeledExample> examples;
  std::vector<Origin> origin;
  std::vector<std::size_t> partner;
  double lambda = 1.0;

  std::size_t size() const { return examples.size(); }
  Batch to_batch() const;
};

/// Raw features with integer class labels.
struct Dataset {
  std::vector<Vec64> features;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  // Set for image data (IDX); 0 otherwise.
  std::size_t image_rows = 0;
  std::size_t image_cols = 0;

  std::size_t size() const { return features.size(); }
};

/// Train/validation/test partition. True labels of the unlabeled pool live in
/// `unlabeled_shadow` and are read only by diagnostics.
struct SplitDataset {
  std::vector<LabeledExample> labeled;
  std::vector<Vec64> unlabeled;
  std::vector<int> unlabeled_shadow;
  std::vector<LabeledExample> validation;
  std::vector<LabeledExample> test;
  std::size_t num_classes = 0;
  std::size_t image_rows = 0;
  std::size_t image_cols = 0;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Vec64 one_hot(std::size_t label, std::size_t num_classes);

/// x~ = lam * x_a + (1 - lam) * x_b and the same for labels.
std::pair<Vec64, Vec64> mixup_pair(std::span<const double> xa, std::span<const double> ya,
                                   std::span<const double> xb, std::span<const double> yb,
                                   double lam);

/// MixUp(X, Shuffle(X), lam) with lam ~ Beta(beta, beta) drawn once, then the
/// permutation, both from `rng`. `forced_lambda` replaces the draw.
MixedBatch make_labeled_batch(std::span<const LabeledExample> labeled, double beta, Rng& rng,
                              std::optional<double> forced_lambda = std::nullopt);

/// MixUp(W, Shuffle(W), lam) with W = Concat(X one-hot, U pseudo-labeled).
MixedBatch make_unlabeled_batch(std::span<const LabeledExample> labeled,
                                std::span<const PseudoLabeledExample> pseudo, double beta,
                                Rng& rng, std::optional<double> forced_lambda = std::nullopt);

/// The same batches without mixing (lam = 1, identity pairing).
MixedBatch unmixed_labeled_batch(std::span<const LabeledExample> labeled);
MixedBatch unmixed_unlabeled_batch(std::span<const LabeledExample> labeled,
                                   std::span<const PseudoLabeledExample> pseudo);

Batch to_batch(std::span<const LabeledExample> examples);

/// Passed as labels_per_class to keep every training label.
inline constexpr std::size_t kAllLabels = static_cast<std::size_t>(-1);

/// Holds out round(val_fraction * n) validation examples (uniformly at
/// random), then keeps exactly `labels_per_class` labels per class from the
/// rest; everything else becomes unlabeled. `test` is passed through.
SplitDataset split_dataset(const Dataset& data, std::size_t labels_per_class,
                           double val_fraction, Rng& rng, const Dataset* test = nullptr);

/// Splits off round(fraction * n) examples as a separate dataset.
std::pair<Dataset, Dataset> holdout(const Dataset& data, double fraction, Rng& rng);

/// Two interleaved half circles: class 0 on the upper unit arc around the
/// origin, class 1 on the lower unit arc around (1, 0.5). Gaussian noise of
/// standard deviation `noise_std` is added to both coordinates.
Dataset gen_two_moons(std::size_t n, double noise_std, Rng& rng);

/// Isotropic Gaussian clusters; example i belongs to class i % centers.size().
Dataset gen_blobs(std::size_t n, const std::vector<Vec64>& centers, double std_dev,
                  Rng& rng);

/// IDX (MNIST) reader errors carry the failure class.
class IdxError : public DataError {
 public:
  enum class Kind { io, bad_magic, truncated, count_mismatch };
  IdxError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Images (magic 0x00000803) and labels (magic 0x00000801), big-endian
/// dimensions, unsigned bytes. Pixels are scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Header row, feature columns, integer label in the last column.
Dataset load_csv(const std::string& path);

/// Per-feature affine normalisation fitted on one set of rows.
class Standardizer {
 public:
  static Standardizer fit(std::span<const Vec64> rows);
  /// Features with zero spread pass through unchanged.
  Vec64 apply(std::span<const double> x) const;

  const Vec64& mean() const { return mean_; }
  const Vec64& stddev() const { return std_; }

 private:
  Vec64 mean_;
  Vec64 std_;
};

/// Fits on the training features (labeled + unlabeled) and transforms every
/// split with those statistics.
void standardize(SplitDataset& data);

/// Integer translation of a rows x cols image with zero fill.
Vec64 shift_image(std::span<const double> image, std::size_t rows, std::size_t cols, int dy,
                  int dx);

/// Random translation by up to +-2 pixels in each direction.
Vec64 random_shift(std::span<const double> image, std::size_t rows, std::size_t cols,
                   Rng& rng);

}  // namespace metasemi
