#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace metasemi {

using Vec64 = std::vector<double>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidHyperparameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Row-major dense matrix of doubles.
class Mat64 {
 public:
  Mat64() = default;
  Mat64(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Mat64 from_rows(const std::vector<Vec64>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  const Vec64& data() const { return data_; }
  Vec64& data() { return data_; }

  friend bool operator==(const Mat64&, const Mat64&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec64 data_;
};

/// Deterministic pseudo-random generator: xoshiro256** whose 256-bit state is
/// filled from the 64-bit seed by splitmix64. The sequence depends only on the
/// seed, so runs are reproducible across platforms and compilers.
///
/// Independent streams are derived by name from the *seed* (not the current
/// state): `Rng(7).stream("mixup")` is the same generator no matter how many
/// draws were taken from `Rng(7)` or from any other stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  Rng stream(std::string_view name) const;
  Rng stream(std::string_view name, std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on the open interval (0, 1).
  double uniform_open();
  /// Standard normal via Box-Muller (two uniforms per draw, no caching).
  double normal();
  /// Unbiased integer in [0, n) by rejection; n must be positive.
  std::size_t below(std::size_t n);

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

/// Gamma(shape, 1). Marsaglia-Tsang squeeze method for shape >= 1; for
/// shape < 1 the boost Gamma(shape + 1) * U^(1/shape) is applied.
double sample_gamma(Rng& rng, double shape);

/// lambda ~ Beta(beta, beta) as X / (X + Y) with X, Y ~ Gamma(beta, 1).
/// The result is clamped into the open interval (0, 1).
double sample_beta(Rng& rng, double beta);

/// Uniformly random permutation of 0..n-1 (Fisher-Yates, high index first).
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

/// Max-subtracted softmax.
Vec64 softmax(std::span<const double> logits);

/// Sum of a_i * b_i in ascending index order.
double dot(std::span<const double> a, std::span<const double> b);

double squared_norm(std::span<const double> a);

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> v);

/// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);

bool all_finite(std::span<const double> v);

}  // namespace metasemi
