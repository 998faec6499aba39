#include "metasemi/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

namespace metasemi {

Vec64 one_hot(std::size_t label, std::size_t num_classes) {
  if (label >= num_classes) {
    throw ShapeError("one_hot: label " + std::to_string(label) + " out of range for " +
                     std::to_string(num_classes) + " classes");
  }
  Vec64 y(num_classes, 0.0);
  y[label] = 1.0;
  return y;
}

std::pair<Vec64, Vec64> mixup_pair(std::span<const double> xa, std::span<const double> ya,
                                   std::span<const double> xb, std::span<const double> yb,
                                   double lam) {
  if (xa.size() != xb.size() || ya.size() != yb.size()) {
    throw ShapeError("mixup_pair: dimension mismatch");
  }
  if (!(lam >= 0.0 && lam <= 1.0)) {
    throw InvalidHyperparameter("mixup_pair: lambda must lie in [0, 1]");
  }
  const double mu = 1.0 - lam;
  Vec64 x(xa.size()), y(ya.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = lam * xa[i] + mu * xb[i];
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = lam * ya[i] + mu * yb[i];
  return {std::move(x), std::move(y)};
}

Batch MixedBatch::to_batch() const {
  std::vector<Vec64> xs, ys;
  xs.reserve(size());
  ys.reserve(size());
  for (const auto& e : examples) {
    xs.push_back(e.u);
    ys.push_back(e.y_hat);
  }
  return {Mat64::from_rows(xs), Mat64::from_rows(ys)};
}

Batch to_batch(std::span<const LabeledExample> examples) {
  std::vector<Vec64> xs, ys;
  xs.reserve(examples.size());
  ys.reserve(examples.size());
  for (const auto& e : examples) {
    xs.push_back(e.x);
    ys.push_back(e.y);
  }
  return {Mat64::from_rows(xs), Mat64::from_rows(ys)};
}

namespace {

struct Source {
  const Vec64* x;
  const Vec64* y;
  Origin origin;
};

MixedBatch mix_sources(const std::vector<Source>& w, double beta, Rng& rng,
                       std::optional<double> forced_lambda) {
  const double lam = forced_lambda ? *forced_lambda : sample_beta(rng, beta);
  const auto perm = random_permutation(w.size(), rng);
  MixedBatch out;
  out.lambda = lam;
  out.examples.reserve(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) {
    const Source& a = w[j];
    const Source& b = w[perm[j]];
    auto [x, y] = mixup_pair(*a.x, *a.y, *b.x, *b.y, lam);
    out.examples.push_back({std::move(x), std::move(y)});
    out.origin.push_back(a.origin);
    out.partner.push_back(perm[j]);
  }
  return out;
}

MixedBatch identity_sources(const std::vector<Source>& w) {
  MixedBatch out;
  out.lambda = 1.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    out.examples.push_back({*w[j].x, *w[j].y});
    out.origin.push_back(w[j].origin);
    out.partner.push_back(j);
  }
  return out;
}

std::vector<Source> concat_sources(std::span<const LabeledExample> labeled,
                                   std::span<const PseudoLabeledExample> pseudo) {
  std::vector<Source> w;
  w.reserve(labeled.size() + pseudo.size());
  for (const auto& e : labeled) w.push_back({&e.x, &e.y, Origin::labeled_mix});
  for (const auto& e : pseudo) w.push_back({&e.u, &e.y_hat, Origin::unlabeled_mix});
  return w;
}

}  // namespace

MixedBatch make_labeled_batch(std::span<const LabeledExample> labeled, double beta, Rng& rng,
                              std::optional<double> forced_lambda) {
  if (labeled.empty()) throw DataError("make_labeled_batch: empty labeled batch");
  return mix_sources(concat_sources(labeled, {}), beta, rng, forced_lambda);
}

MixedBatch make_unlabeled_batch(std::span<const LabeledExample> labeled,
                                std::span<const PseudoLabeledExample> pseudo, double beta,
                                Rng& rng, std::optional<double> forced_lambda) {
  if (labeled.empty() && pseudo.empty()) {
    throw DataError("make_unlabeled_batch: labeled and pseudo-labeled batches are both empty");
  }
  return mix_sources(concat_sources(labeled, pseudo), beta, rng, forced_lambda);
}

MixedBatch unmixed_labeled_batch(std::span<const LabeledExample> labeled) {
  if (labeled.empty()) throw DataError("unmixed_labeled_batch: empty labeled batch");
  return identity_sources(concat_sources(labeled, {}));
}

MixedBatch unmixed_unlabeled_batch(std::span<const LabeledExample> labeled,
                                   std::span<const PseudoLabeledExample> pseudo) {
  if (labeled.empty() && pseudo.empty()) {
    throw DataError("unmixed_unlabeled_batch: labeled and pseudo-labeled batches are both empty");
  }
  return identity_sources(concat_sources(labeled, pseudo));
}

std::pair<Dataset, Dataset> holdout(const Dataset& data, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw InvalidHyperparameter("holdout fraction must lie in [0, 1)");
  }
  const auto perm = random_permutation(data.size(), rng);
  const auto n_out = static_cast<std::size_t>(std::llround(fraction * data.size()));
  std::vector<bool> out(data.size(), false);
  for (std::size_t i = 0; i < n_out; ++i) out[perm[i]] = true;
  Dataset keep, held;
  for (Dataset* d : {&keep, &held}) {
    d->num_classes = data.num_classes;
    d->image_rows = data.image_rows;
    d->image_cols = data.image_cols;
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    Dataset& d = out[i] ? held : keep;
    d.features.push_back(data.features[i]);
    d.labels.push_back(data.labels[i]);
  }
  return {std::move(keep), std::move(held)};
}

SplitDataset split_dataset(const Dataset& data, std::size_t labels_per_class,
                           double val_fraction, Rng& rng, const Dataset* test) {
  if (data.features.size() != data.labels.size()) {
    throw DataError("split_dataset: feature and label counts differ");
  }
  if (data.num_classes == 0) throw DataError("split_dataset: dataset has no classes");
  const std::size_t k = data.num_classes;

  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw InvalidHyperparameter("split_dataset: val_fraction must lie in [0, 1)");
  }
  const auto perm = random_permutation(data.size(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * data.size()));

  SplitDataset out;
  out.num_classes = k;
  out.image_rows = data.image_rows;
  out.image_cols = data.image_cols;

  enum class Role { unlabeled, labeled, validation };
  std::vector<Role> role(data.size(), Role::unlabeled);
  for (std::size_t i = 0; i < n_val; ++i) role[perm[i]] = Role::validation;

  std::vector<std::size_t> available(k, 0);
  for (std::size_t i = n_val; i < perm.size(); ++i) {
    const int c = data.labels[perm[i]];
    if (c < 0 || static_cast<std::size_t>(c) >= k) {
      throw DataError("split_dataset: label " + std::to_string(c) + " out of range");
    }
    ++available[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (labels_per_class != kAllLabels && available[c] < labels_per_class) {
      throw DataError("split_dataset: class " + std::to_string(c) + " has " +
                      std::to_string(available[c]) + " examples after holding out validation, " +
                      std::to_string(labels_per_class) + " labels per class requested");
    }
  }

  // Continue along the same permutation, so the labeled picks are uniform.
  std::vector<std::size_t> taken(k, 0);
  for (std::size_t i = n_val; i < perm.size(); ++i) {
    const auto c = static_cast<std::size_t>(data.labels[perm[i]]);
    if (taken[c] < labels_per_class) {
      role[perm[i]] = Role::labeled;
      ++taken[c];
    }
  }

  // Labeled examples keep their per-permutation order; other sets keep file order.
  for (std::size_t i = n_val; i < perm.size(); ++i) {
    const std::size_t idx = perm[i];
    if (role[idx] == Role::labeled) {
      out.labeled.push_back(
          {data.features[idx], one_hot(static_cast<std::size_t>(data.labels[idx]), k)});
    }
  }
  for (std::size_t idx = 0; idx < data.size(); ++idx) {
    const auto c = static_cast<std::size_t>(data.labels[idx]);
    if (role[idx] == Role::validation) {
      out.validation.push_back({data.features[idx], one_hot(c, k)});
    } else if (role[idx] == Role::unlabeled) {
      out.unlabeled.push_back(data.features[idx]);
      out.unlabeled_shadow.push_back(data.labels[idx]);
    }
  }
  if (test != nullptr) {
    for (std::size_t i = 0; i < test->size(); ++i) {
      out.test.push_back(
          {test->features[i], one_hot(static_cast<std::size_t>(test->labels[i]), k)});
    }
  }
  return out;
}

Dataset gen_two_moons(std::size_t n, double noise_std, Rng& rng) {
  if (n < 2) throw InvalidHyperparameter("gen_two_moons: need n >= 2");
  if (noise_std < 0.0) throw InvalidHyperparameter("gen_two_moons: noise_std must be >= 0");
  Dataset d;
  d.num_classes = 2;
  const std::size_t n_upper = n / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::numbers::pi * rng.uniform();
    const int label = i < n_upper ? 0 : 1;
    double x, y;
    if (label == 0) {
      x = std::cos(t);
      y = std::sin(t);
    } else {
      x = 1.0 - std::cos(t);
      y = 0.5 - std::sin(t);
    }
    if (noise_std > 0.0) {
      x += noise_std * rng.normal();
      y += noise_std * rng.normal();
    }
    d.features.push_back({x, y});
    d.labels.push_back(label);
  }
  return d;
}

Dataset gen_blobs(std::size_t n, const std::vector<Vec64>& centers, double std_dev,
                  Rng& rng) {
  if (n < 2) throw InvalidHyperparameter("gen_blobs: need n >= 2");
  if (centers.empty()) throw InvalidHyperparameter("gen_blobs: need at least one center");
  if (std_dev < 0.0) throw InvalidHyperparameter("gen_blobs: std must be >= 0");
  Dataset d;
  d.num_classes = centers.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % centers.size();
    Vec64 x = centers[c];
    if (x.size() != centers.front().size()) throw ShapeError("gen_blobs: ragged centers");
    for (double& v : x) v += std_dev * rng.normal();
    d.features.push_back(std::move(x));
    d.labels.push_back(static_cast<int>(c));
  }
  return d;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::io, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off,
                        const std::string& path) {
  if (buf.size() < off + 4) {
    throw IdxError(IdxError::Kind::truncated,
                   "'" + path + "' is truncated inside the header (" +
                       std::to_string(buf.size()) + " bytes)");
  }
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
         (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
}

std::string hex32(std::uint32_t v) {
  char s[11];
  std::snprintf(s, sizeof s, "0x%08X", v);
  return s;
}

void expect_magic(std::uint32_t found, std::uint32_t expected, const std::string& path) {
  if (found != expected) {
    throw IdxError(IdxError::Kind::bad_magic, "'" + path + "': bad IDX magic, expected " +
                                                  hex32(expected) + ", found " + hex32(found));
  }
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);

  expect_magic(read_be32(img, 0, images_path), 0x00000803u, images_path);
  expect_magic(read_be32(lab, 0, labels_path), 0x00000801u, labels_path);

  const std::size_t n_img = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t n_lab = read_be32(lab, 4, labels_path);

  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n_img * pixels) {
    throw IdxError(IdxError::Kind::truncated,
                   "'" + images_path + "' is truncated: header promises " +
                       std::to_string(n_img) + " images of " + std::to_string(rows) + "x" +
                       std::to_string(cols));
  }
  if (lab.size() < 8 + n_lab) {
    throw IdxError(IdxError::Kind::truncated, "'" + labels_path +
                                                  "' is truncated: header promises " +
                                                  std::to_string(n_lab) + " labels");
  }
  if (n_img != n_lab) {
    throw IdxError(IdxError::Kind::count_mismatch,
                   "IDX count mismatch: " + std::to_string(n_img) + " images vs " +
                       std::to_string(n_lab) + " labels");
  }

  Dataset d;
  d.image_rows = rows;
  d.image_cols = cols;
  int max_label = -1;
  for (std::size_t i = 0; i < n_img; ++i) {
    Vec64 x(pixels);
    for (std::size_t p = 0; p < pixels; ++p) x[p] = img[16 + i * pixels + p] / 255.0;
    d.features.push_back(std::move(x));
    const int label = lab[8 + i];
    d.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  d.num_classes = static_cast<std::size_t>(max_label + 1);
  return d;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
  Dataset d;
  std::size_t width = 0;
  int max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        cells.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw DataError("'" + path + "' line " + std::to_string(line_no) +
                        ": not a number: '" + cell + "'");
      }
    }
    if (cells.size() < 2) {
      throw DataError("'" + path + "' line " + std::to_string(line_no) +
                      ": need at least one feature and a label");
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw DataError("'" + path + "' line " + std::to_string(line_no) + ": expected " +
                      std::to_string(width) + " columns");
    }
    const double lv = cells.back();
    if (lv < 0 || lv != std::floor(lv)) {
      throw DataError("'" + path + "' line " + std::to_string(line_no) +
                      ": label must be a non-negative integer");
    }
    cells.pop_back();
    d.features.push_back(std::move(cells));
    d.labels.push_back(static_cast<int>(lv));
    max_label = std::max(max_label, d.labels.back());
  }
  if (d.features.empty()) throw DataError("'" + path + "' has no data rows");
  d.num_classes = static_cast<std::size_t>(max_label + 1);
  return d;
}

Standardizer Standardizer::fit(std::span<const Vec64> rows) {
  Standardizer s;
  if (rows.empty()) return s;
  const std::size_t dim = rows.front().size();
  const double n = static_cast<double>(rows.size());
  s.mean_.assign(dim, 0.0);
  s.std_.assign(dim, 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < dim; ++i) s.mean_[i] += r[i];
  }
  for (double& m : s.mean_) m /= n;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double c = r[i] - s.mean_[i];
      s.std_[i] += c * c;
    }
  }
  for (double& v : s.std_) v = std::sqrt(v / n);
  return s;
}

Vec64 Standardizer::apply(std::span<const double> x) const {
  if (x.size() != mean_.size()) throw ShapeError("Standardizer: dimension mismatch");
  Vec64 out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (std_[i] > 0.0) out[i] = (out[i] - mean_[i]) / std_[i];
  }
  return out;
}

void standardize(SplitDataset& data) {
  std::vector<Vec64> train;
  train.reserve(data.labeled.size() + data.unlabeled.size());
  for (const auto& e : data.labeled) train.push_back(e.x);
  for (const auto& u : data.unlabeled) train.push_back(u);
  if (train.empty()) return;
  const Standardizer s = Standardizer::fit(train);
  for (auto& e : data.labeled) e.x = s.apply(e.x);
  for (auto& u : data.unlabeled) u = s.apply(u);
  for (auto& e : data.validation) e.x = s.apply(e.x);
  for (auto& e : data.test) e.x = s.apply(e.x);
}

Vec64 shift_image(std::span<const double> image, std::size_t rows, std::size_t cols, int dy,
                  int dx) {
  if (image.size() != rows * cols) throw ShapeError("shift_image: size is not rows * cols");
  Vec64 out(image.size(), 0.0);
  const auto r_n = static_cast<long>(rows);
  const auto c_n = static_cast<long>(cols);
  for (long r = 0; r < r_n; ++r) {
    const long sr = r - dy;
    if (sr < 0 || sr >= r_n) continue;
    for (long c = 0; c < c_n; ++c) {
      const long sc = c - dx;
      if (sc < 0 || sc >= c_n) continue;
      out[r * c_n + c] = image[sr * c_n + sc];
    }
  }
  return out;
}

Vec64 random_shift(std::span<const double> image, std::size_t rows, std::size_t cols,
                   Rng& rng) {
  const int dy = static_cast<int>(rng.below(5)) - 2;
  const int dx = static_cast<int>(rng.below(5)) - 2;
  return shift_image(image, rows, cols, dy, dx);
}

}  // namespace metasemi
