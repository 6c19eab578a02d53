#include "fflocal/dataset.hpp"

#include "fflocal/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>

namespace fflocal {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& is, const char* what) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw IdxTruncatedError(fmt::format("IDX {}: truncated header", what));
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

std::vector<unsigned char> read_payload(std::istream& is, std::size_t n, const char* what) {
  std::vector<unsigned char> buf(n);
  if (n > 0 && !is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n))) {
    throw IdxTruncatedError(fmt::format("IDX {}: payload truncated (expected {} bytes, got {})",
                                        what, n, is.gcount()));
  }
  return buf;
}

}  // namespace

ExampleSet ExampleSet::subset(std::span<const std::size_t> indices) const {
  ExampleSet out;
  out.classes = classes;
  out.image_rows = image_rows;
  out.image_cols = image_cols;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out.features.row(static_cast<Eigen::Index>(k)) =
        features.row(static_cast<Eigen::Index>(indices[k]));
    out.labels.push_back(labels[indices[k]]);
  }
  return out;
}

void ExampleSet::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw DimensionError(fmt::format("ExampleSet: {} rows but {} labels", features.rows(), labels.size()));
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw DomainError(fmt::format("ExampleSet: label {} outside [0, {})", y, classes));
    }
  }
}

void DatasetSpec::validate() const {
  if (kind == DatasetKind::Blobs) {
    if (classes < 2) throw ParameterError(fmt::format("blobs: need >= 2 classes, got {}", classes));
    if (dim < 1 || per_class < 1) throw ParameterError("blobs: dim and per_class must be >= 1");
    if (radius < 0.0 || noise < 0.0) throw ParameterError("blobs: radius and noise must be >= 0");
    if (train_frac < 0.0 || val_frac < 0.0 || test_frac < 0.0 ||
        std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
      throw ParameterError("blobs: split fractions must be non-negative and sum to 1");
    }
  } else {
    if (train_images.empty() || train_labels.empty() || test_images.empty() || test_labels.empty()) {
      throw ParameterError("idx: image and label paths are required");
    }
    if (val_frac < 0.0 || val_frac >= 1.0) throw ParameterError("idx: val_frac must lie in [0,1)");
    if (!(pixel_std > 0.0)) throw ParameterError("idx: pixel_std must be > 0");
  }
}

DataSplits make_blobs(const DatasetSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  if (spec.kind != DatasetKind::Blobs) throw ParameterError("make_blobs: spec is not a blobs spec");
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix means(spec.classes, spec.dim);
  for (int c = 0; c < spec.classes; ++c) {
    Vector dir(spec.dim);
    double norm = 0.0;
    do {
      for (int k = 0; k < spec.dim; ++k) dir[k] = normal(rng);
      norm = dir.norm();
    } while (norm == 0.0);
    means.row(c) = spec.radius * dir.transpose() / norm;
  }

  const std::size_t n = static_cast<std::size_t>(spec.classes) * static_cast<std::size_t>(spec.per_class);
  ExampleSet all;
  all.classes = spec.classes;
  all.features.resize(static_cast<Eigen::Index>(n), spec.dim);
  all.labels.resize(n);
  std::size_t row = 0;
  for (int c = 0; c < spec.classes; ++c) {
    for (int k = 0; k < spec.per_class; ++k, ++row) {
      for (int j = 0; j < spec.dim; ++j) {
        all.features(static_cast<Eigen::Index>(row), j) = means(c, j) + spec.noise * normal(rng);
      }
      all.labels[row] = c;
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_frac * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(std::llround(spec.val_frac * static_cast<double>(n))));
  const std::span<const std::size_t> idx(order);
  DataSplits out;
  out.train = all.subset(idx.subspan(0, n_train));
  out.val = all.subset(idx.subspan(n_train, n_val));
  out.test = all.subset(idx.subspan(n_train + n_val));
  return out;
}

ExampleSet load_idx(std::istream& images, std::istream& labels, int classes) {
  const std::uint32_t img_magic = read_be32(images, "images");
  if (img_magic != kIdxImageMagic) {
    throw IdxMagicError(fmt::format("IDX images: bad magic 0x{:08x} (expected 0x{:08x})", img_magic,
                                    kIdxImageMagic));
  }
  const std::uint32_t count = read_be32(images, "images");
  const std::uint32_t rows = read_be32(images, "images");
  const std::uint32_t cols = read_be32(images, "images");

  const std::uint32_t lbl_magic = read_be32(labels, "labels");
  if (lbl_magic != kIdxLabelMagic) {
    throw IdxMagicError(fmt::format("IDX labels: bad magic 0x{:08x} (expected 0x{:08x})", lbl_magic,
                                    kIdxLabelMagic));
  }
  const std::uint32_t label_count = read_be32(labels, "labels");
  if (label_count != count) {
    throw IdxCountMismatchError(
        fmt::format("IDX: {} images but {} labels", count, label_count));
  }

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  const auto img = read_payload(images, static_cast<std::size_t>(count) * pixels, "images");
  const auto lbl = read_payload(labels, count, "labels");

  ExampleSet set;
  set.image_rows = static_cast<int>(rows);
  set.image_cols = static_cast<int>(cols);
  set.features.resize(count, static_cast<Eigen::Index>(pixels));
  set.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t p = 0; p < pixels; ++p) {
      set.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) =
          static_cast<double>(img[i * pixels + p]) / 255.0;
    }
    set.labels[i] = lbl[i];
  }
  const int max_label = set.labels.empty() ? 0 : *std::max_element(set.labels.begin(), set.labels.end());
  set.classes = classes > 0 ? classes : max_label + 1;
  set.validate();
  return set;
}

ExampleSet load_idx(const std::string& image_path, const std::string& label_path, int classes) {
  std::ifstream images(image_path, std::ios::binary);
  if (!images) throw IoError(fmt::format("cannot open IDX image file '{}'", image_path));
  std::ifstream labels(label_path, std::ios::binary);
  if (!labels) throw IoError(fmt::format("cannot open IDX label file '{}'", label_path));
  return load_idx(images, labels, classes);
}

DataSplits load_dataset(const DatasetSpec& spec) {
  spec.validate();
  if (spec.kind == DatasetKind::Blobs) {
    std::mt19937_64 rng(spec.seed);
    return make_blobs(spec, rng);
  }
  ExampleSet train = load_idx(spec.train_images, spec.train_labels);
  ExampleSet test = load_idx(spec.test_images, spec.test_labels);
  train.classes = test.classes = std::max(train.classes, test.classes);
  for (ExampleSet* s : {&train, &test}) {
    s->features = ((s->features.array() - spec.pixel_mean) / spec.pixel_std).matrix();
  }
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val_frac * static_cast<double>(train.size())));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::span<const std::size_t> idx(order);
  DataSplits out;
  out.val = train.subset(idx.subspan(train.size() - n_val));
  out.train = train.subset(idx.subspan(0, train.size() - n_val));
  out.test = std::move(test);
  return out;
}

Matrix class_means(const ExampleSet& set) {
  Matrix means = Matrix::Zero(set.classes, set.dim());
  std::vector<double> counts(static_cast<std::size_t>(set.classes), 0.0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    means.row(set.labels[i]) += set.features.row(static_cast<Eigen::Index>(i));
    counts[static_cast<std::size_t>(set.labels[i])] += 1.0;
  }
  for (int c = 0; c < set.classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) means.row(c) /= counts[static_cast<std::size_t>(c)];
  }
  return means;
}

double nearest_mean_accuracy(const ExampleSet& set, const Matrix& means) {
  if (set.size() == 0) throw DomainError("nearest_mean_accuracy: empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < means.rows(); ++c) {
      const double d = (set.features.row(static_cast<Eigen::Index>(i)) - means.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (best == set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

Matrix jitter_images(const ExampleSet& set, const Matrix& features, int max_shift,
                     std::mt19937_64& rng) {
  if (set.image_rows == 0 || set.image_cols == 0 || max_shift <= 0) return features;
  const int H = set.image_rows;
  const int W = set.image_cols;
  std::uniform_int_distribution<int> shift(-max_shift, max_shift);
  Matrix out = Matrix::Zero(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const int dy = shift(rng);
    const int dx = shift(rng);
    for (int r = 0; r < H; ++r) {
      const int sr = r - dy;
      if (sr < 0 || sr >= H) continue;
      for (int c = 0; c < W; ++c) {
        const int sc = c - dx;
        if (sc < 0 || sc >= W) continue;
        out(i, r * W + c) = features(i, sr * W + sc);
      }
    }
  }
  return out;
}

}  // namespace fflocal
