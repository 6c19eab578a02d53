#pragma once

#include "fflocal/numerics.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fflocal {

/// A labelled batch of flattened examples, one per row.
struct ExampleSet {
  Matrix features;
  std::vector<int> labels;
  int classes = 0;
  int image_rows = 0;  // 0 unless the examples are images
  int image_cols = 0;

  std::size_t size() const noexcept { return labels.size(); }
  Eigen::Index dim() const noexcept { return features.cols(); }
  ExampleSet subset(std::span<const std::size_t> indices) const;
  void validate() const;
};

enum class DatasetKind { Blobs, Idx };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Blobs;
  // blobs
  int classes = 4;
  int dim = 32;
  int per_class = 250;
  double radius = 5.0;
  double noise = 1.0;
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;
  std::uint64_t seed = 7;
  // idx: the training files are split into train/val by val_frac, the test
  // files give the test split. Pixels go to [0,1], then (x - mean) / std.
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  double pixel_mean = 0.0;
  double pixel_std = 1.0;

  void validate() const;
  bool operator==(const DatasetSpec&) const = default;
};

struct DataSplits {
  ExampleSet train;
  ExampleSet val;
  ExampleSet test;
};

/// Gaussian class clusters with means placed uniformly on a sphere of the
/// given radius. Deterministic for a given engine state.
DataSplits make_blobs(const DatasetSpec& spec, std::mt19937_64& rng);

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled to [0,1]. `classes` defaults to max label + 1.
ExampleSet load_idx(std::istream& images, std::istream& labels, int classes = 0);
ExampleSet load_idx(const std::string& image_path, const std::string& label_path, int classes = 0);

/// Builds the three splits for either dataset kind. Blob generation uses
/// spec.seed.
DataSplits load_dataset(const DatasetSpec& spec);

/// Accuracy of assigning each example to the nearest of `means` (rows).
double nearest_mean_accuracy(const ExampleSet& set, const Matrix& means);

/// Per-class mean of the features.
Matrix class_means(const ExampleSet& set);

/// Randomly translates each image by up to `max_shift` pixels (zero fill).
/// No-op for non-image sets.
Matrix jitter_images(const ExampleSet& set, const Matrix& features, int max_shift,
                     std::mt19937_64& rng);

}  // namespace fflocal
