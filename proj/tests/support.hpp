#pragma once

#include "fflocal/model.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

namespace fflocal::test {

// Reference scalars in long double, written out independently of the library.
inline long double ref_softplus(long double u) {
  return u > 0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
}
inline long double ref_sigmoid(long double u) { return 1.0L / (1.0L + std::exp(-u)); }
inline long double ref_barrier(long double u, long double beta) { return ref_softplus(-beta * u); }

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

inline BlockParams random_block(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Eigen::Index classes,
                                std::mt19937_64& rng) {
  BlockParams b;
  b.w1 = random_matrix(in, hidden, rng, 0.8);
  b.b1 = random_vector(hidden, rng, 0.3);
  b.w2 = random_matrix(hidden, out, rng, 0.8);
  b.b2 = random_vector(out, rng, 0.3);
  b.label_embed = random_matrix(classes, in, rng, 0.5);
  b.goodness_scale = 0.5;
  return b;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("fflocal_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace fflocal::test
