#include "fflocal/config.hpp"
#include "fflocal/dataset.hpp"
#include "fflocal/errors.hpp"
#include "fflocal/metrics.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fflocal;

namespace {

std::string be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 8) & 0xff),
          static_cast<char>(v & 0xff)};
}

std::string idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t r, std::uint32_t c, const std::string& px) {
  return be32(magic) + be32(n) + be32(r) + be32(c) + px;
}

std::string idx_labels(std::uint32_t magic, std::uint32_t n, const std::string& lab) { return be32(magic) + be32(n) + lab; }

DiagnosticsRecord sample_record() {
  DiagnosticsRecord r;
  r.epoch = 7;
  r.train_accuracy = 0.91234567890123;
  r.val_accuracy = 1.0 / 3.0;
  for (int d = 0; d < 3; ++d) {
    BlockDiagnostics b;
    b.sep_cur_nl = 0.1 * d - 0.05;
    b.sep_nl = 1e-17 * d;
    b.loss_collapse = 0.6931471805599453;
    b.depth_saturation = d == 1 ? std::nullopt : std::optional<double>(0.5 + d);
    b.mean_pos_goodness = -2.5e-3;
    b.mean_ratio = 7.2e-3;
    b.free_riding = 0.25;
    b.own_fraction = d == 2 ? std::nullopt : std::optional<double>(1.0 / 7.0);
    b.gamma = 0.7;
    r.blocks.push_back(b);
  }
  return r;
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  RunConfig c = parse_config_string(
      "# comment\n[model]\ndepth = 3\n\n[objective]\ngamma = 0.25\ngate = prev\nkappa = 2\n"
      "[mining]\nscore = current\n[train]\nbatch_size = 32\n[data]\nkind = blobs\nclasses = 5\n"
      "[output]\nmetrics = m.txt\n");
  EXPECT_EQ(c.train.depth, 3u);
  EXPECT_EQ(c.train.gate.gamma0, 0.25);
  EXPECT_EQ(c.train.gate.mode, GateMode::Previous);
  EXPECT_EQ(c.train.gate.kappa, 2.0);
  EXPECT_EQ(c.train.mining_score, MiningScore::CurrentBlock);
  EXPECT_EQ(c.train.batch_size, 32);
  EXPECT_EQ(c.train.data.classes, 5);
  EXPECT_EQ(c.output.metrics, "m.txt");
  EXPECT_EQ(c.train.hidden_dim, TrainConfig{}.hidden_dim);
}

TEST(Config, RoundTripIsExact) {
  RunConfig c;
  c.train.gate.gamma0 = 0.1;
  c.train.gate.kappa = 1.0 / 3.0;
  c.train.loss.beta = 3.7;
  c.train.learning_rate = 2.5e-4;
  c.train.mgc = true;
  c.train.seed = 123456789012345ULL;
  c.train.data.noise = 0.123456789;
  c.output.checkpoint = "out/net.ckpt";
  EXPECT_TRUE(parse_config_string(serialize_config(c)) == c);
}

TEST(Config, RejectsUnknownAndInvalid) {
  EXPECT_THROW(parse_config_string("[model]\ndepht = 3\n"), FormatError);
  EXPECT_THROW(parse_config_string("[extras]\nx = 1\n"), FormatError);
  EXPECT_THROW(parse_config_string("[model]\ndepth = three\n"), FormatError);
  EXPECT_THROW(parse_config_string("[train]\nbatch_size = 1\n"), ParameterError);
  EXPECT_THROW(load_config("/nonexistent/cfg.ini"), IoError);
}

TEST(Metrics, LineRoundTrip) {
  const DiagnosticsRecord r = sample_record();
  const std::string line = format_metrics_line(r);
  EXPECT_EQ(line.rfind("epoch=7 train_acc=", 0), 0u) << line;
  EXPECT_NE(line.find("na"), std::string::npos);
  EXPECT_TRUE(parse_metrics_line(line) == r);
  EXPECT_THROW(parse_metrics_line("epoch=1 garbage"), FormatError);
}

TEST(Metrics, IgnoresTrailingPartialLine) {
  const std::string line = format_metrics_line(sample_record());
  std::istringstream is(line + "\n" + line + "\n" + line.substr(0, 20));
  EXPECT_EQ(read_metrics(is).size(), 2u);
}

TEST(Metrics, WriterAppends) {
  test::TempDir dir;
  const std::string path = dir.file("metrics.txt");
  {
    MetricsWriter w(path);
    w.write(sample_record());
  }
  {
    MetricsWriter w(path);
    w.write(sample_record());
  }
  EXPECT_EQ(read_metrics(path).size(), 2u);
}

TEST(Predictions, FileRoundTrip) {
  std::mt19937_64 rng(1);
  PredictionSet p = PredictionSet::from_scores(test::random_matrix(25, 4, rng), std::vector<int>(25, 2));
  test::TempDir dir;
  write_predictions(p, dir.file("p.txt"));
  EXPECT_TRUE(read_predictions(dir.file("p.txt")) == p);
}

TEST(Predictions, RejectsInconsistentLines) {
  std::istringstream bad_argmax("0.1 0.9 0 1\n");
  EXPECT_THROW(read_predictions(bad_argmax), FormatError);
  std::istringstream ragged("0.1 0.9 1 1\n0.5 0.1 0.2 0 0\n");
  EXPECT_THROW(read_predictions(ragged), FormatError);
  std::istringstream label("0.1 0.9 1 5\n");
  EXPECT_THROW(read_predictions(label), FormatError);
}

TEST(Idx, HandCraftedFixture) {
  std::istringstream img(idx_images(0x803, 1, 2, 2, std::string("\x00\x33\xff\x66", 4)));
  std::istringstream lab(idx_labels(0x801, 1, std::string("\x07", 1)));
  ExampleSet s = load_idx(img, lab);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.image_rows, 2);
  EXPECT_EQ(s.image_cols, 2);
  EXPECT_EQ(s.classes, 8);
  EXPECT_EQ(s.labels[0], 7);
  EXPECT_EQ(s.features(0, 0), 0.0);
  EXPECT_EQ(s.features(0, 1), 51.0 / 255.0);
  EXPECT_EQ(s.features(0, 2), 1.0);
  EXPECT_EQ(s.features(0, 3), 102.0 / 255.0);
}

TEST(Idx, DistinctErrors) {
  const std::string px(4, '\x10');
  {
    std::istringstream img(idx_images(0x801, 1, 2, 2, px)), lab(idx_labels(0x801, 1, "\x01"));
    EXPECT_THROW(load_idx(img, lab), IdxMagicError);
  }
  {
    std::istringstream img(idx_images(0x803, 1, 2, 2, px)), lab(idx_labels(0x803, 1, "\x01"));
    EXPECT_THROW(load_idx(img, lab), IdxMagicError);
  }
  {
    std::istringstream img(idx_images(0x803, 2, 2, 2, px)), lab(idx_labels(0x801, 2, "\x01\x02"));
    EXPECT_THROW(load_idx(img, lab), IdxTruncatedError);
  }
  {
    std::istringstream img(idx_images(0x803, 1, 2, 2, px)), lab(idx_labels(0x801, 2, "\x01\x02"));
    EXPECT_THROW(load_idx(img, lab), IdxCountMismatchError);
  }
  {
    std::istringstream img(be32(0x803) + be32(1)), lab(idx_labels(0x801, 1, "\x01"));
    EXPECT_THROW(load_idx(img, lab), IdxTruncatedError);
  }
  EXPECT_THROW(load_idx("/nonexistent/a", "/nonexistent/b"), IoError);
}

TEST(Idx, OfficialTestFile) {
  const char* dir = std::getenv("FFLOCAL_MNIST_DIR");
  if (dir == nullptr) GTEST_SKIP() << "set FFLOCAL_MNIST_DIR to the directory holding t10k-*-ubyte";
  const std::filesystem::path base(dir);
  ExampleSet s = load_idx((base / "t10k-images-idx3-ubyte").string(), (base / "t10k-labels-idx1-ubyte").string());
  EXPECT_EQ(s.size(), 10000u);
  EXPECT_EQ(s.labels[0], 7);
  EXPECT_EQ(s.dim(), 784);
}

TEST(Blobs, DeterministicAndDisjoint) {
  DatasetSpec spec;
  std::mt19937_64 a(3), b(3);
  DataSplits x = make_blobs(spec, a), y = make_blobs(spec, b);
  EXPECT_TRUE(x.train.features == y.train.features);
  EXPECT_EQ(x.test.labels, y.test.labels);
  EXPECT_EQ(x.train.size() + x.val.size() + x.test.size(), 1000u);
  EXPECT_EQ(x.test.size(), 200u);
  spec.train_frac = 0.9;
  EXPECT_THROW(spec.validate(), ParameterError);
}

TEST(Blobs, NoiselessIsNearestMeanSeparable) {
  DatasetSpec spec;
  spec.noise = 0.0;
  std::mt19937_64 rng(4);
  DataSplits s = make_blobs(spec, rng);
  EXPECT_EQ(nearest_mean_accuracy(s.train, class_means(s.train)), 1.0);
}

TEST(Blobs, QuadraticDiscriminantOracle) {
  DatasetSpec spec;  // C = 4, dim 32, radius 5, noise 1
  std::mt19937_64 rng(5);
  DataSplits s = make_blobs(spec, rng);
  const int C = spec.classes, D = spec.dim;

  // QDA fitted on the training split, evaluated on the test split.
  std::vector<Eigen::VectorXd> mu(C, Eigen::VectorXd::Zero(D));
  std::vector<Eigen::MatrixXd> cov(C, Eigen::MatrixXd::Zero(D, D));
  std::vector<int> cnt(C, 0);
  for (std::size_t i = 0; i < s.train.size(); ++i) {
    mu[s.train.labels[i]] += s.train.features.row(static_cast<Eigen::Index>(i)).transpose();
    ++cnt[s.train.labels[i]];
  }
  for (int c = 0; c < C; ++c) mu[c] /= cnt[c];
  for (std::size_t i = 0; i < s.train.size(); ++i) {
    const int c = s.train.labels[i];
    const Eigen::VectorXd d = s.train.features.row(static_cast<Eigen::Index>(i)).transpose() - mu[c];
    cov[c] += d * d.transpose();
  }
  std::vector<Eigen::LDLT<Eigen::MatrixXd>> inv;
  std::vector<double> logdet;
  for (int c = 0; c < C; ++c) {
    cov[c] = cov[c] / (cnt[c] - 1) + 1e-3 * Eigen::MatrixXd::Identity(D, D);
    inv.emplace_back(cov[c]);
    logdet.push_back(inv.back().vectorD().array().log().sum());
  }
  int ok = 0;
  for (std::size_t i = 0; i < s.test.size(); ++i) {
    const Eigen::VectorXd x = s.test.features.row(static_cast<Eigen::Index>(i)).transpose();
    int best = 0;
    double best_score = -1e300;
    for (int c = 0; c < C; ++c) {
      const Eigen::VectorXd d = x - mu[c];
      const double score = -0.5 * logdet[c] - 0.5 * d.dot(inv[c].solve(d));
      if (score > best_score) best_score = score, best = c;
    }
    ok += best == s.test.labels[i];
  }
  const double qda = static_cast<double>(ok) / static_cast<double>(s.test.size());

  // Bayes reference: isotropic Gaussians around the fitted means, Monte Carlo.
  std::mt19937_64 mc(6);
  std::normal_distribution<double> n(0.0, spec.noise);
  int hit = 0;
  const int draws = 40000;
  for (int t = 0; t < draws; ++t) {
    const int c = t % C;
    Eigen::VectorXd x = mu[c];
    for (int k = 0; k < D; ++k) x[k] += n(mc);
    int best = 0;
    for (int j = 1; j < C; ++j)
      if ((x - mu[j]).squaredNorm() < (x - mu[best]).squaredNorm()) best = j;
    hit += best == c;
  }
  const double bayes = static_cast<double>(hit) / draws;
  EXPECT_NEAR(qda, bayes, 0.02);

  for (int c = 0; c < C; ++c) EXPECT_NEAR(mu[c].norm(), spec.radius, 1.0);
}

TEST(DatasetLoading, IdxSplitsFromFiles) {
  test::TempDir dir;
  std::string px;
  std::string lab;
  for (int i = 0; i < 10; ++i) {
    px += std::string(4, static_cast<char>(i * 20));
    lab += static_cast<char>(i % 2);
  }
  std::ofstream(dir.file("img"), std::ios::binary) << idx_images(0x803, 10, 2, 2, px);
  std::ofstream(dir.file("lab"), std::ios::binary) << idx_labels(0x801, 10, lab);
  DatasetSpec spec;
  spec.kind = DatasetKind::Idx;
  spec.train_images = spec.test_images = dir.file("img");
  spec.train_labels = spec.test_labels = dir.file("lab");
  spec.val_frac = 0.2;
  spec.pixel_mean = 0.5;
  spec.pixel_std = 0.25;
  DataSplits s = load_dataset(spec);
  EXPECT_EQ(s.train.size() + s.val.size(), 10u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 10u);
  EXPECT_NEAR(s.test.features(0, 0), (0.0 - 0.5) / 0.25, 1e-15);
}
