#include "fflocal/cli.hpp"
#include "fflocal/metrics.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace fflocal;

namespace {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fflocal");
  std::ostringstream out, err;
  CliRun r;
  r.code = run_command(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string write_config(const test::TempDir& dir, int epochs) {
  const std::string path = dir.file("run.ini");
  std::ofstream(path) << "[model]\ndepth = 2\nhidden_dim = 8\noutput_dim = 4\n"
                      << "[train]\nepochs = " << epochs << "\nbatch_size = 16\nlearning_rate = 0.01\n"
                      << "[data]\nkind = blobs\nclasses = 3\ndim = 6\nper_class = 20\n";
  return path;
}

}  // namespace

TEST(Cli, VerifyTheoremsPasses) {
  CliRun r = cli({"verify-theorems", "--draws", "20000"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(r.out.find("[FAIL]"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("[PASS]"), std::string::npos);
}

TEST(Cli, TrainOneEpochWritesOneMetricsLine) {
  test::TempDir dir;
  const std::string cfg = write_config(dir, 1);
  CliRun r = cli({"train", cfg, "--metrics", dir.file("m.txt"), "--checkpoint", dir.file("net.ckpt"), "--predictions",
               dir.file("pred.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream is(dir.file("m.txt"));
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  EXPECT_EQ(lines, 1);
  EXPECT_EQ(read_metrics(dir.file("m.txt")).front().epoch, 1);

  // A second run replaces the metrics file rather than appending.
  ASSERT_EQ(cli({"train", cfg, "--metrics", dir.file("m.txt")}).code, 0);
  EXPECT_EQ(read_metrics(dir.file("m.txt")).size(), 1u);

  CliRun d = cli({"diagnose", dir.file("net.ckpt"), cfg, "--split", "val"});
  EXPECT_EQ(d.code, 0) << d.err;
  EXPECT_NE(d.out.find("record: epoch="), std::string::npos);

  CliRun p = cli({"predict", dir.file("net.ckpt"), cfg, "-o", dir.file("again.txt")});
  EXPECT_EQ(p.code, 0) << p.err;
  EXPECT_TRUE(read_predictions(dir.file("again.txt")) == read_predictions(dir.file("pred.txt")));

  CliRun l = cli({"verify-locality", cfg, "--checkpoint", dir.file("net.ckpt")});
  EXPECT_EQ(l.code, 0) << l.out << l.err;
  EXPECT_NE(l.out.find("un-detached control flagged: yes"), std::string::npos);
}

TEST(Cli, BootstrapIdenticalFiles) {
  test::TempDir dir;
  std::mt19937_64 rng(1);
  PredictionSet p = PredictionSet::from_scores(test::random_matrix(40, 3, rng), std::vector<int>(40, 0));
  write_predictions(p, dir.file("a.txt"));
  CliRun r = cli({"bootstrap", dir.file("a.txt"), dir.file("a.txt"), "--resamples", "1000"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("CI [0.000000, 0.000000]"), std::string::npos) << r.out;
}

TEST(Cli, ErrorsAndUsage) {
  EXPECT_NE(cli({}).code, 0);
  EXPECT_NE(cli({"no-such-command"}).code, 0);
  CliRun missing = cli({"train", "/nonexistent/cfg.ini"});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("error:"), std::string::npos);
  EXPECT_EQ(cli({"--help"}).code, 0);
}
