#include "fflocal/dataset.hpp"
#include "fflocal/diagnostics.hpp"
#include "fflocal/goodness.hpp"
#include "fflocal/model.hpp"
#include "fflocal/trainer.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace fflocal;

namespace {

Matrix noise(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
  return m;
}

NetworkShape shape_for(Eigen::Index hidden) {
  NetworkShape s;
  s.input_dim = 784;
  s.hidden_dim = hidden;
  s.output_dim = hidden / 2;
  s.classes = 10;
  s.depth = 4;
  return s;
}

void BM_BlockForward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const Network net = init_network(shape_for(state.range(0)), rng);
  const Matrix x = noise(64, 784, rng);
  std::vector<int> y(64, 3);
  for (auto _ : state) benchmark::DoNotOptimize(block_forward(net.blocks[0], x, y));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_BlockForward)->Arg(64)->Arg(256);

void BM_BlockGradients(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const Network net = init_network(shape_for(state.range(0)), rng);
  std::vector<StreamBatch> streams(2);
  for (auto& s : streams) {
    s.tokens = noise(64, 784, rng);
    s.labels.assign(64, 1);
  }
  const GoodnessLoss loss = [](std::span<const Vector> g, std::vector<Vector>& dg) {
    double total = 0.0;
    dg.assign(2, Vector::Zero(g[0].size()));
    for (Eigen::Index i = 0; i < g[0].size(); ++i) {
      const double m = g[0][i] - g[1][i];
      total += barrier(m, 4.0);
      dg[0][i] = barrier_deriv(m, 4.0) / static_cast<double>(g[0].size());
      dg[1][i] = -dg[0][i];
    }
    return total / static_cast<double>(g[0].size());
  };
  for (auto _ : state) benchmark::DoNotOptimize(block_gradients(net.blocks[0], streams, loss));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_BlockGradients)->Arg(64)->Arg(256);

void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.data.dim = 32;
  cfg.data.classes = 10;
  cfg.data.per_class = 40;
  cfg.batch_size = 64;
  std::mt19937_64 rng(3);
  const DataSplits data = make_blobs(cfg.data, rng);
  TrainState ts = TrainState::create(cfg, data.train.dim(), data.train.classes, rng);
  const Matrix x = data.train.features.topRows(64);
  const std::vector<int> y(data.train.labels.begin(), data.train.labels.begin() + 64);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(ts, x, y, cfg, 1, rng));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_TrainStep);

void BM_PairedBootstrap(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const auto n = static_cast<Eigen::Index>(state.range(0));
  std::vector<int> truth(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) truth[static_cast<std::size_t>(i)] = static_cast<int>(i % 10);
  const PredictionSet a = PredictionSet::from_scores(noise(n, 10, rng), truth);
  const PredictionSet b = PredictionSet::from_scores(noise(n, 10, rng), truth);
  for (auto _ : state) benchmark::DoNotOptimize(paired_bootstrap(a, b, 1000, 9));
}
BENCHMARK(BM_PairedBootstrap)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
