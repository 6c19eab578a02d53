#include "fflocal/cli.hpp"

#include "fflocal/audit.hpp"
#include "fflocal/config.hpp"
#include "fflocal/errors.hpp"
#include "fflocal/experiment.hpp"
#include "fflocal/metrics.hpp"
#include "fflocal/trainer.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <iostream>
#include <ostream>

namespace fflocal {

namespace {

std::string opt_str(const std::optional<double>& v) { return v ? fmt::format("{:.4f}", *v) : "na"; }

const ExampleSet& pick_split(const DataSplits& data, const std::string& split) {
  if (split == "train") return data.train;
  if (split == "val") return data.val;
  if (split == "test") return data.test;
  throw ParameterError(fmt::format("unknown split '{}' (expected train|val|test)", split));
}

void print_locality(std::ostream& out, const std::string& label, const LocalityReport& rep) {
  out << fmt::format("{}: {}\n", label, rep.passed() ? "PASS" : "FAIL");
  for (const auto& e : rep.entries) {
    out << fmt::format("  loss block {} -> block {}: max |grad| = {}\n", e.loss_block, e.param_block,
                       e.max_abs_grad);
  }
}

int cmd_train(const std::string& path, OutputPaths overrides, std::ostream& out) {
  RunConfig cfg = load_config(path);
  if (!overrides.metrics.empty()) cfg.output.metrics = overrides.metrics;
  if (!overrides.checkpoint.empty()) cfg.output.checkpoint = overrides.checkpoint;
  if (!overrides.predictions.empty()) cfg.output.predictions = overrides.predictions;

  const DataSplits data = load_dataset(cfg.train.data);
  std::optional<MetricsWriter> writer;
  if (!cfg.output.metrics.empty()) {
    std::filesystem::remove(cfg.output.metrics);
    writer.emplace(cfg.output.metrics);
  }
  const TrainResult res = train(cfg.train, data, [&](const DiagnosticsRecord& r) {
    if (writer) writer->write(r);
    out << fmt::format("epoch {:>3}  train {:.4f}  val {:.4f}\n", r.epoch, r.train_accuracy, r.val_accuracy);
  });
  const Network& net = evaluation_network(res, cfg.train);
  if (!cfg.output.checkpoint.empty()) save_checkpoint(net, cfg.output.checkpoint);
  const PredictionSet test = PredictionSet::from_scores(
      goodness_table(net, data.test.features).prefix(net.depth() - 1), data.test.labels);
  if (!cfg.output.predictions.empty()) write_predictions(test, cfg.output.predictions);
  out << fmt::format("test accuracy {:.4f}\n", test.accuracy());
  return 0;
}

int cmd_verify_theorems(const AuditOptions& opt, std::ostream& out) {
  bool ok = true;
  for (const auto& r : run_theorem_audit(opt)) {
    out << fmt::format("[{}] {}: {}\n", r.passed ? "PASS" : "FAIL", r.name, r.detail);
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

int cmd_verify_locality(const std::string& path, const std::string& checkpoint, std::ostream& out) {
  const RunConfig cfg = load_config(path);
  const DataSplits data = load_dataset(cfg.train.data);
  const std::size_t n = std::min<std::size_t>(data.train.size(), static_cast<std::size_t>(cfg.train.batch_size));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  const ExampleSet batch = data.train.subset(idx);

  std::mt19937_64 rng(cfg.train.seed);
  const Network fresh = init_network(cfg.train.shape(data.train.dim(), data.train.classes), rng);
  const LocalityReport a = locality_audit(fresh, batch.features, batch.labels, cfg.train, cfg.train.seed);
  print_locality(out, "fresh model", a);
  bool ok = a.passed();
  if (!checkpoint.empty()) {
    const Network loaded = load_checkpoint(checkpoint);
    const LocalityReport b = locality_audit(loaded, batch.features, batch.labels, cfg.train, cfg.train.seed);
    print_locality(out, "checkpoint", b);
    ok = ok && b.passed();
  }
  const LocalityReport control =
      locality_audit(fresh, batch.features, batch.labels, cfg.train, cfg.train.seed, /*detach=*/false);
  const bool detected = fresh.depth() < 2 || !control.passed();
  out << fmt::format("un-detached control flagged: {}\n", detected ? "yes" : "NO");
  return ok && detected ? 0 : 1;
}

int cmd_diagnose(const std::string& checkpoint, const std::string& data_cfg, const std::string& split,
                 std::ostream& out) {
  const Network net = load_checkpoint(checkpoint);
  const RunConfig cfg = load_config(data_cfg);
  const DataSplits data = load_dataset(cfg.train.data);
  const ExampleSet& set = pick_split(data, split);
  const Evaluation ev = evaluate(net, set.features, set.labels, cfg.train.gate, cfg.train.loss.beta, cfg.train.seed);

  out << fmt::format("examples {}  blocks {}  accuracy {:.4f}\n", set.size(), net.depth(), ev.full.accuracy());
  out << "block  sep_cur_nl    sep_nl        LC      DS      g_pos     gamma   mean_R     F       own\n";
  for (std::size_t d = 0; d < ev.blocks.size(); ++d) {
    const auto& b = ev.blocks[d];
    out << fmt::format("{:>5}  {:>10.4f}  {:>10.4f}  {:>8.4f}  {:>6}  {:>8.4f}  {:>6.3f}  {:>8.3g}  {:>6.4f}  {:>6}\n", d,
                       b.sep_cur_nl, b.sep_nl, b.loss_collapse, opt_str(b.depth_saturation),
                       b.mean_pos_goodness, b.gamma, b.mean_ratio, b.free_riding, opt_str(b.own_fraction));
  }
  DiagnosticsRecord rec;
  rec.val_accuracy = ev.full.accuracy();
  rec.blocks = ev.blocks;
  out << "record: " << format_metrics_line(rec) << '\n';
  return 0;
}

int cmd_bootstrap(const std::string& a, const std::string& b, std::size_t resamples, std::uint64_t seed,
                  std::ostream& out) {
  const BootstrapReport r = paired_bootstrap(read_predictions(a), read_predictions(b), resamples, seed);
  out << fmt::format("examples {}  resamples {}\n", r.examples, r.resamples);
  out << fmt::format("delta_acc (A - B) {:.6f}  95% CI [{:.6f}, {:.6f}]\n", r.mean_delta, r.ci_low, r.ci_high);
  out << fmt::format("disagreement {:.6f}  A-correct/B-wrong {}  A-wrong/B-correct {}\n", r.disagreement,
                     r.a_correct_b_wrong, r.a_wrong_b_correct);
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& data_cfg, const std::string& split,
                const std::string& dest, std::ostream& out) {
  const Network net = load_checkpoint(checkpoint);
  const RunConfig cfg = load_config(data_cfg);
  const DataSplits data = load_dataset(cfg.train.data);
  const ExampleSet& set = pick_split(data, split);
  const PredictionSet p = PredictionSet::from_scores(goodness_table(net, set.features).prefix(net.depth() - 1), set.labels);
  if (dest.empty() || dest == "-") {
    write_predictions(p, out);
  } else {
    write_predictions(p, dest);
    out << fmt::format("wrote {} predictions (accuracy {:.4f}) to {}\n", p.size(), p.accuracy(), dest);
  }
  return 0;
}

int cmd_compare_gamma(const std::string& path, const std::vector<double>& gammas,
                      const std::vector<std::uint64_t>& seeds, std::ostream& out) {
  const RunConfig cfg = load_config(path);
  const GammaComparison cmp = compare_gamma(cfg.train, gammas, seeds);
  out << format_comparison(cmp);
  return cmp.verdict.passed() ? 0 : 1;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Block-local Forward-Forward training and verification"};
  app.require_subcommand(1);

  std::string config, checkpoint, data_cfg, split = "test", pred_a, pred_b, dest;
  OutputPaths overrides;
  AuditOptions audit;
  std::size_t resamples = 5000;
  std::uint64_t seed = 1;
  std::vector<double> gammas = {0.0, 0.7, 1.0};
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  auto* train = app.add_subcommand("train", "Train a network from a config file");
  train->add_option("config", config, "Config file")->required();
  train->add_option("--metrics", overrides.metrics, "Metrics output (overrides [output] metrics)");
  train->add_option("--checkpoint", overrides.checkpoint, "Checkpoint output");
  train->add_option("--predictions", overrides.predictions, "Test-split prediction file");

  auto* theorems = app.add_subcommand("verify-theorems", "Run the closed-form audit");
  theorems->add_option("--draws", audit.draws, "Random draws per scalar check");
  theorems->add_option("--seed", audit.seed, "Audit seed");

  auto* locality = app.add_subcommand("verify-locality", "Audit gradient locality");
  locality->add_option("config", config, "Config file")->required();
  locality->add_option("--checkpoint", checkpoint, "Also audit this checkpoint");

  auto* diagnose = app.add_subcommand("diagnose", "Block-health diagnostics of a checkpoint");
  diagnose->add_option("checkpoint", checkpoint)->required();
  diagnose->add_option("data", data_cfg, "Config file whose [data] section selects the dataset")->required();
  diagnose->add_option("--split", split, "train|val|test");

  auto* boot = app.add_subcommand("bootstrap", "Paired bootstrap of two prediction files");
  boot->add_option("pred_a", pred_a)->required();
  boot->add_option("pred_b", pred_b)->required();
  boot->add_option("--resamples", resamples);
  boot->add_option("--seed", seed);

  auto* predict = app.add_subcommand("predict", "Write the prediction set of a checkpoint");
  predict->add_option("checkpoint", checkpoint)->required();
  predict->add_option("data", data_cfg)->required();
  predict->add_option("--split", split, "train|val|test");
  predict->add_option("-o,--output", dest, "Destination file (default stdout)");

  auto* compare = app.add_subcommand("compare-gamma", "Train each gamma over several seeds and compare");
  compare->add_option("config", config)->required();
  compare->add_option("--gammas", gammas)->delimiter(',');
  compare->add_option("--seeds", seeds)->delimiter(',');

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*train) return cmd_train(config, overrides, out);
    if (*theorems) return cmd_verify_theorems(audit, out);
    if (*locality) return cmd_verify_locality(config, checkpoint, out);
    if (*diagnose) return cmd_diagnose(checkpoint, data_cfg, split, out);
    if (*boot) return cmd_bootstrap(pred_a, pred_b, resamples, seed, out);
    if (*predict) return cmd_predict(checkpoint, data_cfg, split, dest, out);
    if (*compare) return cmd_compare_gamma(config, gammas, seeds, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

int run_command(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_command(args, std::cout, std::cerr);
}

}  // namespace fflocal
