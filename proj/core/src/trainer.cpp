#include "fflocal/trainer.hpp"

#include "fflocal/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fflocal {

namespace {

// Tokens entering block d plus the detached goodness summaries of blocks < d.
struct Prefix {
  Matrix tokens;
  Vector prior;       // sum_{j<d} g^(j)
  Vector prev_mixed;  // g^(d-1) + gamma_{d-1} sum_{j<d-1} g^(j)
  Vector prev;        // g^(d-1)
};

Prefix prefix_pass(const Network& net, const Matrix& images, std::span<const int> labels,
                   std::size_t d, std::span<const double> gammas) {
  const Eigen::Index n = images.rows();
  Prefix p;
  p.tokens = images;
  p.prior = Vector::Zero(n);
  p.prev_mixed = Vector::Zero(n);
  p.prev = Vector::Zero(n);
  for (std::size_t j = 0; j < d; ++j) {
    BlockForward f = block_forward(net.blocks[j], p.tokens, labels);
    p.prev_mixed = f.goodness + gammas[j] * p.prior;
    p.prior += f.goodness;
    p.prev = f.goodness;
    p.tokens = std::move(f.output);
  }
  return p;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(rows[k]));
  }
  return out;
}

double flat_max_abs(const BlockGradients& g) {
  return std::max({g.w1.cwiseAbs().maxCoeff(), g.b1.cwiseAbs().maxCoeff(),
                   g.w2.cwiseAbs().maxCoeff(), g.b2.cwiseAbs().maxCoeff(),
                   g.label_embed.cwiseAbs().maxCoeff()});
}

void add_into(BlockGradients& into, const BlockGradients& g) {
  into.w1 += g.w1;
  into.b1 += g.b1;
  into.w2 += g.w2;
  into.b2 += g.b2;
  into.label_embed += g.label_embed;
}

}  // namespace

std::string_view to_string(MiningScore s) noexcept {
  return s == MiningScore::Summed ? "summed" : "current";
}

MiningScore parse_mining_score(std::string_view s) {
  if (s == "summed") return MiningScore::Summed;
  if (s == "current") return MiningScore::CurrentBlock;
  throw ParameterError(fmt::format("unknown mining score '{}' (expected summed|current)", s));
}

void TrainConfig::validate() const {
  if (depth < 1) throw ParameterError("depth must be >= 1");
  if (hidden_dim < 1 || output_dim < 1) throw ParameterError("hidden_dim and output_dim must be >= 1");
  gate.validate();
  loss.validate();
  if (hnm_k_first < 1 || hnm_k_last < 1) throw ParameterError("hnm k must be >= 1");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ParameterError("ema_decay must lie in [0,1]");
  if (epochs < 1) throw ParameterError("epochs must be >= 1");
  if (batch_size < 2) throw ParameterError("batch_size must be >= 2");
  if (!(learning_rate >= 0.0)) throw ParameterError("learning_rate must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ParameterError("adam betas must lie in [0,1)");
  }
  if (!(adam_eps > 0.0)) throw ParameterError("adam_eps must be > 0");
  if (audit_every < 0 || jitter < 0) throw ParameterError("audit_every and jitter must be >= 0");
  data.validate();
}

NetworkShape TrainConfig::shape(Eigen::Index input_dim, Eigen::Index classes) const {
  NetworkShape s;
  s.input_dim = input_dim;
  s.hidden_dim = hidden_dim;
  s.output_dim = output_dim;
  s.classes = classes;
  s.depth = depth;
  s.goodness_scale = goodness_scale;
  s.label_every_block = label_every_block;
  s.embed_scale = embed_scale;
  return s;
}

OptimizerState OptimizerState::for_block(const BlockParams& block) {
  const auto n = static_cast<Eigen::Index>(block.parameter_count());
  return OptimizerState{Vector::Zero(n), Vector::Zero(n), 0};
}

void adam_step(OptimizerState& state, Vector& params, const Vector& grads, double lr, double beta1,
               double beta2, double eps) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw DimensionError(fmt::format("adam_step: params {}, grads {}, moments {}/{}", params.size(),
                                     grads.size(), state.m.size(), state.v.size()));
  }
  ++state.step;
  state.m = beta1 * state.m + (1.0 - beta1) * grads;
  state.v = beta2 * state.v + (1.0 - beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

void adam_step(OptimizerState& state, BlockParams& params, const BlockGradients& grads, double lr,
               double beta1, double beta2, double eps) {
  Vector flat = params.flatten();
  adam_step(state, flat, grads.flatten(), lr, beta1, beta2, eps);
  params.assign(flat);
}

Matrix teacher_scores(const Network& teacher, const Matrix& images, MiningScore mode,
                      std::size_t block) {
  if (mode == MiningScore::CurrentBlock && block >= teacher.depth()) {
    throw DomainError(fmt::format("teacher_scores: block {} out of range", block));
  }
  Matrix scores(images.rows(), teacher.classes);
  for (Eigen::Index y = 0; y < teacher.classes; ++y) {
    const auto g = network_forward(teacher, images, static_cast<int>(y));
    if (mode == MiningScore::Summed) {
      Vector s = Vector::Zero(images.rows());
      for (const auto& v : g) s += v;
      scores.col(y) = s;
    } else {
      scores.col(y) = g[block];
    }
  }
  return scores;
}

int sample_wrong_label(int true_label, int classes, std::mt19937_64& rng) {
  if (classes < 2) throw DomainError("need at least two classes to draw a wrong label");
  std::uniform_int_distribution<int> pick(0, classes - 2);
  const int c = pick(rng);
  return c >= true_label ? c + 1 : c;
}

int hard_negative_mine(const Eigen::Ref<const Eigen::RowVectorXd>& scores, int true_label, int k,
                       std::mt19937_64& rng) {
  const auto classes = static_cast<int>(scores.size());
  if (classes < 2) throw DomainError("hard_negative_mine: need at least two classes");
  if (k < 1) throw ParameterError("hard_negative_mine: k must be >= 1");
  int best = sample_wrong_label(true_label, classes, rng);
  for (int j = 1; j < k; ++j) {
    const int c = sample_wrong_label(true_label, classes, rng);
    if (scores[c] > scores[best]) best = c;
  }
  return best;
}

int hard_negative_mine(const Matrix& image, int true_label, int k, const EmaTeacher& teacher,
                       std::mt19937_64& rng) {
  if (image.rows() != 1) throw DimensionError("hard_negative_mine: expected a single example row");
  const Matrix scores = teacher_scores(teacher.shadow, image, MiningScore::Summed);
  return hard_negative_mine(scores.row(0), true_label, k, rng);
}

std::vector<int> hard_negative_mine(const Matrix& score_table, std::span<const int> labels, int k,
                                    std::mt19937_64& rng) {
  if (static_cast<std::size_t>(score_table.rows()) != labels.size()) {
    throw DimensionError("hard_negative_mine: score rows and labels differ");
  }
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = hard_negative_mine(score_table.row(static_cast<Eigen::Index>(i)), labels[i], k, rng);
  }
  return out;
}

int hnm_ramp(int epoch, int total_epochs, int k_first, int k_last) {
  if (total_epochs < 1) throw ParameterError("hnm_ramp: total_epochs must be >= 1");
  const double t = total_epochs == 1 ? 1.0 : static_cast<double>(epoch) / (total_epochs - 1);
  const double k = k_first + t * (k_last - k_first);
  const int lo = std::min(k_first, k_last);
  const int hi = std::max(k_first, k_last);
  return std::clamp(static_cast<int>(std::lround(k)), lo, hi);
}

TrainState TrainState::create(const TrainConfig& cfg, Eigen::Index input_dim, Eigen::Index classes,
                              std::mt19937_64& rng) {
  TrainState s;
  s.net = init_network(cfg.shape(input_dim, classes), rng);
  s.teacher = make_teacher(s.net, cfg.ema_decay);
  for (const auto& b : s.net.blocks) s.optim.push_back(OptimizerState::for_block(b));
  return s;
}

StepResult train_step(TrainState& state, const Matrix& images, std::span<const int> labels,
                      const TrainConfig& cfg, int epoch, std::mt19937_64& rng) {
  const Eigen::Index n = images.rows();
  if (n == 0) throw DomainError("train_step: empty batch");
  if (static_cast<std::size_t>(n) != labels.size()) throw DimensionError("train_step: labels and images differ");
  const std::size_t L = state.net.depth();
  const int k = hnm_ramp(epoch, cfg.epochs, cfg.hnm_k_first, cfg.hnm_k_last);

  const Network snapshot = state.net;
  const Network teacher = state.teacher.shadow;
  const std::vector<int> pos_labels(labels.begin(), labels.end());

  const auto partner = derangement(static_cast<std::size_t>(n), rng);
  const Matrix ni_images = gather_rows(images, partner);

  std::vector<int> nl_labels;
  if (cfg.mining_score == MiningScore::Summed) {
    nl_labels = hard_negative_mine(teacher_scores(teacher, images, MiningScore::Summed), labels, k, rng);
  }

  StepResult out;
  out.wrong_label.stream = NegativeStream::WrongLabel;
  out.wrong_image.stream = NegativeStream::WrongImage;

  for (std::size_t d = 0; d < L; ++d) {
    if (cfg.mining_score == MiningScore::CurrentBlock) {
      nl_labels = hard_negative_mine(teacher_scores(teacher, images, MiningScore::CurrentBlock, d),
                                     labels, k, rng);
    }
    const Network& up = cfg.refresh ? state.net : snapshot;
    const Prefix pos = prefix_pass(up, images, pos_labels, d, out.gamma);
    const Prefix nl = prefix_pass(up, images, nl_labels, d, out.gamma);
    const Prefix ni = prefix_pass(up, ni_images, pos_labels, d, out.gamma);

    const double g_cum = pos.prior.mean();
    const double g_prev = pos.prev.mean();
    const double gamma = effective_gamma(cfg.gate, g_cum, g_prev);
    out.gamma.push_back(gamma);

    const std::vector<StreamBatch> streams = {
        {pos.tokens, pos_labels}, {nl.tokens, nl_labels}, {ni.tokens, pos_labels}};

    BlockLossBreakdown breakdown;
    Vector g_pos, g_nl, g_ni;
    const GoodnessLoss loss = [&](std::span<const Vector> g, std::vector<Vector>& dg) {
      BlockLossInputs in;
      in.g_pos = g[0];
      in.g_nl = g[1];
      in.g_ni = g[2];
      in.prior_pos = pos.prior;
      in.prior_nl = nl.prior;
      in.prior_ni = ni.prior;
      in.prev_mixed_pos = pos.prev_mixed;
      in.prev_mixed_nl = nl.prev_mixed;
      in.prev_mixed_ni = ni.prev_mixed;
      in.gamma = gamma;
      GoodnessGradient gg;
      breakdown = total_block_loss(in, cfg.loss, d, L, cfg.mgc, gg);
      g_pos = g[0];
      g_nl = g[1];
      g_ni = g[2];
      dg = {std::move(gg.d_pos), std::move(gg.d_nl), std::move(gg.d_ni)};
      return breakdown.total;
    };

    BlockGradients grads;
    try {
      grads = block_gradients(state.net.blocks[d], streams, loss);
    } catch (const NumericError& e) {
      throw NumericError(fmt::format("block {}: {}", d, e.what()));
    }

    out.losses.push_back(breakdown);
    out.wrong_label.current.push_back(g_pos - g_nl);
    out.wrong_label.accumulated.push_back(pos.prior - nl.prior);
    out.wrong_image.current.push_back(g_pos - g_ni);
    out.wrong_image.accumulated.push_back(pos.prior - ni.prior);

    adam_step(state.optim[d], state.net.blocks[d], grads, cfg.learning_rate, cfg.adam_beta1,
              cfg.adam_beta2, cfg.adam_eps);
    ema_update_block(state.teacher, state.net, d);
  }
  out.wrong_label.gamma = out.gamma;
  out.wrong_image.gamma = out.gamma;
  return out;
}

bool LocalityReport::passed() const noexcept {
  return std::all_of(entries.begin(), entries.end(),
                     [](const LocalityEntry& e) { return e.max_abs_grad == 0.0; });
}

LocalityReport locality_audit(const Network& net, const Matrix& images, std::span<const int> labels,
                              const TrainConfig& cfg, std::uint64_t seed, bool detach) {
  net.validate();
  const Eigen::Index n = images.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw DimensionError("locality_audit: labels and images differ");
  const std::size_t L = net.depth();
  std::mt19937_64 rng(seed);

  struct Stream {
    Matrix images;
    std::vector<int> labels;
  };
  std::vector<Stream> streams(3);
  streams[0] = {images, std::vector<int>(labels.begin(), labels.end())};
  streams[1].images = images;
  for (int y : labels) streams[1].labels.push_back(sample_wrong_label(y, static_cast<int>(net.classes), rng));
  streams[2] = {gather_rows(images, derangement(static_cast<std::size_t>(n), rng)), streams[0].labels};

  // A stop-gradient: the value passes through, the gradient does not.
  const auto stop = [detach](const auto& grad) {
    using T = std::decay_t<decltype(grad)>;
    return detach ? T(T::Zero(grad.rows(), grad.cols())) : grad;
  };

  LocalityReport rep;
  std::vector<double> gammas;
  for (std::size_t ell = 0; ell < L; ++ell) {
    // Forward every stream through blocks 0..ell, keeping the caches.
    std::vector<std::vector<BlockForward>> fwd(3);
    std::vector<Vector> prior(3, Vector::Zero(n)), prev_mixed(3, Vector::Zero(n)), prev(3, Vector::Zero(n));
    for (std::size_t s = 0; s < 3; ++s) {
      Matrix tokens = streams[s].images;
      for (std::size_t j = 0; j <= ell; ++j) {
        fwd[s].push_back(block_forward(net.blocks[j], tokens, streams[s].labels));
        tokens = fwd[s].back().output;
        if (j < ell) {
          prev_mixed[s] = fwd[s].back().goodness + gammas[j] * prior[s];
          prior[s] += fwd[s].back().goodness;
          prev[s] = fwd[s].back().goodness;
        }
      }
    }
    const double gamma = effective_gamma(cfg.gate, prior[0].mean(), prev[0].mean());
    gammas.push_back(gamma);

    BlockLossInputs in;
    in.g_pos = fwd[0][ell].goodness;
    in.g_nl = fwd[1][ell].goodness;
    in.g_ni = fwd[2][ell].goodness;
    in.prior_pos = prior[0];
    in.prior_nl = prior[1];
    in.prior_ni = prior[2];
    in.prev_mixed_pos = prev_mixed[0];
    in.prev_mixed_nl = prev_mixed[1];
    in.prev_mixed_ni = prev_mixed[2];
    in.gamma = gamma;
    GoodnessGradient gg, mixed;
    total_block_loss(in, cfg.loss, ell, L, cfg.mgc, gg, mixed);
    const Vector d_g[3] = {gg.d_pos, gg.d_nl, gg.d_ni};
    const Vector d_mixed[3] = {mixed.d_pos, mixed.d_nl, mixed.d_ni};

    std::vector<BlockGradients> full;
    for (std::size_t j = 0; j <= ell; ++j) full.push_back(BlockParams::zeros_like(net.blocks[j]));

    for (std::size_t s = 0; s < 3; ++s) {
      Matrix d_tokens;
      add_into(full[ell], block_backward(net.blocks[ell], fwd[s][ell], streams[s].labels, d_g[s],
                                         nullptr, &d_tokens));
      // prior = sum_{j<ell} g^(j), so every earlier block receives gamma * dL/dG.
      const Vector d_prior = stop(Vector(gamma * d_mixed[s]));
      Matrix d_out = stop(d_tokens);
      for (std::size_t j = ell; j-- > 0;) {
        Matrix d_in;
        add_into(full[j], block_backward(net.blocks[j], fwd[s][j], streams[s].labels, d_prior,
                                         &d_out, &d_in));
        d_out = std::move(d_in);
      }
    }
    rep.own_block_norm.push_back(std::sqrt(full[ell].flatten().squaredNorm()));
    for (std::size_t j = 0; j < ell; ++j) rep.entries.push_back({ell, j, flat_max_abs(full[j])});
  }
  return rep;
}

const Network& evaluation_network(const TrainResult& r, const TrainConfig& cfg) {
  return cfg.eval_teacher ? r.teacher.shadow : r.net;
}

TrainResult train(const TrainConfig& cfg, const DataSplits& data, const MetricsCallback& sink) {
  cfg.validate();
  data.train.validate();
  data.val.validate();
  if (data.train.size() == 0) throw DomainError("train: empty training split");
  if (data.val.size() == 0) throw DomainError("train: empty validation split");

  std::mt19937_64 init_rng(cfg.seed);
  TrainState state = TrainState::create(cfg, data.train.dim(), data.train.classes, init_rng);
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 1u};
  std::mt19937_64 rng(seq);

  TrainResult result;
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  std::size_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t len = std::min(bs, order.size() - start);
      if (len < 2) continue;  // a lone example has no wrong-image partner
      const ExampleSet batch = data.train.subset(std::span<const std::size_t>(order).subspan(start, len));
      Matrix x = batch.features;
      if (cfg.jitter > 0) x = jitter_images(batch, x, cfg.jitter, rng);
      train_step(state, x, batch.labels, cfg, epoch, rng);
      ++step;
      if (cfg.audit_every > 0 && step % static_cast<std::size_t>(cfg.audit_every) == 0) {
        const LocalityReport audit = locality_audit(state.net, x, batch.labels, cfg, cfg.seed + step);
        ++result.audits;
        if (!audit.passed()) throw Error(fmt::format("locality audit failed at step {}", step));
      }
    }

    const Network& ev = cfg.eval_teacher ? state.teacher.shadow : state.net;
    DiagnosticsRecord rec;
    rec.epoch = epoch + 1;
    rec.train_accuracy =
        prefix_predictions(goodness_table(ev, data.train.features), ev.depth() - 1, data.train.labels)
            .accuracy();
    Evaluation val = evaluate(ev, data.val.features, data.val.labels, cfg.gate, cfg.loss.beta, cfg.seed);
    rec.val_accuracy = val.full.accuracy();
    rec.blocks = std::move(val.blocks);
    if (sink) sink(rec);
    result.history.push_back(std::move(rec));
  }
  result.net = std::move(state.net);
  result.teacher = std::move(state.teacher);
  return result;
}

}  // namespace fflocal
