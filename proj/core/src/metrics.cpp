#include "fflocal/metrics.hpp"

#include "fflocal/errors.hpp"

#include <fmt/format.h>

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

namespace fflocal {

namespace {

constexpr const char* kBlockKeys[] = {"sep_cur_nl", "sep_nl", "lc",  "ds",   "g_pos",
                                      "ratio",      "free_riding", "own", "gamma"};

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : "na"; }

double parse_real(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError(fmt::format("metrics: bad number '{}' for {}", s, what));
  }
  return v;
}

std::optional<double> parse_opt(std::string_view s, std::string_view what) {
  if (s == "na") return std::nullopt;
  return parse_real(s, what);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename Get>
std::string join_blocks(const DiagnosticsRecord& rec, Get get) {
  std::string out;
  for (std::size_t d = 0; d < rec.blocks.size(); ++d) {
    if (d > 0) out += ',';
    out += get(rec.blocks[d]);
  }
  return out;
}

}  // namespace

std::string format_metrics_line(const DiagnosticsRecord& rec) {
  auto real = [](double v) { return fmt::format("{}", v); };
  std::string line = fmt::format("epoch={} train_acc={} val_acc={} blocks={}", rec.epoch,
                                 real(rec.train_accuracy), real(rec.val_accuracy), rec.blocks.size());
  line += " sep_cur_nl=" + join_blocks(rec, [&](const BlockDiagnostics& b) { return real(b.sep_cur_nl); });
  line += " sep_nl=" + join_blocks(rec, [&](const BlockDiagnostics& b) { return real(b.sep_nl); });
  line += " lc=" + join_blocks(rec, [&](const BlockDiagnostics& b) { return real(b.loss_collapse); });
  line += " ds=" + join_blocks(rec, [&](const BlockDiagnostics& b) { return fmt_opt(b.depth_saturation); });
  line += " g_pos=" + join_blocks(rec, [&](const BlockDiagnostics& b) { return real(b.mean_pos_goodness); });
  line += " ratio=" + join_blocks(rec, [&](const BlockDiagnostics& b) { return real(b.mean_ratio); });
  line += " free_riding=" + join_blocks(rec, [&](const BlockDiagnostics& b) { return real(b.free_riding); });
  line += " own=" + join_blocks(rec, [&](const BlockDiagnostics& b) { return fmt_opt(b.own_fraction); });
  line += " gamma=" + join_blocks(rec, [&](const BlockDiagnostics& b) { return real(b.gamma); });
  return line;
}

DiagnosticsRecord parse_metrics_line(const std::string& line) {
  const auto tokens = split(line, ' ');
  constexpr std::size_t kHead = 4;
  constexpr std::size_t kCount = kHead + std::size(kBlockKeys);
  if (tokens.size() != kCount) {
    throw FormatError(fmt::format("metrics: expected {} fields, found {}", kCount, tokens.size()));
  }
  auto value_of = [&](std::size_t i, std::string_view key) {
    const std::string_view tok = tokens[i];
    const std::size_t eq = tok.find('=');
    if (eq == std::string_view::npos || tok.substr(0, eq) != key) {
      throw FormatError(fmt::format("metrics: field {} should be '{}', found '{}'", i + 1, key, tok));
    }
    return tok.substr(eq + 1);
  };

  DiagnosticsRecord rec;
  const auto epoch = value_of(0, "epoch");
  if (std::from_chars(epoch.data(), epoch.data() + epoch.size(), rec.epoch).ec != std::errc()) {
    throw FormatError(fmt::format("metrics: bad epoch '{}'", epoch));
  }
  rec.train_accuracy = parse_real(value_of(1, "train_acc"), "train_acc");
  rec.val_accuracy = parse_real(value_of(2, "val_acc"), "val_acc");
  const auto blocks = value_of(3, "blocks");
  std::size_t L = 0;
  if (std::from_chars(blocks.data(), blocks.data() + blocks.size(), L).ec != std::errc()) {
    throw FormatError(fmt::format("metrics: bad block count '{}'", blocks));
  }
  rec.blocks.resize(L);
  for (std::size_t k = 0; k < std::size(kBlockKeys); ++k) {
    const auto parts = split(value_of(kHead + k, kBlockKeys[k]), ',');
    if (parts.size() != L) {
      throw FormatError(fmt::format("metrics: '{}' has {} values for {} blocks", kBlockKeys[k], parts.size(), L));
    }
    for (std::size_t d = 0; d < L; ++d) {
      BlockDiagnostics& b = rec.blocks[d];
      const std::string_view v = parts[d];
      switch (k) {
        case 0: b.sep_cur_nl = parse_real(v, kBlockKeys[k]); break;
        case 1: b.sep_nl = parse_real(v, kBlockKeys[k]); break;
        case 2: b.loss_collapse = parse_real(v, kBlockKeys[k]); break;
        case 3: b.depth_saturation = parse_opt(v, kBlockKeys[k]); break;
        case 4: b.mean_pos_goodness = parse_real(v, kBlockKeys[k]); break;
        case 5: b.mean_ratio = parse_real(v, kBlockKeys[k]); break;
        case 6: b.free_riding = parse_real(v, kBlockKeys[k]); break;
        case 7: b.own_fraction = parse_opt(v, kBlockKeys[k]); break;
        default: b.gamma = parse_real(v, kBlockKeys[k]); break;
      }
    }
  }
  return rec;
}

std::vector<DiagnosticsRecord> read_metrics(std::istream& is) {
  std::vector<DiagnosticsRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (is.eof()) break;  // no trailing newline: an interrupted write
    if (line.empty()) continue;
    out.push_back(parse_metrics_line(line));
  }
  return out;
}

std::vector<DiagnosticsRecord> read_metrics(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError(fmt::format("cannot open metrics file '{}'", path));
  return read_metrics(is);
}

MetricsWriter::MetricsWriter(const std::string& path) : os_(path, std::ios::app) {
  if (!os_) throw IoError(fmt::format("cannot open metrics file '{}' for appending", path));
}

void MetricsWriter::write(const DiagnosticsRecord& rec) {
  os_ << format_metrics_line(rec) << '\n';
  os_.flush();
  if (!os_) throw IoError("metrics: write failed");
}

void write_predictions(const PredictionSet& p, std::ostream& os) {
  p.validate();
  os << "# scores[0.." << p.classes() << ") predicted true\n";
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::string line;
    for (Eigen::Index y = 0; y < p.classes(); ++y) {
      line += fmt::format("{} ", p.scores(static_cast<Eigen::Index>(i), y));
    }
    line += fmt::format("{} {}\n", p.predicted[i], p.truth[i]);
    os << line;
  }
  if (!os) throw IoError("predictions: write failed");
}

void write_predictions(const PredictionSet& p, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError(fmt::format("cannot open '{}' for writing", path));
  write_predictions(p, os);
}

PredictionSet read_predictions(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::vector<int> predicted, truth;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string_view> parts;
    for (auto tok : split(line, ' ')) {
      if (!tok.empty()) parts.push_back(tok);
    }
    if (parts.size() < 4) throw FormatError(fmt::format("predictions line {}: too few fields", lineno));
    if (width == 0) width = parts.size();
    if (parts.size() != width) throw FormatError(fmt::format("predictions line {}: ragged row", lineno));
    std::vector<double> scores;
    for (std::size_t k = 0; k + 2 < parts.size(); ++k) scores.push_back(parse_real(parts[k], "score"));
    int pr = 0, tr = 0;
    const auto a = parts[parts.size() - 2];
    const auto b = parts[parts.size() - 1];
    if (std::from_chars(a.data(), a.data() + a.size(), pr).ec != std::errc() ||
        std::from_chars(b.data(), b.data() + b.size(), tr).ec != std::errc()) {
      throw FormatError(fmt::format("predictions line {}: bad label", lineno));
    }
    if (tr < 0 || tr >= static_cast<int>(parts.size() - 2)) {
      throw FormatError(fmt::format("predictions line {}: true label {} out of range", lineno, tr));
    }
    rows.push_back(std::move(scores));
    predicted.push_back(pr);
    truth.push_back(tr);
  }
  PredictionSet p;
  const auto C = static_cast<Eigen::Index>(width >= 2 ? width - 2 : 0);
  p.scores.resize(static_cast<Eigen::Index>(rows.size()), C);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index y = 0; y < C; ++y) p.scores(static_cast<Eigen::Index>(i), y) = rows[i][static_cast<std::size_t>(y)];
  }
  p.predicted = std::move(predicted);
  p.truth = std::move(truth);
  p.validate();
  return p;
}

PredictionSet read_predictions(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError(fmt::format("cannot open prediction file '{}'", path));
  return read_predictions(is);
}

}  // namespace fflocal
