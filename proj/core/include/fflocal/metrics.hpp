#pragma once

#include "fflocal/diagnostics.hpp"

#include <fstream>
#include <iosfwd>
#include <string>
#include <vector>

namespace fflocal {

/// One record per line, fields in this fixed order:
///   epoch=<int> train_acc=<real> val_acc=<real> blocks=<L>
///   sep_cur_nl=<L reals> sep_nl=... lc=... ds=... g_pos=... ratio=...
///   free_riding=... own=... gamma=...
/// Per-block lists are comma-separated; a missing value is written as `na`.
std::string format_metrics_line(const DiagnosticsRecord& rec);
DiagnosticsRecord parse_metrics_line(const std::string& line);

/// Reads every complete line; a trailing partial line (no newline) is ignored.
std::vector<DiagnosticsRecord> read_metrics(std::istream& is);
std::vector<DiagnosticsRecord> read_metrics(const std::string& path);

/// Append-only sink that flushes after every line.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void write(const DiagnosticsRecord& rec);

 private:
  std::ofstream os_;
};

/// Text prediction file: optional `#` comment lines, then one line per example
/// with C scores, the predicted label and the true label, space-separated.
void write_predictions(const PredictionSet& p, std::ostream& os);
void write_predictions(const PredictionSet& p, const std::string& path);
PredictionSet read_predictions(std::istream& is);
PredictionSet read_predictions(const std::string& path);

}  // namespace fflocal
