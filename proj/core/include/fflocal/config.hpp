#pragma once

#include "fflocal/trainer.hpp"

#include <iosfwd>
#include <string>

namespace fflocal {

/// Where a `train` run writes its artefacts. Empty paths are skipped.
struct OutputPaths {
  std::string metrics;
  std::string checkpoint;
  std::string predictions;

  bool operator==(const OutputPaths&) const = default;
};

struct RunConfig {
  TrainConfig train;
  OutputPaths output;

  bool operator==(const RunConfig&) const = default;
};

/// INI-style `key = value` text with [model], [objective], [mining], [train],
/// [data] and [output] sections. Missing keys keep their defaults; unknown
/// sections or keys are rejected. The result is validated.
RunConfig parse_config(std::istream& is);
RunConfig parse_config_string(const std::string& text);
RunConfig load_config(const std::string& path);

/// Writes every key. Reals use the shortest representation that reads back
/// to the same double, so parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& cfg);

}  // namespace fflocal
