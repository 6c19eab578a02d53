#include "fflocal/config.hpp"

#include "fflocal/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace fflocal {

namespace {

namespace pt = boost::property_tree;

struct Field {
  const char* section;
  const char* key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw FormatError(fmt::format("config: '{}' = '{}' is not {}", key, value, want));
}

double to_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) bad_value(key, s, "a real number");
  return v;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& s) {
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) bad_value(key, s, "an integer");
  return v;
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  bad_value(key, s, "a boolean (true|false)");
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

Field real(const char* sec, const char* key, double& ref) {
  return {sec, key, [&ref] { return fmt::format("{}", ref); },
          [&ref, key](const std::string& s) { ref = to_double(key, s); }};
}

template <typename Int>
Field integer(const char* sec, const char* key, Int& ref) {
  return {sec, key, [&ref] { return fmt::format("{}", ref); },
          [&ref, key](const std::string& s) { ref = to_int<Int>(key, s); }};
}

Field boolean(const char* sec, const char* key, bool& ref) {
  return {sec, key, [&ref] { return fmt_bool(ref); },
          [&ref, key](const std::string& s) { ref = to_bool(key, s); }};
}

Field text(const char* sec, const char* key, std::string& ref) {
  return {sec, key, [&ref] { return ref; }, [&ref](const std::string& s) { ref = s; }};
}

std::vector<Field> fields(RunConfig& c) {
  TrainConfig& t = c.train;
  LossWeights& w = t.loss;
  DatasetSpec& d = t.data;
  return {
      integer("model", "depth", t.depth),
      integer("model", "hidden_dim", t.hidden_dim),
      integer("model", "output_dim", t.output_dim),
      real("model", "goodness_scale", t.goodness_scale),
      boolean("model", "label_every_block", t.label_every_block),
      real("model", "embed_scale", t.embed_scale),

      real("objective", "gamma", t.gate.gamma0),
      {"objective", "gate", [&t] { return std::string(to_string(t.gate.mode)); },
       [&t](const std::string& s) { t.gate.mode = parse_gate_mode(s); }},
      real("objective", "kappa", t.gate.kappa),
      real("objective", "tau", t.gate.tau),
      boolean("objective", "mgc", t.mgc),
      real("objective", "lambda_aspect", w.lambda_aspect),
      real("objective", "lambda_block", w.lambda_block),
      real("objective", "lambda0", w.lambda0),
      real("objective", "rho", w.rho),
      real("objective", "lambda_depth", w.lambda_depth),
      real("objective", "eta", w.eta),
      real("objective", "delta_pos", w.delta_pos),
      real("objective", "delta_neg", w.delta_neg),
      real("objective", "beta", w.beta),
      real("objective", "alpha", w.alpha),
      real("objective", "theta", w.theta),
      real("objective", "w_min", w.w_min),
      real("objective", "w_max", w.w_max),
      real("objective", "mgc_c0", w.mgc_c0),
      real("objective", "mgc_rho", w.mgc_rho),
      real("objective", "mgc_eps", w.mgc_eps),

      integer("mining", "k_first", t.hnm_k_first),
      integer("mining", "k_last", t.hnm_k_last),
      {"mining", "score", [&t] { return std::string(to_string(t.mining_score)); },
       [&t](const std::string& s) { t.mining_score = parse_mining_score(s); }},
      real("mining", "ema_decay", t.ema_decay),

      integer("train", "epochs", t.epochs),
      integer("train", "batch_size", t.batch_size),
      real("train", "learning_rate", t.learning_rate),
      real("train", "adam_beta1", t.adam_beta1),
      real("train", "adam_beta2", t.adam_beta2),
      real("train", "adam_eps", t.adam_eps),
      integer("train", "seed", t.seed),
      boolean("train", "refresh", t.refresh),
      boolean("train", "eval_teacher", t.eval_teacher),
      integer("train", "audit_every", t.audit_every),
      integer("train", "jitter", t.jitter),

      {"data", "kind", [&d] { return std::string(d.kind == DatasetKind::Blobs ? "blobs" : "idx"); },
       [&d](const std::string& s) {
         if (s == "blobs") {
           d.kind = DatasetKind::Blobs;
         } else if (s == "idx") {
           d.kind = DatasetKind::Idx;
         } else {
           bad_value("kind", s, "blobs or idx");
         }
       }},
      integer("data", "classes", d.classes),
      integer("data", "dim", d.dim),
      integer("data", "per_class", d.per_class),
      real("data", "radius", d.radius),
      real("data", "noise", d.noise),
      real("data", "train_frac", d.train_frac),
      real("data", "val_frac", d.val_frac),
      real("data", "test_frac", d.test_frac),
      integer("data", "seed", d.seed),
      text("data", "train_images", d.train_images),
      text("data", "train_labels", d.train_labels),
      text("data", "test_images", d.test_images),
      text("data", "test_labels", d.test_labels),
      real("data", "pixel_mean", d.pixel_mean),
      real("data", "pixel_std", d.pixel_std),

      text("output", "metrics", c.output.metrics),
      text("output", "checkpoint", c.output.checkpoint),
      text("output", "predictions", c.output.predictions),
  };
}

}  // namespace

RunConfig parse_config(std::istream& is) {
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw FormatError(fmt::format("config: {}", e.what()));
  }
  RunConfig cfg;
  const auto table = fields(cfg);
  std::set<std::string> known_sections;
  for (const auto& f : table) known_sections.insert(f.section);

  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw FormatError(fmt::format("config: key '{}' appears outside a section", section));
    }
    if (!known_sections.contains(section)) {
      throw FormatError(fmt::format("config: unknown section [{}]", section));
    }
    for (const auto& [key, node] : body) {
      const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) {
        return section == f.section && key == f.key;
      });
      if (it == table.end()) throw FormatError(fmt::format("config: unknown key '{}' in [{}]", key, section));
      it->set(node.data());
    }
  }
  cfg.train.validate();
  return cfg;
}

RunConfig parse_config_string(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError(fmt::format("cannot open config '{}'", path));
  return parse_config(is);
}

std::string serialize_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string out;
  std::string current;
  for (const auto& f : fields(copy)) {
    if (current != f.section) {
      if (!current.empty()) out += '\n';
      current = f.section;
      out += fmt::format("[{}]\n", current);
    }
    out += fmt::format("{} = {}\n", f.key, f.get());
  }
  return out;
}

}  // namespace fflocal
