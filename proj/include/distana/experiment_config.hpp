#pragma once

// Plain-text experiment configuration:
//
//   # comment
//   seed = 7
//   [data]
//   train_sequences = 100
//   ...
//
// Global keys precede the first section; sections are [data], [model],
// [train], [tuning], [output]. Unknown sections or keys are rejected.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "distana/active_tuning.hpp"
#include "distana/errors.hpp"
#include "distana/network.hpp"
#include "distana/training.hpp"
#include "distana/wavegen.hpp"

namespace distana {

struct DataConfig {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t train_sequences = 100;
  std::size_t train_length = 70;
  std::size_t test_sequences = 20;
  std::size_t test_length = 140;
  std::vector<double> train_speeds{0.2, 0.3, 0.5, 0.6, 0.7, 0.9};
  std::vector<double> test_speeds{0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  double constant_speed = 0.0;  // > 0 replaces both speed maps by this value
  wave::WaveParams params;
  double amplitude = 1.0;
  double sigma2 = 0.5;
  double train_snr = 0.0;  // 0 disables noise
  double test_snr = 0.0;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

inline bool operator==(const wave::WaveParams& a, const wave::WaveParams& b) {
  return a.c0 == b.c0 && a.dt == b.dt && a.dx == b.dx && a.dy == b.dy;
}

struct OutputConfig {
  std::string name = "run";
  bool export_csv = false;
  std::size_t threads = 1;

  friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string preset = "context-inference";
  DataConfig data;
  NetworkConfig model;
  TrainConfig train;
  tuning::TuningConfig tuning;
  std::vector<std::size_t> checkpoints{5, 20, 80, 500};
  OutputConfig output;

  static ExperimentConfig context_inference() {
    ExperimentConfig c;
    c.preset = "context-inference";
    c.train = TrainConfig::context_inference();
    return c;
  }

  static ExperimentConfig noise_filtering() {
    ExperimentConfig c;
    c.preset = "noise-filtering";
    c.data.train_length = 40;
    c.data.constant_speed = 1.0;
    c.data.train_snr = 1.0;
    c.data.test_snr = 0.25;
    c.model.pre_dim = 4;
    c.model.lstm_cells = 24;
    c.model.static_dim = 0;
    c.model.static_pre_dim = 0;
    c.train = TrainConfig::noise_filtering();
    c.tuning.target = tuning::Target::kDynamicInput;
    return c;
  }

  static ExperimentConfig preset_named(std::string_view name) {
    if (name == "context-inference") return context_inference();
    if (name == "noise-filtering") return noise_filtering();
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }

  /// Derived fields that must agree with others.
  void resolve() {
    model.height = data.height;
    model.width = data.width;
    train.sequences = data.train_sequences;
    train.sequence_length = data.train_length;
  }

  void validate() const {
    try {
      model.validate();
      tuning.validate();
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
    if (data.height < 3 || data.width < 3) throw ConfigError("grid must be at least 3x3");
    if (data.train_length < 2) throw ConfigError("train_length must be >= 2");
    if (train.tf_steps + train.cl_steps > data.test_length)
      throw ConfigError("tf_steps + cl_steps exceeds test_length");
    if (tuning.history >= data.test_length) throw ConfigError("tuning history must be shorter than test_length");
    if (train.infer_context && !model.has_static()) throw ConfigError("infer_context needs static_pre > 0");
    if (data.train_speeds.empty() || data.test_speeds.empty()) throw ConfigError("speed lists must not be empty");
    for (double s : data.train_speeds)
      if (!(s > 0.0)) throw ConfigError("speeds must be positive");
    for (double s : data.test_speeds)
      if (!(s > 0.0)) throw ConfigError("speeds must be positive");
    if (data.train_snr < 0.0 || data.test_snr < 0.0) throw ConfigError("snr must be >= 0 (0 disables noise)");
  }

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.seed == b.seed && a.preset == b.preset && a.data == b.data && a.model == b.model &&
           a.checkpoints == b.checkpoints && a.output == b.output && a.train.epochs == b.train.epochs &&
           a.train.lr == b.train.lr && a.train.seed == b.train.seed && a.train.tf_steps == b.train.tf_steps &&
           a.train.cl_steps == b.train.cl_steps && a.train.grad_clip == b.train.grad_clip &&
           a.train.teacher_steps == b.train.teacher_steps &&
           a.train.noisy_targets == b.train.noisy_targets && a.train.infer_context == b.train.infer_context &&
           a.tuning.history == b.tuning.history && a.tuning.cycles == b.tuning.cycles && a.tuning.lr == b.tuning.lr &&
           a.tuning.alpha == b.tuning.alpha && a.tuning.clip == b.tuning.clip &&
           a.tuning.closed_loop == b.tuning.closed_loop && a.tuning.test_iterations == b.tuning.test_iterations &&
           a.tuning.postprocess_at_test == b.tuning.postprocess_at_test &&
           a.tuning.washin_cycles == b.tuning.washin_cycles && a.tuning.washin_lr == b.tuning.washin_lr;
  }
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

inline std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("expected true/false, got '" + s + "'");
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>)
      out += fmt_double(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

template <class T, class Parse>
std::vector<T> split(const std::string& s, Parse parse) {
  std::vector<T> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<T>(parse(item)));
  }
  return out;
}

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define DISTANA_SIZE(sec, name, member)                                                     \
  Field {                                                                                   \
    sec, name, [](const ExperimentConfig& c) { return std::to_string(c.member); },         \
        [](ExperimentConfig& c, const std::string& v) { c.member = parse_uint(v); }        \
  }
#define DISTANA_REAL(sec, name, member)                                                     \
  Field {                                                                                   \
    sec, name, [](const ExperimentConfig& c) { return fmt_double(c.member); },             \
        [](ExperimentConfig& c, const std::string& v) { c.member = parse_double(v); }      \
  }
#define DISTANA_FLAG(sec, name, member)                                                     \
  Field {                                                                                   \
    sec, name, [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }, \
        [](ExperimentConfig& c, const std::string& v) { c.member = parse_bool(v); }        \
  }

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"", "preset", [](const ExperimentConfig& c) { return c.preset; },
            [](ExperimentConfig& c, const std::string& v) { c.preset = v; }},
      DISTANA_SIZE("", "seed", seed),
      DISTANA_SIZE("data", "height", data.height),
      DISTANA_SIZE("data", "width", data.width),
      DISTANA_SIZE("data", "train_sequences", data.train_sequences),
      DISTANA_SIZE("data", "train_length", data.train_length),
      DISTANA_SIZE("data", "test_sequences", data.test_sequences),
      DISTANA_SIZE("data", "test_length", data.test_length),
      Field{"data", "train_speeds", [](const ExperimentConfig& c) { return join(c.data.train_speeds); },
            [](ExperimentConfig& c, const std::string& v) { c.data.train_speeds = split<double>(v, parse_double); }},
      Field{"data", "test_speeds", [](const ExperimentConfig& c) { return join(c.data.test_speeds); },
            [](ExperimentConfig& c, const std::string& v) { c.data.test_speeds = split<double>(v, parse_double); }},
      DISTANA_REAL("data", "constant_speed", data.constant_speed),
      DISTANA_REAL("data", "c0", data.params.c0),
      DISTANA_REAL("data", "dt", data.params.dt),
      DISTANA_REAL("data", "dx", data.params.dx),
      DISTANA_REAL("data", "dy", data.params.dy),
      DISTANA_REAL("data", "amplitude", data.amplitude),
      DISTANA_REAL("data", "sigma2", data.sigma2),
      DISTANA_REAL("data", "train_snr", data.train_snr),
      DISTANA_REAL("data", "test_snr", data.test_snr),
      DISTANA_SIZE("model", "dynamic", model.dynamic_dim),
      DISTANA_SIZE("model", "lateral", model.lateral_dim),
      DISTANA_SIZE("model", "static", model.static_dim),
      DISTANA_SIZE("model", "pre", model.pre_dim),
      DISTANA_SIZE("model", "lstm_cells", model.lstm_cells),
      DISTANA_SIZE("model", "static_pre", model.static_pre_dim),
      DISTANA_SIZE("train", "epochs", train.epochs),
      DISTANA_REAL("train", "lr", train.lr),
      DISTANA_SIZE("train", "seed", train.seed),
      DISTANA_SIZE("train", "tf_steps", train.tf_steps),
      DISTANA_SIZE("train", "cl_steps", train.cl_steps),
      DISTANA_REAL("train", "grad_clip", train.grad_clip),
      DISTANA_SIZE("train", "teacher_steps", train.teacher_steps),
      DISTANA_FLAG("train", "noisy_targets", train.noisy_targets),
      DISTANA_FLAG("train", "infer_context", train.infer_context),
      DISTANA_SIZE("tuning", "history", tuning.history),
      DISTANA_SIZE("tuning", "cycles", tuning.cycles),
      DISTANA_REAL("tuning", "lr", tuning.lr),
      DISTANA_REAL("tuning", "alpha", tuning.alpha),
      DISTANA_REAL("tuning", "clip", tuning.clip),
      DISTANA_FLAG("tuning", "closed_loop", tuning.closed_loop),
      DISTANA_SIZE("tuning", "test_iterations", tuning.test_iterations),
      DISTANA_FLAG("tuning", "postprocess_at_test", tuning.postprocess_at_test),
      DISTANA_SIZE("tuning", "washin_cycles", tuning.washin_cycles),
      DISTANA_REAL("tuning", "washin_lr", tuning.washin_lr),
      Field{"tuning", "checkpoints", [](const ExperimentConfig& c) { return join(c.checkpoints); },
            [](ExperimentConfig& c, const std::string& v) { c.checkpoints = split<std::size_t>(v, parse_uint); }},
      Field{"output", "name", [](const ExperimentConfig& c) { return c.output.name; },
            [](ExperimentConfig& c, const std::string& v) { c.output.name = v; }},
      DISTANA_FLAG("output", "export_csv", output.export_csv),
      DISTANA_SIZE("output", "threads", output.threads),
  };
  return table;
}

#undef DISTANA_SIZE
#undef DISTANA_REAL
#undef DISTANA_FLAG

}  // namespace config_detail

/// Fully expanded text form; parse_config(to_text(c)) == c.
inline std::string to_text(const ExperimentConfig& c) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : config_detail::fields()) {
    if (f.section != section) {
      section = f.section;
      out << "\n[" << section << "]\n";
    }
    out << f.key << " = " << f.get(c) << '\n';
  }
  return out.str();
}

/// Parses a config document. A `preset` key, if present, must come before any
/// other key; it selects the defaults the rest of the document overrides.
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c = ExperimentConfig::context_inference();
  std::string section;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  bool any_key = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    std::string s = config_detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (s.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(where + "malformed section header");
      section = config_detail::trim(std::string_view(s).substr(1, s.size() - 2));
      if (section != "data" && section != "model" && section != "train" && section != "tuning" && section != "output")
        throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = config_detail::trim(std::string_view(s).substr(0, eq));
    const std::string value = config_detail::trim(std::string_view(s).substr(eq + 1));
    if (section.empty() && key == "preset") {
      if (any_key) throw ConfigError(where + "preset must be the first key");
      const std::uint64_t seed = c.seed;
      c = ExperimentConfig::preset_named(value);
      c.seed = seed;
      any_key = true;
      continue;
    }
    bool found = false;
    for (const auto& f : config_detail::fields()) {
      if (section == f.section && key == f.key) {
        try {
          f.set(c, value);
        } catch (const ConfigError& e) {
          throw ConfigError(where + key + ": " + e.what());
        }
        found = true;
        break;
      }
    }
    if (!found)
      throw ConfigError(where + "unknown key '" + key + "'" + (section.empty() ? "" : " in [" + section + "]"));
    any_key = true;
  }
  c.resolve();
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace distana
