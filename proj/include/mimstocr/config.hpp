#ifndef MIMSTOCR_CONFIG_HPP_
#define MIMSTOCR_CONFIG_HPP_

// Flat `key = value` experiment configuration. Every key has a default; a
// config file only lists overrides. Unknown keys and unparseable values throw
// ConfigError naming the key.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mimstocr/backbone.hpp"
#include "mimstocr/cqb.hpp"
#include "mimstocr/dataset.hpp"
#include "mimstocr/error.hpp"
#include "mimstocr/losses.hpp"
#include "mimstocr/market_data.hpp"

namespace mimstocr {

struct ExperimentConfig {
  // data
  std::string data_source = "synthetic";  // synthetic | csv
  std::string csv_path;
  bool normalize = true;
  SyntheticSpec synth;
  double train_frac = 0.6;
  double valid_frac = 0.2;
  // labels, samples, losses, model, training
  SampleConfig sample;
  LossConfig loss;
  TrunkKind trunk = TrunkKind::kMlp;
  std::vector<std::size_t> hidden{64, 64};
  TrainConfig train;
  std::uint64_t seed = 0;
  // evaluation
  std::vector<std::size_t> precision_n{10, 20, 30, 50};
  std::size_t backtest_n = 50;
  double cost_bps = 0.0;

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// All keys with their resolved values, in key order.
  std::vector<std::pair<std::string, std::string>> resolved() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : keys()) out.emplace_back(k, get(k));
    return out;
  }

  /// Cross-field checks; throws ConfigError.
  void validate() const {
    if (data_source != "synthetic" && data_source != "csv") throw ConfigError("data.source: expected synthetic or csv");
    if (data_source == "csv" && csv_path.empty()) throw ConfigError("data.csv: required when data.source=csv");
    if (!(train_frac > 0 && valid_frac > 0 && train_frac + valid_frac < 1)) {
      throw ConfigError("split.train/split.valid: must be positive with a sum below 1");
    }
    if (sample.window == 0) throw ConfigError("sample.window: must be >= 1");
    sample.momentum.validate();
    if (!(loss.threshold_frac > 0 && loss.threshold_frac <= 1)) throw ConfigError("loss.threshold: must lie in (0, 1]");
    if (loss.ce_weight < 0 || loss.rank_weight < 0) throw ConfigError("loss weights must be >= 0");
    for (std::size_t h : hidden) {
      if (h == 0) throw ConfigError("model.hidden: zero-width layer");
    }
    if (hidden.empty()) throw ConfigError("model.hidden: at least one layer");
    train.validate();
    if (backtest_n == 0) throw ConfigError("eval.backtest_n: must be >= 1");
    if (cost_bps < 0) throw ConfigError("eval.cost_bps: must be >= 0");
    if (synth.n_dates < 20 || synth.n_tickers < 5) throw ConfigError("synth.dates >= 20 and synth.tickers >= 5");
    if (synth.signal_strength < 0 || synth.signal_strength > 1) throw ConfigError("synth.signal: must lie in [0, 1]");
  }

  /// Every key=value line, `# ` prefixed when `comment` is set.
  std::string provenance(bool comment) const {
    std::string s;
    for (const auto& [k, v] : resolved()) s += (comment ? "# " : "") + k + "=" + v + "\n";
    return s;
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && ws(static_cast<unsigned char>(s[b]))) ++b;
  return s.substr(b);
}

inline double to_double(const std::string& key, const std::string& v) {
  const auto d = parse_double(v);
  if (!d || !std::isfinite(*d)) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return *d;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::size_t> to_size_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
  return out;
}

inline std::optional<std::size_t> to_opt_size(const std::string& key, const std::string& v) {
  if (v == "none" || v.empty()) return std::nullopt;
  return to_size(key, v);
}

inline std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  // Prefer the shortest representation that round-trips.
  for (int p = 1; p <= 17; ++p) {
    char s[64];
    std::snprintf(s, sizeof s, "%.*g", p, x);
    if (std::strtod(s, nullptr) == x) return s;
  }
  return buf;
}

inline std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + std::to_string(v[k]);
  return s;
}

inline std::string fmt_opt(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : "none"; }

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  using S = const std::string&;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto add = [&](std::string k, std::function<void(C&, S)> s, std::function<std::string(const C&)> g) {
      f.push_back({std::move(k), std::move(s), std::move(g)});
    };
    add("data.source", [](C& c, S v) { c.data_source = v; }, [](const C& c) { return c.data_source; });
    add("data.csv", [](C& c, S v) { c.csv_path = v; }, [](const C& c) { return c.csv_path; });
    add("data.normalize", [](C& c, S v) { c.normalize = to_bool("data.normalize", v); },
        [](const C& c) { return std::string(c.normalize ? "true" : "false"); });
    add("synth.dates", [](C& c, S v) { c.synth.n_dates = to_size("synth.dates", v); },
        [](const C& c) { return std::to_string(c.synth.n_dates); });
    add("synth.tickers", [](C& c, S v) { c.synth.n_tickers = to_size("synth.tickers", v); },
        [](const C& c) { return std::to_string(c.synth.n_tickers); });
    add("synth.features", [](C& c, S v) { c.synth.n_features = to_size("synth.features", v); },
        [](const C& c) { return std::to_string(c.synth.n_features); });
    add("synth.signal", [](C& c, S v) { c.synth.signal_strength = to_double("synth.signal", v); },
        [](const C& c) { return fmt_double(c.synth.signal_strength); });
    add("synth.volatility", [](C& c, S v) { c.synth.volatility = to_double("synth.volatility", v); },
        [](const C& c) { return fmt_double(c.synth.volatility); });
    add("synth.missing", [](C& c, S v) { c.synth.missing_rate = to_double("synth.missing", v); },
        [](const C& c) { return fmt_double(c.synth.missing_rate); });
    add("synth.shift_at", [](C& c, S v) { c.synth.shift_at = to_opt_size("synth.shift_at", v); },
        [](const C& c) { return fmt_opt(c.synth.shift_at); });
    add("synth.shifted_signal", [](C& c, S v) { c.synth.shifted_strength = to_double("synth.shifted_signal", v); },
        [](const C& c) { return fmt_double(c.synth.shifted_strength); });
    add("synth.decoy_channel", [](C& c, S v) { c.synth.decoy_channel = to_opt_size("synth.decoy_channel", v); },
        [](const C& c) { return fmt_opt(c.synth.decoy_channel); });
    add("synth.decoy_strength", [](C& c, S v) { c.synth.decoy_strength = to_double("synth.decoy_strength", v); },
        [](const C& c) { return fmt_double(c.synth.decoy_strength); });
    add("split.train", [](C& c, S v) { c.train_frac = to_double("split.train", v); },
        [](const C& c) { return fmt_double(c.train_frac); });
    add("split.valid", [](C& c, S v) { c.valid_frac = to_double("split.valid", v); },
        [](const C& c) { return fmt_double(c.valid_frac); });
    add("sample.window", [](C& c, S v) { c.sample.window = to_size("sample.window", v); },
        [](const C& c) { return std::to_string(c.sample.window); });
    add("sample.standardize_target",
        [](C& c, S v) { c.sample.standardize_target = to_bool("sample.standardize_target", v); },
        [](const C& c) { return std::string(c.sample.standardize_target ? "true" : "false"); });
    add("sample.task",
        [](C& c, S v) {
          if (v == "momentum") c.sample.task = ClassTask::kMomentum;
          else if (v == "rise_fall") c.sample.task = ClassTask::kRiseFall;
          else throw ConfigError("sample.task: expected momentum or rise_fall, got '" + v + "'");
        },
        [](const C& c) { return std::string(c.sample.task == ClassTask::kMomentum ? "momentum" : "rise_fall"); });
    add("momentum.l", [](C& c, S v) { c.sample.momentum.gap = to_size("momentum.l", v); },
        [](const C& c) { return std::to_string(c.sample.momentum.gap); });
    add("momentum.s", [](C& c, S v) { c.sample.momentum.length = to_size("momentum.s", v); },
        [](const C& c) { return std::to_string(c.sample.momentum.length); });
    add("momentum.dead_zone", [](C& c, S v) { c.sample.momentum.dead_zone = to_double("momentum.dead_zone", v); },
        [](const C& c) { return fmt_double(c.sample.momentum.dead_zone); });
    add("momentum.dead_zone_std_frac",
        [](C& c, S v) { c.sample.momentum.dead_zone_std_frac = to_double("momentum.dead_zone_std_frac", v); },
        [](const C& c) { return fmt_double(c.sample.momentum.dead_zone_std_frac); });
    add("momentum.anchor", [](C& c, S v) { c.sample.momentum.anchor_offset = to_size("momentum.anchor", v); },
        [](const C& c) { return std::to_string(c.sample.momentum.anchor_offset); });
    add("loss.threshold", [](C& c, S v) { c.loss.threshold_frac = to_double("loss.threshold", v); },
        [](const C& c) { return fmt_double(c.loss.threshold_frac); });
    add("loss.fixed_k", [](C& c, S v) { c.loss.fixed_k = to_opt_size("loss.fixed_k", v); },
        [](const C& c) { return fmt_opt(c.loss.fixed_k); });
    add("loss.gain",
        [](C& c, S v) {
          if (v == "exp2_minus_1") c.loss.gain = GainVariant::kExp2Minus1;
          else if (v == "exp2_w_minus_1") c.loss.gain = GainVariant::kExp2OfWMinus1;
          else throw ConfigError("loss.gain: expected exp2_minus_1 or exp2_w_minus_1, got '" + v + "'");
        },
        [](const C& c) {
          return std::string(c.loss.gain == GainVariant::kExp2Minus1 ? "exp2_minus_1" : "exp2_w_minus_1");
        });
    add("loss.objective",
        [](C& c, S v) {
          if (v == "approx_ndcg") c.loss.objective = RankObjective::kApproxNdcg;
          else if (v == "pairwise") c.loss.objective = RankObjective::kPairwise;
          else throw ConfigError("loss.objective: expected approx_ndcg or pairwise, got '" + v + "'");
        },
        [](const C& c) {
          return std::string(c.loss.objective == RankObjective::kApproxNdcg ? "approx_ndcg" : "pairwise");
        });
    add("loss.score_source",
        [](C& c, S v) {
          if (v == "expected_level") c.loss.score_source = ScoreSource::kExpectedLevel;
          else if (v == "regression") c.loss.score_source = ScoreSource::kRegressionHead;
          else throw ConfigError("loss.score_source: expected expected_level or regression, got '" + v + "'");
        },
        [](const C& c) {
          return std::string(c.loss.score_source == ScoreSource::kExpectedLevel ? "expected_level" : "regression");
        });
    add("loss.ce_weight", [](C& c, S v) { c.loss.ce_weight = to_double("loss.ce_weight", v); },
        [](const C& c) { return fmt_double(c.loss.ce_weight); });
    add("loss.rank_weight", [](C& c, S v) { c.loss.rank_weight = to_double("loss.rank_weight", v); },
        [](const C& c) { return fmt_double(c.loss.rank_weight); });
    add("model.trunk", [](C& c, S v) { c.trunk = parse_trunk(v); }, [](const C& c) { return to_string(c.trunk); });
    add("model.hidden", [](C& c, S v) { c.hidden = to_size_list("model.hidden", v); },
        [](const C& c) { return fmt_list(c.hidden); });
    add("train.mode", [](C& c, S v) { c.train.mode = parse_train_mode(v); },
        [](const C& c) { return to_string(c.train.mode); });
    add("train.lr", [](C& c, S v) { c.train.learning_rate = to_double("train.lr", v); },
        [](const C& c) { return fmt_double(c.train.learning_rate); });
    add("train.epochs", [](C& c, S v) { c.train.epochs = to_size("train.epochs", v); },
        [](const C& c) { return std::to_string(c.train.epochs); });
    add("train.beta", [](C& c, S v) { c.train.beta = to_double("train.beta", v); },
        [](const C& c) { return fmt_double(c.train.beta); });
    add("train.decay", [](C& c, S v) { c.train.decay = to_double("train.decay", v); },
        [](const C& c) { return fmt_double(c.train.decay); });
    add("train.b", [](C& c, S v) { c.train.window_b = to_size("train.b", v); },
        [](const C& c) { return std::to_string(c.train.window_b); });
    add("train.patience", [](C& c, S v) { c.train.patience = to_size("train.patience", v); },
        [](const C& c) { return std::to_string(c.train.patience); });
    add("train.optimizer",
        [](C& c, S v) {
          if (v == "adam") c.train.optimizer = OptimizerKind::kAdam;
          else if (v == "sgd") c.train.optimizer = OptimizerKind::kSgd;
          else throw ConfigError("train.optimizer: expected adam or sgd, got '" + v + "'");
        },
        [](const C& c) { return std::string(c.train.optimizer == OptimizerKind::kAdam ? "adam" : "sgd"); });
    add("train.decay_style",
        [](C& c, S v) {
          if (v == "decoupled") c.train.decay_style = DecayStyle::kDecoupled;
          else if (v == "coupled") c.train.decay_style = DecayStyle::kCoupled;
          else throw ConfigError("train.decay_style: expected decoupled or coupled, got '" + v + "'");
        },
        [](const C& c) {
          return std::string(c.train.decay_style == DecayStyle::kDecoupled ? "decoupled" : "coupled");
        });
    add("train.shuffle", [](C& c, S v) { c.train.shuffle_days = to_bool("train.shuffle", v); },
        [](const C& c) { return std::string(c.train.shuffle_days ? "true" : "false"); });
    add("seed", [](C& c, S v) { c.seed = to_u64("seed", v); }, [](const C& c) { return std::to_string(c.seed); });
    add("eval.precision_n", [](C& c, S v) { c.precision_n = to_size_list("eval.precision_n", v); },
        [](const C& c) { return fmt_list(c.precision_n); });
    add("eval.backtest_n", [](C& c, S v) { c.backtest_n = to_size("eval.backtest_n", v); },
        [](const C& c) { return std::to_string(c.backtest_n); });
    add("eval.cost_bps", [](C& c, S v) { c.cost_bps = to_double("eval.cost_bps", v); },
        [](const C& c) { return fmt_double(c.cost_bps); });
    std::sort(f.begin(), f.end(), [](const Field& a, const Field& b) { return a.key < b.key; });
    return f;
  }();
  return table;
}

inline const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace detail

inline void ExperimentConfig::set(const std::string& key, const std::string& value) {
  detail::field(detail::trim(key)).set(*this, detail::trim(value));
}

inline std::string ExperimentConfig::get(const std::string& key) const { return detail::field(key).get(*this); }

inline const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : detail::fields()) out.push_back(f.key);
    return out;
  }();
  return k;
}

/// Applies one `key=value` assignment.
inline void apply_assignment(ExperimentConfig& cfg, const std::string& assignment, const std::string& where = "") {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError((where.empty() ? "" : where + ": ") + "expected key=value, got '" + assignment + "'");
  }
  try {
    cfg.set(assignment.substr(0, eq), assignment.substr(eq + 1));
  } catch (const ConfigError& e) {
    throw ConfigError((where.empty() ? "" : where + ": ") + e.what());
  }
}

/// Reads a key=value file; blank lines and lines starting with '#' are skipped.
inline void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    apply_assignment(cfg, t, path + ":" + std::to_string(no));
  }
}

}  // namespace mimstocr

#endif  // MIMSTOCR_CONFIG_HPP_
