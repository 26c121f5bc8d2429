#ifndef MIMSTOCR_BACKBONE_HPP_
#define MIMSTOCR_BACKBONE_HPP_

// Hard-parameter-sharing network: a shared trunk feeding a linear regression
// head (one output) and a linear classification head (one logit per class).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mimstocr/diffcore.hpp"
#include "mimstocr/error.hpp"
#include "mimstocr/rng.hpp"

namespace mimstocr {

enum class TrunkKind { kMlp, kRnn };

inline std::string to_string(TrunkKind k) { return k == TrunkKind::kMlp ? "mlp" : "rnn"; }

inline TrunkKind parse_trunk(const std::string& s) {
  if (s == "mlp") return TrunkKind::kMlp;
  if (s == "rnn") return TrunkKind::kRnn;
  throw ConfigError("unknown trunk '" + s + "' (expected mlp or rnn)");
}

/// Network shape. Input rows are the flattened [window x features] history
/// of one stock, oldest day first.
///
/// MLP trunk: dense tanh layers of widths `hidden`.
/// RNN trunk: an Elman cell of width hidden[0] run over the window, followed
/// by dense tanh layers for hidden[1..].
struct ArchSpec {
  TrunkKind trunk = TrunkKind::kMlp;
  std::size_t features = 1;
  std::size_t window = 20;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t classes = 5;

  std::size_t input_width() const { return features * window; }

  void validate() const {
    if (features == 0 || window == 0) throw ContractError("backbone input width must be positive");
    if (hidden.empty()) throw ContractError("backbone needs at least one hidden layer");
    for (std::size_t h : hidden) {
      if (h == 0) throw ContractError("zero-width hidden layer");
    }
    if (classes < 2) throw ContractError("classification head needs at least 2 classes");
  }
};

enum class ParamGroup : std::uint8_t { kTrunk = 0, kRegressionHead = 1, kClassificationHead = 2 };

struct NamedParam {
  std::string name;
  ParamGroup group;
  ad::Matrix value;
};

/// Trainable parameters, partitioned exactly into trunk (theta), regression
/// head (psi_r) and classification head (psi_c).
struct BackboneParams {
  ArchSpec arch;
  std::vector<NamedParam> params;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
  }
  std::size_t count(ParamGroup g) const {
    std::size_t n = 0;
    for (const auto& p : params) {
      if (p.group == g) n += p.value.size();
    }
    return n;
  }

  /// Concatenated values of one group, in parameter order.
  std::vector<double> flatten(ParamGroup g) const {
    std::vector<double> out;
    out.reserve(count(g));
    for (const auto& p : params) {
      if (p.group == g) out.insert(out.end(), p.value.values().begin(), p.value.values().end());
    }
    return out;
  }

  bool operator==(const BackboneParams& o) const {
    if (params.size() != o.params.size()) return false;
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (params[k].name != o.params[k].name || params[k].value != o.params[k].value) return false;
    }
    return true;
  }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases, drawn
/// in parameter order from a CounterRng seeded with `seed`.
inline BackboneParams init_backbone(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  CounterRng rng(seed, 11);
  BackboneParams bp;
  bp.arch = arch;
  auto weight = [&](std::string name, ParamGroup g, std::size_t in, std::size_t out) {
    ad::Matrix w(in, out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& x : w.values()) x = rng.uniform(-bound, bound);
    bp.params.push_back({std::move(name), g, std::move(w)});
  };
  auto bias = [&](std::string name, ParamGroup g, std::size_t out) {
    bp.params.push_back({std::move(name), g, ad::Matrix(1, out)});
  };
  std::size_t width = 0;
  std::size_t first_dense = 0;
  if (arch.trunk == TrunkKind::kMlp) {
    width = arch.input_width();
  } else {
    const std::size_t h = arch.hidden[0];
    weight("rnn.wx", ParamGroup::kTrunk, arch.features, h);
    weight("rnn.wh", ParamGroup::kTrunk, h, h);
    bias("rnn.b", ParamGroup::kTrunk, h);
    width = h;
    first_dense = 1;
  }
  for (std::size_t k = first_dense; k < arch.hidden.size(); ++k) {
    const std::string tag = "dense" + std::to_string(k);
    weight(tag + ".w", ParamGroup::kTrunk, width, arch.hidden[k]);
    bias(tag + ".b", ParamGroup::kTrunk, arch.hidden[k]);
    width = arch.hidden[k];
  }
  weight("reg.w", ParamGroup::kRegressionHead, width, 1);
  bias("reg.b", ParamGroup::kRegressionHead, 1);
  weight("cls.w", ParamGroup::kClassificationHead, width, arch.classes);
  bias("cls.b", ParamGroup::kClassificationHead, arch.classes);
  return bp;
}

/// Tape handles of one forward pass. `param_vars[k]` is the leaf of params[k].
struct BatchOutput {
  ad::Var pred_return;   // n x 1
  ad::Var class_logits;  // n x classes
  std::vector<ad::Var> param_vars;
};

/// Scores a day's cross-section `x` (n x window*features). Each row is
/// processed independently. Non-finite inputs raise NumericError naming the
/// row (and ticker when `names` is given). With `trainable == false` the
/// parameters enter as constants and nothing is recorded for backward.
inline BatchOutput forward(const BackboneParams& bp, ad::Tape& tape, const ad::Matrix& x,
                           std::span<const std::string> names = {}, bool trainable = true) {
  const ArchSpec& arch = bp.arch;
  if (x.cols() != arch.input_width()) {
    throw ShapeError("backbone input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(arch.input_width()));
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (!std::isfinite(x(r, c))) {
        throw NumericError("non-finite input for stock " +
                           (r < names.size() ? names[r] : "#" + std::to_string(r)) + " at column " +
                           std::to_string(c));
      }
    }
  }
  BatchOutput out;
  out.param_vars.reserve(bp.params.size());
  for (const auto& p : bp.params) out.param_vars.push_back(trainable ? tape.variable(p.value) : tape.constant(p.value));
  std::size_t next = 0;
  auto take = [&]() -> const ad::Var& { return out.param_vars.at(next++); };

  ad::Var input = tape.constant(x);
  ad::Var h;
  std::size_t first_dense = 0;
  if (arch.trunk == TrunkKind::kMlp) {
    h = input;
  } else {
    const ad::Var& wx = take();
    const ad::Var& wh = take();
    const ad::Var& b = take();
    const std::size_t f = arch.features;
    for (std::size_t w = 0; w < arch.window; ++w) {
      ad::Var step = ad::matmul(ad::slice_cols(input, w * f, (w + 1) * f), wx) + b;
      if (w > 0) step = step + ad::matmul(h, wh);
      h = ad::tanh(step);
    }
    first_dense = 1;
  }
  for (std::size_t k = first_dense; k < arch.hidden.size(); ++k) {
    const ad::Var& w = take();
    const ad::Var& b = take();
    h = ad::tanh(ad::matmul(h, w) + b);
  }
  const ad::Var& rw = take();
  const ad::Var& rb = take();
  const ad::Var& cw = take();
  const ad::Var& cb = take();
  out.pred_return = ad::matmul(h, rw) + rb;
  out.class_logits = ad::matmul(h, cw) + cb;
  return out;
}

/// Regression-head scores without keeping gradients around.
inline std::vector<double> predict_returns(const BackboneParams& bp, const ad::Matrix& x) {
  ad::Tape tape;
  const BatchOutput out = forward(bp, tape, x, {}, false);
  return out.pred_return.value().vec();
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON of named arrays with shapes,
//   {"format": "mimstocr-checkpoint-v1", "arch": {...},
//    "params": [{"name", "group", "rows", "cols", "data": [...]}, ...],
//    "meta": {...}}
// Doubles round-trip exactly through nlohmann::json's shortest repr.

inline nlohmann::json arch_to_json(const ArchSpec& a) {
  return {{"trunk", to_string(a.trunk)},
          {"features", a.features},
          {"window", a.window},
          {"hidden", a.hidden},
          {"classes", a.classes}};
}

inline ArchSpec arch_from_json(const nlohmann::json& j) {
  ArchSpec a;
  a.trunk = parse_trunk(j.at("trunk").get<std::string>());
  a.features = j.at("features").get<std::size_t>();
  a.window = j.at("window").get<std::size_t>();
  a.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  a.classes = j.at("classes").get<std::size_t>();
  return a;
}

inline nlohmann::json params_to_json(const BackboneParams& bp, const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : bp.params) {
    arr.push_back({{"name", p.name},
                   {"group", static_cast<int>(p.group)},
                   {"rows", p.value.rows()},
                   {"cols", p.value.cols()},
                   {"data", p.value.vec()}});
  }
  return {{"format", "mimstocr-checkpoint-v1"}, {"arch", arch_to_json(bp.arch)}, {"params", arr}, {"meta", meta}};
}

inline BackboneParams params_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mimstocr-checkpoint-v1") throw DataError("not a mimstocr checkpoint");
  BackboneParams bp = init_backbone(arch_from_json(j.at("arch")), 0);
  const auto& arr = j.at("params");
  if (arr.size() != bp.params.size()) throw DataError("checkpoint parameter count does not match its architecture");
  for (std::size_t k = 0; k < arr.size(); ++k) {
    auto& p = bp.params[k];
    const auto& e = arr[k];
    const auto rows = e.at("rows").get<std::size_t>();
    const auto cols = e.at("cols").get<std::size_t>();
    if (e.at("name").get<std::string>() != p.name || rows != p.value.rows() || cols != p.value.cols()) {
      throw DataError("checkpoint entry " + std::to_string(k) + " does not match parameter " + p.name);
    }
    p.value = ad::Matrix(rows, cols, e.at("data").get<std::vector<double>>());
  }
  return bp;
}

inline void save_checkpoint(const std::string& path, const BackboneParams& bp,
                            const nlohmann::json& meta = nlohmann::json::object()) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << params_to_json(bp, meta).dump() << '\n';
}

inline BackboneParams load_checkpoint(const std::string& path, nlohmann::json* meta = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint " + path + ": " + e.what());
  }
  if (meta) *meta = j.value("meta", nlohmann::json::object());
  return params_from_json(j);
}

}  // namespace mimstocr

#endif  // MIMSTOCR_BACKBONE_HPP_
