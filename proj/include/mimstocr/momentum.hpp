#ifndef MIMSTOCR_MOMENTUM_HPP_
#define MIMSTOCR_MOMENTUM_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mimstocr/error.hpp"
#include "mimstocr/market_data.hpp"

namespace mimstocr {

/// Five trend levels of a momentum line, highest first in ranking order.
enum class MomentumClass : std::uint8_t {
  kSink = 0,      // positive, then negative
  kNegative = 1,  // stays negative
  kVolatile = 2,  // oscillates around zero
  kPositive = 3,  // stays positive
  kBounce = 4,    // negative, then positive
};

inline constexpr std::size_t kMomentumLevels = 5;

inline std::string_view to_string(MomentumClass c) {
  switch (c) {
    case MomentumClass::kSink: return "Sink";
    case MomentumClass::kNegative: return "Negative";
    case MomentumClass::kVolatile: return "Volatile";
    case MomentumClass::kPositive: return "Positive";
    case MomentumClass::kBounce: return "Bounce";
  }
  return "?";
}

struct MomentumConfig {
  std::size_t gap = 4;     // l
  std::size_t length = 6;  // s; the line holds s + 1 values
  // Dead zone for "around zero": eps = dead_zone + dead_zone_std_frac * (std
  // of the anchor momentum across the day's tickers).
  double dead_zone = 0.0;
  double dead_zone_std_frac = 0.01;
  // Line ends at T = t + anchor_offset for sample date t.
  std::size_t anchor_offset = 2;

  void validate() const {
    if (gap < 1) throw ConfigError("momentum.gap must be >= 1");
    if (length < 1) throw ConfigError("momentum.length must be >= 1");
    if (dead_zone < 0 || dead_zone_std_frac < 0) throw ConfigError("momentum dead zone must be >= 0");
  }
};

/// m_T = close[T] - close[T - l].
inline double momentum_value(std::span<const double> close, std::size_t T, std::size_t l) {
  if (T >= close.size() || l > T) {
    throw ContractError("momentum_value: T=" + std::to_string(T) + ", l=" + std::to_string(l) +
                        " outside a series of length " + std::to_string(close.size()));
  }
  return close[T] - close[T - l];
}

/// Sign-pattern rule with dead zone eps: all positive -> Positive, all
/// negative -> Negative, first nonzero sign negative and last positive ->
/// Bounce, first positive and last negative -> Sink, anything else Volatile.
inline MomentumClass classify_line(std::span<const double> line, double eps) {
  int first = 0;
  int last = 0;
  std::size_t pos = 0;
  std::size_t neg = 0;
  for (double v : line) {
    const int s = v > eps ? 1 : (v < -eps ? -1 : 0);
    if (s == 0) continue;
    if (first == 0) first = s;
    last = s;
    (s > 0 ? pos : neg) += 1;
  }
  if (!line.empty() && pos == line.size()) return MomentumClass::kPositive;
  if (!line.empty() && neg == line.size()) return MomentumClass::kNegative;
  if (first < 0 && last > 0) return MomentumClass::kBounce;
  if (first > 0 && last < 0) return MomentumClass::kSink;
  return MomentumClass::kVolatile;
}

/// Integer class labels per (date, ticker); -1 marks an unlabeled cell.
struct LevelMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int8_t> level;

  LevelMatrix() = default;
  LevelMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), level(r * c, -1) {}

  std::int8_t at(std::size_t t, std::size_t i) const { return level[t * cols + i]; }
  std::int8_t& at(std::size_t t, std::size_t i) { return level[t * cols + i]; }
  bool has(std::size_t t, std::size_t i) const { return at(t, i) >= 0; }
};

/// Momentum-line class for each sample date t, with the line anchored at
/// T = t + anchor_offset and spanning m_{T-s} .. m_T. Cells whose line needs
/// a missing or invalid close stay masked.
inline LevelMatrix label_dataset(const StockPanel& panel, const MomentumConfig& cfg) {
  cfg.validate();
  const std::size_t d = panel.n_dates();
  const std::size_t n = panel.n_tickers();
  const std::size_t s = cfg.length;
  const std::size_t l = cfg.gap;
  LevelMatrix out(d, n);
  std::vector<double> anchors;
  std::vector<std::vector<double>> lines(n);
  std::vector<std::uint8_t> ok(n);
  for (std::size_t t = 0; t < d; ++t) {
    const std::size_t T = t + cfg.anchor_offset;
    if (T >= d || T < s + l) continue;
    anchors.clear();
    for (std::size_t i = 0; i < n; ++i) {
      ok[i] = 0;
      bool all_valid = true;
      for (std::size_t u = T - s - l; u <= T; ++u) all_valid = all_valid && panel.is_valid(u, i);
      if (!all_valid) continue;
      lines[i].resize(s + 1);
      for (std::size_t k = 0; k <= s; ++k) lines[i][k] = panel.close(T - s + k, i) - panel.close(T - s + k - l, i);
      anchors.push_back(lines[i][s]);
      ok[i] = 1;
    }
    if (anchors.empty()) continue;
    double mu = 0.0;
    for (double a : anchors) mu += a;
    mu /= static_cast<double>(anchors.size());
    double ss = 0.0;
    for (double a : anchors) ss += (a - mu) * (a - mu);
    const double eps = cfg.dead_zone + cfg.dead_zone_std_frac * std::sqrt(ss / static_cast<double>(anchors.size()));
    for (std::size_t i = 0; i < n; ++i) {
      if (ok[i]) out.at(t, i) = static_cast<std::int8_t>(classify_line(lines[i], eps));
    }
  }
  return out;
}

/// Binary rise-or-fall label: 1 when y > 0, 0 otherwise (y == 0 is a fall).
inline LevelMatrix rise_fall_label(const ReturnLabel& labels) {
  LevelMatrix out(labels.y.rows(), labels.y.cols());
  for (std::size_t t = 0; t < out.rows; ++t) {
    for (std::size_t i = 0; i < out.cols; ++i) {
      if (labels.has(t, i)) out.at(t, i) = labels.y(t, i) > 0 ? 1 : 0;
    }
  }
  return out;
}

}  // namespace mimstocr

#endif  // MIMSTOCR_MOMENTUM_HPP_
