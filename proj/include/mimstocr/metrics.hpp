#ifndef MIMSTOCR_METRICS_HPP_
#define MIMSTOCR_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mimstocr/error.hpp"

namespace mimstocr {

/// Pearson correlation with population moments. nullopt when n < 2 or either
/// side has zero variance; such days are left out of averages.
inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("pearson: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0) || !(sbb > 0)) return std::nullopt;
  const double r = sab / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

inline std::optional<double> daily_ic(std::span<const double> pred, std::span<const double> y) {
  return pearson(y, pred);
}

/// 1-based ranks; tied values share the average of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t lo = 0; lo < idx.size();) {
    std::size_t hi = lo + 1;
    while (hi < idx.size() && v[idx[hi]] == v[idx[lo]]) ++hi;
    const double avg = 0.5 * static_cast<double>(lo + 1 + hi);
    for (std::size_t k = lo; k < hi; ++k) r[idx[k]] = avg;
    lo = hi;
  }
  return r;
}

inline std::optional<double> daily_rank_ic(std::span<const double> pred, std::span<const double> y) {
  if (pred.size() != y.size()) throw ContractError("daily_rank_ic: length mismatch");
  const auto rp = average_ranks(pred);
  const auto ry = average_ranks(y);
  return pearson(ry, rp);
}

/// Percentage of the top-N stocks by prediction whose realized return is
/// positive. Ties in the prediction keep index order.
inline double precision_at_n(std::span<const double> pred, std::span<const double> y, std::size_t top_n) {
  if (pred.size() != y.size()) throw ContractError("precision_at_n: length mismatch");
  if (top_n == 0 || top_n > pred.size()) {
    throw ContractError("precision_at_n: N=" + std::to_string(top_n) + " with " + std::to_string(pred.size()) +
                        " stocks");
  }
  std::vector<std::size_t> idx(pred.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pred[a] > pred[b]; });
  std::size_t hits = 0;
  for (std::size_t k = 0; k < top_n; ++k) hits += y[idx[k]] > 0 ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(top_n);
}

struct SeriesSummary {
  double mean = 0.0;
  double std = 0.0;  // population std across defined days
  std::size_t days = 0;
};

/// Mean and population std over the defined entries. Throws when none are.
inline SeriesSummary summarize(std::span<const std::optional<double>> per_day) {
  SeriesSummary s;
  double sum = 0.0;
  for (const auto& v : per_day) {
    if (!v) continue;
    sum += *v;
    ++s.days;
  }
  if (s.days == 0) throw ContractError("no defined days to aggregate");
  s.mean = sum / static_cast<double>(s.days);
  double ss = 0.0;
  for (const auto& v : per_day) {
    if (v) ss += (*v - s.mean) * (*v - s.mean);
  }
  s.std = std::sqrt(ss / static_cast<double>(s.days));
  return s;
}

/// Day-averaged evaluation. Standard deviations are scaled by 10^3.
struct EvalReport {
  double ic = 0.0;
  double rank_ic = 0.0;
  double ic_std_e3 = 0.0;
  double rank_ic_std_e3 = 0.0;
  std::size_t days = 0;
  std::map<std::size_t, double> precision_at;  // N -> mean percent
  std::map<std::size_t, std::size_t> k_histogram;
};

/// Per-day metric values to be combined by aggregate().
struct DailyMetrics {
  std::vector<std::optional<double>> ic;
  std::vector<std::optional<double>> rank_ic;
  std::map<std::size_t, std::vector<std::optional<double>>> precision_at;

  /// Adds one day; precision@N is skipped on days with fewer than N stocks.
  void add_day(std::span<const double> pred, std::span<const double> y, std::span<const std::size_t> ns) {
    ic.push_back(daily_ic(pred, y));
    rank_ic.push_back(daily_rank_ic(pred, y));
    for (std::size_t n : ns) {
      auto& col = precision_at[n];
      col.push_back(n <= pred.size() ? std::optional<double>(precision_at_n(pred, y, n)) : std::nullopt);
    }
  }
};

inline EvalReport aggregate(const DailyMetrics& m) {
  if (m.ic.empty()) throw ContractError("aggregate: no days");
  EvalReport r;
  const SeriesSummary ic = summarize(m.ic);
  const SeriesSummary ric = summarize(m.rank_ic);
  r.ic = ic.mean;
  r.ic_std_e3 = ic.std * 1e3;
  r.rank_ic = ric.mean;
  r.rank_ic_std_e3 = ric.std * 1e3;
  r.days = ic.days;
  for (const auto& [n, col] : m.precision_at) {
    const bool any = std::any_of(col.begin(), col.end(), [](const auto& v) { return v.has_value(); });
    if (any) r.precision_at[n] = summarize(col).mean;
  }
  return r;
}

/// Occurrence count of each k value.
inline std::map<std::size_t, std::size_t> record_k(std::span<const std::size_t> ks) {
  std::map<std::size_t, std::size_t> h;
  for (std::size_t k : ks) ++h[k];
  return h;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json p = nlohmann::json::object();
  for (const auto& [n, v] : r.precision_at) p[std::to_string(n)] = v;
  nlohmann::json k = nlohmann::json::object();
  for (const auto& [kv, c] : r.k_histogram) k[std::to_string(kv)] = c;
  return {{"ic", r.ic},
          {"rank_ic", r.rank_ic},
          {"ic_std_e3", r.ic_std_e3},
          {"rank_ic_std_e3", r.rank_ic_std_e3},
          {"days", r.days},
          {"precision_at", p},
          {"k_histogram", k}};
}

}  // namespace mimstocr

#endif  // MIMSTOCR_METRICS_HPP_
