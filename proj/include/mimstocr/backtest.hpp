#ifndef MIMSTOCR_BACKTEST_HPP_
#define MIMSTOCR_BACKTEST_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "mimstocr/error.hpp"
#include "mimstocr/market_data.hpp"

namespace mimstocr {

/// Day-by-day result of a long-only Top-N strategy. balance[k] is the account
/// value after trading day dates[k]; the account starts at 1.0.
struct BacktestLedger {
  std::vector<std::string> dates;
  std::vector<double> balance;
  std::vector<double> daily_return;
  std::vector<std::vector<std::string>> holdings;
};

/// Buys the N best-scored valid stocks in equal weight at each close and sells
/// them at the next close. Scores are NaN where the model has no view; such
/// cells and cells without a next-day return are not candidates. Ties keep
/// ticker order. Each day pays 2 * cost_bps / 1e4 for the round trip.
inline BacktestLedger run_topn(const StockPanel& panel, const Matrix& scores, std::size_t top_n, double cost_bps = 0.0,
                               std::size_t first_date = 0) {
  if (top_n == 0) throw ContractError("run_topn needs N >= 1");
  if (scores.rows() != panel.n_dates() || scores.cols() != panel.n_tickers()) {
    throw ShapeError("score matrix " + scores.shape().str() + " does not match the panel");
  }
  const ReturnLabel ret = compute_return(panel);
  const std::size_t n = panel.n_tickers();
  BacktestLedger ledger;
  double balance = 1.0;
  std::vector<std::size_t> cand;
  for (std::size_t t = first_date; t < panel.n_dates(); ++t) {
    cand.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (ret.has(t, i) && std::isfinite(scores(t, i))) cand.push_back(i);
    }
    if (cand.empty()) continue;
    std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return scores(t, a) > scores(t, b); });
    const std::size_t held = std::min(top_n, cand.size());
    double r = 0.0;
    std::vector<std::string> names;
    names.reserve(held);
    for (std::size_t k = 0; k < held; ++k) {
      r += ret.y(t, cand[k]);
      names.push_back(panel.tickers[cand[k]]);
    }
    r = r / static_cast<double>(held) - 2.0 * cost_bps / 1e4;
    balance *= 1.0 + r;
    ledger.dates.push_back(panel.dates[t]);
    ledger.daily_return.push_back(r);
    ledger.balance.push_back(balance);
    ledger.holdings.push_back(std::move(names));
  }
  return ledger;
}

/// 100 * (final balance - 1); 0 for an empty ledger.
inline double cumulative_return(const BacktestLedger& ledger) {
  if (ledger.balance.empty()) return 0.0;
  return 100.0 * (ledger.balance.back() - 1.0);
}

inline void write_ledger_csv(std::ostream& out, const BacktestLedger& ledger) {
  out << "date,balance,daily_return\n";
  char buf[96];
  for (std::size_t k = 0; k < ledger.dates.size(); ++k) {
    std::snprintf(buf, sizeof buf, ",%.12g,%.12g\n", ledger.balance[k], ledger.daily_return[k]);
    out << ledger.dates[k] << buf;
  }
}

}  // namespace mimstocr

#endif  // MIMSTOCR_BACKTEST_HPP_
