#ifndef MIMSTOCR_DATASET_HPP_
#define MIMSTOCR_DATASET_HPP_

// Turns a panel into per-day cross-sections: one mini-batch per trading day.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mimstocr/diffcore.hpp"
#include "mimstocr/error.hpp"
#include "mimstocr/market_data.hpp"
#include "mimstocr/momentum.hpp"

namespace mimstocr {

enum class ClassTask { kMomentum, kRiseFall };

struct SampleConfig {
  std::size_t window = 20;
  // Train the return head on the per-day z-score of y rather than raw y.
  bool standardize_target = true;
  ClassTask task = ClassTask::kMomentum;
  MomentumConfig momentum;

  std::size_t classes() const { return task == ClassTask::kMomentum ? kMomentumLevels : 2; }
};

struct DayBatch {
  std::size_t date = 0;  // row in the source panel
  std::string date_label;
  std::vector<std::size_t> stocks;  // ticker columns in the source panel
  ad::Matrix x;                     // stocks x (window * features), oldest day first
  std::vector<double> y;            // realized one-day return ratio
  std::vector<double> target;       // regression target
  std::vector<int> level;           // class label, -1 when unlabeled

  std::size_t size() const { return stocks.size(); }
};

/// Class labels for a panel according to the configured task.
inline LevelMatrix class_labels(const StockPanel& panel, const SampleConfig& cfg) {
  return cfg.task == ClassTask::kMomentum ? label_dataset(panel, cfg.momentum) : rise_fall_label(compute_return(panel));
}

/// One batch per sample date t >= max(history, window - 1). A stock enters
/// when it is valid across the whole feature window, has a defined return
/// and, if `require_label`, a class label. Days with fewer than 2 stocks are
/// dropped.
inline std::vector<DayBatch> build_days(const StockPanel& panel, const SampleConfig& cfg, bool require_label = true) {
  if (cfg.window == 0) throw ConfigError("window must be >= 1");
  std::vector<DayBatch> days;
  if (panel.n_dates() < 2) return days;
  const ReturnLabel ret = compute_return(panel);
  const LevelMatrix labels = class_labels(panel, cfg);
  const std::size_t nf = panel.n_features;
  const std::size_t width = cfg.window * nf;
  const std::size_t start = std::max(panel.history, cfg.window - 1);
  for (std::size_t t = start; t < panel.n_dates(); ++t) {
    DayBatch day;
    day.date = t;
    day.date_label = panel.dates[t];
    for (std::size_t i = 0; i < panel.n_tickers(); ++i) {
      if (!ret.has(t, i)) continue;
      if (require_label && !labels.has(t, i)) continue;
      bool ok = true;
      for (std::size_t u = t + 1 - cfg.window; u <= t && ok; ++u) ok = panel.is_valid(u, i);
      if (ok) day.stocks.push_back(i);
    }
    if (day.stocks.size() < 2) continue;
    day.x = ad::Matrix(day.stocks.size(), width);
    for (std::size_t r = 0; r < day.stocks.size(); ++r) {
      const std::size_t i = day.stocks[r];
      for (std::size_t w = 0; w < cfg.window; ++w) {
        const std::size_t u = t + 1 - cfg.window + w;
        for (std::size_t f = 0; f < nf; ++f) day.x(r, w * nf + f) = panel.feature(u, i, f);
      }
      day.y.push_back(ret.y(t, i));
      day.level.push_back(labels.at(t, i));
    }
    day.target = day.y;
    if (cfg.standardize_target) detail::zscore(day.target);
    days.push_back(std::move(day));
  }
  return days;
}

}  // namespace mimstocr

#endif  // MIMSTOCR_DATASET_HPP_
