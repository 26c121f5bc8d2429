#ifndef MIMSTOCR_EXPERIMENT_HPP_
#define MIMSTOCR_EXPERIMENT_HPP_

// End-to-end pipeline shared by the CLI and the acceptance suite: data ->
// splits -> day batches -> fit -> evaluation / backtest, plus the ablation
// matrix.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <future>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mimstocr/backbone.hpp"
#include "mimstocr/backtest.hpp"
#include "mimstocr/config.hpp"
#include "mimstocr/cqb.hpp"
#include "mimstocr/dataset.hpp"
#include "mimstocr/losses.hpp"
#include "mimstocr/market_data.hpp"
#include "mimstocr/metrics.hpp"

namespace mimstocr {

struct PreparedData {
  StockPanel panel;
  std::array<StockPanel, 3> splits;  // train, valid, test
  std::vector<DayBatch> train;
  std::vector<DayBatch> valid;
  std::vector<DayBatch> test;  // class labels not required
};

/// Look-back needed before the first sample of a split.
inline std::size_t required_history(const SampleConfig& s) {
  return std::max(s.window - 1, s.momentum.length + s.momentum.gap);
}

inline StockPanel load_panel(const ExperimentConfig& cfg) {
  StockPanel panel;
  if (cfg.data_source == "csv") {
    panel = load_csv(cfg.csv_path);
  } else {
    SyntheticSpec spec = cfg.synth;
    spec.seed = cfg.seed;
    panel = gen_synthetic(spec);
  }
  panel.validate();
  return cfg.normalize ? normalize_features(panel) : panel;
}

inline PreparedData prepare(const ExperimentConfig& cfg, StockPanel panel) {
  PreparedData d;
  d.panel = std::move(panel);
  const SplitSpec spec = SplitSpec::by_fraction(d.panel.n_dates(), cfg.train_frac, cfg.valid_frac);
  d.splits = split(d.panel, spec, required_history(cfg.sample));
  d.train = build_days(d.splits[0], cfg.sample, true);
  d.valid = build_days(d.splits[1], cfg.sample, true);
  d.test = build_days(d.splits[2], cfg.sample, false);
  if (d.train.empty()) throw DataError("training split yields no usable trading days");
  if (d.valid.empty()) throw DataError("validation split yields no usable trading days");
  return d;
}

inline PreparedData prepare(const ExperimentConfig& cfg) { return prepare(cfg, load_panel(cfg)); }

inline ArchSpec arch_for(const ExperimentConfig& cfg, std::size_t n_features) {
  ArchSpec a;
  a.trunk = cfg.trunk;
  a.features = n_features;
  a.window = cfg.sample.window;
  a.hidden = cfg.hidden;
  a.classes = cfg.sample.classes();
  return a;
}

inline FitResult train_model(const ExperimentConfig& cfg, const PreparedData& data) {
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const BackboneParams init = init_backbone(arch_for(cfg, data.panel.n_features), cfg.seed);
  return fit(data.train, data.valid, init, tc, cfg.loss);
}

/// Adaptive k of every labeled day, from labels alone.
inline std::vector<std::size_t> k_values(std::span<const DayBatch> days, const LossConfig& loss) {
  std::vector<std::size_t> ks;
  for (const DayBatch& day : days) {
    ad::Tape tape;
    const ad::Var dummy = tape.constant(ad::Matrix(day.size(), 1));
    ks.push_back(make_rank_batch(dummy, day.level, loss).k);
  }
  return ks;
}

/// IC, RankIC and Precision@N of the regression head on `days`.
inline EvalReport evaluate_days(const BackboneParams& bp, std::span<const DayBatch> days,
                                std::span<const std::size_t> precision_n) {
  DailyMetrics dm;
  for (const DayBatch& day : days) {
    const std::vector<double> pred = predict_returns(bp, day.x);
    dm.add_day(pred, day.y, precision_n);
  }
  return aggregate(dm);
}

inline EvalReport evaluate_model(const ExperimentConfig& cfg, const PreparedData& data, const BackboneParams& bp) {
  EvalReport r = evaluate_days(bp, data.test.empty() ? data.valid : data.test, cfg.precision_n);
  r.k_histogram = record_k(k_values(data.train, cfg.loss));
  return r;
}

/// Regression-head scores for every sample cell of `panel`; NaN elsewhere.
inline Matrix score_panel(const BackboneParams& bp, const StockPanel& panel, const SampleConfig& sample) {
  Matrix scores(panel.n_dates(), panel.n_tickers(), std::numeric_limits<double>::quiet_NaN());
  for (const DayBatch& day : build_days(panel, sample, false)) {
    const std::vector<double> pred = predict_returns(bp, day.x);
    for (std::size_t r = 0; r < day.size(); ++r) scores(day.date, day.stocks[r]) = pred[r];
  }
  return scores;
}

inline BacktestLedger backtest_model(const ExperimentConfig& cfg, const PreparedData& data, const BackboneParams& bp) {
  const StockPanel& test = data.splits[2];
  return run_topn(test, score_panel(bp, test, cfg.sample), cfg.backtest_n, cfg.cost_bps, test.history);
}

/// One row of the ablation table.
struct AblationCell {
  std::string name;
  ExperimentConfig cfg;
};

struct AblationResult {
  std::string name;
  EvalReport report;
  double cumulative_return = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

/// The full method and its seven ablations, all derived from `base`.
inline std::vector<AblationCell> ablation_matrix(const ExperimentConfig& base) {
  std::vector<AblationCell> cells;
  auto with = [&](std::string name, auto edit) {
    ExperimentConfig c = base;
    c.train.mode = TrainMode::kCqb;
    c.sample.task = ClassTask::kMomentum;
    c.loss.objective = RankObjective::kApproxNdcg;
    c.loss.fixed_k.reset();
    edit(c);
    cells.push_back({std::move(name), std::move(c)});
  };
  with("MiM-StocR", [](ExperimentConfig&) {});
  with("EW", [](ExperimentConfig& c) { c.train.mode = TrainMode::kEw; });
  with("STL", [](ExperimentConfig& c) { c.train.mode = TrainMode::kStl; });
  with("rise-or-fall", [](ExperimentConfig& c) { c.sample.task = ClassTask::kRiseFall; });
  with("pair-wise", [](ExperimentConfig& c) { c.loss.objective = RankObjective::kPairwise; });
  with("fixed-k", [](ExperimentConfig& c) { c.loss.fixed_k = c.backtest_n; });
  with("fixed-beta", [](ExperimentConfig& c) { c.train.mode = TrainMode::kFixedBeta; });
  with("fixed-decay", [](ExperimentConfig& c) { c.train.mode = TrainMode::kFixedDecay; });
  return cells;
}

inline AblationResult run_cell(const AblationCell& cell, const StockPanel& panel) {
  const PreparedData data = prepare(cell.cfg, panel);
  const FitResult fr = train_model(cell.cfg, data);
  AblationResult r;
  r.name = cell.name;
  r.report = evaluate_model(cell.cfg, data, fr.params);
  r.cumulative_return = cumulative_return(backtest_model(cell.cfg, data, fr.params));
  r.best_epoch = fr.best_epoch;
  r.epochs_run = fr.epochs_run;
  return r;
}

/// Runs every cell on the same panel, up to `jobs` at a time. Results keep the
/// order of `cells`.
inline std::vector<AblationResult> run_ablations(const std::vector<AblationCell>& cells, const StockPanel& panel,
                                                 std::size_t jobs = 1) {
  std::vector<AblationResult> out(cells.size());
  jobs = std::max<std::size_t>(jobs, 1);
  for (std::size_t start = 0; start < cells.size(); start += jobs) {
    std::vector<std::future<AblationResult>> running;
    const std::size_t stop = std::min(cells.size(), start + jobs);
    for (std::size_t k = start; k < stop; ++k) {
      running.push_back(std::async(std::launch::async, [&, k] { return run_cell(cells[k], panel); }));
    }
    for (std::size_t k = start; k < stop; ++k) out[k] = running[k - start].get();
  }
  return out;
}

inline void write_ablation_csv(std::ostream& out, const std::vector<AblationResult>& rows,
                               std::span<const std::size_t> precision_n) {
  out << "method,ic,rank_ic,ic_std_e3,rank_ic_std_e3";
  for (std::size_t n : precision_n) out << ",precision_at_" << n;
  out << ",cumulative_return,best_epoch,epochs_run\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out << r.name << ',' << num(r.report.ic) << ',' << num(r.report.rank_ic) << ',' << num(r.report.ic_std_e3) << ','
        << num(r.report.rank_ic_std_e3);
    for (std::size_t n : precision_n) {
      const auto it = r.report.precision_at.find(n);
      out << ',' << (it == r.report.precision_at.end() ? std::string("nan") : num(it->second));
    }
    out << ',' << num(r.cumulative_return) << ',' << r.best_epoch << ',' << r.epochs_run << '\n';
  }
}

}  // namespace mimstocr

#endif  // MIMSTOCR_EXPERIMENT_HPP_
