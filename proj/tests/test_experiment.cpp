#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "mimstocr/experiment.hpp"

using namespace mimstocr;

namespace {

ExperimentConfig small() {
  ExperimentConfig c;
  c.synth.n_dates = 120;
  c.synth.n_tickers = 12;
  c.hidden = {8};
  c.sample.window = 5;
  c.train.epochs = 2;
  c.train.learning_rate = 1e-3;
  c.backtest_n = 3;
  c.precision_n = {3, 5};
  c.seed = 4;
  return c;
}

}  // namespace

TEST(Prepare, SplitsAreDisjointAndOrdered) {
  const ExperimentConfig c = small();
  const PreparedData d = prepare(c);
  ASSERT_FALSE(d.train.empty());
  ASSERT_FALSE(d.valid.empty());
  ASSERT_FALSE(d.test.empty());
  EXPECT_LT(d.train.back().date_label, d.valid.front().date_label);
  EXPECT_LT(d.valid.back().date_label, d.test.front().date_label);
}

TEST(Prepare, TooShortPanelThrows) {
  ExperimentConfig c = small();
  c.synth.n_dates = 20;
  c.sample.window = 15;
  EXPECT_THROW(prepare(c), DataError);
}

TEST(Ablation, MatrixNames) {
  const auto cells = ablation_matrix(small());
  std::vector<std::string> names;
  for (const auto& c : cells) names.push_back(c.name);
  EXPECT_EQ(names, (std::vector<std::string>{"MiM-StocR", "EW", "STL", "rise-or-fall", "pair-wise", "fixed-k",
                                             "fixed-beta", "fixed-decay"}));
  EXPECT_EQ(cells[5].cfg.loss.fixed_k, std::optional<std::size_t>(3));
  EXPECT_EQ(cells[3].cfg.sample.classes(), 2u);
}

TEST(Ablation, RunsAndWritesTable) {
  const ExperimentConfig base = small();
  auto cells = ablation_matrix(base);
  cells.resize(2);
  const StockPanel panel = load_panel(base);
  const auto serial = run_ablations(cells, panel, 1);
  const auto parallel = run_ablations(cells, panel, 2);
  std::ostringstream a, b;
  write_ablation_csv(a, serial, base.precision_n);
  write_ablation_csv(b, parallel, base.precision_n);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')),
            "method,ic,rank_ic,ic_std_e3,rank_ic_std_e3,precision_at_3,precision_at_5,cumulative_return,best_epoch,"
            "epochs_run");
  EXPECT_NE(a.str().find("\nEW,"), std::string::npos);
}

TEST(Experiment, EvaluateAndBacktest) {
  const ExperimentConfig c = small();
  const PreparedData d = prepare(c);
  const FitResult fr = train_model(c, d);
  const EvalReport r = evaluate_model(c, d, fr.params);
  EXPECT_EQ(r.days, d.test.size());
  EXPECT_EQ(r.precision_at.size(), 2u);
  std::size_t train_days = 0;
  for (const auto& [k, n] : r.k_histogram) train_days += n;
  EXPECT_EQ(train_days, d.train.size());
  const BacktestLedger l = backtest_model(c, d, fr.params);
  EXPECT_EQ(l.dates.size(), d.test.size());
  for (const auto& h : l.holdings) EXPECT_EQ(h.size(), 3u);
}
