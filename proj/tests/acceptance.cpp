// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any
// criterion fails. Every tolerance and scenario parameter is fixed here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mimstocr/experiment.hpp"

using namespace mimstocr;
namespace fs = std::filesystem;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<double> normals(CounterRng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal() * scale;
  return v;
}

// Folds an (n*c) x 1 point into n x c logits, row-major.
Var fold(Tape& t, const Var& x, std::size_t n, std::size_t c) {
  Matrix sel(n, n * c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) sel(i, i * c + k) = 1.0;
  }
  Matrix pick(n * c, c);
  for (std::size_t k = 0; k < n * c; ++k) pick(k, k % c) = 1.0;
  return ad::matmul(t.constant(sel), ad::mask(ad::matmul(x, t.constant(Matrix(1, c, 1.0))), pick));
}

// ---------------------------------------------------------------------------

Outcome ac1_gradients() {
  constexpr int kPoints = 25;
  constexpr std::size_t kN = 8;
  constexpr double kTol = 1e-4;
  constexpr double kMaxSeconds = 10.0;
  const auto t0 = std::chrono::steady_clock::now();
  CounterRng rng(101);
  double worst[4] = {0, 0, 0, 0};
  for (int p = 0; p < kPoints; ++p) {
    const std::vector<double> y = normals(rng, kN, 1.0);
    std::vector<int> labels(kN);
    for (int& l : labels) l = static_cast<int>(rng.below(5));
    labels[0] = 4;
    labels[1] = 0;
    const std::vector<double> scores = normals(rng, kN, 2.0);
    const std::vector<double> logits = normals(rng, kN * 5, 1.0);
    LossConfig lc;

    worst[0] = std::max(worst[0], ad::check_gradient([&](Tape&, const Var& x) { return mse_loss(x, y); }, scores));
    worst[1] = std::max(worst[1], ad::check_gradient(
                                      [&](Tape& t, const Var& x) { return cross_entropy(fold(t, x, kN, 5), labels); },
                                      logits));
    worst[2] = std::max(worst[2],
                        ad::check_gradient([&](Tape&, const Var& x) { return pairwise_loss(x, y); }, scores));
    worst[3] = std::max(worst[3], ad::check_gradient(
                                      [&](Tape&, const Var& x) { return ndcg_loss(make_rank_batch(x, labels, lc)); },
                                      scores));
  }
  const double secs = seconds_since(t0);
  const double w = *std::max_element(std::begin(worst), std::end(worst));
  return {w < kTol && secs < kMaxSeconds, "max rel err mse " + num(worst[0]) + " ce " + num(worst[1]) + " pairwise " +
                                              num(worst[2]) + " ndcg " + num(worst[3]) + ", " + num(secs) + " s"};
}

Outcome ac2_adaptive_k() {
  constexpr int kVectors = 1000;
  CounterRng rng(202);
  int mismatches = 0;
  int splits = 0;
  for (int v = 0; v < kVectors; ++v) {
    std::vector<std::size_t> sizes(5);
    std::size_t n = 0;
    do {
      n = 0;
      for (auto& s : sizes) n += (s = rng.below(101));
    } while (n == 0);
    const std::size_t threshold = 1 + rng.below(200);
    // Oracle: every prefix total, smallest one reaching the threshold, else n.
    std::vector<std::size_t> prefixes;
    std::size_t run = 0;
    for (std::size_t s : sizes) prefixes.push_back(run += s);
    std::size_t expect = n;
    for (std::size_t p : prefixes) {
      if (p >= threshold) {
        expect = p;
        break;
      }
    }
    const std::size_t k = adaptive_k(sizes, threshold);
    mismatches += k != expect;
    splits += std::find(prefixes.begin(), prefixes.end(), k) == prefixes.end();
  }
  return {mismatches == 0 && splits == 0,
          std::to_string(mismatches) + " mismatches, " + std::to_string(splits) + " split groups"};
}

Outcome ac3_ndcg_fidelity() {
  constexpr int kDays = 500;
  constexpr std::size_t kN = 20;
  constexpr double kGap = 10.0;
  constexpr double kTol = 0.05;
  constexpr double kIdealFloor = 0.99;
  CounterRng rng(303);
  LossConfig lc;
  double worst_gap = 0.0;
  double worst_ideal = 1.0;
  for (int d = 0; d < kDays; ++d) {
    std::vector<int> gains(kN);
    for (int& g : gains) g = static_cast<int>(rng.below(5));
    std::vector<std::size_t> order(kN);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<double> scores(kN);
    for (std::size_t r = 0; r < kN; ++r) scores[order[r]] = kGap * static_cast<double>(kN - r) + rng.uniform() * 0.5;

    auto smooth = [&](const std::vector<double>& s) {
      Tape t;
      const RankBatch b = make_rank_batch(t.constant(Matrix::column(s)), gains, lc);
      return std::pair{approx_ndcg_at_k(b).value().item(), b.k};
    };
    const auto [approx, k] = smooth(scores);
    // exact: integer ranks of the score order
    std::vector<double> ranks(kN);
    for (std::size_t r = 0; r < kN; ++r) ranks[order[r]] = static_cast<double>(r + 1);
    const bool flat = std::all_of(gains.begin(), gains.end(), [&](int g) { return g == gains[0]; });
    const double exact = flat ? 1.0 : dcg_at_k(ranks, gains, k) / ideal_dcg_at_k(gains, k);
    worst_gap = std::max(worst_gap, std::abs(approx - exact));

    std::vector<std::size_t> by_gain(kN);
    std::iota(by_gain.begin(), by_gain.end(), 0);
    std::stable_sort(by_gain.begin(), by_gain.end(), [&](std::size_t a, std::size_t b) { return gains[a] > gains[b]; });
    std::vector<double> ideal_scores(kN);
    for (std::size_t r = 0; r < kN; ++r) ideal_scores[by_gain[r]] = kGap * static_cast<double>(kN - r);
    worst_ideal = std::min(worst_ideal, smooth(ideal_scores).first);
  }
  return {worst_gap < kTol && worst_ideal >= kIdealFloor,
          "max |smooth - exact| " + num(worst_gap) + ", min ideal " + num(worst_ideal)};
}

Outcome ac4_rank_sum() {
  constexpr int kVectors = 1000;
  constexpr double kTol = 1e-9;
  CounterRng rng(404);
  double worst = 0.0;
  for (int v = 0; v < kVectors; ++v) {
    const std::size_t n = 1 + rng.below(60);
    Tape t;
    const Var r = approx_rank(t.constant(Matrix::column(normals(rng, n, 3.0))));
    double s = 0.0;
    for (double x : r.value().values()) s += x;
    const double nn = static_cast<double>(n);
    worst = std::max(worst, std::abs(s - nn * (nn + 1) / 2));
  }
  return {worst <= kTol, "max deviation " + num(worst)};
}

Outcome ac5_cqb_mechanics() {
  constexpr double kBeta = 0.5;
  constexpr double kSqrtTol = 1e-12;
  constexpr double kNormTol = 1e-9;
  bool range_ok = true;
  bool monotone = true;
  double prev = 2.0;
  for (int s = -50; s <= 50; ++s) {
    const double b = beta_n(kBeta, s / 10.0);
    range_ok = range_ok && b > kBeta && b < 1.0;
    monotone = monotone && b < prev;
    prev = b;
  }
  const double sqrt_err = std::abs(beta_n(kBeta, 0.0) - std::sqrt(kBeta));

  // With c orthogonal to r the two scaled parts are the projections of the
  // aggregate onto r and c.
  CounterRng rng(505);
  double norm_err = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t dim = 2 + rng.below(30);
    std::vector<double> r = normals(rng, dim, std::exp(rng.normal() * 2));
    std::vector<double> c = normals(rng, dim, std::exp(rng.normal() * 2));
    const double rr = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
    const double rc = std::inner_product(r.begin(), r.end(), c.begin(), 0.0);
    for (std::size_t i = 0; i < dim; ++i) c[i] -= rc / rr * r[i];
    const double nr = l2_norm(r);
    const double nc = l2_norm(c);
    const std::vector<double> g = balance_and_aggregate(r, c);
    const double along_r = std::inner_product(g.begin(), g.end(), r.begin(), 0.0) / nr;
    const double along_c = std::inner_product(g.begin(), g.end(), c.begin(), 0.0) / nc;
    const double target = std::max(nr, nc);
    norm_err = std::max({norm_err, std::abs(along_r - target) / target, std::abs(along_c - target) / target});
  }
  bool decay_ok = true;
  for (double decay : {1e-3, 0.5, 3.0, 0.0}) {
    decay_ok = decay_ok && decay_n(decay, std::vector<double>{0.0, 0.0}) == decay / 2;
    decay_ok = decay_ok && decay_n(decay, std::vector<double>{-1.5, 1.5}) == decay / 2;
  }
  return {range_ok && monotone && sqrt_err <= kSqrtTol && norm_err <= kNormTol && decay_ok,
          std::string("range ") + (range_ok ? "ok" : "bad") + ", monotone " + (monotone ? "ok" : "bad") +
              ", |beta_n(0) - sqrt(beta)| " + num(sqrt_err) + ", norm rel err " + num(norm_err) + ", decay/2 " +
              (decay_ok ? "exact" : "off")};
}

Outcome ac6_ew_equivalence() {
  constexpr std::size_t kDays = 3;
  constexpr std::size_t kStocks = 5;
  constexpr double kTol = 1e-9;
  CounterRng rng(606);
  std::vector<DayBatch> days;
  for (std::size_t d = 0; d < kDays; ++d) {
    DayBatch b;
    b.date = d;
    b.date_label = "day" + std::to_string(d);
    b.x = Matrix(kStocks, 2);
    for (double& v : b.x.values()) v = rng.normal();
    for (std::size_t i = 0; i < kStocks; ++i) {
      b.stocks.push_back(i);
      b.y.push_back(rng.normal() * 0.02);
      b.level.push_back(static_cast<int>(rng.below(5)));
    }
    b.target = b.y;
    detail::zscore(b.target);
    days.push_back(std::move(b));
  }
  ArchSpec arch;
  arch.features = 2;
  arch.window = 1;
  arch.hidden = {3};
  const BackboneParams init = init_backbone(arch, 9);
  TrainConfig tc;
  tc.mode = TrainMode::kEw;
  tc.epochs = 1;
  tc.shuffle_days = false;
  tc.learning_rate = 1e-2;
  tc.decay = 1e-2;
  const LossConfig lc;
  const FitResult fr = fit(days, days, init, tc, lc);

  // Reference: plain joint training with log losses and AdamW, written out.
  BackboneParams ref = init;
  std::vector<std::vector<double>> m, v;
  for (const auto& p : ref.params) {
    m.emplace_back(p.value.size(), 0.0);
    v.emplace_back(p.value.size(), 0.0);
  }
  for (std::size_t step = 1; step <= kDays; ++step) {
    const DayBatch& day = days[step - 1];
    Tape tape;
    const BatchOutput out = forward(ref, tape, day.x);
    const Var lr_loss = mse_loss(out.pred_return, day.target);
    const Var lc_loss = cross_entropy(out.class_logits, day.level) * 0.5 +
                        ndcg_loss(make_rank_batch(expected_level(out.class_logits), day.level, lc)) * 0.5;
    const ad::Gradients gr = tape.backward(ad::log(lr_loss + 1e-8));
    const ad::Gradients gc = tape.backward(ad::log(lc_loss + 1e-8));
    for (std::size_t k = 0; k < ref.params.size(); ++k) {
      auto& p = ref.params[k];
      const Matrix a = gr.of(out.param_vars[k]);
      const Matrix b = gc.of(out.param_vars[k]);
      const double t = static_cast<double>(step);
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        double g = 0.0;
        if (p.group == ParamGroup::kTrunk) g = a[i] + b[i];
        if (p.group == ParamGroup::kRegressionHead) g = a[i];
        if (p.group == ParamGroup::kClassificationHead) g = b[i];
        double& w = p.value[i];
        w -= tc.learning_rate * tc.decay * w;
        m[k][i] = 0.9 * m[k][i] + 0.1 * g;
        v[k][i] = 0.999 * v[k][i] + 0.001 * g * g;
        const double mh = m[k][i] / (1 - std::pow(0.9, t));
        const double vh = v[k][i] / (1 - std::pow(0.999, t));
        w -= tc.learning_rate * mh / (std::sqrt(vh) + 1e-8);
      }
    }
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < ref.params.size(); ++k) {
    for (std::size_t i = 0; i < ref.params[k].value.size(); ++i) {
      worst = std::max(worst, std::abs(ref.params[k].value[i] - fr.last_params.params[k].value[i]));
    }
  }
  return {worst <= kTol, "max parameter difference " + num(worst)};
}

ExperimentConfig planted_config(TrainMode mode) {
  ExperimentConfig c;
  c.synth.n_dates = 250;
  c.synth.n_tickers = 50;
  c.synth.signal_strength = 0.6;
  c.seed = 17;
  c.train.epochs = 50;
  c.train.mode = mode;
  c.validate();
  return c;
}

Outcome ac7_planted_signal() {
  constexpr double kIcFloor = 0.10;
  constexpr double kRankIcFloor = 0.10;
  constexpr double kStlFloor = 0.08;
  constexpr double kMaxSeconds = 300.0;
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cqb = planted_config(TrainMode::kCqb);
  const PreparedData data = prepare(cqb);
  const EvalReport r = evaluate_model(cqb, data, train_model(cqb, data).params);
  const double secs = seconds_since(t0);
  const ExperimentConfig stl = planted_config(TrainMode::kStl);
  const EvalReport s = evaluate_model(stl, data, train_model(stl, data).params);
  return {r.ic >= kIcFloor && r.rank_ic >= kRankIcFloor && s.ic >= kStlFloor && secs < kMaxSeconds,
          "IC " + num(r.ic) + " RankIC " + num(r.rank_ic) + " STL IC " + num(s.ic) + ", " + num(secs) + " s"};
}

Outcome ac8_overfitting() {
  constexpr int kSeeds = 5;
  constexpr std::size_t kEpochs = 60;
  constexpr double kSlack = 1.05;
  double cqb_last = 0, ew_min = 0, cqb_rebound = 0, ew_rebound = 0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    for (TrainMode mode : {TrainMode::kCqb, TrainMode::kEw}) {
      ExperimentConfig c;
      c.synth.n_dates = 200;
      c.synth.n_tickers = 40;
      c.synth.signal_strength = 0.3;
      c.synth.shift_at = 120;  // first validation date under the 0.6 / 0.2 split
      c.synth.shifted_strength = 0.2;
      c.train.epochs = kEpochs;
      c.train.patience = kEpochs;
      c.train.mode = mode;
      c.seed = static_cast<std::uint64_t>(seed);
      const PreparedData data = prepare(c);
      const FitResult fr = train_model(c, data);
      std::vector<double> loss;
      for (const auto& row : fr.log) {
        if (row.split == "valid" && row.task == 'r') loss.push_back(row.loss);
      }
      const auto lo = std::min_element(loss.begin(), loss.end());
      const double rebound = *std::max_element(lo, loss.end()) - *lo;
      if (mode == TrainMode::kCqb) {
        cqb_last += loss.back() / kSeeds;
        cqb_rebound += rebound / kSeeds;
      } else {
        ew_min += *lo / kSeeds;
        ew_rebound += rebound / kSeeds;
      }
    }
  }
  return {cqb_last <= kSlack * ew_min && cqb_rebound < ew_rebound,
          "CQB epoch-60 valid loss " + num(cqb_last) + " vs EW min " + num(ew_min) + " (x1.05 " +
              num(kSlack * ew_min) + "), rebound CQB " + num(cqb_rebound) + " vs EW " + num(ew_rebound)};
}

Outcome ac9_metrics() {
  CounterRng rng(909);
  bool ok = true;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 3 + rng.below(40);
    std::vector<double> y = normals(rng, n, 0.02);
    std::vector<double> ex(n);
    std::transform(y.begin(), y.end(), ex.begin(), [](double v) { return std::exp(v * 50); });
    ok = ok && daily_ic(y, y).value_or(0) == 1.0;
    ok = ok && daily_rank_ic(ex, y).value_or(0) == 1.0;
    const double positive = static_cast<double>(std::count_if(y.begin(), y.end(), [](double v) { return v > 0; }));
    ok = ok && precision_at_n(ex, y, n) == 100.0 * positive / static_cast<double>(n);
  }
  const std::vector<double> y{1, 2, 3};
  const std::vector<double> pred{1, 3, 2};
  const double ic = daily_ic(pred, y).value_or(0);
  return {ok && ic == 0.5, std::string("identities ") + (ok ? "exact" : "inexact") + ", IC([1,3,2],[1,2,3]) " + num(ic)};
}

Outcome ac10_backtest() {
  constexpr double kIndexTol = 1e-12;
  constexpr int kRuns = 20;
  constexpr int kNeeded = 18;
  constexpr std::size_t kTopN = 5;
  // constant prices
  StockPanel flat = gen_synthetic(60, 12, 0.5, 1);
  for (double& c : flat.close.values()) c = 42.0;
  const Matrix any_scores(flat.n_dates(), flat.n_tickers(), 0.0);
  const double flat_cum = cumulative_return(run_topn(flat, any_scores, kTopN));

  // whole pool equal weight against the index computed from closes
  const StockPanel p = gen_synthetic(80, 15, 0.5, 2);
  CounterRng rng(1010);
  Matrix noise(p.n_dates(), p.n_tickers());
  for (double& v : noise.values()) v = rng.normal();
  const BacktestLedger pool = run_topn(p, noise, p.n_tickers());
  double index = 1.0;
  double index_err = 0.0;
  for (std::size_t t = 0; t + 1 < p.n_dates(); ++t) {
    double r = 0.0;
    for (std::size_t i = 0; i < p.n_tickers(); ++i) r += p.close(t + 1, i) / p.close(t, i) - 1.0;
    index *= 1.0 + r / static_cast<double>(p.n_tickers());
    index_err = std::max(index_err, std::abs(index - pool.balance[t]));
  }
  const bool pool_len = pool.balance.size() == p.n_dates() - 1;

  int wins = 0;
  for (int run = 0; run < kRuns; ++run) {
    const StockPanel s = gen_synthetic(120, 30, 0.5, 100 + static_cast<std::uint64_t>(run));
    const ReturnLabel ret = compute_return(s);
    Matrix foresight(s.n_dates(), s.n_tickers(), std::nan(""));
    Matrix random(s.n_dates(), s.n_tickers(), std::nan(""));
    CounterRng r(500 + static_cast<std::uint64_t>(run));
    for (std::size_t t = 0; t < s.n_dates(); ++t) {
      for (std::size_t i = 0; i < s.n_tickers(); ++i) {
        if (!ret.has(t, i)) continue;
        foresight(t, i) = ret.y(t, i);
        random(t, i) = r.uniform();
      }
    }
    wins += cumulative_return(run_topn(s, foresight, kTopN)) > cumulative_return(run_topn(s, random, kTopN));
  }
  return {flat_cum == 0.0 && pool_len && index_err <= kIndexTol && wins >= kNeeded,
          "constant-price return " + num(flat_cum) + ", index gap " + num(index_err) + ", foresight wins " +
              std::to_string(wins) + "/" + std::to_string(kRuns)};
}

Outcome ac11_momentum() {
  constexpr std::size_t kLen = 7;  // s = 6
  auto oracle = [](const std::vector<int>& signs) {
    const bool all_pos = std::all_of(signs.begin(), signs.end(), [](int s) { return s > 0; });
    const bool all_neg = std::all_of(signs.begin(), signs.end(), [](int s) { return s < 0; });
    int first = 0, last = 0;
    for (int s : signs) {
      if (s != 0 && first == 0) first = s;
      if (s != 0) last = s;
    }
    if (all_pos) return MomentumClass::kPositive;
    if (all_neg) return MomentumClass::kNegative;
    if (first == -1 && last == 1) return MomentumClass::kBounce;
    if (first == 1 && last == -1) return MomentumClass::kSink;
    return MomentumClass::kVolatile;
  };
  auto mirror = [](MomentumClass c) {
    switch (c) {
      case MomentumClass::kBounce: return MomentumClass::kSink;
      case MomentumClass::kSink: return MomentumClass::kBounce;
      case MomentumClass::kPositive: return MomentumClass::kNegative;
      case MomentumClass::kNegative: return MomentumClass::kPositive;
      default: return c;
    }
  };
  int patterns = 0, mismatches = 0, asymmetric = 0;
  std::vector<int> signs(kLen);
  std::vector<double> line(kLen), neg(kLen), scaled(kLen);
  for (int code = 0; code < 2187; ++code) {
    int c = code;
    for (std::size_t j = 0; j < kLen; ++j, c /= 3) signs[j] = c % 3 - 1;
    for (std::size_t j = 0; j < kLen; ++j) {
      line[j] = signs[j];
      neg[j] = -signs[j];
      scaled[j] = signs[j] * (1.0 + 0.1 * static_cast<double>(j));  // |v| > eps = 0.5 off zero
    }
    const MomentumClass want = oracle(signs);
    mismatches += classify_line(line, 0.0) != want;
    mismatches += classify_line(scaled, 0.5) != want;
    asymmetric += classify_line(neg, 0.0) != mirror(classify_line(line, 0.0));
    ++patterns;
  }
  return {mismatches == 0 && asymmetric == 0, std::to_string(patterns) + " patterns, " + std::to_string(mismatches) +
                                                  " oracle mismatches, " + std::to_string(asymmetric) +
                                                  " symmetry failures"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome ac12_determinism() {
  const fs::path work = fs::current_path() / "acceptance_work";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string base = std::string("\"") + MIMSTOCR_CLI +
                           "\" train --set synth.dates=120 --set synth.tickers=20 --set train.epochs=3"
                           " --set seed=5";
  int rc = 0;
  for (const char* run : {"a", "b"}) {
    const fs::path d = work / run;
    const std::string cmd = base + " --checkpoint \"" + (d / "ckpt.json").string() + "\" --log \"" +
                            (d / "epochs.csv").string() + "\" 2>/dev/null";
    rc |= std::system(cmd.c_str());
  }
  const std::string a = slurp(work / "a" / "epochs.csv");
  const std::string b = slurp(work / "b" / "epochs.csv");
  const bool same_ckpt = slurp(work / "a" / "ckpt.json") == slurp(work / "b" / "ckpt.json");
  return {rc == 0 && !a.empty() && a == b && same_ckpt,
          "exit " + std::to_string(rc) + ", log " + std::to_string(a.size()) + " bytes, logs " +
              (a == b ? "identical" : "differ") + ", checkpoints " + (same_ckpt ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {"AC1", "gradient correctness", ac1_gradients},
      {"AC2", "adaptive-k oracle", ac2_adaptive_k},
      {"AC3", "ApproxNDCG fidelity", ac3_ndcg_fidelity},
      {"AC4", "rank-sum identity", ac4_rank_sum},
      {"AC5", "CQB mechanics", ac5_cqb_mechanics},
      {"AC6", "EW epoch equivalence", ac6_ew_equivalence},
      {"AC7", "planted-signal learning", ac7_planted_signal},
      {"AC8", "overfitting mitigation under shift", ac8_overfitting},
      {"AC9", "metric identities", ac9_metrics},
      {"AC10", "backtest identities", ac10_backtest},
      {"AC11", "momentum labeler oracle", ac11_momentum},
      {"AC12", "determinism", ac12_determinism},
  };
  // Optional filter: run only the listed ids.
  std::vector<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
