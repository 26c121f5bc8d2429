#ifndef MIMSTOCR_CQB_HPP_
#define MIMSTOCR_CQB_HPP_

// Converge-based Quad-Balancing and the two-task training loop.
//
// Per trading day: log-loss gradients of both tasks on the shared trunk are
// smoothed by an EMA whose forgetting rate follows each task's relative
// converge rate V, rescaled to a common L2 norm and summed. Heads follow their
// own task's log-loss gradient. Weight decay shrinks as the mean V grows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mimstocr/backbone.hpp"
#include "mimstocr/dataset.hpp"
#include "mimstocr/diffcore.hpp"
#include "mimstocr/error.hpp"
#include "mimstocr/losses.hpp"
#include "mimstocr/metrics.hpp"
#include "mimstocr/rng.hpp"

namespace mimstocr {

inline constexpr double kLogLossEps = 1e-8;

enum class TrainMode {
  kCqb,         // full method
  kEw,          // equal weighting: g = g_r + g_c, no EMA or norm balancing, static decay
  kStl,         // regression task only
  kFixedBeta,   // CQB with a static forgetting rate
  kFixedDecay,  // CQB with a static weight decay
};

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kCqb: return "cqb";
    case TrainMode::kEw: return "ew";
    case TrainMode::kStl: return "stl";
    case TrainMode::kFixedBeta: return "fixed_beta";
    case TrainMode::kFixedDecay: return "fixed_decay";
  }
  return "?";
}

inline TrainMode parse_train_mode(const std::string& s) {
  for (TrainMode m : {TrainMode::kCqb, TrainMode::kEw, TrainMode::kStl, TrainMode::kFixedBeta, TrainMode::kFixedDecay}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown train mode '" + s + "'");
}

enum class OptimizerKind { kAdam, kSgd };

/// kDecoupled shrinks parameters directly (AdamW); kCoupled adds decay * p to
/// the gradient before the moment updates (L2 inside Adam).
enum class DecayStyle { kDecoupled, kCoupled };

struct TrainConfig {
  double learning_rate = 2e-4;
  std::size_t epochs = 100;
  double beta = 0.5;
  double decay = 1e-3;
  std::size_t window_b = 6;
  std::size_t patience = 30;
  TrainMode mode = TrainMode::kCqb;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  DecayStyle decay_style = DecayStyle::kDecoupled;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool shuffle_days = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("train.lr must be > 0");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (!(beta > 0 && beta < 1)) throw ConfigError("train.beta must lie in (0, 1)");
    if (!(decay >= 0)) throw ConfigError("train.decay must be >= 0");
    if (window_b < 1) throw ConfigError("train.b must be >= 1");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1)) {
      throw ConfigError("adam moments must lie in [0, 1)");
    }
  }
};

// ---------------------------------------------------------------------------
// Balancing primitives

inline double sigmoid(double x) { return ad::detail::stable_sigmoid(x); }

/// Concatenated gradient of `grads` over the parameters of group `g`.
inline std::vector<double> group_gradient(const ad::Gradients& grads, const BatchOutput& out,
                                          const BackboneParams& bp, ParamGroup g) {
  std::vector<double> flat;
  flat.reserve(bp.count(g));
  for (std::size_t k = 0; k < bp.params.size(); ++k) {
    if (bp.params[k].group != g) continue;
    const ad::Matrix m = grads.of(out.param_vars[k]);
    flat.insert(flat.end(), m.values().begin(), m.values().end());
  }
  return flat;
}

/// Gradient of log(loss + 1e-8) with respect to each of `params`, concatenated.
inline std::vector<double> log_grad(const ad::Var& loss, std::span<const ad::Var> params) {
  const double l = loss.value().item();
  if (!std::isfinite(l)) throw NumericError("log_grad: loss is not finite");
  if (l < 0) throw ContractError("log_grad: loss must be non-negative");
  const ad::Gradients g = loss.tape().backward(ad::log(loss + kLogLossEps));
  std::vector<double> flat;
  for (const ad::Var& p : params) {
    const ad::Matrix m = g.of(p);
    flat.insert(flat.end(), m.values().begin(), m.values().end());
  }
  return flat;
}

/// ema <- beta * ema + (1 - beta) * g; `first` copies g instead.
inline void ema_update(std::vector<double>& ema, std::span<const double> g, double beta, bool first) {
  if (first) {
    ema.assign(g.begin(), g.end());
    return;
  }
  if (ema.size() != g.size()) throw ShapeError("ema_update: gradient length changed");
  for (std::size_t i = 0; i < g.size(); ++i) ema[i] = beta * ema[i] + (1.0 - beta) * g[i];
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// max(|r|, |c|) * (r / |r| + c / |c|). A task whose norm is <= 1e-12
/// contributes nothing; if both are, the result is zero.
inline std::vector<double> balance_and_aggregate(std::span<const double> r, std::span<const double> c) {
  if (r.size() != c.size()) throw ShapeError("balance_and_aggregate: gradient lengths differ");
  constexpr double kTiny = 1e-12;
  const double nr = l2_norm(r);
  const double nc = l2_norm(c);
  std::vector<double> out(r.size(), 0.0);
  const double scale = std::max(nr, nc);
  if (scale <= kTiny) return out;
  const double wr = nr > kTiny ? scale / nr : 0.0;
  const double wc = nc > kTiny ? scale / nc : 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = wr * r[i] + wc * c[i];
  return out;
}

/// Relative converge rate after `n` recorded epochs (history[0..n-1]), used
/// for epoch n + 1.
///
/// dL = L[n-1] - mean(L[n-2b] .. L[n-b-1]) for each split; V = dL_valid /
/// dL_train with |dL_train| floored at 1e-8 (sign kept, zero counts as
/// positive), clamped to [-5, 5]. V = 1 while n + 1 < 2b. At n + 1 = 2b the
/// window would reach before the first epoch and is cut to what exists.
inline double converge_rate(std::span<const double> train, std::span<const double> valid, std::size_t n,
                            std::size_t b) {
  if (b == 0) throw ContractError("converge_rate window must be >= 1");
  if (n + 1 < 2 * b || n < b + 1) return 1.0;
  if (train.size() < n || valid.size() < n) throw ContractError("converge_rate: history shorter than n");
  const std::size_t lo = n >= 2 * b ? n - 2 * b : 0;
  const std::size_t hi = n - b - 1;
  auto delta = [&](std::span<const double> h) {
    double m = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) m += h[j];
    return h[n - 1] - m / static_cast<double>(hi - lo + 1);
  };
  const double dv = delta(valid);
  double dt = delta(train);
  if (std::abs(dt) < 1e-8) dt = dt < 0 ? -1e-8 : 1e-8;
  return std::clamp(dv / dt, -5.0, 5.0);
}

/// beta^sigmoid(V).
inline double beta_n(double beta, double v) {
  if (!(beta > 0 && beta < 1)) throw ContractError("beta must lie in (0, 1)");
  return std::pow(beta, sigmoid(v));
}

/// decay * sigmoid(-mean(V)).
inline double decay_n(double decay, std::span<const double> v) {
  if (decay < 0) throw ContractError("decay must be >= 0");
  if (v.empty()) return decay * 0.5;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  return decay * sigmoid(-m);
}

// ---------------------------------------------------------------------------
// Optimizer

/// First-order update with decoupled weight decay: Adam (default) or plain
/// gradient steps. One moment pair per parameter tensor.
class Optimizer {
 public:
  Optimizer(const BackboneParams& bp, const TrainConfig& cfg) : cfg_(cfg) {
    for (const auto& p : bp.params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
    steps_.assign(bp.params.size(), 0);
  }

  /// Applies `grad` (concatenated over group `g`, in parameter order).
  void step(BackboneParams& bp, ParamGroup g, std::span<const double> grad, double decay) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < bp.params.size(); ++k) {
      if (bp.params[k].group != g) continue;
      auto values = bp.params[k].value.values();
      if (offset + values.size() > grad.size()) throw ShapeError("optimizer: gradient shorter than parameter group");
      step_tensor(k, values, grad.subspan(offset, values.size()), decay);
      offset += values.size();
    }
    if (offset != grad.size()) throw ShapeError("optimizer: gradient longer than parameter group");
  }

 private:
  void step_tensor(std::size_t k, std::span<double> p, std::span<const double> g, double decay) {
    const double lr = cfg_.learning_rate;
    const bool coupled = cfg_.decay_style == DecayStyle::kCoupled;
    if (cfg_.optimizer == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = p[i] - lr * g[i] - lr * decay * p[i];
      return;
    }
    const auto t = static_cast<double>(++steps_[k]);
    const double b1 = cfg_.adam_beta1;
    const double b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = g[i];
      if (coupled) {
        gi += decay * p[i];
      } else {
        p[i] -= lr * decay * p[i];
      }
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
    }
  }

  TrainConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::vector<std::size_t> steps_;
};

/// Per-task optimizer state carried across iterations and epochs.
struct GradState {
  double beta = 0.5;
  std::size_t window_b = 6;
  std::vector<double> ema_r;
  std::vector<double> ema_c;
  bool started_r = false;
  bool started_c = false;
  double beta_r = 0.5;
  double beta_c = 0.5;
  double v_r = 1.0;
  double v_c = 1.0;
  std::vector<double> train_loss_r, valid_loss_r, train_loss_c, valid_loss_c;

  void update_rates() {
    v_r = converge_rate(train_loss_r, valid_loss_r, train_loss_r.size(), window_b);
    v_c = converge_rate(train_loss_c, valid_loss_c, train_loss_c.size(), window_b);
  }
};

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;  // train | valid
  char task = 'r';    // r | c
  double loss = 0.0;
  double v = 1.0;
  double beta = 0.0;
  double decay = 0.0;
  double ic = 0.0;
  double rank_ic = 0.0;
};

struct SplitEval {
  double loss_r = 0.0;
  double loss_c = 0.0;
  double ic = 0.0;
  double rank_ic = 0.0;
  bool ic_defined = false;
};

struct FitResult {
  BackboneParams params;       // best validation IC
  BackboneParams last_params;  // after the final epoch
  std::vector<EpochRecord> log;
  std::vector<std::size_t> k_values;  // adaptive k of each training day
  std::size_t best_epoch = 0;
  double best_valid_ic = -std::numeric_limits<double>::infinity();
  std::size_t epochs_run = 0;
};

/// Mean per-day task losses and regression-head IC/RankIC over `days`.
inline SplitEval evaluate_split(const BackboneParams& bp, std::span<const DayBatch> days, const LossConfig& loss_cfg,
                                bool with_class = true) {
  SplitEval ev;
  DailyMetrics dm;
  std::size_t counted = 0;
  for (const DayBatch& day : days) {
    ad::Tape tape;
    const BatchOutput out = forward(bp, tape, day.x, {}, false);
    ev.loss_r += mse_loss(out.pred_return, day.target).value().item();
    if (with_class) {
      ev.loss_c += classification_loss(out.class_logits, day.level, loss_cfg, out.pred_return).total.value().item();
    }
    dm.add_day(out.pred_return.value().values(), day.y, {});
    ++counted;
  }
  if (counted > 0) {
    ev.loss_r /= static_cast<double>(counted);
    ev.loss_c /= static_cast<double>(counted);
  }
  const bool any = std::any_of(dm.ic.begin(), dm.ic.end(), [](const auto& v) { return v.has_value(); });
  if (any) {
    ev.ic = summarize(dm.ic).mean;
    ev.rank_ic = summarize(dm.rank_ic).mean;
    ev.ic_defined = true;
  }
  return ev;
}

/// Trains `init` on `train` days, selecting the epoch with the best validation
/// IC and stopping after `patience` epochs without improvement.
inline FitResult fit(std::span<const DayBatch> train, std::span<const DayBatch> valid, BackboneParams init,
                     const TrainConfig& cfg, const LossConfig& loss_cfg) {
  cfg.validate();
  if (train.empty()) throw ContractError("fit: no training days");
  const bool two_task = cfg.mode != TrainMode::kStl;
  const bool adapt_beta = cfg.mode == TrainMode::kCqb || cfg.mode == TrainMode::kFixedDecay;
  const bool adapt_decay = cfg.mode == TrainMode::kCqb || cfg.mode == TrainMode::kFixedBeta;
  const bool balance = cfg.mode != TrainMode::kEw && two_task;

  FitResult res;
  res.params = init;
  BackboneParams& params = init;
  Optimizer opt(params, cfg);
  GradState st;
  st.beta = cfg.beta;
  st.window_b = cfg.window_b;
  CounterRng order_rng(cfg.seed, 21);
  std::vector<std::size_t> order(train.size());
  std::size_t since_best = 0;

  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    const double v_prev[2] = {st.v_r, st.v_c};
    const double decay_e =
        adapt_decay ? decay_n(cfg.decay, std::span<const double>(v_prev, two_task ? 2 : 1)) : cfg.decay;
    st.beta_r = adapt_beta ? beta_n(cfg.beta, st.v_r) : cfg.beta;
    st.beta_c = adapt_beta ? beta_n(cfg.beta, st.v_c) : cfg.beta;

    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    if (cfg.shuffle_days) order_rng.shuffle(order);

    for (std::size_t it = 0; it < order.size(); ++it) {
      const DayBatch& day = train[order[it]];
      ad::Tape tape;
      const BatchOutput out = forward(params, tape, day.x);
      const ad::Var loss_r = mse_loss(out.pred_return, day.target);
      std::optional<ClassificationLoss> loss_c;
      if (two_task) {
        loss_c = classification_loss(out.class_logits, day.level, loss_cfg, out.pred_return);
        if (e == 1) res.k_values.push_back(loss_c->k);
      }
      const double lr_val = loss_r.value().item();
      const double lc_val = loss_c ? loss_c->total.value().item() : 0.0;
      if (!std::isfinite(lr_val) || !std::isfinite(lc_val)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(e) + ", iteration " +
                            std::to_string(it + 1) + " (" + day.date_label + ")");
      }

      const ad::Gradients grads_r = tape.backward(ad::log(loss_r + kLogLossEps));
      const std::vector<double> g_r = group_gradient(grads_r, out, params, ParamGroup::kTrunk);
      std::vector<double> g_shared;
      std::optional<ad::Gradients> grads_c;
      if (!two_task) {
        g_shared = g_r;
      } else {
        grads_c.emplace(tape.backward(ad::log(loss_c->total + kLogLossEps)));
        const std::vector<double> g_c = group_gradient(*grads_c, out, params, ParamGroup::kTrunk);
        if (!balance) {
          g_shared.resize(g_r.size());
          for (std::size_t i = 0; i < g_r.size(); ++i) g_shared[i] = g_r[i] + g_c[i];
        } else {
          ema_update(st.ema_r, g_r, st.beta_r, !st.started_r);
          ema_update(st.ema_c, g_c, st.beta_c, !st.started_c);
          st.started_r = st.started_c = true;
          g_shared = balance_and_aggregate(st.ema_r, st.ema_c);
        }
      }
      opt.step(params, ParamGroup::kTrunk, g_shared, decay_e);
      opt.step(params, ParamGroup::kRegressionHead,
               group_gradient(grads_r, out, params, ParamGroup::kRegressionHead), decay_e);
      if (grads_c) {
        opt.step(params, ParamGroup::kClassificationHead,
                 group_gradient(*grads_c, out, params, ParamGroup::kClassificationHead), decay_e);
      }
    }

    const SplitEval tr = evaluate_split(params, train, loss_cfg, two_task);
    const SplitEval va = evaluate_split(params, valid, loss_cfg, two_task);
    for (const double l : {tr.loss_r, tr.loss_c, va.loss_r, va.loss_c}) {
      if (!std::isfinite(l)) throw TrainingError("non-finite evaluation loss after epoch " + std::to_string(e));
    }
    st.train_loss_r.push_back(tr.loss_r);
    st.valid_loss_r.push_back(va.loss_r);
    st.train_loss_c.push_back(tr.loss_c);
    st.valid_loss_c.push_back(va.loss_c);
    st.update_rates();

    auto row = [&](const char* split, char task, const SplitEval& ev) {
      const bool reg = task == 'r';
      res.log.push_back({e, split, task, reg ? ev.loss_r : ev.loss_c, reg ? st.v_r : st.v_c,
                         reg ? st.beta_r : st.beta_c, decay_e, ev.ic, ev.rank_ic});
    };
    row("train", 'r', tr);
    if (two_task) row("train", 'c', tr);
    row("valid", 'r', va);
    if (two_task) row("valid", 'c', va);
    res.epochs_run = e;

    const double score = va.ic_defined ? va.ic : -std::numeric_limits<double>::infinity();
    if (e == 1 || score > res.best_valid_ic) {
      res.best_valid_ic = score;
      res.best_epoch = e;
      res.params = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  res.last_params = params;
  return res;
}

inline void write_epoch_log(std::ostream& out, std::span<const EpochRecord> log) {
  out << "epoch,split,task,loss,V,beta,decay,ic,rank_ic\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%c,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", r.epoch, r.split.c_str(), r.task,
                  r.loss, r.v, r.beta, r.decay, r.ic, r.rank_ic);
    out << buf;
  }
}

}  // namespace mimstocr

#endif  // MIMSTOCR_CQB_HPP_
