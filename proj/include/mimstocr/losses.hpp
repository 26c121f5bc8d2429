#ifndef MIMSTOCR_LOSSES_HPP_
#define MIMSTOCR_LOSSES_HPP_

// Training objectives: MSE for the return head, and for the class head a
// 50/50 mix of cross-entropy with either the Adaptive-k ApproxNDCG loss or a
// pair-wise hinge.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mimstocr/diffcore.hpp"
#include "mimstocr/error.hpp"

namespace mimstocr {

enum class GainVariant {
  kExp2Minus1,     // 2^w - 1
  kExp2OfWMinus1,  // 2^(w - 1)
};

inline double gain_of(int w, GainVariant v) {
  return v == GainVariant::kExp2Minus1 ? std::exp2(static_cast<double>(w)) - 1.0
                                       : std::exp2(static_cast<double>(w) - 1.0);
}

enum class RankObjective { kApproxNdcg, kPairwise };

/// Which output supplies the ranking score of the class-head NDCG term.
enum class ScoreSource { kExpectedLevel, kRegressionHead };

struct LossConfig {
  double threshold_frac = 0.20;
  std::optional<std::size_t> fixed_k;  // replaces adaptive k when set
  GainVariant gain = GainVariant::kExp2Minus1;
  RankObjective objective = RankObjective::kApproxNdcg;
  ScoreSource score_source = ScoreSource::kExpectedLevel;
  double ce_weight = 0.5;
  double rank_weight = 0.5;
};

/// ceil(frac * n), at least 1.
inline std::size_t threshold_for(std::size_t n, double frac) {
  const auto t = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n) - 1e-12));
  return std::max<std::size_t>(t, 1);
}

/// Adds whole level groups, highest level first, until the running total
/// reaches `threshold`. `sizes_desc` lists |G| from the top level down.
/// A threshold of 0 is treated as 1; if the groups run out, k = n.
inline std::size_t adaptive_k(std::span<const std::size_t> sizes_desc, std::size_t threshold) {
  const std::size_t n = std::accumulate(sizes_desc.begin(), sizes_desc.end(), std::size_t{0});
  if (n == 0) throw ContractError("adaptive_k on an empty batch");
  threshold = std::max<std::size_t>(threshold, 1);
  std::size_t k = 0;
  for (std::size_t g : sizes_desc) {
    k += g;
    if (k >= threshold) return k;
  }
  return n;
}

/// One day's ranking problem for the class head.
struct RankBatch {
  ad::Var scores;                        // n x 1
  std::vector<int> gains;                // label level per stock
  std::array<std::size_t, 5> group_sizes{};  // indexed by level
  std::size_t k = 0;
  std::size_t threshold = 1;
  GainVariant gain = GainVariant::kExp2Minus1;
};

inline RankBatch make_rank_batch(const ad::Var& scores, std::span<const int> levels, const LossConfig& cfg) {
  const std::size_t n = levels.size();
  if (scores.value().shape() != ad::Shape{n, 1}) {
    throw ShapeError("rank batch scores " + scores.value().shape().str() + " do not match " + std::to_string(n) +
                     " labels");
  }
  RankBatch b;
  b.scores = scores;
  b.gains.assign(levels.begin(), levels.end());
  b.gain = cfg.gain;
  for (int w : levels) {
    if (w < 0 || w > 4) throw ContractError("rank label outside 0..4: " + std::to_string(w));
    ++b.group_sizes[static_cast<std::size_t>(w)];
  }
  b.threshold = threshold_for(n, cfg.threshold_frac);
  if (cfg.fixed_k) {
    b.k = std::clamp<std::size_t>(*cfg.fixed_k, 1, n);
  } else {
    const std::array<std::size_t, 5> desc{b.group_sizes[4], b.group_sizes[3], b.group_sizes[2], b.group_sizes[1],
                                          b.group_sizes[0]};
    b.k = adaptive_k(desc, b.threshold);
  }
  return b;
}

/// Smooth rank 1 + sum_{j != i} 1 / (1 + exp(f_i - f_j)) of every item, n x 1.
inline ad::Var approx_rank(const ad::Var& scores) {
  // diff[i][j] = f_j - f_i; the diagonal contributes sigmoid(0) = 0.5.
  const ad::Var diff = ad::transpose(scores) - scores;
  return ad::sum_rows(ad::sigmoid(diff)) + 0.5;
}

inline double approx_rank(std::span<const double> scores, std::size_t i) {
  if (i >= scores.size()) throw ContractError("approx_rank index out of range");
  double r = 1.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (j != i) r += 1.0 / (1.0 + std::exp(scores[i] - scores[j]));
  }
  return r;
}

/// sum over items with rank <= k + 0.5 of gain(w) / log2(1 + rank).
inline double dcg_at_k(std::span<const double> ranks, std::span<const int> gains, std::size_t k,
                       GainVariant v = GainVariant::kExp2Minus1) {
  if (ranks.size() != gains.size()) throw ContractError("dcg_at_k: ranks and gains differ in length");
  if (k > ranks.size()) throw ContractError("dcg_at_k: k exceeds the number of items");
  double s = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] <= static_cast<double>(k) + 0.5) s += gain_of(gains[i], v) / std::log2(1.0 + ranks[i]);
  }
  return s;
}

/// Exact DCG@k of the gain-sorted order (stable on ties).
inline double ideal_dcg_at_k(std::span<const int> gains, std::size_t k, GainVariant v = GainVariant::kExp2Minus1) {
  std::vector<int> sorted(gains.begin(), gains.end());
  std::stable_sort(sorted.begin(), sorted.end(), std::greater<>());
  double s = 0.0;
  for (std::size_t r = 0; r < std::min(k, sorted.size()); ++r) {
    s += gain_of(sorted[r], v) / std::log2(2.0 + static_cast<double>(r));
  }
  return s;
}

namespace detail {

// A day carries no ranking information when every gain is the same.
inline bool uninformative(std::span<const int> gains, std::size_t k, GainVariant v) {
  if (gains.empty()) return true;
  const bool all_equal = std::all_of(gains.begin(), gains.end(), [&](int g) { return g == gains[0]; });
  return all_equal || !(ideal_dcg_at_k(gains, k, v) > 0);
}

}  // namespace detail

/// Smooth DCG@k of the predicted order over the exact ideal DCG@k. Days whose
/// gains are all equal (including all zero) score a constant 1.
inline ad::Var approx_ndcg_at_k(const RankBatch& b) {
  ad::Tape& tape = b.scores.tape();
  const std::size_t n = b.gains.size();
  if (n == 0) throw ContractError("approx_ndcg_at_k on an empty batch");
  if (detail::uninformative(b.gains, b.k, b.gain)) return tape.constant(1.0);
  const double ideal = ideal_dcg_at_k(b.gains, b.k, b.gain);
  const ad::Var ranks = approx_rank(b.scores);
  // Top-k membership is decided on the smooth rank values and held fixed.
  ad::Matrix weight(n, 1);
  const ad::Matrix& rv = ranks.value();
  for (std::size_t i = 0; i < n; ++i) {
    if (rv[i] <= static_cast<double>(b.k) + 0.5) weight[i] = gain_of(b.gains[i], b.gain) * std::numbers::ln2 / ideal;
  }
  return ad::sum(tape.constant(std::move(weight)) / ad::log(ranks + 1.0));
}

/// exp(-ApproxNDCG@k).
inline ad::Var ndcg_loss(const RankBatch& b) { return ad::exp(-approx_ndcg_at_k(b)); }

inline ad::Var mse_loss(const ad::Var& pred, std::span<const double> y) {
  if (pred.value().size() != y.size() || pred.value().cols() != 1) {
    throw ContractError("mse_loss: prediction " + pred.value().shape().str() + " vs " + std::to_string(y.size()) +
                        " targets");
  }
  if (y.empty()) throw ContractError("mse_loss on an empty batch");
  const ad::Var diff = pred - pred.tape().constant(ad::Matrix::column({y.begin(), y.end()}));
  return ad::mean(diff * diff);
}

/// sum over pairs i < j of max(0, -(f_i - f_j)(y_i - y_j)), divided by n^2.
inline ad::Var pairwise_loss(const ad::Var& scores, std::span<const double> y) {
  const std::size_t n = y.size();
  if (n < 2) throw ContractError("pairwise_loss needs at least 2 items");
  if (scores.value().shape() != ad::Shape{n, 1}) throw ShapeError("pairwise_loss: scores do not match labels");
  ad::Matrix neg_label_gap(n, n);
  ad::Matrix upper(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      neg_label_gap(i, j) = -(y[i] - y[j]);
      upper(i, j) = 1.0;
    }
  }
  ad::Tape& tape = scores.tape();
  const ad::Var score_gap = scores - ad::transpose(scores);  // [i][j] = f_i - f_j
  const ad::Var hinge = ad::maximum(score_gap * tape.constant(std::move(neg_label_gap)), tape.constant(0.0));
  return ad::sum(ad::mask(hinge, upper)) / static_cast<double>(n * n);
}

/// Mean negative log-likelihood of integer labels under row-wise softmax.
inline ad::Var cross_entropy(const ad::Var& logits, std::span<const int> labels) {
  const std::size_t n = logits.value().rows();
  const std::size_t c = logits.value().cols();
  if (labels.size() != n) throw ContractError("cross_entropy: labels do not match logits rows");
  if (n == 0) throw ContractError("cross_entropy on an empty batch");
  ad::Matrix onehot(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw ContractError("class label " + std::to_string(labels[i]) + " outside 0.." + std::to_string(c - 1));
    }
    onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return -ad::sum(ad::mask(ad::log_softmax_rows(logits), onehot)) / static_cast<double>(n);
}

/// Expected class index sum_c c * softmax(logits)_c per row, n x 1.
inline ad::Var expected_level(const ad::Var& logits) {
  const std::size_t c = logits.value().cols();
  ad::Matrix levels(c, 1);
  for (std::size_t k = 0; k < c; ++k) levels[k] = static_cast<double>(k);
  return ad::matmul(ad::softmax_rows(logits), logits.tape().constant(std::move(levels)));
}

struct ClassificationLoss {
  ad::Var total;
  ad::Var cross_entropy;
  ad::Var rank_term;
  std::size_t k = 0;
};

/// ce_weight * CE + rank_weight * (NDCG loss or pair-wise hinge). The ranking
/// score is the expected level unless `regression_scores` is supplied and the
/// config asks for the regression head.
inline ClassificationLoss classification_loss(const ad::Var& logits, std::span<const int> labels,
                                              const LossConfig& cfg,
                                              const std::optional<ad::Var>& regression_scores = std::nullopt) {
  ClassificationLoss out;
  out.cross_entropy = cross_entropy(logits, labels);
  ad::Var scores;
  if (cfg.score_source == ScoreSource::kRegressionHead) {
    if (!regression_scores) throw ContractError("regression-head ranking requested without regression scores");
    scores = *regression_scores;
  } else {
    scores = expected_level(logits);
  }
  if (cfg.objective == RankObjective::kApproxNdcg) {
    const RankBatch b = make_rank_batch(scores, labels, cfg);
    out.k = b.k;
    out.rank_term = ndcg_loss(b);
  } else {
    std::vector<double> y(labels.begin(), labels.end());
    out.rank_term = labels.size() >= 2 ? pairwise_loss(scores, y) : logits.tape().constant(0.0);
  }
  out.total = out.cross_entropy * cfg.ce_weight + out.rank_term * cfg.rank_weight;
  return out;
}

}  // namespace mimstocr

#endif  // MIMSTOCR_LOSSES_HPP_
