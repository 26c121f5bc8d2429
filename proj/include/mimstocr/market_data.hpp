#ifndef MIMSTOCR_MARKET_DATA_HPP_
#define MIMSTOCR_MARKET_DATA_HPP_

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mimstocr/diffcore.hpp"
#include "mimstocr/error.hpp"
#include "mimstocr/rng.hpp"

namespace mimstocr {

using ad::Matrix;

/// Date x ticker panel of closes, per-cell feature vectors and a validity mask.
///
/// The first `history` dates are look-back context only: they feed feature
/// windows and momentum lines but never become samples. split() uses this so
/// that a validation panel can look into the past without owning those dates.
struct StockPanel {
  std::vector<std::string> dates;
  std::vector<std::string> tickers;
  Matrix close;                     // dates x tickers
  std::size_t n_features = 0;
  std::vector<double> features;     // [date][ticker][feature]
  std::vector<std::uint8_t> valid;  // dates x tickers
  std::size_t history = 0;

  std::size_t n_dates() const { return dates.size(); }
  std::size_t n_tickers() const { return tickers.size(); }

  bool is_valid(std::size_t t, std::size_t i) const { return valid[t * n_tickers() + i] != 0; }
  double feature(std::size_t t, std::size_t i, std::size_t f) const {
    return features[(t * n_tickers() + i) * n_features + f];
  }
  double& feature(std::size_t t, std::size_t i, std::size_t f) {
    return features[(t * n_tickers() + i) * n_features + f];
  }

  /// Throws DataError when a structural invariant is broken.
  void validate() const {
    const std::size_t d = n_dates();
    const std::size_t n = n_tickers();
    if (close.rows() != d || close.cols() != n) throw DataError("close matrix does not match dates x tickers");
    if (valid.size() != d * n) throw DataError("valid mask does not match dates x tickers");
    if (features.size() != d * n * n_features) throw DataError("feature tensor does not match dates x tickers x F");
    if (history > d) throw DataError("history prefix longer than the panel");
    for (std::size_t t = 1; t < d; ++t) {
      if (!(dates[t - 1] < dates[t])) throw DataError("dates not strictly increasing at " + dates[t]);
    }
    for (std::size_t t = 0; t < d; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!is_valid(t, i)) continue;
        if (!(close(t, i) > 0) || !std::isfinite(close(t, i))) {
          throw DataError("non-positive close at " + dates[t] + "/" + tickers[i]);
        }
        for (std::size_t f = 0; f < n_features; ++f) {
          if (!std::isfinite(feature(t, i, f))) {
            throw DataError("non-finite feature f" + std::to_string(f) + " at " + dates[t] + "/" + tickers[i]);
          }
        }
      }
    }
  }
};

/// One-day return ratio y[t][i] = (close[t+1][i] - close[t][i]) / close[t][i].
/// Undefined cells hold NaN and have defined == 0.
struct ReturnLabel {
  Matrix y;
  std::vector<std::uint8_t> defined;

  bool has(std::size_t t, std::size_t i) const { return defined[t * y.cols() + i] != 0; }
};

inline ReturnLabel compute_return(const StockPanel& panel) {
  const std::size_t d = panel.n_dates();
  const std::size_t n = panel.n_tickers();
  if (d < 2) throw ContractError("compute_return needs at least 2 dates, got " + std::to_string(d));
  ReturnLabel out{Matrix(d, n, std::nan("")), std::vector<std::uint8_t>(d * n, 0)};
  for (std::size_t t = 0; t < d; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (panel.is_valid(t, i) && !(panel.close(t, i) > 0)) {
        throw DataError("non-positive close at " + panel.dates[t] + "/" + panel.tickers[i]);
      }
    }
  }
  for (std::size_t t = 0; t + 1 < d; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!panel.is_valid(t, i) || !panel.is_valid(t + 1, i)) continue;
      const double p0 = panel.close(t, i);
      out.y(t, i) = (panel.close(t + 1, i) - p0) / p0;
      out.defined[t * n + i] = 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV input

struct CsvSchema {
  std::string date_column = "date";
  std::string ticker_column = "ticker";
  std::string close_column = "close";
  // Empty means every remaining column, in header order.
  std::vector<std::string> feature_columns;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline bool is_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  const int month = (s[5] - '0') * 10 + (s[6] - '0');
  const int day = (s[8] - '0') * 10 + (s[9] - '0');
  return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

}  // namespace detail

/// Reads `date,ticker,close,f0..f{F-1}` rows. Missing (date, ticker) cells
/// are masked invalid; dates and tickers are sorted ascending.
inline StockPanel load_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  ++line_no;
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  std::vector<std::string> header;
  for (auto f : detail::split_csv_line(line)) header.emplace_back(f);
  auto find_col = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    throw DataError(path + ": missing column '" + name + "'");
  };
  const std::size_t c_date = find_col(schema.date_column);
  const std::size_t c_ticker = find_col(schema.ticker_column);
  const std::size_t c_close = find_col(schema.close_column);
  std::vector<std::size_t> c_feat;
  if (schema.feature_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c != c_date && c != c_ticker && c != c_close) c_feat.push_back(c);
    }
  } else {
    for (const auto& name : schema.feature_columns) c_feat.push_back(find_col(name));
  }

  struct Row {
    std::string date;
    std::string ticker;
    double close;
    std::vector<double> feats;
  };
  std::vector<Row> rows;
  std::map<std::pair<std::string, std::string>, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (fields.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    Row row;
    row.date = std::string(fields[c_date]);
    row.ticker = std::string(fields[c_ticker]);
    if (!detail::is_iso_date(row.date)) throw DataError(where + ": bad ISO-8601 date '" + row.date + "'");
    if (row.ticker.empty()) throw DataError(where + ": empty ticker");
    const auto close = detail::parse_double(fields[c_close]);
    if (!close) throw DataError(where + ": unparseable close '" + std::string(fields[c_close]) + "'");
    row.close = *close;
    for (std::size_t c : c_feat) {
      const auto v = detail::parse_double(fields[c]);
      if (!v || !std::isfinite(*v)) {
        throw DataError(where + ": unparseable feature '" + header[c] + "'");
      }
      row.feats.push_back(*v);
    }
    const auto [it, fresh] = seen.emplace(std::make_pair(row.date, row.ticker), line_no);
    if (!fresh) {
      throw DataError(where + ": duplicate (" + row.date + ", " + row.ticker + "), first seen at line " +
                      std::to_string(it->second));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path + ": no data rows");

  std::set<std::string> date_set;
  std::set<std::string> ticker_set;
  for (const Row& r : rows) {
    date_set.insert(r.date);
    ticker_set.insert(r.ticker);
  }
  StockPanel p;
  p.dates.assign(date_set.begin(), date_set.end());
  p.tickers.assign(ticker_set.begin(), ticker_set.end());
  p.n_features = c_feat.size();
  const std::size_t d = p.dates.size();
  const std::size_t n = p.tickers.size();
  p.close = Matrix(d, n, std::nan(""));
  p.features.assign(d * n * p.n_features, 0.0);
  p.valid.assign(d * n, 0);
  std::map<std::string, std::size_t> date_ix;
  std::map<std::string, std::size_t> ticker_ix;
  for (std::size_t t = 0; t < d; ++t) date_ix[p.dates[t]] = t;
  for (std::size_t i = 0; i < n; ++i) ticker_ix[p.tickers[i]] = i;
  for (const Row& r : rows) {
    const std::size_t t = date_ix[r.date];
    const std::size_t i = ticker_ix[r.ticker];
    p.close(t, i) = r.close;
    for (std::size_t f = 0; f < p.n_features; ++f) p.feature(t, i, f) = r.feats[f];
    p.valid[t * n + i] = 1;
  }
  return p;
}

/// Cross-sectional z-score of every feature channel on every date, over the
/// valid tickers, with population std. Channels with std < 1e-12 become 0.
inline StockPanel normalize_features(const StockPanel& panel) {
  StockPanel out = panel;
  const std::size_t n = panel.n_tickers();
  for (std::size_t t = 0; t < panel.n_dates(); ++t) {
    for (std::size_t f = 0; f < panel.n_features; ++f) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!panel.is_valid(t, i)) continue;
        sum += panel.feature(t, i, f);
        ++count;
      }
      if (count == 0) continue;
      const double mu = sum / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!panel.is_valid(t, i)) continue;
        const double dlt = panel.feature(t, i, f) - mu;
        ss += dlt * dlt;
      }
      const double sd = std::sqrt(ss / static_cast<double>(count));
      for (std::size_t i = 0; i < n; ++i) {
        if (!panel.is_valid(t, i)) continue;
        out.feature(t, i, f) = sd < 1e-12 ? 0.0 : (panel.feature(t, i, f) - mu) / sd;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic markets

/// Parameters of the seeded synthetic market.
///
/// Log-returns are `drift + market_beta * m_t + volatility * e_ti` with
/// standard normal m and e. Each channel in `signal_channels` equals
/// `s * z_ti + (1 - s) * noise` where z is the cross-sectional z-score of
/// the next-day return. From date `shift_at` onwards s becomes
/// `shifted_strength`. `decoy_channel`, when set, carries the signal with
/// strength `decoy_strength` before `shift_at` and pure noise after it. The
/// remaining channels are noise, except channel `lag_channel` which holds
/// the z-scored same-day return.
struct SyntheticSpec {
  std::size_t n_dates = 250;
  std::size_t n_tickers = 50;
  std::size_t n_features = 6;
  double signal_strength = 0.6;
  std::uint64_t seed = 7;
  std::vector<std::size_t> signal_channels{0};
  std::optional<std::size_t> lag_channel = 1;
  double drift = 2e-4;
  double market_beta = 0.01;
  double volatility = 0.02;
  double missing_rate = 0.0;
  std::optional<std::size_t> shift_at;
  double shifted_strength = 0.0;
  std::optional<std::size_t> decoy_channel;
  double decoy_strength = 0.0;
  std::string start_date = "2015-01-01";
};

namespace detail {

// Consecutive calendar days from an ISO start date (weekends included; only
// ordering matters downstream).
inline std::vector<std::string> calendar_days(const std::string& start, std::size_t count) {
  int y = std::stoi(start.substr(0, 4));
  int m = std::stoi(start.substr(5, 2));
  int d = std::stoi(start.substr(8, 2));
  auto days_in = [](int year, int month) {
    static constexpr std::array<int, 12> kDays{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    return month == 2 && leap ? 29 : kDays[static_cast<std::size_t>(month - 1)];
  };
  std::vector<std::string> out;
  out.reserve(count);
  char buf[32];
  for (std::size_t k = 0; k < count; ++k) {
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
    out.emplace_back(buf);
    if (++d > days_in(y, m)) {
      d = 1;
      if (++m > 12) {
        m = 1;
        ++y;
      }
    }
  }
  return out;
}

inline void zscore(std::vector<double>& v) {
  if (v.empty()) return;
  double mu = 0.0;
  for (double x : v) mu += x;
  mu /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  const double sd = std::sqrt(ss / static_cast<double>(v.size()));
  for (double& x : v) x = sd < 1e-12 ? 0.0 : (x - mu) / sd;
}

}  // namespace detail

inline StockPanel gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n_dates < 20) throw ContractError("gen_synthetic needs n_dates >= 20");
  if (spec.n_tickers < 5) throw ContractError("gen_synthetic needs n_tickers >= 5");
  if (spec.signal_strength < 0 || spec.signal_strength > 1) {
    throw ContractError("signal_strength must lie in [0, 1]");
  }
  for (std::size_t c : spec.signal_channels) {
    if (c >= spec.n_features) throw ContractError("signal channel out of range");
  }
  const std::size_t d = spec.n_dates;
  const std::size_t n = spec.n_tickers;
  const std::size_t nf = spec.n_features;

  // Independent streams keep each quantity stable when others change.
  CounterRng price_rng(spec.seed, 1);
  CounterRng noise_rng(spec.seed, 2);
  CounterRng mask_rng(spec.seed, 3);

  StockPanel p;
  p.dates = detail::calendar_days(spec.start_date, d);
  p.tickers.reserve(n);
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "S%04zu", i);
    p.tickers.emplace_back(buf);
  }
  p.n_features = nf;
  p.close = Matrix(d, n);
  p.features.assign(d * n * nf, 0.0);
  p.valid.assign(d * n, 1);

  // log_ret[t][i] moves close[t] -> close[t+1]; the last row only feeds the
  // final date's signal channel.
  Matrix log_ret(d, n);
  for (std::size_t t = 0; t < d; ++t) {
    const double market = price_rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
      log_ret(t, i) = spec.drift + spec.market_beta * market + spec.volatility * price_rng.normal();
    }
  }
  for (std::size_t i = 0; i < n; ++i) p.close(0, i) = 10.0 + 90.0 * price_rng.uniform();
  for (std::size_t t = 1; t < d; ++t) {
    for (std::size_t i = 0; i < n; ++i) p.close(t, i) = p.close(t - 1, i) * std::exp(log_ret(t - 1, i));
  }

  std::vector<double> next_z(n);
  std::vector<double> same_z(n);
  for (std::size_t t = 0; t < d; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      next_z[i] = std::expm1(log_ret(t, i));
      same_z[i] = t > 0 ? std::expm1(log_ret(t - 1, i)) : 0.0;
    }
    detail::zscore(next_z);
    detail::zscore(same_z);
    const bool shifted = spec.shift_at && t >= *spec.shift_at;
    const double s = shifted ? spec.shifted_strength : spec.signal_strength;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t f = 0; f < nf; ++f) {
        const double noise = noise_rng.normal();
        double v = noise;
        if (std::find(spec.signal_channels.begin(), spec.signal_channels.end(), f) != spec.signal_channels.end()) {
          v = s * next_z[i] + (1.0 - s) * noise;
        } else if (spec.decoy_channel && f == *spec.decoy_channel) {
          v = shifted ? noise : spec.decoy_strength * next_z[i] + (1.0 - spec.decoy_strength) * noise;
        } else if (spec.lag_channel && f == *spec.lag_channel) {
          v = same_z[i];
        }
        p.feature(t, i, f) = v;
      }
    }
  }
  if (spec.missing_rate > 0) {
    for (auto& v : p.valid) v = mask_rng.uniform() < spec.missing_rate ? 0 : 1;
  }
  return p;
}

inline StockPanel gen_synthetic(std::size_t n_dates, std::size_t n_tickers, double signal_strength,
                                std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_dates = n_dates;
  spec.n_tickers = n_tickers;
  spec.signal_strength = signal_strength;
  spec.seed = seed;
  return gen_synthetic(spec);
}

// ---------------------------------------------------------------------------
// Splits

/// Half-open date index range [begin, end).
struct DateRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end > begin ? end - begin : 0; }
};

struct SplitSpec {
  DateRange train;
  DateRange valid;
  DateRange test;

  /// Chronological split by date-count fractions; test gets the remainder.
  static SplitSpec by_fraction(std::size_t n_dates, double train_frac, double valid_frac) {
    if (train_frac <= 0 || valid_frac <= 0 || train_frac + valid_frac >= 1) {
      throw ContractError("split fractions must be positive and leave room for a test split");
    }
    const auto a = static_cast<std::size_t>(std::floor(static_cast<double>(n_dates) * train_frac + 0.5));
    const auto b = static_cast<std::size_t>(std::floor(static_cast<double>(n_dates) * (train_frac + valid_frac) + 0.5));
    return {{0, a}, {a, b}, {b, n_dates}};
  }
};

/// Cuts a panel into train/valid/test sub-panels. Each sub-panel owns only
/// its own dates as samples, and carries up to `history` preceding dates as
/// look-back context. No sub-panel contains a date after its range, so labels
/// never read prices from a later split.
inline std::array<StockPanel, 3> split(const StockPanel& panel, const SplitSpec& spec, std::size_t history = 0) {
  const std::array<DateRange, 3> ranges{spec.train, spec.valid, spec.test};
  const char* names[] = {"train", "valid", "test"};
  for (std::size_t k = 0; k < 3; ++k) {
    if (ranges[k].size() == 0) throw ContractError(std::string("empty ") + names[k] + " range");
    if (ranges[k].end > panel.n_dates()) throw ContractError(std::string(names[k]) + " range exceeds panel dates");
    if (k > 0 && ranges[k].begin < ranges[k - 1].end) {
      throw ContractError(std::string(names[k]) + " range overlaps or precedes " + names[k - 1]);
    }
  }
  const std::size_t n = panel.n_tickers();
  const std::size_t nf = panel.n_features;
  std::array<StockPanel, 3> out;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t ctx = std::min(history, ranges[k].begin);
    const std::size_t lo = ranges[k].begin - ctx;
    const std::size_t hi = ranges[k].end;
    StockPanel& p = out[k];
    p.dates.assign(panel.dates.begin() + static_cast<std::ptrdiff_t>(lo),
                   panel.dates.begin() + static_cast<std::ptrdiff_t>(hi));
    p.tickers = panel.tickers;
    p.n_features = nf;
    p.history = ctx;
    p.close = Matrix(hi - lo, n);
    for (std::size_t t = lo; t < hi; ++t) {
      for (std::size_t i = 0; i < n; ++i) p.close(t - lo, i) = panel.close(t, i);
    }
    p.features.assign(panel.features.begin() + static_cast<std::ptrdiff_t>(lo * n * nf),
                      panel.features.begin() + static_cast<std::ptrdiff_t>(hi * n * nf));
    p.valid.assign(panel.valid.begin() + static_cast<std::ptrdiff_t>(lo * n),
                   panel.valid.begin() + static_cast<std::ptrdiff_t>(hi * n));
  }
  return out;
}

}  // namespace mimstocr

#endif  // MIMSTOCR_MARKET_DATA_HPP_
