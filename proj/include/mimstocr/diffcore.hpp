#ifndef MIMSTOCR_DIFFCORE_HPP_
#define MIMSTOCR_DIFFCORE_HPP_

// Reverse-mode differentiation over dense rank-2 double matrices.
//
// A Tape records every operation in creation order. Because an operation can
// only reference values that already exist, creation order is a topological
// order and backward() is a single reverse sweep. Tapes share nothing, so
// separate tapes may be used from separate threads.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mimstocr/error.hpp"

namespace mimstocr::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  bool operator==(const Shape&) const = default;
  std::size_t size() const { return rows * cols; }
  std::string str() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }
};

/// Row-major dense matrix. Vectors are n x 1 columns; scalars are 1 x 1.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
      throw ShapeError("matrix data of length " + std::to_string(data_.size()) +
                       " does not fill shape " + shape().str());
    }
  }

  static Matrix scalar(double v) { return Matrix(1, 1, v); }
  static Matrix column(std::vector<double> v) {
    const std::size_t n = v.size();
    return Matrix(n, 1, std::move(v));
  }
  static Matrix row(std::vector<double> v) {
    const std::size_t n = v.size();
    return Matrix(1, n, std::move(v));
  }
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
      if (row.size() != m.cols_) throw ShapeError("ragged initializer for matrix");
      std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(r * m.cols_));
      ++r;
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  Shape shape() const { return {rows_, cols_}; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double item() const {
    if (data_.size() != 1) throw ShapeError("item() on non-scalar " + shape().str());
    return data_[0];
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its Tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  const Matrix& value() const;
  Shape shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients of one backward sweep, indexed by node id.
class Gradients {
 public:
  Gradients(const Tape* tape, std::vector<Matrix> grads) : tape_(tape), grads_(std::move(grads)) {}

  /// d(root)/d(v); zeros when v does not influence the root.
  Matrix of(const Var& v) const;

 private:
  const Tape* tape_;
  std::vector<Matrix> grads_;
};

class Tape {
 public:
  // Accumulates into parent gradients during the sweep. Buffers are created
  // zero-filled on first touch.
  class Sink {
   public:
    Sink(const Tape& tape, std::vector<Matrix>& grads) : tape_(tape), grads_(grads) {}
    Matrix& at(std::size_t id) {
      Matrix& g = grads_[id];
      if (g.empty() && tape_.nodes_[id].value.size() != 0) {
        g = Matrix(tape_.nodes_[id].value.rows(), tape_.nodes_[id].value.cols());
      }
      return g;
    }
    bool wants(std::size_t id) const { return tape_.nodes_[id].requires_grad; }

   private:
    const Tape& tape_;
    std::vector<Matrix>& grads_;
  };

  using Backward = std::function<void(const Matrix& out_grad, Sink& sink)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var variable(Matrix value) { return push(std::move(value), true, nullptr); }
  /// Leaf that never receives a gradient.
  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }
  Var constant(double v) { return constant(Matrix::scalar(v)); }

  /// Records an operation. `backward` is skipped when no parent needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) {
      if (&p.tape() != this) throw ContractError("operands belong to different tapes");
      needs = needs || nodes_[p.id()].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a 1x1 root. Each node's backward runs at most once.
  Gradients backward(const Var& root) const {
    if (&root.tape() != this) throw ContractError("backward root belongs to a different tape");
    if (root.value().shape() != Shape{1, 1}) {
      throw ContractError("backward requires a scalar root, got " + root.value().shape().str());
    }
    std::vector<Matrix> grads(nodes_.size());
    grads[root.id()] = Matrix::scalar(1.0);
    Sink sink(*this, grads);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      const Node& n = nodes_[i];
      if (!n.backward || grads[i].empty()) continue;
      n.backward(grads[i], sink);
    }
    return Gradients(this, std::move(grads));
  }

 private:
  struct Node {
    Matrix value;
    bool requires_grad;
    Backward backward;
  };

  Var push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), requires_grad, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

inline Matrix Gradients::of(const Var& v) const {
  const Matrix& g = grads_.at(v.id());
  if (g.empty()) return Matrix(v.value().rows(), v.value().cols());
  return g;
}

namespace detail {

inline Shape broadcast_shape(Shape a, Shape b, const char* op) {
  auto dim = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
  };
  return {dim(a.rows, b.rows), dim(a.cols, b.cols)};
}

inline double bget(const Matrix& m, std::size_t r, std::size_t c) {
  return m(m.rows() == 1 ? 0 : r, m.cols() == 1 ? 0 : c);
}

// Adds `g` (full broadcast shape) into `acc`, summing over broadcast axes.
inline void reduce_into(Matrix& acc, const Matrix& g) {
  if (acc.shape() == g.shape()) {
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    return;
  }
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) {
      acc(acc.rows() == 1 ? 0 : r, acc.cols() == 1 ? 0 : c) += g(r, c);
    }
  }
}

// Elementwise binary op with rank-2 broadcasting. `da`/`db` give the local
// partials given (a, b, out).
template <typename F, typename DA, typename DB>
Var binary(const Var& a, const Var& b, const char* name, F f, DA da, DB db) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Shape s = broadcast_shape(av.shape(), bv.shape(), name);
  Matrix out(s.rows, s.cols);
  for (std::size_t r = 0; r < s.rows; ++r) {
    for (std::size_t c = 0; c < s.cols; ++c) out(r, c) = f(bget(av, r, c), bget(bv, r, c));
  }
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  const std::size_t io = t.size();
  return t.record(std::move(out), {a, b}, [&t, ia, ib, io, da, db](const Matrix& g, Tape::Sink& sink) {
    const Matrix& av = t.value(ia);
    const Matrix& bv = t.value(ib);
    const Matrix& ov = t.value(io);
    for (int side = 0; side < 2; ++side) {
      const std::size_t id = side == 0 ? ia : ib;
      if (!sink.wants(id)) continue;
      Matrix local(g.rows(), g.cols());
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) {
          const double x = bget(av, r, c);
          const double y = bget(bv, r, c);
          const double o = ov(r, c);
          local(r, c) = g(r, c) * (side == 0 ? da(x, y, o) : db(x, y, o));
        }
      }
      reduce_into(sink.at(id), local);
    }
  });
}

template <typename F, typename D>
Var unary(const Var& a, F f, D d) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  const std::size_t io = t.size();
  return t.record(std::move(out), {a}, [&t, ia, io, d](const Matrix& g, Tape::Sink& sink) {
    const Matrix& av = t.value(ia);
    const Matrix& ov = t.value(io);
    Matrix& acc = sink.at(ia);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * d(av[i], ov[i]);
  });
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var constant_like(const Var& like, double v) { return like.tape().constant(v); }

inline Var add(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

inline Var div(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

/// Elementwise maximum; at ties the gradient goes to the first operand.
inline Var maximum(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "maximum", [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator+(const Var& a, double b) { return add(a, constant_like(a, b)); }
inline Var operator+(double a, const Var& b) { return add(constant_like(b, a), b); }
inline Var operator-(const Var& a, double b) { return sub(a, constant_like(a, b)); }
inline Var operator-(double a, const Var& b) { return sub(constant_like(b, a), b); }
inline Var operator*(const Var& a, double b) { return mul(a, constant_like(a, b)); }
inline Var operator*(double a, const Var& b) { return mul(constant_like(b, a), b); }
inline Var operator/(const Var& a, double b) { return div(a, constant_like(a, b)); }
inline Var operator/(double a, const Var& b) { return div(constant_like(b, a), b); }
inline Var operator-(const Var& a) { return mul(a, constant_like(a, -1.0)); }

inline Var exp(const Var& a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

inline Var log(const Var& a) {
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var tanh(const Var& a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double o) { return 1.0 - o * o; });
}

inline Var sigmoid(const Var& a) {
  return detail::unary(a, detail::stable_sigmoid, [](double, double o) { return o * (1.0 - o); });
}

inline Var pow(const Var& a, double p) {
  return detail::unary(
      a, [p](double x) { return std::pow(x, p); },
      [p](double x, double) { return p == 0.0 ? 0.0 : p * std::pow(x, p - 1.0); });
}

inline Var matmul(const Var& a, const Var& b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: incompatible shapes " + av.shape().str() + " and " + bv.shape().str());
  }
  const std::size_t n = av.rows();
  const std::size_t k = av.cols();
  const std::size_t m = bv.cols();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av(i, p);
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out(i, j) += x * bv(p, j);
    }
  }
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return t.record(std::move(out), {a, b}, [&t, ia, ib, n, k, m](const Matrix& g, Tape::Sink& sink) {
    const Matrix& av = t.value(ia);
    const Matrix& bv = t.value(ib);
    if (sink.wants(ia)) {
      // dA = G B^T
      Matrix& ga = sink.at(ia);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += g(i, j) * bv(p, j);
          ga(i, p) += s;
        }
      }
    }
    if (sink.wants(ib)) {
      // dB = A^T G
      Matrix& gb = sink.at(ib);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double x = av(i, p);
          if (x == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) gb(p, j) += x * g(i, j);
        }
      }
    }
  });
}

inline Var transpose(const Var& a) {
  const Matrix& av = a.value();
  Matrix out(av.cols(), av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < av.cols(); ++c) out(c, r) = av(r, c);
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](const Matrix& g, Tape::Sink& sink) {
    Matrix& acc = sink.at(ia);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) acc(c, r) += g(r, c);
    }
  });
}

/// Sum of all elements, 1x1.
inline Var sum(const Var& a) {
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  const std::size_t ia = a.id();
  return a.tape().record(Matrix::scalar(s), {a}, [ia](const Matrix& g, Tape::Sink& sink) {
    Matrix& acc = sink.at(ia);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[0];
  });
}

inline Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ContractError("mean of an empty matrix");
  return sum(a) / n;
}

/// Per-row sum, rows x 1.
inline Var sum_rows(const Var& a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, 0) += av(r, c);
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](const Matrix& g, Tape::Sink& sink) {
    Matrix& acc = sink.at(ia);
    for (std::size_t r = 0; r < acc.rows(); ++r) {
      for (std::size_t c = 0; c < acc.cols(); ++c) acc(r, c) += g(r, 0);
    }
  });
}

/// Per-row maximum, rows x 1. The gradient goes to the first maximal entry.
inline Var max_rows(const Var& a) {
  const Matrix& av = a.value();
  if (av.cols() == 0) throw ContractError("max_rows of a matrix with no columns");
  Matrix out(av.rows(), 1);
  std::vector<std::size_t> arg(av.rows(), 0);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double best = av(r, 0);
    for (std::size_t c = 1; c < av.cols(); ++c) {
      if (av(r, c) > best) {
        best = av(r, c);
        arg[r] = c;
      }
    }
    out(r, 0) = best;
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, arg = std::move(arg)](const Matrix& g, Tape::Sink& sink) {
    Matrix& acc = sink.at(ia);
    for (std::size_t r = 0; r < acc.rows(); ++r) acc(r, arg[r]) += g(r, 0);
  });
}

/// Columns [begin, end).
inline Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const Matrix& av = a.value();
  if (begin > end || end > av.cols()) {
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                     av.shape().str());
  }
  Matrix out(av.rows(), end - begin);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = av(r, c);
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, begin](const Matrix& g, Tape::Sink& sink) {
    Matrix& acc = sink.at(ia);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) acc(r, c + begin) += g(r, c);
    }
  });
}

/// Elementwise product with a fixed 0/1 (or any constant) mask of the same shape.
inline Var mask(const Var& a, const Matrix& m) {
  if (a.value().shape() != m.shape()) {
    throw ShapeError("mask: incompatible shapes " + a.value().shape().str() + " and " + m.shape().str());
  }
  return mul(a, a.tape().constant(m));
}

/// Row-wise numerically stable log-softmax.
inline Var log_softmax_rows(const Var& logits) {
  const Matrix& lv = logits.value();
  Matrix shift(lv.rows(), 1);
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    double best = lv(r, 0);
    for (std::size_t c = 1; c < lv.cols(); ++c) best = std::max(best, lv(r, c));
    shift(r, 0) = best;
  }
  // The shift cancels analytically, so it enters as a constant.
  Var centered = logits - logits.tape().constant(std::move(shift));
  return centered - log(sum_rows(exp(centered)));
}

inline Var softmax_rows(const Var& logits) { return exp(log_softmax_rows(logits)); }

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
/// for the scalar function `fn` at `point` (an n x 1 column).
inline double check_gradient(const std::function<Var(Tape&, const Var&)>& fn, std::span<const double> point,
                             double step = 1e-5) {
  if (!(step > 0)) throw ContractError("check_gradient step must be positive");
  const std::vector<double> x0(point.begin(), point.end());
  auto eval = [&](const std::vector<double>& x) {
    Tape t;
    Var v = t.variable(Matrix::column(x));
    const double y = fn(t, v).value().item();
    if (!std::isfinite(y)) throw NumericError("check_gradient: function value is not finite");
    return y;
  };
  Tape t;
  Var v = t.variable(Matrix::column(x0));
  Var y = fn(t, v);
  if (!std::isfinite(y.value().item())) throw NumericError("check_gradient: function value is not finite");
  const Matrix analytic = t.backward(y).of(v);
  double worst = 0.0;
  std::vector<double> x = x0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    x[i] = x0[i] + step;
    const double hi = eval(x);
    x[i] = x0[i] - step;
    const double lo = eval(x);
    x[i] = x0[i];
    const double numeric = (hi - lo) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace mimstocr::ad

#endif  // MIMSTOCR_DIFFCORE_HPP_
