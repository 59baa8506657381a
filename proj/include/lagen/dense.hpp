#pragma once

// Dense row-major matrices, the seeded instance generator, expression
// evaluation, independent oracles and the residual.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lagen/pme.hpp"

namespace lagen {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::int64_t rows, std::int64_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), fill) {}

  static DenseMatrix identity(std::int64_t n) {
    DenseMatrix m(n, n);
    for (std::int64_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  double& operator()(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * cols_ + j)]; }
  double operator()(std::int64_t i, std::int64_t j) const { return data_[static_cast<std::size_t>(i * cols_ + j)]; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }
  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::int64_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

inline double frobenius(const DenseMatrix& a) {
  double s = 0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

inline DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) fail(ErrorKind::ShapeMismatch, "matrix difference");
  DenseMatrix c(a.rows(), a.cols());
  for (std::int64_t i = 0; i < a.rows(); ++i)
    for (std::int64_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) - b(i, j);
  return c;
}

/// ‖a − b‖_F / max(1, ‖b‖_F)
inline double relative_distance(const DenseMatrix& a, const DenseMatrix& b) {
  return frobenius(a - b) / std::max(1.0, frobenius(b));
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::int64_t i = 0; i < a.rows(); ++i)
    for (std::int64_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) fail(ErrorKind::ShapeMismatch, "matrix product");
  DenseMatrix c(a.rows(), b.cols());
  for (std::int64_t i = 0; i < a.rows(); ++i)
    for (std::int64_t k = 0; k < a.cols(); ++k) {
      double v = a(i, k);
      if (v == 0.0) continue;
      for (std::int64_t j = 0; j < b.cols(); ++j) c(i, j) += v * b(k, j);
    }
  return c;
}

// splitmix64 over a counter: value i of stream s is mix(s + (i+1)·γ).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

struct Instance {
  Equation equation;
  std::int64_t n = 0;
  std::uint64_t seed = 0;
  std::map<std::string, DenseMatrix> bindings;  // inputs only
};

inline std::int64_t operand_extent(const Dim& d, std::int64_t n) { return d.symbolic() ? n : d.value; }

inline DenseMatrix random_structured(Structure s, std::int64_t rows, std::int64_t cols, Rng& rng) {
  DenseMatrix m(rows, cols);
  const double scale = 1.0 / static_cast<double>(std::max<std::int64_t>(1, rows));
  switch (s) {
    case Structure::General:
      for (std::int64_t i = 0; i < rows; ++i)
        for (std::int64_t j = 0; j < cols; ++j) m(i, j) = rng.uniform(-1, 1);
      break;
    case Structure::Lower:
    case Structure::Upper:
      for (std::int64_t i = 0; i < rows; ++i)
        for (std::int64_t j = 0; j < cols; ++j) {
          if (i == j)
            m(i, j) = rng.uniform(1, 2);
          else if ((s == Structure::Lower) == (i > j))
            m(i, j) = rng.uniform(-1, 1) * scale;
        }
      break;
    case Structure::Symmetric:
      for (std::int64_t i = 0; i < rows; ++i)
        for (std::int64_t j = i; j < cols; ++j) m(i, j) = m(j, i) = rng.uniform(-1, 1);
      break;
    case Structure::SPD: {
      DenseMatrix b(rows, cols);
      for (std::int64_t i = 0; i < rows; ++i)
        for (std::int64_t j = 0; j < cols; ++j) b(i, j) = rng.uniform(-1, 1);
      m = matmul(transpose(b), b);
      for (std::int64_t i = 0; i < rows; ++i) m(i, i) += static_cast<double>(rows);
      // B^T B is symmetric in exact arithmetic; force it bitwise.
      for (std::int64_t i = 0; i < rows; ++i)
        for (std::int64_t j = 0; j < i; ++j) m(i, j) = m(j, i);
      break;
    }
    case Structure::Zero: break;
    case Structure::Identity: m = DenseMatrix::identity(rows); break;
  }
  return m;
}

/// Deterministic instance: inputs are drawn in declaration order from one stream.
inline Instance random_instance(const Equation& eq, std::int64_t n, std::uint64_t seed) {
  if (n < 1) fail(ErrorKind::PreconditionViolation, "n must be >= 1");
  Instance inst{eq, n, seed, {}};
  Rng rng(seed);
  for (const auto& op : eq.operands) {
    if (op.role != Role::Input) continue;
    inst.bindings[op.name] =
        random_structured(op.structure, operand_extent(op.rows, n), operand_extent(op.cols, n), rng);
  }
  return inst;
}

using Bindings = std::map<std::string, DenseMatrix>;

inline DenseMatrix evaluate(const Expr& e, const Bindings& env) {
  switch (e->kind) {
    case ExprKind::Ref: {
      auto it = env.find(e->name);
      if (it == env.end()) fail(ErrorKind::UndeclaredOperand, "no binding for " + e->name);
      return it->second;
    }
    case ExprKind::Transpose: return transpose(evaluate(e->lhs, env));
    case ExprKind::Neg: {
      DenseMatrix a = evaluate(e->lhs, env);
      for (std::int64_t i = 0; i < a.rows(); ++i)
        for (std::int64_t j = 0; j < a.cols(); ++j) a(i, j) = -a(i, j);
      return a;
    }
    case ExprKind::Add:
    case ExprKind::Sub: {
      DenseMatrix a = evaluate(e->lhs, env), b = evaluate(e->rhs, env);
      if (a.rows() != b.rows() || a.cols() != b.cols()) fail(ErrorKind::ShapeMismatch, "sum of unequal shapes");
      double s = e->kind == ExprKind::Add ? 1.0 : -1.0;
      for (std::int64_t i = 0; i < a.rows(); ++i)
        for (std::int64_t j = 0; j < a.cols(); ++j) a(i, j) += s * b(i, j);
      return a;
    }
    case ExprKind::Mul: return matmul(evaluate(e->lhs, env), evaluate(e->rhs, env));
  }
  fail(ErrorKind::Unsupported, "expression kind");
}

inline double residual(const Equation& eq, const Instance& inst, const Bindings& outputs) {
  Bindings env = inst.bindings;
  for (const auto& [k, v] : outputs) env[k] = v;
  DenseMatrix l = evaluate(eq.lhs, env), r = evaluate(eq.rhs, env);
  if (l.rows() != r.rows() || l.cols() != r.cols()) fail(ErrorKind::ShapeMismatch, "residual operands");
  return frobenius(l - r) / std::max(1.0, frobenius(r));
}

// ---------------------------------------------------------------------------
// Oracles. Neither shares code with the synthesized algorithms.

/// Upper factor X with X^T X = A, column by column.
inline DenseMatrix textbook_cholesky(const DenseMatrix& a) {
  std::int64_t n = a.rows();
  DenseMatrix x(n, n);
  for (std::int64_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::int64_t k = 0; k < j; ++k) d -= x(k, j) * x(k, j);
    if (!(d > 0.0)) fail(ErrorKind::NotSPD, "non-positive pivot at column " + std::to_string(j));
    x(j, j) = std::sqrt(d);
    for (std::int64_t i = j + 1; i < n; ++i) {
      double s = a(j, i);
      for (std::int64_t k = 0; k < j; ++k) s -= x(k, j) * x(k, i);
      x(j, i) = s / x(j, j);
    }
  }
  return x;
}

/// Dense Gaussian elimination with partial pivoting; solves M y = r.
inline std::vector<double> gauss_solve(std::vector<double> m, std::vector<double> r, std::size_t n) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t i = c + 1; i < n; ++i)
      if (std::abs(m[i * n + c]) > std::abs(m[piv * n + c])) piv = i;
    if (std::abs(m[piv * n + c]) < 1e-300) fail(ErrorKind::SingularSystem, "singular linear system");
    if (piv != c) {
      for (std::size_t j = 0; j < n; ++j) std::swap(m[c * n + j], m[piv * n + j]);
      std::swap(r[c], r[piv]);
    }
    for (std::size_t i = c + 1; i < n; ++i) {
      double f = m[i * n + c] / m[c * n + c];
      if (f == 0.0) continue;
      for (std::size_t j = c; j < n; ++j) m[i * n + j] -= f * m[c * n + j];
      r[i] -= f * r[c];
    }
  }
  std::vector<double> y(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = r[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= m[i * n + j] * y[j];
    y[i] = s / m[i * n + i];
  }
  return y;
}

namespace detail {
inline int count_refs(const Expr& e, const std::string& name) {
  if (!e) return 0;
  if (e->kind == ExprKind::Ref) return e->name == name ? 1 : 0;
  if (e->kind == ExprKind::Mul) return count_refs(e->lhs, name) + count_refs(e->rhs, name);
  return std::max(count_refs(e->lhs, name), count_refs(e->rhs, name));
}
}  // namespace detail

/// Kronecker oracle for equations linear in the unknown: the operator's
/// matrix is assembled column by column by applying the lhs to unit matrices.
inline DenseMatrix kronecker_solve(const Equation& eq, const Instance& inst, const std::string& x) {
  const Operand& xo = eq.operand(x);
  std::int64_t p = operand_extent(xo.rows, inst.n), q = operand_extent(xo.cols, inst.n);
  std::size_t N = static_cast<std::size_t>(p * q);
  if (p * q > 64 * 64) fail(ErrorKind::PreconditionViolation, "Kronecker oracle is capped at n <= 64");
  Bindings env = inst.bindings;
  DenseMatrix rhs = evaluate(eq.rhs, env);
  std::vector<double> m(N * N), r(N);
  for (std::int64_t i = 0; i < p; ++i)
    for (std::int64_t j = 0; j < q; ++j) {
      DenseMatrix e(p, q);
      e(i, j) = 1.0;
      env[x] = e;
      DenseMatrix col = evaluate(eq.lhs, env);
      std::size_t c = static_cast<std::size_t>(i * q + j);
      for (std::int64_t a = 0; a < p; ++a)
        for (std::int64_t b = 0; b < q; ++b) m[static_cast<std::size_t>(a * q + b) * N + c] = col(a, b);
    }
  for (std::int64_t a = 0; a < p; ++a)
    for (std::int64_t b = 0; b < q; ++b) r[static_cast<std::size_t>(a * q + b)] = rhs(a, b);
  auto y = gauss_solve(std::move(m), std::move(r), N);
  DenseMatrix out(p, q);
  for (std::int64_t i = 0; i < p; ++i)
    for (std::int64_t j = 0; j < q; ++j) out(i, j) = y[static_cast<std::size_t>(i * q + j)];
  if (is_symmetric(xo.structure))
    for (std::int64_t i = 0; i < p; ++i)
      for (std::int64_t j = 0; j < i; ++j) out(i, j) = out(j, i) = 0.5 * (out(i, j) + out(j, i));
  return out;
}

inline Bindings oracle_solve(const Instance& inst) {
  const Equation& eq = inst.equation;
  if (eq.unknowns.size() != 1) fail(ErrorKind::Unsupported, "oracle handles one unknown");
  const std::string& x = eq.unknowns.front();
  Bindings out;
  if (detail::count_refs(eq.lhs, x) <= 1) {
    out[x] = kronecker_solve(eq, inst, x);
    return out;
  }
  if (root_kind(eq) == OperationKind::Chol && eq.rhs->kind == ExprKind::Ref) {
    out[x] = textbook_cholesky(inst.bindings.at(eq.rhs->name));
    return out;
  }
  fail(ErrorKind::Unsupported, "no oracle for this nonlinear equation");
}

}  // namespace lagen
