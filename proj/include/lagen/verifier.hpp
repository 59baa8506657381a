#pragma once

// Reference semantics of blocked algorithms: statement-by-statement execution
// over instrumented storage with a dynamic flop counter.

#include <functional>

#include "lagen/algorithm.hpp"
#include "lagen/store.hpp"

namespace lagen {

struct RunResult {
  Bindings outputs;
  std::int64_t flops = 0;
  AccessStats stats;
};

/// Called after every loop iteration with the iteration index and the store.
using IterationHook = std::function<void(std::int64_t, const Store&)>;

namespace detail {

/// A (possibly transposed) block of an operand addressed in block coordinates.
struct BlockRef {
  Store* st;
  std::string name;
  std::int64_t r0, c0;
  bool transposed;
  double get(std::int64_t i, std::int64_t j) const {
    return transposed ? st->read(name, r0 + j, c0 + i) : st->read(name, r0 + i, c0 + j);
  }
  void set(std::int64_t i, std::int64_t j, double v) const { st->write(name, r0 + i, c0 + j, v); }
};

class AlgorithmRunner {
 public:
  AlgorithmRunner(const Algorithm& a, Store& st, const Repartition& rp)
      : a_(a), st_(st), rp_(rp), ctx_(a.equation, 3) {}

  std::int64_t flops = 0;

  void run(const Statement& s) {
    std::int64_t p = rp_.extent[s.row], q = rp_.extent[s.col];
    if (p == 0 || q == 0) return;
    switch (s.kind) {
      case OperationKind::GemmUpdate: gemm(s, p, q); break;
      case OperationKind::Chol: chol(s, p); break;
      case OperationKind::TrsmLeftTransposed:
      case OperationKind::TrsmRight: trsm(s, p, q); break;
      case OperationKind::Sylv:
      case OperationKind::Lyap: sylv(s, p, q); break;
      case OperationKind::Assign: assign(s, p, q); break;
    }
  }

 private:
  BlockRef factor(const BlockFactor& f) const {
    return {&st_, f.operand, rp_.offset[f.row], rp_.offset[f.col], f.transposed};
  }
  BlockRef target(const Statement& s) const {
    return {&st_, s.target, rp_.offset[s.row], rp_.offset[s.col], false};
  }
  BlockRef work(const Statement& s) const {
    return {&st_, a_.workspace + "_w", rp_.offset[s.row], rp_.offset[s.col], false};
  }

  void gemm(const Statement& s, std::int64_t p, std::int64_t q) {
    BlockRef w = work(s);
    const auto& f = s.update.factors;
    double sign = s.update.sign;
    if (f.size() == 1) {
      BlockRef a = factor(f[0]);
      for (std::int64_t i = 0; i < p; ++i)
        for (std::int64_t j = s.symmetric_term ? i : 0; j < q; ++j) {
          w.set(i, j, w.get(i, j) - sign * a.get(i, j));
          ++flops;
        }
      return;
    }
    BlockRef a = factor(f[0]), b = factor(f[1]);
    std::int64_t inner = rp_.extent[f[0].eff_col()];
    Structure sa = ctx_.effective_structure(f[0]), sb = ctx_.effective_structure(f[1]);
    for (std::int64_t i = 0; i < p; ++i)
      for (std::int64_t j = s.symmetric_term ? i : 0; j < q; ++j) {
        auto [l1, h1] = row_support(sa, i, inner);
        auto [l2, h2] = col_support(sb, j, inner);
        double acc = w.get(i, j);
        for (std::int64_t t = std::max(l1, l2); t < std::min(h1, h2); ++t) {
          acc -= sign * a.get(i, t) * b.get(t, j);
          flops += 2;
        }
        w.set(i, j, acc);
      }
  }

  void chol(const Statement& s, std::int64_t m) {
    BlockRef x = target(s), w = work(s);
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = i; j < m; ++j) {
        double v = w.get(i, j);
        for (std::int64_t k = 0; k < i; ++k) {
          v -= x.get(k, i) * x.get(k, j);
          flops += 2;
        }
        if (i == j) {
          if (!(v > 0.0)) fail(ErrorKind::NotSPD, "non-positive pivot in CHOL");
          x.set(i, i, std::sqrt(v));
        } else {
          x.set(i, j, v / x.get(i, i));
        }
        ++flops;
      }
  }

  // Splits a two-factor term around the unknown block: returns the coefficient
  // and whether it multiplies from the left.
  std::pair<BlockFactor, bool> coefficient(const BlockTerm& t, const Statement& s) const {
    if (t.factors.size() != 2) fail(ErrorKind::Unsupported, "solver term is not a two-factor product");
    const auto& u = t.factors[1];
    if (u.operand == s.target && u.row == s.row && u.col == s.col) return {t.factors[0], true};
    return {t.factors[1], false};
  }

  void trsm(const Statement& s, std::int64_t p, std::int64_t q) {
    auto [kf, left] = coefficient(s.solve_terms.front(), s);
    BlockRef k = factor(kf), x = target(s), w = work(s);
    if (s.solve_terms.front().sign != 1) fail(ErrorKind::Unsupported, "negated solver term");
    Structure ks = ctx_.effective_structure(kf);
    bool lower = ks == Structure::Lower;
    if (!lower && ks != Structure::Upper) fail(ErrorKind::Unsupported, "TRSM coefficient is not triangular");
    std::int64_t m = left ? p : q;
    for (std::int64_t step = 0; step < m; ++step) {
      // Left solves run forward for lower K; right solves (Y K) run forward for upper K.
      bool forward = left ? lower : !lower;
      std::int64_t d = forward ? step : m - 1 - step;
      std::int64_t lo = forward ? 0 : d + 1, hi = forward ? d : m;
      std::int64_t other = left ? q : p;
      for (std::int64_t o = 0; o < other; ++o) {
        std::int64_t i = left ? d : o, j = left ? o : d;
        double v = w.get(i, j);
        for (std::int64_t t = lo; t < hi; ++t) {
          v -= left ? k.get(d, t) * x.get(t, j) : x.get(i, t) * k.get(t, d);
          flops += 2;
        }
        x.set(i, j, v / k.get(d, d));
        ++flops;
      }
    }
  }

  void sylv(const Statement& s, std::int64_t p, std::int64_t q) {
    BlockFactor af{}, bf{};
    bool have_a = false, have_b = false;
    for (const auto& t : s.solve_terms) {
      auto [c, left] = coefficient(t, s);
      if (t.sign != 1) fail(ErrorKind::Unsupported, "negated solver term");
      (left ? af : bf) = c;
      (left ? have_a : have_b) = true;
    }
    if (!have_a || !have_b) fail(ErrorKind::Unsupported, "SYLV needs a left and a right coefficient");
    BlockRef a = factor(af), b = factor(bf), x = target(s), w = work(s);
    bool a_lower = ctx_.effective_structure(af) == Structure::Lower;
    bool b_upper = ctx_.effective_structure(bf) == Structure::Upper;
    bool lyap = s.kind == OperationKind::Lyap;
    if (lyap && !(a_lower && b_upper)) fail(ErrorKind::Unsupported, "LYAP needs a lower coefficient");
    for (std::int64_t si = 0; si < p; ++si) {
      std::int64_t i = a_lower ? si : p - 1 - si;
      for (std::int64_t sj = 0; sj < q; ++sj) {
        std::int64_t j = b_upper ? sj : q - 1 - sj;
        if (lyap && j < i) continue;
        double v = w.get(i, j);
        for (std::int64_t t = a_lower ? 0 : i + 1; t < (a_lower ? i : p); ++t) {
          v -= a.get(i, t) * x.get(t, j);
          flops += 2;
        }
        for (std::int64_t t = b_upper ? 0 : j + 1; t < (b_upper ? j : q); ++t) {
          v -= x.get(i, t) * b.get(t, j);
          flops += 2;
        }
        x.set(i, j, v / (a.get(i, i) + b.get(j, j)));
        flops += 2;
      }
    }
  }

  void assign(const Statement& s, std::int64_t p, std::int64_t q) {
    BlockRef x = target(s), w = work(s);
    for (std::int64_t i = 0; i < p; ++i)
      for (std::int64_t j = 0; j < q; ++j) x.set(i, j, w.get(i, j));
  }

  const Algorithm& a_;
  Store& st_;
  Repartition rp_;
  BlockContext ctx_;
};

}  // namespace detail

inline RunResult interpret(const Algorithm& alg, const Instance& inst, std::int64_t b,
                           const IterationHook& hook = {}) {
  std::int64_t n = inst.n;
  if (b < 1 || n % b != 0) fail(ErrorKind::NonDivisible, "block size does not divide n");
  Store st = make_store(alg.equation, inst, alg.workspace);
  RunResult res;
  for (std::int64_t it = 0; it < n / b; ++it) {
    detail::AlgorithmRunner run(alg, st, repartition(alg.traversal, n, b, it));
    for (const auto& s : alg.updates) {
      Statement bound = s;
      if (s.kind == OperationKind::GemmUpdate) bound.target = alg.workspace + "_w";
      run.run(bound);
    }
    res.flops += run.flops;
    if (hook) hook(it, st);
  }
  res.outputs[alg.unknown] = st.materialize(alg.unknown);
  res.stats = st.stats();
  return res;
}

/// Largest relative error, over all iterations, of the unknown's quadrants the
/// invariant declares final, measured against a reference solution.
inline double worksheet_error(const Algorithm& alg, const Instance& inst, std::int64_t b, const DenseMatrix& ref) {
  std::int64_t n = inst.n;
  Structure xs = alg.equation.operand(alg.unknown).structure;
  double worst = 0.0;
  interpret(alg, inst, b, [&](std::int64_t it, const Store& st) {
    std::int64_t split = alg.traversal == Traversal::TLtoBR ? (it + 1) * b : n - (it + 1) * b;
    const DenseMatrix& x = st.raw(alg.unknown);
    for (auto [R, C] : alg.computed_quadrants) {
      std::int64_t r0 = R ? split : 0, r1 = R ? n : split, c0 = C ? split : 0, c1 = C ? n : split;
      double num = 0, den = 0;
      for (std::int64_t i = r0; i < r1; ++i)
        for (std::int64_t j = c0; j < c1; ++j) {
          if ((is_symmetric(xs) || xs == Structure::Upper) && i > j) continue;
          if (xs == Structure::Lower && j > i) continue;
          num += (x(i, j) - ref(i, j)) * (x(i, j) - ref(i, j));
          den += ref(i, j) * ref(i, j);
        }
      worst = std::max(worst, std::sqrt(num) / std::max(1.0, std::sqrt(den)));
    }
  });
  return worst;
}

}  // namespace lagen
