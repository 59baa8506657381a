#pragma once

// FLAME-style worksheet derivation: each (PME, loop invariant) pair becomes a
// blocked loop whose body is the set of 3x3-repartition block operations that
// the invariant holds after the iteration but not before it.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lagen/invariants.hpp"

namespace lagen {

struct Statement {
  OperationKind kind = OperationKind::GemmUpdate;
  std::string target;  // workspace for updates, the unknown for solvers
  int row = 0, col = 0;
  Structure target_structure = Structure::General;
  BlockTerm update;                    // GemmUpdate: target -= sign * product
  std::vector<BlockTerm> solve_terms;  // solvers: coefficient form around the target block
  bool symmetric_term = false;         // only the stored triangle of the target is updated
};

struct Algorithm {
  std::string name;
  Equation equation;
  int pme_index = 0;
  int invariant_index = 0;
  LoopInvariant invariant;
  Traversal traversal = Traversal::TLtoBR;
  std::string workspace;  // rhs operand; the algorithm works on a copy of it
  std::string unknown;
  OperationKind base_case = OperationKind::Assign;
  std::vector<Statement> updates;
  std::vector<std::pair<int, int>> computed_quadrants;  // unknown quadrants final after each iteration
};

/// Per-iteration block extents and offsets of the 3x3 repartition.
struct Repartition {
  std::int64_t offset[3];
  std::int64_t extent[3];
};

inline Repartition repartition(Traversal t, std::int64_t n, std::int64_t b, std::int64_t iter) {
  Repartition r{};
  if (t == Traversal::TLtoBR) {
    std::int64_t k = iter * b;
    r.offset[0] = 0;
    r.extent[0] = k;
    r.offset[1] = k;
    r.extent[1] = b;
    r.offset[2] = k + b;
    r.extent[2] = n - k - b;
  } else {
    std::int64_t done = iter * b;
    r.offset[0] = 0;
    r.extent[0] = n - done - b;
    r.offset[1] = n - done - b;
    r.extent[1] = b;
    r.offset[2] = n - done;
    r.extent[2] = done;
  }
  return r;
}

inline std::string statement_text(const Statement& s, const std::string& workspace) {
  std::ostringstream os;
  if (s.kind == OperationKind::GemmUpdate) {
    os << s.target << "_" << block_label(3, s.row, s.col) << (s.update.sign > 0 ? " -= " : " += ")
       << to_string(s.update, 3);
  } else {
    os << s.target << "_" << block_label(3, s.row, s.col) << " := " << to_string(s.kind) << "(";
    BlockPoly p(s.solve_terms.begin(), s.solve_terms.end());
    os << to_string(p, 3) << " = " << workspace << "_" << block_label(3, s.row, s.col) << ")";
  }
  return os.str();
}

/// Worksheet pretty-printer.
inline std::string to_string(const Algorithm& a) {
  std::ostringstream os;
  os << "Algorithm " << a.name << ": " << to_string(a.equation.lhs) << " = " << to_string(a.equation.rhs)
     << "  invariant " << to_string(a.invariant) << "\n";
  os << "  " << a.workspace << "_w := " << a.workspace << "\n";
  if (a.traversal == Traversal::TLtoBR)
    os << "  for k = 0, b, ..., n-b   (0 = [0,k), 1 = [k,k+b), 2 = [k+b,n))\n";
  else
    os << "  for k = 0, b, ..., n-b   (0 = [0,n-k-b), 1 = [n-k-b,n-k), 2 = [n-k,n))\n";
  int i = 1;
  for (const auto& s : a.updates) os << "    " << i++ << ": " << statement_text(s, a.workspace) << "\n";
  os << "  end\n";
  return os.str();
}

namespace detail {

struct FineOp {
  bool solve = false;
  int row = 0, col = 0;
  BlockTerm term;                // update term
  std::vector<BlockTerm> terms;  // solve-form
  OperationKind kind = OperationKind::GemmUpdate;
};

// Block indices an op touches: its position plus every inner product index.
inline std::vector<int> op_indices(const FineOp& op) {
  std::vector<int> idx{op.row, op.col};
  auto inner = [&](const BlockTerm& t) {
    for (std::size_t i = 0; i + 1 < t.factors.size(); ++i) idx.push_back(t.factors[i].eff_col());
  };
  if (op.solve) {
    // The solve op is vacuous only when its target block is empty.
  } else {
    inner(op.term);
  }
  return idx;
}

inline BlockTerm map_term(const BlockTerm& t, const int m[3], const BlockContext& coarse) {
  BlockTerm out{t.sign, {}};
  for (const auto& f : t.factors) out.factors.push_back(coarse.canonical({f.operand, m[f.row], m[f.col], f.transposed}));
  return out;
}

}  // namespace detail

inline Algorithm derive_algorithm(const PME& pme, const LoopInvariant& inv, const Equation& eq) {
  if (inv.computed.empty() || inv.computed.size() >= pme.tasks.size())
    fail(ErrorKind::PreconditionViolation, "invariant must be a proper non-empty task subset");
  for (int id : inv.computed) (void)pme.task(id);
  if (eq.unknowns.size() != 1) fail(ErrorKind::Unsupported, "exactly one unknown operand is supported");
  const std::string x = eq.unknowns.front();
  std::set<int> S(inv.computed.begin(), inv.computed.end());

  BlockContext fine(eq, 3), coarse(eq, 2);
  std::vector<detail::FineOp> ops;
  for (const auto& be : expand_equation(eq, 3)) {
    BlockFactor q{x, be.row, be.col, false};
    detail::FineOp solve;
    solve.solve = true;
    solve.row = be.row;
    solve.col = be.col;
    for (const auto& t : be.lhs) {
      if (t.mentions(x, be.row, be.col)) {
        solve.terms.push_back(t);
      } else {
        if (t.factors.size() > 2) fail(ErrorKind::Unsupported, "update terms with more than two factors");
        detail::FineOp u;
        u.row = be.row;
        u.col = be.col;
        u.term = t;
        ops.push_back(u);
      }
    }
    auto kind = classify_solve(solve.terms, q, fine, default_pattern_db());
    if (!kind) fail(ErrorKind::NonSynthesizable, "block " + block_label(3, be.row, be.col) + " has no solver pattern");
    solve.kind = *kind;
    ops.push_back(solve);
  }

  // Coarse task owning an op under a fine-to-coarse index map.
  auto image = [&](const detail::FineOp& op, const int m[3]) -> int {
    int R = m[op.row], C = m[op.col];
    const Task* solver = nullptr;
    for (const auto& t : pme.tasks)
      if (t.row == R && t.col == C && t.kind != OperationKind::GemmUpdate) solver = &t;
    if (!solver) fail(ErrorKind::NonSynthesizable, "no coarse task at " + block_label(2, R, C));
    if (op.solve) return solver->id;
    BlockTerm mt = detail::map_term(op.term, m, coarse);
    for (const auto& t : pme.tasks)
      if (t.row == R && t.col == C && t.kind == OperationKind::GemmUpdate && t.terms.front() == mt) return t.id;
    for (const auto& t : solver->terms)
      if (t == mt) return solver->id;
    fail(ErrorKind::NonSynthesizable, "block term " + to_string(op.term, 3) + " has no coarse image");
  };

  static const int tl_before[3] = {0, 1, 1}, tl_after[3] = {0, 0, 1};
  const int* before_map = inv.traversal == Traversal::TLtoBR ? tl_before : tl_after;
  const int* after_map = inv.traversal == Traversal::TLtoBR ? tl_after : tl_before;
  const int empty_at_start = inv.traversal == Traversal::TLtoBR ? 0 : 2;

  std::vector<bool> before(ops.size()), after(ops.size());
  for (std::size_t i = 0; i < ops.size(); ++i) {
    before[i] = S.count(image(ops[i], before_map)) > 0;
    after[i] = S.count(image(ops[i], after_map)) > 0;
  }

  auto reject = [&](const std::string& why) {
    fail(ErrorKind::NonSynthesizable, to_string(inv) + ": " + why);
  };
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (before[i] && !after[i]) reject("state-before is not contained in state-after");
    auto idx = detail::op_indices(ops[i]);
    bool touches_start = std::find(idx.begin(), idx.end(), empty_at_start) != idx.end();
    bool only_start = std::all_of(idx.begin(), idx.end(), [&](int v) { return v == empty_at_start; });
    if (before[i] && !touches_start) reject("invariant does not hold before the loop");
    if (only_start && !before[i]) reject("invariant does not imply the postcondition");
  }

  auto solve_of = [&](int r, int c) -> std::size_t {
    for (std::size_t i = 0; i < ops.size(); ++i)
      if (ops[i].solve && ops[i].row == r && ops[i].col == c) return i;
    fail(ErrorKind::NonSynthesizable, "no solver for block " + block_label(3, r, c));
  };
  std::map<std::size_t, std::set<std::size_t>> deps;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const auto& op = ops[i];
    auto add_factor_deps = [&](const BlockTerm& t) {
      for (const auto& f : t.factors)
        if (f.operand == x && !(f.row == op.row && f.col == op.col)) deps[i].insert(solve_of(f.row, f.col));
    };
    if (op.solve) {
      for (const auto& t : op.terms) add_factor_deps(t);
      for (std::size_t j = 0; j < ops.size(); ++j)
        if (!ops[j].solve && ops[j].row == op.row && ops[j].col == op.col) deps[i].insert(j);
    } else {
      add_factor_deps(op.term);
    }
  }

  std::vector<std::size_t> body;
  for (std::size_t i = 0; i < ops.size(); ++i)
    if (after[i] && !before[i]) body.push_back(i);
  for (std::size_t i : body) {
    for (std::size_t d : deps[i])
      if (!after[d]) reject("update reads a block not available in state-before");
    if (!ops[i].solve && before[solve_of(ops[i].row, ops[i].col)])
      reject("update targets a block that is already solved");
  }

  // Topological order, ties broken by target block then updates first.
  std::vector<std::size_t> order;
  std::set<std::size_t> placed;
  std::vector<std::size_t> pending = body;
  while (!pending.empty()) {
    std::optional<std::size_t> best;
    for (std::size_t i : pending) {
      bool ready = std::all_of(deps[i].begin(), deps[i].end(),
                               [&](std::size_t d) { return before[d] || placed.count(d); });
      if (!ready) continue;
      auto key = [&](std::size_t j) { return std::make_tuple(ops[j].row, ops[j].col, ops[j].solve, j); };
      if (!best || key(i) < key(*best)) best = i;
    }
    if (!best) reject("cyclic block dependencies");
    order.push_back(*best);
    placed.insert(*best);
    pending.erase(std::find(pending.begin(), pending.end(), *best));
  }

  Algorithm a;
  a.equation = eq;
  a.invariant = inv;
  a.pme_index = inv.pme_index;
  a.traversal = inv.traversal;
  a.workspace = pme.workspace;
  a.unknown = x;
  a.base_case = pme.root_kind;
  for (int id : inv.computed) {
    const Task& t = pme.task(id);
    if (t.kind != OperationKind::GemmUpdate) a.computed_quadrants.emplace_back(t.row, t.col);
  }
  bool sym_ws = is_symmetric(eq.operand(pme.workspace).structure);
  for (std::size_t i : order) {
    const auto& op = ops[i];
    Statement s;
    s.row = op.row;
    s.col = op.col;
    if (op.solve) {
      s.kind = op.kind;
      s.target = x;
      s.target_structure = fine.block_structure(x, op.row, op.col);
      s.solve_terms = op.terms;
    } else {
      s.kind = OperationKind::GemmUpdate;
      s.target = pme.workspace;
      s.target_structure = fine.block_structure(pme.workspace, op.row, op.col);
      s.update = op.term;
      if (sym_ws && op.row == op.col && op.term.factors.size() == 2) {
        BlockFactor f = op.term.factors[0];
        f.transposed = !f.transposed;
        s.symmetric_term = fine.canonical(f) == fine.canonical(op.term.factors[1]);
      }
    }
    a.updates.push_back(s);
  }
  return a;
}

inline std::vector<Algorithm> enumerate_algorithms(const Equation& eq) {
  auto pmes = derive_pmes(eq);
  std::vector<Algorithm> out;
  for (std::size_t p = 0; p < pmes.size(); ++p) {
    auto invs = enumerate_invariants(pmes[p], static_cast<int>(p));
    for (std::size_t i = 0; i < invs.size(); ++i) {
      try {
        Algorithm a = derive_algorithm(pmes[p], invs[i], eq);
        a.invariant_index = static_cast<int>(i);
        a.name = "alg" + std::to_string(out.size() + 1);
        out.push_back(std::move(a));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonSynthesizable) throw;
      }
    }
  }
  if (out.empty()) fail(ErrorKind::NoAlgorithm, "every loop invariant is non-synthesizable");
  return out;
}

// ---------------------------------------------------------------------------
// Flop counting by summation over iterations

namespace detail {

// Range [lo, hi) of inner indices t for which factor(i, t) is structurally
// nonzero, where the factor is p x s with effective structure `st`.
inline std::pair<std::int64_t, std::int64_t> row_support(Structure st, std::int64_t i, std::int64_t s) {
  switch (st) {
    case Structure::Zero: return {0, 0};
    case Structure::Lower: return {0, std::min(i + 1, s)};
    case Structure::Upper: return {std::min(i, s), s};
    default: return {0, s};
  }
}
// Range of t for which factor(t, j) is nonzero.
inline std::pair<std::int64_t, std::int64_t> col_support(Structure st, std::int64_t j, std::int64_t s) {
  switch (st) {
    case Structure::Zero: return {0, 0};
    case Structure::Lower: return {std::min(j, s), s};
    case Structure::Upper: return {0, std::min(j + 1, s)};
    default: return {0, s};
  }
}

}  // namespace detail

/// Flops of one statement given the block extents of the current iteration.
inline std::int64_t statement_flops(const Statement& s, const BlockContext& ctx, const std::int64_t ext[3]) {
  std::int64_t p = ext[s.row], q = ext[s.col];
  if (p == 0 || q == 0) return 0;
  std::int64_t total = 0;
  switch (s.kind) {
    case OperationKind::GemmUpdate: {
      const auto& f = s.update.factors;
      if (f.size() == 1) {
        if (s.symmetric_term) return p * (p + 1) / 2;
        return p * q;
      }
      std::int64_t inner = ext[f[0].eff_col()];
      Structure a = ctx.effective_structure(f[0]), b = ctx.effective_structure(f[1]);
      for (std::int64_t i = 0; i < p; ++i)
        for (std::int64_t j = s.symmetric_term ? i : 0; j < q; ++j) {
          auto [l1, h1] = detail::row_support(a, i, inner);
          auto [l2, h2] = detail::col_support(b, j, inner);
          std::int64_t len = std::max<std::int64_t>(0, std::min(h1, h2) - std::max(l1, l2));
          total += 2 * len;
        }
      return total;
    }
    case OperationKind::Chol:
      for (std::int64_t i = 0; i < p; ++i) total += (p - i) * (2 * i + 1);
      return total;
    case OperationKind::TrsmLeftTransposed: return q * p * p;
    case OperationKind::TrsmRight: return p * q * q;
    case OperationKind::Sylv:
      for (std::int64_t i = 0; i < p; ++i)
        for (std::int64_t j = 0; j < q; ++j) total += 2 * i + 2 * j + 2;
      return total;
    case OperationKind::Lyap:
      for (std::int64_t i = 0; i < p; ++i)
        for (std::int64_t j = i; j < q; ++j) total += 2 * i + 2 * j + 2;
      return total;
    case OperationKind::Assign: return 0;
  }
  return 0;
}

inline std::int64_t flop_count(const Algorithm& alg, std::int64_t n, std::int64_t b) {
  if (b < 1 || n < 1 || n % b != 0)
    fail(ErrorKind::NonDivisible, "block size " + std::to_string(b) + " does not divide " + std::to_string(n));
  BlockContext ctx(alg.equation, 3);
  std::int64_t total = 0;
  for (std::int64_t it = 0; it < n / b; ++it) {
    Repartition r = repartition(alg.traversal, n, b, it);
    for (const auto& s : alg.updates) total += statement_flops(s, ctx, r.extent);
  }
  return total;
}

}  // namespace lagen
