#pragma once

// Partitioned Matrix Expressions: 2x2 block expansion of the equation and
// fixed-point resolution of the quadrant equations against a small database
// of known operations.

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lagen/block_algebra.hpp"

namespace lagen {

struct QuadrantEquation {
  int row = 0, col = 0;
  BlockPoly lhs, rhs;
  std::optional<BlockFactor> target;
};

// ---------------------------------------------------------------------------
// Pattern database

enum class StructReq { Any, Lower, Upper, Triangular };

struct SlotPattern {
  bool unknown = false;
  bool transposed = false;  // required transposition flag of the factor
  char coef = 0;            // coefficient variable, shared across terms
  StructReq req = StructReq::Any;
  bool coef_transposed_use = false;  // this use is the transpose of the bound coefficient
};

struct PatternEntry {
  OperationKind kind;
  std::vector<std::vector<SlotPattern>> terms;
  StructReq unknown_req = StructReq::Any;
  bool unknown_symmetric = false;
  bool unknown_general = false;
  bool rhs_spd = false;
};

using PatternDB = std::vector<PatternEntry>;

inline const PatternDB& default_pattern_db() {
  static const PatternDB db = [] {
    SlotPattern U{true, false};
    SlotPattern UT{true, true};
    PatternDB d;
    d.push_back({OperationKind::Chol, {{UT, U}}, StructReq::Upper, false, false, true});
    d.push_back({OperationKind::TrsmLeftTransposed,
                 {{SlotPattern{false, true, 'K', StructReq::Triangular}, U}}});
    d.push_back({OperationKind::TrsmRight, {{U, SlotPattern{false, false, 'K', StructReq::Triangular}}}});
    {
      PatternEntry e{OperationKind::Sylv,
                     {{SlotPattern{false, false, 'L', StructReq::Lower}, U},
                      {U, SlotPattern{false, false, 'U', StructReq::Upper}}}};
      e.unknown_general = true;
      d.push_back(e);
    }
    {
      SlotPattern L{false, false, 'L', StructReq::Lower};
      SlotPattern LT{false, false, 'L', StructReq::Upper, true};
      PatternEntry e{OperationKind::Lyap, {{L, U}, {U, LT}}};
      e.unknown_symmetric = true;
      d.push_back(e);
    }
    d.push_back({OperationKind::Assign, {{U}}});
    return d;
  }();
  return db;
}

namespace detail {

inline bool satisfies(StructReq req, Structure s) {
  switch (req) {
    case StructReq::Any: return true;
    case StructReq::Lower: return s == Structure::Lower;
    case StructReq::Upper: return s == Structure::Upper;
    case StructReq::Triangular: return is_triangular(s);
  }
  return false;
}

// Coefficient slots with `transposed == false` bind either orientation; the
// structural requirement decides.
inline bool match_terms(const PatternEntry& e, const std::vector<BlockTerm>& terms, const BlockFactor& q,
                        const BlockContext& ctx, std::map<char, BlockFactor>& bind) {
  if (terms.size() != e.terms.size()) return false;
  for (std::size_t ti = 0; ti < terms.size(); ++ti) {
    const auto& t = terms[ti];
    const auto& pt = e.terms[ti];
    if (t.sign != 1 || t.factors.size() != pt.size()) return false;
    for (std::size_t fi = 0; fi < pt.size(); ++fi) {
      const SlotPattern& s = pt[fi];
      const BlockFactor& f = t.factors[fi];
      bool is_q = f.operand == q.operand && f.row == q.row && f.col == q.col;
      if (s.unknown) {
        if (!is_q || f.transposed != s.transposed) return false;
        continue;
      }
      if (is_q) return false;
      if (s.transposed && !f.transposed) return false;
      if (!satisfies(s.req, ctx.effective_structure(f))) return false;
      BlockFactor base = f;
      if (s.coef_transposed_use) base.transposed = !base.transposed;
      base = ctx.canonical(base);
      auto it = bind.find(s.coef);
      if (it == bind.end())
        bind.emplace(s.coef, base);
      else if (!(it->second == base))
        return false;
    }
  }
  return true;
}

}  // namespace detail

/// Finds the first DB entry matching the solve-form `terms` for unknown `q`.
inline std::optional<OperationKind> classify_solve(const std::vector<BlockTerm>& terms, const BlockFactor& q,
                                                   const BlockContext& ctx, const PatternDB& db) {
  const Equation& eq = ctx.equation();
  Structure qs = ctx.block_structure(q.operand, q.row, q.col);
  for (const auto& e : db) {
    if (e.unknown_req != StructReq::Any && !detail::satisfies(e.unknown_req, qs)) continue;
    if (e.unknown_symmetric && !is_symmetric(qs)) continue;
    if (e.unknown_general && qs != Structure::General) continue;
    if (e.rhs_spd && eq.rhs->structure != Structure::SPD) continue;
    std::vector<BlockTerm> perm = terms;
    std::sort(perm.begin(), perm.end(), [](const BlockTerm& a, const BlockTerm& b) {
      return a.factors < b.factors;
    });
    do {
      std::map<char, BlockFactor> bind;
      if (detail::match_terms(e, perm, q, ctx, bind)) return e.kind;
    } while (std::next_permutation(perm.begin(), perm.end(), [](const BlockTerm& a, const BlockTerm& b) {
      return a.factors < b.factors;
    }));
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Tasks and PMEs

struct Task {
  int id = 0;
  OperationKind kind = OperationKind::GemmUpdate;
  bool recursive = false;
  BlockFactor output;               // X quadrant for solvers, workspace quadrant for updates
  std::vector<BlockFactor> inputs;  // quadrants read (accumulation target excluded)
  int row = 0, col = 0;             // equation position
  std::vector<BlockTerm> terms;     // the update term, or the solve-form terms
};

struct PME {
  std::map<std::string, PartitionedOperand> partitioning;
  std::vector<Task> tasks;
  std::string workspace;  // rhs operand, overwritten by updates
  OperationKind root_kind = OperationKind::Assign;

  const Task& task(int id) const {
    for (const auto& t : tasks)
      if (t.id == id) return t;
    fail(ErrorKind::PreconditionViolation, "no task T" + std::to_string(id));
  }
};

inline std::string quadrant_name(const BlockFactor& f, int g = 2) {
  BlockFactor plain = f;
  plain.transposed = false;
  return to_string(plain, g);
}

inline std::string task_equation(const Task& t, const std::string& workspace, int g = 2) {
  std::string w = workspace + (g > 1 ? "_" + block_label(g, t.row, t.col) : "");
  if (t.kind == OperationKind::GemmUpdate) {
    const BlockTerm& term = t.terms.front();
    return w + (term.sign > 0 ? " -= " : " += ") + to_string(term, g);
  }
  BlockPoly p(t.terms.begin(), t.terms.end());
  return to_string(p, g) + " = " + w;
}

inline std::string to_string(const Task& t, const std::string& workspace) {
  std::ostringstream os;
  os << "T" << t.id << ": " << to_string(t.kind) << "(";
  for (std::size_t i = 0; i < t.inputs.size(); ++i) os << (i ? ", " : "") << quadrant_name(t.inputs[i]);
  os << ") -> " << quadrant_name(t.output) << " :: " << task_equation(t, workspace);
  return os.str();
}

inline std::string to_string(const PME& p) {
  std::ostringstream os;
  for (const auto& t : p.tasks) os << to_string(t, p.workspace) << "\n";
  return os.str();
}

namespace detail {

inline void require_square_single_dim(const Equation& eq) {
  const Dim& d = eq.operands.front().rows;
  if (!d.symbolic()) fail(ErrorKind::Unsupported, "operand dimensions must be symbolic");
  for (const auto& op : eq.operands)
    if (!(op.rows == d) || !(op.cols == d))
      fail(ErrorKind::Unsupported, "all operands must be square over the same dimension (" + op.name + ")");
}

inline std::string workspace_of(const Equation& eq) {
  if (eq.rhs->kind != ExprKind::Ref || eq.operand(eq.rhs->name).role != Role::Input)
    fail(ErrorKind::Unsupported, "the right-hand side must be a single input operand");
  return eq.rhs->name;
}

inline bool is_known(const BlockFactor& f, const Equation& eq, const std::set<std::pair<int, int>>& known_x) {
  if (!eq.is_unknown(f.operand)) return true;
  return known_x.count({f.row, f.col}) > 0;
}

}  // namespace detail

/// The standard partitioning: every operand split 2x2.
inline std::map<std::string, PartitionedOperand> default_partitioning(const Equation& eq) {
  std::map<std::string, PartitionedOperand> parts;
  for (const auto& op : eq.operands) parts.emplace(op.name, partition_operand(op, Grid::G2x2));
  return parts;
}

inline std::vector<QuadrantEquation> expand_blocked(const Equation& eq,
                                                    const std::map<std::string, PartitionedOperand>& parts) {
  detail::require_square_single_dim(eq);
  for (const auto& op : eq.operands) {
    auto it = parts.find(op.name);
    if (it == parts.end() || it->second.grid != Grid::G2x2)
      fail(ErrorKind::NonconformalPartitioning, op.name + " is not partitioned 2x2 like the traversal dimension");
  }
  std::vector<QuadrantEquation> out;
  for (auto& be : expand_equation(eq, 2)) out.push_back({be.row, be.col, be.lhs, be.rhs, std::nullopt});
  return out;
}

struct MatchResult {
  bool resolved = false;
  std::vector<Task> chain;  // updates then the solver; ids unassigned
};

/// Resolves one quadrant equation if exactly one unknown quadrant remains and
/// its solve-form matches a DB entry.
inline MatchResult match_pattern(const QuadrantEquation& qe, const std::set<std::pair<int, int>>& known_x,
                                 const BlockContext& ctx, const PatternDB& db = default_pattern_db()) {
  const Equation& eq = ctx.equation();
  std::set<std::pair<int, int>> unknown;
  std::string xname;
  for (const auto& t : qe.lhs)
    for (const auto& f : t.factors)
      if (!detail::is_known(f, eq, known_x)) {
        unknown.insert({f.row, f.col});
        xname = f.operand;
      }
  for (const auto& t : qe.rhs)
    for (const auto& f : t.factors)
      if (!detail::is_known(f, eq, known_x)) return {};
  if (unknown.size() != 1 || eq.unknowns.size() != 1) return {};
  BlockFactor q{xname, unknown.begin()->first, unknown.begin()->second, false};

  std::vector<BlockTerm> solve, updates;
  for (const auto& t : qe.lhs) (t.mentions(q.operand, q.row, q.col) ? solve : updates).push_back(t);
  auto kind = classify_solve(solve, q, ctx, db);
  if (!kind) return {};

  const std::string ws = eq.rhs->name;
  BlockFactor wq{ws, qe.row, qe.col, false};
  MatchResult r;
  r.resolved = true;
  for (const auto& u : updates) {
    Task t;
    t.kind = OperationKind::GemmUpdate;
    t.output = wq;
    t.row = qe.row;
    t.col = qe.col;
    t.terms = {u};
    for (const auto& f : u.factors) t.inputs.push_back(BlockFactor{f.operand, f.row, f.col, false});
    r.chain.push_back(t);
  }
  Task s;
  s.kind = *kind;
  s.output = q;
  s.row = qe.row;
  s.col = qe.col;
  s.terms = solve;
  for (const auto& t : solve)
    for (const auto& f : t.factors) {
      BlockFactor plain{f.operand, f.row, f.col, false};
      if (f.operand == q.operand && f.row == q.row && f.col == q.col) continue;
      if (std::find(s.inputs.begin(), s.inputs.end(), plain) == s.inputs.end()) s.inputs.push_back(plain);
    }
  s.inputs.push_back(wq);
  r.chain.push_back(s);
  return r;
}

/// Kind of the unpartitioned equation, used to flag recursive tasks.
inline std::optional<OperationKind> root_kind(const Equation& eq, const PatternDB& db = default_pattern_db()) {
  BlockContext ctx(eq, 1);
  auto eqs = expand_equation(eq, 1);
  if (eqs.size() != 1) return std::nullopt;
  QuadrantEquation qe{0, 0, eqs[0].lhs, eqs[0].rhs, std::nullopt};
  auto m = match_pattern(qe, {}, ctx, db);
  if (!m.resolved || m.chain.size() != 1) return std::nullopt;
  return m.chain.back().kind;
}

namespace detail {

inline std::string pme_signature(const PME& p) {
  std::string s;
  for (const auto& t : p.tasks) {
    std::string line = to_string(t, p.workspace);
    s += line.substr(line.find(':')) + "\n";
  }
  return s;
}

}  // namespace detail

inline std::vector<PME> derive_pmes(const Equation& eq, const PatternDB& db = default_pattern_db()) {
  detail::require_square_single_dim(eq);
  std::string ws = detail::workspace_of(eq);
  auto rk = root_kind(eq, db);

  std::vector<PME> out;
  // One admissible partitioning for square single-dimension equations.
  auto parts = default_partitioning(eq);
  auto qes = expand_blocked(eq, parts);
  BlockContext ctx(eq, 2);

  std::set<std::pair<int, int>> known;
  std::vector<bool> done(qes.size(), false);
  PME pme;
  pme.partitioning = parts;
  pme.workspace = ws;
  pme.root_kind = rk.value_or(OperationKind::Assign);
  int next_id = 1;
  for (bool progress = true; progress;) {
    progress = false;
    std::set<std::pair<int, int>> newly;
    for (std::size_t i = 0; i < qes.size(); ++i) {
      if (done[i]) continue;
      auto m = match_pattern(qes[i], known, ctx, db);
      if (!m.resolved) continue;
      for (auto& t : m.chain) {
        t.id = next_id++;
        t.recursive = rk && t.kind == *rk && t.kind != OperationKind::GemmUpdate;
        pme.tasks.push_back(t);
      }
      qes[i].target = m.chain.back().output;
      newly.insert({m.chain.back().output.row, m.chain.back().output.col});
      done[i] = true;
      progress = true;
    }
    known.insert(newly.begin(), newly.end());
  }
  if (std::find(done.begin(), done.end(), false) != done.end())
    fail(ErrorKind::NoPME, "fixed point reached with unresolved quadrant equations for " + to_string(eq.lhs) +
                               " = " + to_string(eq.rhs));
  for (const auto& existing : out)
    if (detail::pme_signature(existing) == detail::pme_signature(pme)) return out;
  out.push_back(std::move(pme));
  return out;
}

}  // namespace lagen
