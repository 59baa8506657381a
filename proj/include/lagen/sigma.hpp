#pragma once

// Lowering of blocked algorithms to Σ loop programs and the passes over them:
// structure pruning, tiling with explicit gathers/scatters, and ν-kernel mapping.

#include "lagen/sigma_ir.hpp"

namespace lagen {

namespace sigma_detail {

struct BlockBounds {
  Affine off[3], end[3];
};

inline BlockBounds block_bounds(Traversal t, std::int64_t n, std::int64_t b) {
  Affine k = Affine::var("k");
  BlockBounds bb;
  if (t == Traversal::TLtoBR) {
    bb.off[0] = 0, bb.end[0] = k;
    bb.off[1] = k, bb.end[1] = k + b;
    bb.off[2] = k + b, bb.end[2] = n;
  } else {
    bb.off[0] = 0, bb.end[0] = Affine(n) - k - b;
    bb.off[1] = Affine(n) - k - b, bb.end[1] = Affine(n) - k;
    bb.off[2] = Affine(n) - k, bb.end[2] = n;
  }
  return bb;
}

/// Shared state of one statement's lowering.
struct Lowerer {
  const SigmaProgram& p;
  BlockContext ctx;
  BlockBounds bb;

  Lowerer(const SigmaProgram& prog)
      : p(prog), ctx(prog.algorithm.equation, 3), bb(block_bounds(prog.algorithm.traversal, prog.n, prog.b)) {}

  bool sym(const std::string& op) const { return is_symmetric(p.structure(op)); }

  /// Element (i, t) of a factor's effective block in absolute coordinates.
  Access factor(const BlockFactor& f, const Affine& i, const Affine& t) const {
    return f.transposed ? Access{f.operand, t, i, sym(f.operand)} : Access{f.operand, i, t, sym(f.operand)};
  }
  Access x(const Statement& s, const Affine& i, const Affine& j) const { return {s.target, i, j, sym(s.target)}; }
  Access xw(const Statement& s, const Affine& i, const Affine& j) const { return {s.target, i, j, false}; }
  Access w(const Affine& i, const Affine& j) const { return {p.workspace, i, j, false}; }

  /// Absolute index of loop variable v over block `blk`, walked forward or backward.
  Affine index(const std::string& v, int blk, bool forward, std::int64_t step = 1) const {
    if (forward) return Affine::var(v);
    return bb.off[blk] + bb.end[blk] - step - Affine::var(v);
  }
  Node block_loop(const std::string& v, int blk, std::vector<Node> body, std::int64_t step = 1) const {
    return make_loop(v, {bb.off[blk]}, {bb.end[blk]}, std::move(body), step);
  }

  std::pair<BlockFactor, bool> coefficient(const BlockTerm& t, const Statement& s) const {
    if (t.factors.size() != 2 || t.sign != 1) fail(ErrorKind::Unsupported, "solver term shape");
    const auto& u = t.factors[1];
    if (u.operand == s.target && u.row == s.row && u.col == s.col) return {t.factors[0], true};
    return {t.factors[1], false};
  }

  // ---- scalar, unpruned: sums run over whole blocks, skipping only the pivot index

  /// Loops accumulating dst -= Σ_p a(p)·b(p) over [off, pivot) and (pivot, end).
  std::vector<Node> split_sum(const std::string& v, const Affine& off, const Affine& pivot, const Affine& end,
                              const std::function<std::pair<Access, Access>(const Affine&)>& ab,
                              const Access& dst) const {
    auto [a, b] = ab(Affine::var(v));
    std::vector<Node> out;
    out.push_back(make_loop(v, {off}, {pivot}, {make_op(ScalarKind::MulSub, dst, a, b)}));
    out.push_back(make_loop(v, {pivot + 1}, {end}, {make_op(ScalarKind::MulSub, dst, a, b)}));
    return out;
  }

  std::vector<Node> gemm(const Statement& s) const {
    Affine i = Affine::var("i"), j = Affine::var("j"), t = Affine::var("p");
    const auto& f = s.update.factors;
    std::vector<Node> inner;
    if (f.size() == 1) {
      inner.push_back(make_op(ScalarKind::Sub, w(i, j), factor(f[0], i, j), {}, s.update.sign));
    } else {
      int sblk = f[0].eff_col();
      inner.push_back(make_loop("p", {bb.off[sblk]}, {bb.end[sblk]},
                                {make_op(ScalarKind::MulSub, w(i, j), factor(f[0], i, t), factor(f[1], t, j),
                                         s.update.sign)}));
    }
    std::vector<Affine> jlo{bb.off[s.col]};
    if (s.symmetric_term) jlo.push_back(i);
    Node jl = make_loop("j", jlo, {bb.end[s.col]}, std::move(inner));
    return {block_loop("i", s.row, {std::move(jl)})};
  }

  std::vector<Node> chol(const Statement& s) const {
    int r = s.row;
    Affine i = Affine::var("i"), j = Affine::var("j");
    std::vector<Node> diag{make_op(ScalarKind::Copy, xw(s, i, i), w(i, i))};
    for (auto& n : split_sum("p", bb.off[r], i, bb.end[r],
                             [&](const Affine& t) { return std::pair{x(s, t, i), x(s, t, i)}; }, xw(s, i, i)))
      diag.push_back(std::move(n));
    diag.push_back(make_op(ScalarKind::Sqrt, xw(s, i, i)));
    std::vector<Node> off{make_op(ScalarKind::Copy, xw(s, i, j), w(i, j))};
    for (auto& n : split_sum("p", bb.off[r], i, bb.end[r],
                             [&](const Affine& t) { return std::pair{x(s, t, i), x(s, t, j)}; }, xw(s, i, j)))
      off.push_back(std::move(n));
    off.push_back(make_op(ScalarKind::Div, xw(s, i, j), x(s, i, i)));
    diag.push_back(make_loop("j", {i + 1}, {bb.end[r]}, std::move(off)));
    return {block_loop("i", r, std::move(diag))};
  }

  std::vector<Node> trsm(const Statement& s) const {
    auto [kf, left] = coefficient(s.solve_terms.front(), s);
    Structure ks = ctx.effective_structure(kf);
    if (!is_triangular(ks)) fail(ErrorKind::Unsupported, "TRSM coefficient is not triangular");
    bool lower = ks == Structure::Lower;
    bool forward = left ? lower : !lower;
    int dblk = left ? s.row : s.col;  // solved dimension
    Affine d = index(left ? "i" : "j", dblk, forward);
    Affine o = Affine::var(left ? "j" : "i");
    Affine i = left ? d : o, j = left ? o : d;
    std::vector<Node> body{make_op(ScalarKind::Copy, xw(s, i, j), w(i, j))};
    for (auto& n : split_sum("p", bb.off[dblk], d, bb.end[dblk],
                             [&](const Affine& t) {
                               return left ? std::pair{factor(kf, d, t), x(s, t, j)}
                                           : std::pair{x(s, i, t), factor(kf, t, d)};
                             },
                             xw(s, i, j)))
      body.push_back(std::move(n));
    body.push_back(make_op(ScalarKind::Div, xw(s, i, j), factor(kf, d, d)));
    Node inner = block_loop(left ? "j" : "i", left ? s.col : s.row, std::move(body));
    return {block_loop(left ? "i" : "j", dblk, {std::move(inner)})};
  }

  std::pair<BlockFactor, BlockFactor> sylv_coefficients(const Statement& s) const {
    BlockFactor a{}, b{};
    bool ha = false, hb = false;
    for (const auto& t : s.solve_terms) {
      auto [c, left] = coefficient(t, s);
      (left ? a : b) = c;
      (left ? ha : hb) = true;
    }
    if (!ha || !hb) fail(ErrorKind::Unsupported, "SYLV needs a left and a right coefficient");
    return {a, b};
  }

  std::vector<Node> sylv(const Statement& s) const {
    auto [af, bf] = sylv_coefficients(s);
    bool a_lower = ctx.effective_structure(af) == Structure::Lower;
    bool b_upper = ctx.effective_structure(bf) == Structure::Upper;
    bool lyap = s.kind == OperationKind::Lyap;
    if (lyap && !(a_lower && b_upper)) fail(ErrorKind::Unsupported, "LYAP needs a lower coefficient");
    Affine i = index("i", s.row, a_lower), j = index("j", s.col, b_upper);
    std::vector<Node> body{make_op(ScalarKind::Copy, xw(s, i, j), w(i, j))};
    for (auto& n : split_sum("p", bb.off[s.row], i, bb.end[s.row],
                             [&](const Affine& t) { return std::pair{factor(af, i, t), x(s, t, j)}; }, xw(s, i, j)))
      body.push_back(std::move(n));
    for (auto& n : split_sum("p", bb.off[s.col], j, bb.end[s.col],
                             [&](const Affine& t) { return std::pair{x(s, i, t), factor(bf, t, j)}; }, xw(s, i, j)))
      body.push_back(std::move(n));
    body.push_back(make_op(ScalarKind::DivSum, xw(s, i, j), factor(af, i, i), factor(bf, j, j)));
    std::vector<Affine> jlo{bb.off[s.col]};
    if (lyap) jlo.push_back(i);
    Node jl = make_loop("j", jlo, {bb.end[s.col]}, std::move(body));
    return {block_loop("i", s.row, {std::move(jl)})};
  }

  std::vector<Node> assign(const Statement& s) const {
    Affine i = Affine::var("i"), j = Affine::var("j");
    Node jl = block_loop("j", s.col, {make_op(ScalarKind::Copy, xw(s, i, j), w(i, j))});
    return {block_loop("i", s.row, {std::move(jl)})};
  }

  std::vector<Node> scalar(const Statement& s) const {
    switch (s.kind) {
      case OperationKind::GemmUpdate: return gemm(s);
      case OperationKind::Chol: return chol(s);
      case OperationKind::TrsmLeftTransposed:
      case OperationKind::TrsmRight: return trsm(s);
      case OperationKind::Sylv:
      case OperationKind::Lyap: return sylv(s);
      case OperationKind::Assign: return assign(s);
    }
    return {};
  }

  // ---- scalar tiling of updates

  std::vector<Node> gemm_tiled(const Statement& s, std::int64_t t) const {
    Affine ii = Affine::var("ii"), jj = Affine::var("jj");
    Affine i = Affine::var("i"), j = Affine::var("j"), q = Affine::var("p");
    const auto& f = s.update.factors;
    Access c{"tc", i, j, false};
    std::vector<Node> inner;
    if (f.size() == 1) {
      inner.push_back(make_op(ScalarKind::Sub, c, factor(f[0], ii + i, jj + j), {}, s.update.sign));
    } else {
      int sblk = f[0].eff_col();
      inner.push_back(make_loop("p", {bb.off[sblk]}, {bb.end[sblk]},
                                {make_op(ScalarKind::MulSub, c, factor(f[0], ii + i, q), factor(f[1], q, jj + j),
                                         s.update.sign)}));
    }
    std::vector<Affine> jlo{0};
    if (s.symmetric_term) jlo.push_back(i + ii - jj);
    Node il = make_loop("i", {0}, {t}, {make_loop("j", jlo, {t}, std::move(inner))});
    std::vector<Node> tile_body;
    tile_body.push_back(make_transfer(NodeKind::Gather, "tc", p.workspace, ii, jj, t, t));
    tile_body.push_back(std::move(il));
    tile_body.push_back(make_transfer(NodeKind::Scatter, "tc", p.workspace, ii, jj, t, t));
    std::vector<Affine> jjlo{bb.off[s.col]};
    if (s.symmetric_term) jjlo.push_back(ii);
    Node jjl = make_loop("jj", jjlo, {bb.end[s.col]}, std::move(tile_body), t);
    return {block_loop("ii", s.row, {std::move(jjl)}, t)};
  }

  // ---- ν-tiled forms

  /// Loads the effective ν-tile (R, C) of factor f into `dst`.
  void load(std::vector<Node>& out, const BlockFactor& f, const Affine& R, const Affine& C,
            const std::string& dst) const {
    std::int64_t v = p.nu;
    if (f.transposed) {
      out.push_back(make_transfer(NodeKind::Gather, "tt", f.operand, C, R, v, v));
      out.push_back(make_call(NuKernel::Trans, {dst, "tt"}));
    } else {
      out.push_back(make_transfer(NodeKind::Gather, dst, f.operand, R, C, v, v));
    }
  }
  Node gather(const std::string& buf, const std::string& op, const Affine& R, const Affine& C) const {
    return make_transfer(NodeKind::Gather, buf, op, R, C, p.nu, p.nu);
  }
  Node scatter(const std::string& buf, const std::string& op, const Affine& R, const Affine& C) const {
    return make_transfer(NodeKind::Scatter, buf, op, R, C, p.nu, p.nu);
  }

  /// Tile-level bounds on the inner index of a product imposed by a
  /// triangular factor: `row_side` when the inner index is the factor's column.
  void support(Structure s, bool row_side, const Affine& fixed, std::vector<Affine>& lo,
               std::vector<Affine>& hi) const {
    std::int64_t v = p.nu;
    if (s == Structure::Lower) {
      if (row_side) hi.push_back(fixed + v);  // inner ≤ fixed
      else lo.push_back(fixed);               // inner ≥ fixed
    } else if (s == Structure::Upper) {
      if (row_side) lo.push_back(fixed);
      else hi.push_back(fixed + v);
    }
  }

  std::vector<Node> gemm_nu(const Statement& s) const {
    std::int64_t v = p.nu;
    Affine ii = Affine::var("ii"), jj = Affine::var("jj"), pp = Affine::var("pp");
    const auto& f = s.update.factors;
    bool sub = s.update.sign > 0;
    std::vector<Node> body{gather("tc", p.workspace, ii, jj)};
    if (f.size() == 1) {
      load(body, f[0], ii, jj, "ta");
      body.push_back(make_call(NuKernel::AddSub, {"tc", "ta"}, sub));
    } else {
      int sblk = f[0].eff_col();
      std::vector<Affine> lo{bb.off[sblk]}, hi{bb.end[sblk]};
      support(ctx.effective_structure(f[0]), true, ii, lo, hi);
      support(ctx.effective_structure(f[1]), false, jj, lo, hi);
      std::vector<Node> inner;
      load(inner, f[0], ii, pp, "ta");
      load(inner, f[1], pp, jj, "tb");
      inner.push_back(make_call(NuKernel::Mac, {"tc", "ta", "tb"}, sub));
      body.push_back(make_loop("pp", lo, hi, std::move(inner), v));
    }
    body.push_back(scatter("tc", p.workspace, ii, jj));
    std::vector<Affine> jjlo{bb.off[s.col]};
    if (s.symmetric_term) jjlo.push_back(ii);
    Node jjl = make_loop("jj", jjlo, {bb.end[s.col]}, std::move(body), v);
    return {block_loop("ii", s.row, {std::move(jjl)}, v)};
  }

  std::vector<Node> chol_nu(const Statement& s) const {
    std::int64_t v = p.nu;
    int r = s.row;
    Affine ii = Affine::var("ii"), jj = Affine::var("jj"), pp = Affine::var("pp");
    auto update = [&](const Affine& col) {
      std::vector<Node> acc{gather("tt", s.target, pp, ii), make_call(NuKernel::Trans, {"ta", "tt"}),
                            gather("tb", s.target, pp, col), make_call(NuKernel::Mac, {"tc", "ta", "tb"}, 1)};
      return make_loop("pp", {bb.off[r]}, {ii}, std::move(acc), v);
    };
    std::vector<Node> diag{gather("tc", p.workspace, ii, ii), update(ii), make_call(NuKernel::Chol, {"tc"}),
                           scatter("tc", s.target, ii, ii)};
    std::vector<Node> off{gather("tc", p.workspace, ii, jj),
                          update(jj),
                          gather("tt", s.target, ii, ii),
                          make_call(NuKernel::Trans, {"td", "tt"}),
                          make_call(NuKernel::Trsm, {"tc", "td"}, 0),
                          scatter("tc", s.target, ii, jj)};
    diag.push_back(make_loop("jj", {ii + v}, {bb.end[r]}, std::move(off), v));
    return {block_loop("ii", r, std::move(diag), v)};
  }

  std::vector<Node> trsm_nu(const Statement& s) const {
    std::int64_t v = p.nu;
    auto [kf, left] = coefficient(s.solve_terms.front(), s);
    bool lower = ctx.effective_structure(kf) == Structure::Lower;
    bool forward = left ? lower : !lower;
    int dblk = left ? s.row : s.col;
    Affine d = index(left ? "ii" : "jj", dblk, forward, v);
    Affine o = Affine::var(left ? "jj" : "ii");
    Affine ii = left ? d : o, jj = left ? o : d, pp = Affine::var("pp");
    std::vector<Node> body{gather("tc", p.workspace, ii, jj)};
    std::vector<Node> acc;
    if (left) {
      load(acc, kf, d, pp, "ta");
      acc.push_back(gather("tb", s.target, pp, jj));
    } else {
      acc.push_back(gather("ta", s.target, ii, pp));
      load(acc, kf, pp, d, "tb");
    }
    acc.push_back(make_call(NuKernel::Mac, {"tc", "ta", "tb"}, 1));
    // Off-diagonal tiles already solved precede the pivot tile in solve order.
    if (forward)
      body.push_back(make_loop("pp", {bb.off[dblk]}, {d}, std::move(acc), v));
    else
      body.push_back(make_loop("pp", {d + v}, {bb.end[dblk]}, std::move(acc), v));
    load(body, kf, d, d, "td");
    body.push_back(make_call(NuKernel::Trsm, {"tc", "td"}, (left ? 0 : kTrsmRight) | (lower ? 0 : kTrsmUpper)));
    body.push_back(scatter("tc", s.target, ii, jj));
    Node inner = block_loop(left ? "jj" : "ii", left ? s.col : s.row, std::move(body), v);
    return {block_loop(left ? "ii" : "jj", dblk, {std::move(inner)}, v)};
  }

  std::vector<Node> sylv_nu(const Statement& s) const {
    std::int64_t v = p.nu;
    auto [af, bf] = sylv_coefficients(s);
    if (ctx.effective_structure(af) != Structure::Lower || ctx.effective_structure(bf) != Structure::Upper)
      fail(ErrorKind::Unsupported, "ν Sylvester leaf needs lower/upper coefficients");
    bool lyap = s.kind == OperationKind::Lyap;
    Affine ii = Affine::var("ii"), jj = Affine::var("jj"), pp = Affine::var("pp"), qq = Affine::var("qq");
    std::vector<Node> body{gather("tc", p.workspace, ii, jj)};
    std::vector<Node> left, right;
    load(left, af, ii, pp, "ta");
    left.push_back(gather("tb", s.target, pp, jj));
    left.push_back(make_call(NuKernel::Mac, {"tc", "ta", "tb"}, 1));
    right.push_back(gather("ta", s.target, ii, qq));
    load(right, bf, qq, jj, "tb");
    right.push_back(make_call(NuKernel::Mac, {"tc", "ta", "tb"}, 1));
    body.push_back(make_loop("pp", {bb.off[s.row]}, {ii}, std::move(left), v));
    body.push_back(make_loop("qq", {bb.off[s.col]}, {jj}, std::move(right), v));
    load(body, af, ii, ii, "ta");
    load(body, bf, jj, jj, "tb");
    body.push_back(make_call(NuKernel::Sylv, {"tc", "ta", "tb"}));
    body.push_back(scatter("tc", s.target, ii, jj));
    std::vector<Affine> jjlo{bb.off[s.col]};
    if (lyap) jjlo.push_back(ii);
    Node jjl = make_loop("jj", jjlo, {bb.end[s.col]}, std::move(body), v);
    return {block_loop("ii", s.row, {std::move(jjl)}, v)};
  }

  std::vector<Node> assign_nu(const Statement& s) const {
    Affine ii = Affine::var("ii"), jj = Affine::var("jj");
    Node jjl = block_loop("jj", s.col, {gather("tc", p.workspace, ii, jj), scatter("tc", s.target, ii, jj)}, p.nu);
    return {block_loop("ii", s.row, {std::move(jjl)}, p.nu)};
  }

  std::vector<Node> nu_tiled(const Statement& s) const {
    switch (s.kind) {
      case OperationKind::GemmUpdate: return gemm_nu(s);
      case OperationKind::Chol: return chol_nu(s);
      case OperationKind::TrsmLeftTransposed:
      case OperationKind::TrsmRight: return trsm_nu(s);
      case OperationKind::Sylv:
      case OperationKind::Lyap: return sylv_nu(s);
      case OperationKind::Assign: return assign_nu(s);
    }
    return {};
  }
};

// ---- static analysis by enumeration over the (concrete) enclosing loops

using Chain = std::vector<const Node*>;

/// Enclosing loops that can influence expressions over `vars`: the prefix of
/// the chain up to the deepest loop binding one of them.
inline Chain relevant(const Chain& chain, const std::vector<const Affine*>& exprs) {
  std::size_t depth = 0;
  for (std::size_t d = 0; d < chain.size(); ++d)
    for (const Affine* e : exprs)
      if (e->uses(chain[d]->var)) depth = d + 1;
  return Chain(chain.begin(), chain.begin() + static_cast<std::ptrdiff_t>(depth));
}

template <class Fn>
bool exists_point(const Chain& chain, const std::vector<const Affine*>& exprs, Fn pred) {
  Chain c = relevant(chain, exprs);
  Env env;
  bool found = false;
  // Early exit via exception-free flag: enumeration continues but skips work.
  for_each_point(c, env, [&](Env& e) {
    if (!found && pred(e)) found = true;
  });
  return found;
}

inline std::vector<const Affine*> bound_exprs(const Node& l) {
  std::vector<const Affine*> v;
  for (const auto& a : l.lo) v.push_back(&a);
  for (const auto& a : l.hi) v.push_back(&a);
  return v;
}

/// Depth-first search over every enclosing loop, stopping at the first point
/// where `l` has an iteration. Loops whose variables `l` does not use still
/// matter: they may be empty exactly where `l` is not.
inline bool reachable_iteration(const Node& l, const Chain& chain, Env& env, std::size_t depth) {
  if (depth == chain.size()) return loop_lo(l, env) < loop_hi(l, env);
  const Node& c = *chain[depth];
  std::int64_t hi = loop_hi(c, env);
  bool found = false;
  for (std::int64_t v = loop_lo(c, env); v < hi && !found; v += c.step) {
    env.set(c.var, v);
    found = reachable_iteration(l, chain, env, depth + 1);
  }
  env.erase(c.var);
  return found;
}

inline bool never_empty_check(const Node& l, const Chain& chain) {
  Env env;
  return reachable_iteration(l, chain, env, 0);
}

/// Drops bound parts that never bind.
inline void drop_redundant_bounds(Node& l, const Chain& chain) {
  auto others_max = [](const std::vector<Affine>& v, std::size_t skip, const Env& e) {
    std::int64_t m = INT64_MIN;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (i != skip) m = std::max(m, v[i].eval(e));
    return m;
  };
  auto others_min = [](const std::vector<Affine>& v, std::size_t skip, const Env& e) {
    std::int64_t m = INT64_MAX;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (i != skip) m = std::min(m, v[i].eval(e));
    return m;
  };
  for (std::size_t i = 0; l.lo.size() > 1 && i < l.lo.size();) {
    bool binds = exists_point(chain, bound_exprs(l), [&](Env& e) {
      std::int64_t olo = others_max(l.lo, i, e), hi = loop_hi(l, e);
      return l.lo[i].eval(e) > olo && olo < hi;
    });
    if (binds) ++i;
    else l.lo.erase(l.lo.begin() + static_cast<std::ptrdiff_t>(i));
  }
  for (std::size_t i = 0; l.hi.size() > 1 && i < l.hi.size();) {
    bool binds = exists_point(chain, bound_exprs(l), [&](Env& e) {
      std::int64_t ohi = others_min(l.hi, i, e), lo = loop_lo(l, e);
      return l.hi[i].eval(e) < ohi && lo < ohi;
    });
    if (binds) ++i;
    else l.hi.erase(l.hi.begin() + static_cast<std::ptrdiff_t>(i));
  }
}

/// Removes statically empty loops and redundant bounds, recursively.
inline std::vector<Node> simplify(std::vector<Node> nodes, Chain& chain) {
  std::vector<Node> out;
  for (auto& n : nodes) {
    if (n.kind == NodeKind::Loop) {
      if (!never_empty_check(n, chain)) continue;
      drop_redundant_bounds(n, chain);
      chain.push_back(&n);
      n.body = simplify(std::move(n.body), chain);
      chain.pop_back();
      if (n.body.empty()) continue;
    } else if (n.kind == NodeKind::Region) {
      n.body = simplify(std::move(n.body), chain);
    }
    out.push_back(std::move(n));
  }
  return out;
}

inline void substitute(std::vector<Node>& nodes, const std::string& v, const Affine& by) {
  for (auto& n : nodes) {
    for (auto& a : n.lo) a = a.substitute(v, by);
    for (auto& a : n.hi) a = a.substitute(v, by);
    n.dst = n.dst.substitute(v, by);
    n.a = n.a.substitute(v, by);
    n.b = n.b.substitute(v, by);
    n.row = n.row.substitute(v, by);
    n.col = n.col.substitute(v, by);
    substitute(n.body, v, by);
  }
}

/// Drops a gather immediately scattered back to the same place (left behind
/// when pruning removes every update between them), then any loop emptied by it.
inline std::vector<Node> drop_noop_transfers(std::vector<Node> nodes) {
  std::vector<Node> out;
  for (auto& n : nodes) {
    if (n.kind == NodeKind::Loop || n.kind == NodeKind::Region) {
      n.body = drop_noop_transfers(std::move(n.body));
      if (n.kind == NodeKind::Loop && n.body.empty()) continue;
    }
    if (n.kind == NodeKind::Scatter && !out.empty()) {
      const Node& g = out.back();
      if (g.kind == NodeKind::Gather && g.buffer == n.buffer && g.operand == n.operand && g.row == n.row &&
          g.col == n.col && g.rows == n.rows && g.cols == n.cols) {
        out.pop_back();
        continue;
      }
    }
    out.push_back(std::move(n));
  }
  return out;
}

/// Replaces loops that run exactly once at every point by their body.
inline std::vector<Node> fold_unit_loops(std::vector<Node> nodes, Chain& chain) {
  std::vector<Node> out;
  for (auto& n : nodes) {
    if (n.kind == NodeKind::Loop && n.var != "k" && n.lo.size() == 1) {
      bool multi = exists_point(chain, bound_exprs(n), [&](Env& e) {
        std::int64_t lo = loop_lo(n, e), hi = loop_hi(n, e);
        return lo < hi && hi - lo > n.step;
      });
      bool empty = exists_point(chain, bound_exprs(n), [&](Env& e) { return loop_lo(n, e) >= loop_hi(n, e); });
      if (!multi && !empty) {
        Affine at = n.lo.front();
        std::vector<Node> body = std::move(n.body);
        substitute(body, n.var, at);
        for (auto& m : fold_unit_loops(std::move(body), chain)) out.push_back(std::move(m));
        continue;
      }
    }
    if (n.kind == NodeKind::Loop) {
      chain.push_back(&n);
      n.body = fold_unit_loops(std::move(n.body), chain);
      chain.pop_back();
    } else if (n.kind == NodeKind::Region) {
      n.body = fold_unit_loops(std::move(n.body), chain);
    }
    out.push_back(std::move(n));
  }
  return out;
}

// ---- structure pruning

/// Nonzero-region constraint expr ≥ 0 of a triangular operand access.
inline std::optional<Affine> nonzero_constraint(Structure s, const Access& a) {
  if (s == Structure::Lower) return a.row - a.col;
  if (s == Structure::Upper) return a.col - a.row;
  return std::nullopt;
}

/// Tightens loop bounds so that no instance of a lone multiply-subtract
/// statement reads a structural zero.
inline void tighten(Node& l, const SigmaProgram& p, const Chain& chain) {
  if (l.body.size() != 1 || l.body.front().kind != NodeKind::Op) return;
  const Node& op = l.body.front();
  if (op.op != ScalarKind::MulSub && op.op != ScalarKind::Sub) return;
  for (const Access* acc : {&op.a, &op.b}) {
    if (acc->operand.empty()) continue;
    auto e = nonzero_constraint(p.structure(acc->operand), *acc);
    if (!e) continue;
    std::int64_t c = e->coef(l.var);
    Affine v = Affine::var(l.var);
    if (c == 1) l.lo.push_back(v - *e);       // var ≥ var − e
    else if (c == -1) l.hi.push_back(*e + v + 1);  // var ≤ e + var
  }
  Chain with(chain);
  drop_redundant_bounds(l, with);
}

/// Classification of row − col over the statement's domain.
enum class Side { Stored, Alias, Mixed };

inline Side classify(const Access& a, const Chain& chain) {
  Affine d = a.row - a.col;
  bool stored = exists_point(chain, {&d}, [&](Env& e) { return d.eval(e) <= 0; });
  bool alias = exists_point(chain, {&d}, [&](Env& e) { return d.eval(e) > 0; });
  if (stored && alias) return Side::Mixed;
  return alias ? Side::Alias : Side::Stored;
}

inline void resolve(Access& a, Side s) {
  if (s == Side::Mixed) return;
  if (s == Side::Alias) std::swap(a.row, a.col);
  a.sym = false;
}

/// Resolves logical symmetric reads in `op` against the enclosing chain.
inline void resolve_symmetric(Node& op, const Chain& chain) {
  for (Access* acc : {&op.a, &op.b})
    if (acc->sym) resolve(*acc, classify(*acc, chain));
}

inline std::vector<Node> prune_nodes(std::vector<Node> nodes, const SigmaProgram& p, Chain& chain);

/// Splits a loop around a lone statement at row == col of a mixed symmetric read.
inline std::vector<Node> split_symmetric(Node l, const SigmaProgram& p, Chain& chain) {
  if (l.body.size() != 1 || l.body.front().kind != NodeKind::Op) return {std::move(l)};
  const Node& op = l.body.front();
  for (const Access* acc : {&op.a, &op.b}) {
    if (!acc->sym) continue;
    Affine d = acc->row - acc->col;
    std::int64_t c = d.coef(l.var);
    if (c != 1 && c != -1) continue;
    Affine v = Affine::var(l.var);
    Node stored = l, alias = l;
    if (c == 1) {  // d ≤ 0 ⇔ var ≤ var − d
      stored.hi.push_back(v - d + 1);
      alias.lo.push_back(v - d + 1);
    } else {  // d ≤ 0 ⇔ var ≥ d + var
      stored.lo.push_back(d + v);
      alias.hi.push_back(d + v);
    }
    std::vector<Node> parts;
    // Keep iteration order: the half with smaller var values first.
    if (c == 1) parts = {std::move(stored), std::move(alias)};
    else parts = {std::move(alias), std::move(stored)};
    return prune_nodes(std::move(parts), p, chain);
  }
  return {std::move(l)};
}

inline std::vector<Node> prune_nodes(std::vector<Node> nodes, const SigmaProgram& p, Chain& chain) {
  std::vector<Node> out;
  for (auto& n : nodes) {
    if (n.kind == NodeKind::Loop) {
      if (!never_empty_check(n, chain)) continue;
      tighten(n, p, chain);
      if (!never_empty_check(n, chain)) continue;
      chain.push_back(&n);
      n.body = prune_nodes(std::move(n.body), p, chain);
      chain.pop_back();
      if (n.body.empty()) continue;
      bool mixed = n.body.size() == 1 && n.body.front().kind == NodeKind::Op &&
                   (n.body.front().a.sym || n.body.front().b.sym);
      if (mixed) {
        for (auto& m : split_symmetric(std::move(n), p, chain)) out.push_back(std::move(m));
        continue;
      }
    } else if (n.kind == NodeKind::Region) {
      n.body = prune_nodes(std::move(n.body), p, chain);
    } else if (n.kind == NodeKind::Op) {
      resolve_symmetric(n, chain);
    }
    out.push_back(std::move(n));
  }
  return out;
}

template <class Fn>
void for_each_region(std::vector<Node>& nodes, Chain& chain, Fn fn) {
  for (auto& n : nodes) {
    if (n.kind == NodeKind::Region) {
      fn(n, chain);
    } else if (n.kind == NodeKind::Loop) {
      chain.push_back(&n);
      for_each_region(n.body, chain, fn);
      chain.pop_back();
    }
  }
}

}  // namespace sigma_detail

inline SigmaProgram lower_algorithm(const Algorithm& alg, std::int64_t n, std::int64_t b) {
  if (b < 1 || n < 1 || n % b != 0)
    fail(ErrorKind::NonDivisible, "block size " + std::to_string(b) + " does not divide " + std::to_string(n));
  SigmaProgram p;
  p.algorithm = alg;
  p.n = n;
  p.b = b;
  p.name = alg.name;
  p.workspace = alg.workspace + "_w";
  for (const auto& op : alg.equation.operands) p.structures[op.name] = op.structure;
  p.structures[p.workspace] = Structure::General;
  sigma_detail::Lowerer lw(p);
  std::vector<Node> regions;
  for (std::size_t i = 0; i < alg.updates.size(); ++i)
    regions.push_back(make_region(static_cast<int>(i), statement_text(alg.updates[i], alg.workspace),
                                  lw.scalar(alg.updates[i])));
  p.body.push_back(make_loop("k", {0}, {n}, std::move(regions), b));
  return p;
}

inline SigmaProgram prune_structure(SigmaProgram p) {
  sigma_detail::Chain chain;
  p.body = sigma_detail::prune_nodes(std::move(p.body), p, chain);
  p.pruned = true;
  return p;
}

/// Strip-mines update statements into t×t tiles of the workspace, each
/// gathered into a local buffer, updated, and scattered back.
inline SigmaProgram tile(SigmaProgram p, std::int64_t t) {
  if (p.mode != Mode::Scalar) fail(ErrorKind::Unsupported, "tile runs before ν mapping");
  if (t < 1 || p.b % t != 0)
    fail(ErrorKind::NonDivisible, "tile " + std::to_string(t) + " does not divide block size " + std::to_string(p.b));
  p.tile = t;
  p.add_buffer("tc", t, t);
  sigma_detail::Lowerer lw(p);
  sigma_detail::Chain chain;
  sigma_detail::for_each_region(p.body, chain, [&](Node& r, sigma_detail::Chain& c) {
    const Statement& s = p.algorithm.updates[static_cast<std::size_t>(r.stmt)];
    if (s.kind != OperationKind::GemmUpdate) return;
    std::vector<Node> body = lw.gemm_tiled(s, t);
    body = p.pruned ? sigma_detail::prune_nodes(std::move(body), p, c) : sigma_detail::simplify(std::move(body), c);
    r.body = sigma_detail::fold_unit_loops(sigma_detail::drop_noop_transfers(std::move(body)), c);
  });
  return p;
}

/// Re-expresses every statement over ν×ν tiles and the fixed kernel set.
inline SigmaProgram map_nu_kernels(SigmaProgram p, int nu) {
  if (!supported_nu(nu)) fail(ErrorKind::UnsupportedNu, "nu must be 2, 4 or 8, got " + std::to_string(nu));
  if (p.b % nu != 0 || (p.tile && p.tile % nu != 0))
    fail(ErrorKind::NotDivisible, "nu " + std::to_string(nu) + " does not divide the tile extents");
  p.mode = Mode::NuTiled;
  p.nu = nu;
  for (const char* name : {"tc", "ta", "tb", "td", "tt"}) p.add_buffer(name, nu, nu);
  for (auto& buf : p.buffers)
    if (buf.name == "tc") buf.rows = buf.cols = nu;
  sigma_detail::Lowerer lw(p);
  sigma_detail::Chain chain;
  sigma_detail::for_each_region(p.body, chain, [&](Node& r, sigma_detail::Chain& c) {
    const Statement& s = p.algorithm.updates[static_cast<std::size_t>(r.stmt)];
    r.body = sigma_detail::fold_unit_loops(sigma_detail::drop_noop_transfers(sigma_detail::simplify(lw.nu_tiled(s), c)), c);
  });
  return p;
}

}  // namespace lagen
