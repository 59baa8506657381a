#pragma once

// Symbolic block expansion of expressions over a g x g split of the single
// traversal dimension. Used at g = 2 for PMEs and g = 3 for the FLAME
// repartition.

#include <sstream>
#include <string>
#include <vector>

#include "lagen/la_lang.hpp"

namespace lagen {

/// One block of an operand, possibly used transposed. Symmetric aliases are
/// already rewritten to the stored (upper) sibling.
struct BlockFactor {
  std::string operand;
  int row = 0, col = 0;
  bool transposed = false;
  friend bool operator==(const BlockFactor&, const BlockFactor&) = default;
  friend auto operator<=>(const BlockFactor&, const BlockFactor&) = default;

  /// Row/column block index of the effective (possibly transposed) block.
  int eff_row() const { return transposed ? col : row; }
  int eff_col() const { return transposed ? row : col; }
};

struct BlockTerm {
  int sign = 1;
  std::vector<BlockFactor> factors;
  friend bool operator==(const BlockTerm&, const BlockTerm&) = default;

  bool mentions(const std::string& operand, int row, int col) const {
    for (const auto& f : factors)
      if (f.operand == operand && f.row == row && f.col == col) return true;
    return false;
  }
};

using BlockPoly = std::vector<BlockTerm>;

struct BlockGrid {
  int g = 1;
  std::vector<BlockPoly> cells;
  BlockPoly& at(int r, int c) { return cells[static_cast<std::size_t>(r * g + c)]; }
  const BlockPoly& at(int r, int c) const { return cells[static_cast<std::size_t>(r * g + c)]; }
};

/// Block labels used in printing: quadrant names at g = 2, FLAME indices at g = 3.
inline std::string block_label(int g, int r, int c) {
  if (g == 1) return "";
  if (g == 2) {
    static const char* q[2][2] = {{"TL", "TR"}, {"BL", "BR"}};
    return q[r][c];
  }
  return std::to_string(r) + std::to_string(c);
}

inline std::string to_string(const BlockFactor& f, int g) {
  std::string s = f.operand;
  if (g > 1) s += "_" + block_label(g, f.row, f.col);
  if (f.transposed) s += "^T";
  return s;
}

inline std::string to_string(const BlockTerm& t, int g) {
  std::string s;
  for (std::size_t i = 0; i < t.factors.size(); ++i) {
    if (i) s += " * ";
    s += to_string(t.factors[i], g);
  }
  return s;
}

inline std::string to_string(const BlockPoly& p, int g) {
  if (p.empty()) return "0";
  std::string s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i == 0)
      s += p[i].sign < 0 ? "-" : "";
    else
      s += p[i].sign < 0 ? " - " : " + ";
    s += to_string(p[i], g);
  }
  return s;
}

/// Per-operand view of how a g x g split looks.
class BlockContext {
 public:
  BlockContext(const Equation& eq, int g) : eq_(&eq), g_(g) {}

  int g() const { return g_; }
  const Equation& equation() const { return *eq_; }

  Structure block_structure(const std::string& operand, int r, int c) const {
    if (g_ == 1) return eq_->operand(operand).structure;
    return block_shape(eq_->operand(operand).structure, r, c).structure;
  }

  /// Effective structure of a factor (transposition applied).
  Structure effective_structure(const BlockFactor& f) const {
    Structure s = block_structure(f.operand, f.row, f.col);
    return f.transposed ? transposed(s) : s;
  }

  BlockFactor canonical(BlockFactor f) const {
    Structure s = eq_->operand(f.operand).structure;
    if (is_symmetric(s) && g_ > 1 && f.row > f.col) {
      std::swap(f.row, f.col);
      f.transposed = !f.transposed;
    }
    if (is_symmetric(s) && f.row == f.col) f.transposed = false;
    return f;
  }

  BlockGrid expand(const Expr& e) const {
    BlockGrid out;
    out.g = g_;
    out.cells.resize(static_cast<std::size_t>(g_ * g_));
    switch (e->kind) {
      case ExprKind::Ref:
        for (int r = 0; r < g_; ++r)
          for (int c = 0; c < g_; ++c) {
            if (block_structure(e->name, r, c) == Structure::Zero) continue;
            if (block_structure(e->name, r, c) == Structure::Identity)
              fail(ErrorKind::Unsupported, "identity operands in block expansion");
            out.at(r, c).push_back({1, {canonical({e->name, r, c, false})}});
          }
        return out;
      case ExprKind::Transpose: {
        BlockGrid a = expand(e->lhs);
        for (int r = 0; r < g_; ++r)
          for (int c = 0; c < g_; ++c)
            for (BlockTerm t : a.at(c, r)) {
              std::reverse(t.factors.begin(), t.factors.end());
              for (auto& f : t.factors) {
                f.transposed = !f.transposed;
                f = canonical(f);
              }
              out.at(r, c).push_back(t);
            }
        return out;
      }
      case ExprKind::Neg: {
        out = expand(e->lhs);
        for (auto& cell : out.cells)
          for (auto& t : cell) t.sign = -t.sign;
        return out;
      }
      case ExprKind::Add:
      case ExprKind::Sub: {
        BlockGrid a = expand(e->lhs), b = expand(e->rhs);
        int s = e->kind == ExprKind::Add ? 1 : -1;
        for (std::size_t i = 0; i < out.cells.size(); ++i) {
          out.cells[i] = a.cells[i];
          for (BlockTerm t : b.cells[i]) {
            t.sign *= s;
            out.cells[i].push_back(t);
          }
        }
        return out;
      }
      case ExprKind::Mul: {
        BlockGrid a = expand(e->lhs), b = expand(e->rhs);
        for (int r = 0; r < g_; ++r)
          for (int c = 0; c < g_; ++c)
            for (int p = 0; p < g_; ++p)
              for (const auto& ta : a.at(r, p))
                for (const auto& tb : b.at(p, c)) {
                  BlockTerm t{ta.sign * tb.sign, ta.factors};
                  t.factors.insert(t.factors.end(), tb.factors.begin(), tb.factors.end());
                  out.at(r, c).push_back(t);
                }
        return out;
      }
    }
    return out;
  }

 private:
  const Equation* eq_;
  int g_;
};

/// Whether only the upper block positions of the equation carry information.
inline bool symmetric_equation(const Equation& eq) {
  return is_symmetric(eq.rhs->structure) && eq.rhs->structure != Structure::Zero;
}

struct BlockEquation {
  int row = 0, col = 0;
  BlockPoly lhs, rhs;
};

/// Expands both sides over the split. Symmetric equations keep only upper
/// positions; positions where both sides vanish are dropped.
inline std::vector<BlockEquation> expand_equation(const Equation& eq, int g) {
  BlockContext ctx(eq, g);
  BlockGrid l = ctx.expand(eq.lhs), r = ctx.expand(eq.rhs);
  bool sym = symmetric_equation(eq);
  std::vector<BlockEquation> out;
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      if (sym && i > j) continue;
      if (l.at(i, j).empty() && r.at(i, j).empty()) continue;
      out.push_back({i, j, l.at(i, j), r.at(i, j)});
    }
  return out;
}

}  // namespace lagen
