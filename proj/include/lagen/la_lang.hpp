#pragma once

// The annotated linear-algebra input language: operands with structure
// annotations, expression trees, the `.la` parser/printer, property
// derivation and symbolic operand partitioning.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lagen/common.hpp"

namespace lagen {

/// A row/column count: either a symbol ("n") or a concrete positive integer.
struct Dim {
  std::string symbol;
  std::int64_t value = 0;

  static Dim sym(std::string s) { return Dim{std::move(s), 0}; }
  static Dim of(std::int64_t v) {
    if (v < 1) fail(ErrorKind::ShapeMismatch, "dimension must be >= 1");
    return Dim{"", v};
  }
  bool symbolic() const { return !symbol.empty(); }
  std::string str() const { return symbolic() ? symbol : std::to_string(value); }
  friend bool operator==(const Dim&, const Dim&) = default;
};

struct Operand {
  std::string name;
  Dim rows, cols;
  Structure structure = Structure::General;
  Role role = Role::Input;
  friend bool operator==(const Operand&, const Operand&) = default;
};

enum class ExprKind { Ref, Transpose, Add, Sub, Mul, Neg };

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  ExprKind kind = ExprKind::Ref;
  std::string name;  // Ref only
  Expr lhs, rhs;     // unary nodes use lhs
  // Filled in by check_properties.
  std::optional<Dim> rows, cols;
  Structure structure = Structure::General;
};

inline Expr ref(std::string name) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::Ref;
  n->name = std::move(name);
  return n;
}
inline Expr unary(ExprKind k, Expr a) {
  auto n = std::make_shared<ExprNode>();
  n->kind = k;
  n->lhs = std::move(a);
  return n;
}
inline Expr binary(ExprKind k, Expr a, Expr b) {
  auto n = std::make_shared<ExprNode>();
  n->kind = k;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}
inline Expr trans(Expr a) { return unary(ExprKind::Transpose, std::move(a)); }
inline Expr neg(Expr a) { return unary(ExprKind::Neg, std::move(a)); }
inline Expr add(Expr a, Expr b) { return binary(ExprKind::Add, std::move(a), std::move(b)); }
inline Expr sub(Expr a, Expr b) { return binary(ExprKind::Sub, std::move(a), std::move(b)); }
inline Expr mul(Expr a, Expr b) { return binary(ExprKind::Mul, std::move(a), std::move(b)); }

/// Tree equality on kinds and names only (annotations ignored).
inline bool same_tree(const Expr& a, const Expr& b) {
  if (!a || !b) return !a && !b;
  if (a->kind != b->kind) return false;
  if (a->kind == ExprKind::Ref) return a->name == b->name;
  return same_tree(a->lhs, b->lhs) && same_tree(a->rhs, b->rhs);
}

struct Equation {
  Expr lhs, rhs;
  std::vector<Operand> operands;
  std::vector<std::string> unknowns;

  const Operand& operand(const std::string& name) const {
    for (const auto& op : operands)
      if (op.name == name) return op;
    fail(ErrorKind::UndeclaredOperand, name);
  }
  bool has_operand(const std::string& name) const {
    return std::any_of(operands.begin(), operands.end(),
                       [&](const Operand& o) { return o.name == name; });
  }
  bool is_unknown(const std::string& name) const {
    return std::find(unknowns.begin(), unknowns.end(), name) != unknowns.end();
  }
};

inline bool structurally_equal(const Equation& a, const Equation& b) {
  return same_tree(a.lhs, b.lhs) && same_tree(a.rhs, b.rhs) && a.operands == b.operands &&
         a.unknowns == b.unknowns;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

struct Token {
  enum Kind { Name, Number, Plus, Minus, Star, Caret, LParen, RParen, Comma, Colon, Equals, End } kind;
  std::string text;
  int column = 0;
};

class Lexer {
 public:
  Lexer(std::string_view line, int line_no) : line_(line), line_no_(line_no) {
    std::size_t i = 0;
    while (i < line_.size()) {
      char c = line_[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      int col = static_cast<int>(i) + 1;
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t j = i;
        while (j < line_.size() &&
               (std::isalnum(static_cast<unsigned char>(line_[j])) || line_[j] == '_'))
          ++j;
        tokens_.push_back({Token::Name, std::string(line_.substr(i, j - i)), col});
        i = j;
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c))) {
        std::size_t j = i;
        while (j < line_.size() && std::isdigit(static_cast<unsigned char>(line_[j]))) ++j;
        tokens_.push_back({Token::Number, std::string(line_.substr(i, j - i)), col});
        i = j;
        continue;
      }
      Token::Kind k;
      switch (c) {
        case '+': k = Token::Plus; break;
        case '-': k = Token::Minus; break;
        case '*': k = Token::Star; break;
        case '^': k = Token::Caret; break;
        case '(': k = Token::LParen; break;
        case ')': k = Token::RParen; break;
        case ',': k = Token::Comma; break;
        case ':': k = Token::Colon; break;
        case '=': k = Token::Equals; break;
        default:
          error(col, std::string("unexpected character '") + c + "'");
      }
      tokens_.push_back({k, std::string(1, c), col});
      ++i;
    }
    tokens_.push_back({Token::End, "<end of line>", static_cast<int>(line_.size()) + 1});
  }

  const Token& peek() const { return tokens_[pos_]; }
  Token next() { return tokens_[pos_ == tokens_.size() - 1 ? pos_ : pos_++]; }
  bool accept(Token::Kind k) {
    if (peek().kind != k) return false;
    ++pos_;
    return true;
  }
  Token expect(Token::Kind k, std::string_view what) {
    if (peek().kind != k) error(peek().column, "expected " + std::string(what) + " at token \"" + peek().text + "\"");
    return next();
  }
  [[noreturn]] void error(int column, const std::string& msg) const {
    fail(ErrorKind::Syntax, "line " + std::to_string(line_no_) + ", column " + std::to_string(column) + ": " + msg);
  }
  [[noreturn]] void unexpected() const {
    error(peek().column, "unexpected token \"" + peek().text + "\"");
  }

 private:
  std::string_view line_;
  int line_no_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

inline Expr parse_expr(Lexer& lx);

inline Expr parse_factor(Lexer& lx) {
  const Token& t = lx.peek();
  if (t.kind == Token::Minus) {
    lx.next();
    return neg(parse_factor(lx));
  }
  if (t.kind == Token::LParen) {
    lx.next();
    Expr e = parse_expr(lx);
    lx.expect(Token::RParen, "')'");
    return e;
  }
  if (t.kind == Token::Name) {
    Expr e = ref(lx.next().text);
    if (lx.peek().kind == Token::Caret) {
      lx.next();
      Token tt = lx.next();
      if (tt.kind != Token::Name || tt.text != "T") lx.error(tt.column, "expected 'T' after '^'");
      e = trans(e);
    }
    return e;
  }
  lx.unexpected();
}

inline Expr parse_term(Lexer& lx) {
  Expr e = parse_factor(lx);
  while (lx.accept(Token::Star)) e = mul(e, parse_factor(lx));
  return e;
}

inline Expr parse_expr(Lexer& lx) {
  Expr e = parse_term(lx);
  for (;;) {
    if (lx.accept(Token::Plus))
      e = add(e, parse_term(lx));
    else if (lx.accept(Token::Minus))
      e = sub(e, parse_term(lx));
    else
      return e;
  }
}

inline Dim parse_dim(Lexer& lx) {
  const Token& t = lx.peek();
  if (t.kind == Token::Name) return Dim::sym(lx.next().text);
  if (t.kind == Token::Number) {
    Token n = lx.next();
    std::int64_t v = std::stoll(n.text);
    if (v < 1) lx.error(n.column, "dimension must be positive");
    return Dim::of(v);
  }
  lx.unexpected();
}

inline std::optional<Structure> structure_from(std::string_view s) {
  for (Structure k : {Structure::General, Structure::Lower, Structure::Upper, Structure::Symmetric, Structure::SPD})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline void collect_refs(const Expr& e, std::vector<std::string>& out) {
  if (!e) return;
  if (e->kind == ExprKind::Ref) {
    if (std::find(out.begin(), out.end(), e->name) == out.end()) out.push_back(e->name);
    return;
  }
  collect_refs(e->lhs, out);
  collect_refs(e->rhs, out);
}

}  // namespace detail

inline std::vector<std::string> referenced_operands(const Expr& e) {
  std::vector<std::string> out;
  detail::collect_refs(e, out);
  return out;
}

/// Parses a `.la` source. Shapes and structures are not checked here; see
/// check_properties.
inline Equation parse_equation(std::string_view text) {
  using detail::Lexer;
  using detail::Token;
  Equation eq;
  bool have_equation = false;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    Lexer lx(line, line_no);
    Token head = lx.expect(Token::Name, "a name");
    lx.expect(Token::Colon, "':'");
    if (head.text == "Equation") {
      if (have_equation) lx.error(head.column, "more than one Equation line");
      eq.lhs = detail::parse_expr(lx);
      lx.expect(Token::Equals, "'='");
      eq.rhs = detail::parse_expr(lx);
      if (lx.peek().kind != Token::End) lx.unexpected();
      have_equation = true;
    } else {
      Operand op;
      op.name = head.text;
      Token kw = lx.expect(Token::Name, "'Matrix'");
      if (kw.text != "Matrix") lx.error(kw.column, "expected 'Matrix'");
      lx.expect(Token::LParen, "'('");
      op.rows = detail::parse_dim(lx);
      lx.expect(Token::Comma, "','");
      op.cols = detail::parse_dim(lx);
      lx.expect(Token::RParen, "')'");
      lx.expect(Token::Comma, "','");
      Token st = lx.expect(Token::Name, "a structure");
      auto s = detail::structure_from(st.text);
      if (!s) lx.error(st.column, "unknown structure \"" + st.text + "\"");
      op.structure = *s;
      lx.expect(Token::Comma, "','");
      Token rl = lx.expect(Token::Name, "a role");
      if (rl.text == "input")
        op.role = Role::Input;
      else if (rl.text == "output")
        op.role = Role::Output;
      else
        lx.error(rl.column, "role must be input or output");
      if (lx.peek().kind != Token::End) lx.unexpected();
      if (eq.has_operand(op.name))
        fail(ErrorKind::DuplicateDeclaration, "line " + std::to_string(line_no) + ": " + op.name);
      eq.operands.push_back(op);
    }
    if (end == text.size()) break;
  }
  if (!have_equation) fail(ErrorKind::Syntax, "missing 'Equation:' line");

  std::vector<std::string> used;
  detail::collect_refs(eq.lhs, used);
  detail::collect_refs(eq.rhs, used);
  for (const auto& name : used)
    if (!eq.has_operand(name)) fail(ErrorKind::UndeclaredOperand, name);
  for (const auto& op : eq.operands) {
    if (op.role != Role::Output) continue;
    if (std::find(used.begin(), used.end(), op.name) == used.end())
      fail(ErrorKind::Syntax, "output operand " + op.name + " does not appear in the equation");
    eq.unknowns.push_back(op.name);
  }
  if (eq.unknowns.empty()) fail(ErrorKind::Syntax, "equation declares no output operand");
  return eq;
}

// ---------------------------------------------------------------------------
// Printing

namespace detail {

inline void print_expr(std::ostream& os, const Expr& e, int prec);

// prec: 0 = expression, 1 = term, 2 = factor
inline void print_expr(std::ostream& os, const Expr& e, int prec) {
  switch (e->kind) {
    case ExprKind::Ref:
      os << e->name;
      return;
    case ExprKind::Transpose:
      if (e->lhs->kind == ExprKind::Ref) {
        os << e->lhs->name << "^T";
      } else {
        os << "(";
        print_expr(os, e->lhs, 0);
        os << ")^T";
      }
      return;
    case ExprKind::Neg:
      os << "-";
      print_expr(os, e->lhs, 2);
      return;
    case ExprKind::Mul:
      if (prec > 1) os << "(";
      print_expr(os, e->lhs, 1);
      os << " * ";
      print_expr(os, e->rhs, 2);
      if (prec > 1) os << ")";
      return;
    case ExprKind::Add:
    case ExprKind::Sub:
      if (prec > 0) os << "(";
      print_expr(os, e->lhs, 0);
      os << (e->kind == ExprKind::Add ? " + " : " - ");
      print_expr(os, e->rhs, 1);
      if (prec > 0) os << ")";
      return;
  }
}

}  // namespace detail

inline std::string to_string(const Expr& e) {
  std::ostringstream os;
  detail::print_expr(os, e, 0);
  return os.str();
}

/// Prints an Equation back in `.la` syntax (declarations first).
inline std::string to_la(const Equation& eq) {
  std::ostringstream os;
  for (const auto& op : eq.operands)
    os << op.name << ": Matrix(" << op.rows.str() << "," << op.cols.str() << "), " << to_string(op.structure)
       << ", " << (op.role == Role::Input ? "input" : "output") << "\n";
  os << "Equation: " << to_string(eq.lhs) << " = " << to_string(eq.rhs) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Property derivation

namespace detail {

// Canonical string with transposes pushed onto the leaves; symmetric leaves
// absorb their transpose.
inline std::string canon(const Expr& e, bool t, const Equation& eq) {
  switch (e->kind) {
    case ExprKind::Ref: {
      bool sym = is_symmetric(eq.operand(e->name).structure);
      return e->name + ((t && !sym) ? "'" : "");
    }
    case ExprKind::Transpose:
      return canon(e->lhs, !t, eq);
    case ExprKind::Neg:
      return "-(" + canon(e->lhs, t, eq) + ")";
    case ExprKind::Add:
      return "(" + canon(e->lhs, t, eq) + "+" + canon(e->rhs, t, eq) + ")";
    case ExprKind::Sub:
      return "(" + canon(e->lhs, t, eq) + "-" + canon(e->rhs, t, eq) + ")";
    case ExprKind::Mul:
      if (t) return "(" + canon(e->rhs, t, eq) + "*" + canon(e->lhs, t, eq) + ")";
      return "(" + canon(e->lhs, t, eq) + "*" + canon(e->rhs, t, eq) + ")";
  }
  return "";
}

inline Structure sum_structure(Structure a, Structure b, bool mirror_pair, bool is_add) {
  if (a == Structure::Zero) return b == Structure::SPD && !is_add ? Structure::Symmetric : b;
  if (b == Structure::Zero) return a;
  if (mirror_pair) return Structure::Symmetric;
  if (a == b && is_triangular(a)) return a;
  if (is_symmetric(a) && is_symmetric(b)) {
    if (is_add && a == Structure::SPD && b == Structure::SPD) return Structure::SPD;
    return Structure::Symmetric;
  }
  return Structure::General;
}

inline Expr annotate(const Expr& e, const Equation& eq) {
  auto n = std::make_shared<ExprNode>(*e);
  switch (e->kind) {
    case ExprKind::Ref: {
      const Operand& op = eq.operand(e->name);
      n->rows = op.rows;
      n->cols = op.cols;
      n->structure = op.structure;
      break;
    }
    case ExprKind::Transpose: {
      n->lhs = annotate(e->lhs, eq);
      n->rows = n->lhs->cols;
      n->cols = n->lhs->rows;
      n->structure = transposed(n->lhs->structure);
      break;
    }
    case ExprKind::Neg: {
      n->lhs = annotate(e->lhs, eq);
      n->rows = n->lhs->rows;
      n->cols = n->lhs->cols;
      Structure s = n->lhs->structure;
      n->structure = s == Structure::SPD ? Structure::Symmetric : s == Structure::Identity ? Structure::General : s;
      break;
    }
    case ExprKind::Add:
    case ExprKind::Sub: {
      n->lhs = annotate(e->lhs, eq);
      n->rhs = annotate(e->rhs, eq);
      if (!(*n->lhs->rows == *n->rhs->rows && *n->lhs->cols == *n->rhs->cols))
        fail(ErrorKind::ShapeMismatch, "operands of '" + std::string(e->kind == ExprKind::Add ? "+" : "-") +
                                           "' have shapes " + n->lhs->rows->str() + "x" + n->lhs->cols->str() +
                                           " and " + n->rhs->rows->str() + "x" + n->rhs->cols->str());
      n->rows = n->lhs->rows;
      n->cols = n->lhs->cols;
      bool mirror = e->kind == ExprKind::Add && canon(e->rhs, false, eq) == canon(e->lhs, true, eq);
      n->structure = sum_structure(n->lhs->structure, n->rhs->structure, mirror, e->kind == ExprKind::Add);
      break;
    }
    case ExprKind::Mul: {
      n->lhs = annotate(e->lhs, eq);
      n->rhs = annotate(e->rhs, eq);
      if (!(*n->lhs->cols == *n->rhs->rows))
        fail(ErrorKind::ShapeMismatch, "nonconforming product " + n->lhs->rows->str() + "x" +
                                           n->lhs->cols->str() + " * " + n->rhs->rows->str() + "x" +
                                           n->rhs->cols->str());
      n->rows = n->lhs->rows;
      n->cols = n->rhs->cols;
      Structure a = n->lhs->structure, b = n->rhs->structure;
      if (a == Structure::Zero || b == Structure::Zero)
        n->structure = Structure::Zero;
      else if (a == Structure::Identity)
        n->structure = b;
      else if (b == Structure::Identity)
        n->structure = a;
      else if (canon(e->lhs, false, eq) == canon(e->rhs, true, eq))
        n->structure = Structure::Symmetric;  // K^T K and K K^T
      else if (a == b && is_triangular(a))
        n->structure = a;
      else
        n->structure = Structure::General;
      break;
    }
  }
  return n;
}

}  // namespace detail

/// Annotates every node with shape and derived structure and checks
/// equation-level consistency.
inline Equation check_properties(const Equation& eq) {
  for (const auto& op : eq.operands)
    if (is_square_structure(op.structure) && !(op.rows == op.cols))
      fail(ErrorKind::ShapeMismatch, op.name + " is " + std::string(to_string(op.structure)) + " but not square");
  Equation out = eq;
  out.lhs = detail::annotate(eq.lhs, eq);
  out.rhs = detail::annotate(eq.rhs, eq);
  if (!(*out.lhs->rows == *out.rhs->rows && *out.lhs->cols == *out.rhs->cols))
    fail(ErrorKind::ShapeMismatch, "lhs is " + out.lhs->rows->str() + "x" + out.lhs->cols->str() + ", rhs is " +
                                       out.rhs->rows->str() + "x" + out.rhs->cols->str());
  Structure l = out.lhs->structure, r = out.rhs->structure;
  bool ok = true;
  if (is_symmetric(r) && r != Structure::Zero) ok = is_symmetric(l);
  if (is_triangular(r)) ok = l == r || l == Structure::Zero;
  if (!ok)
    fail(ErrorKind::StructureContradiction, "rhs is " + std::string(to_string(r)) + " but lhs derives " +
                                                std::string(to_string(l)));
  return out;
}

inline Equation load_equation(std::string_view text) { return check_properties(parse_equation(text)); }

// ---------------------------------------------------------------------------
// Partitioning

enum class Grid { G1x1, G1x2, G2x1, G2x2 };

struct BlockShape {
  Structure structure = Structure::General;
  bool alias = false;  // stored as the transpose of block (col, row)
};

/// Structure of block (r, c) when a structured square operand is split into
/// g x g blocks along both dimensions.
inline BlockShape block_shape(Structure s, int r, int c) {
  switch (s) {
    case Structure::General: return {Structure::General, false};
    case Structure::Zero: return {Structure::Zero, false};
    case Structure::Identity: return {r == c ? Structure::Identity : Structure::Zero, false};
    case Structure::Lower:
      return {r == c ? Structure::Lower : r > c ? Structure::General : Structure::Zero, false};
    case Structure::Upper:
      return {r == c ? Structure::Upper : r < c ? Structure::General : Structure::Zero, false};
    case Structure::Symmetric:
    case Structure::SPD:
      if (r == c) return {s, false};
      return {Structure::General, r > c};
  }
  return {};
}

struct Quadrant {
  std::string label;
  Structure structure = Structure::General;
  Dim rows, cols;
  std::optional<std::string> alias_of;  // label of the sibling whose transpose this is
};

struct PartitionedOperand {
  Operand base;
  Grid grid = Grid::G1x1;
  int row_parts = 1, col_parts = 1;
  std::vector<Quadrant> quadrants;  // row-major

  const Quadrant& at(int r, int c) const { return quadrants.at(static_cast<std::size_t>(r * col_parts + c)); }
  const Quadrant& at(std::string_view label) const {
    for (const auto& q : quadrants)
      if (q.label == label) return q;
    fail(ErrorKind::PreconditionViolation, "no quadrant " + std::string(label));
  }
};

inline Dim split_dim(const Dim& d, int part, int parts) {
  if (parts == 1) return d;
  static const char* names[] = {"_T", "_B"};
  return Dim::sym(d.str() + names[part]);
}

inline PartitionedOperand partition_operand(const Operand& op, Grid grid) {
  PartitionedOperand p;
  p.base = op;
  p.grid = grid;
  p.row_parts = (grid == Grid::G2x1 || grid == Grid::G2x2) ? 2 : 1;
  p.col_parts = (grid == Grid::G1x2 || grid == Grid::G2x2) ? 2 : 1;
  bool structured = op.structure != Structure::General && op.structure != Structure::Zero;
  if (structured && grid != Grid::G2x2 && grid != Grid::G1x1)
    fail(ErrorKind::IncompatibleGrid, op.name + " is " + std::string(to_string(op.structure)) +
                                          " and needs a square 2x2 grid");
  static const char* two_by_two[2][2] = {{"TL", "TR"}, {"BL", "BR"}};
  for (int r = 0; r < p.row_parts; ++r) {
    for (int c = 0; c < p.col_parts; ++c) {
      Quadrant q;
      if (grid == Grid::G2x2)
        q.label = two_by_two[r][c];
      else if (grid == Grid::G1x2)
        q.label = c == 0 ? "L" : "R";
      else if (grid == Grid::G2x1)
        q.label = r == 0 ? "T" : "B";
      else
        q.label = "ALL";
      q.rows = split_dim(op.rows, r, p.row_parts);
      q.cols = split_dim(op.cols, c, p.col_parts);
      if (grid == Grid::G1x1) {
        q.structure = op.structure;
      } else {
        BlockShape bs = block_shape(op.structure, r, c);
        q.structure = bs.structure;
        if (bs.alias) q.alias_of = two_by_two[c][r];
      }
      p.quadrants.push_back(q);
    }
  }
  return p;
}

}  // namespace lagen
