#pragma once

// Σ-level loop programs: affine loop nests over concrete sizes whose leaves are
// scalar statements, tile gathers/scatters, or ν-kernel calls.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lagen/algorithm.hpp"
#include "lagen/nu_kernels.hpp"

namespace lagen {

/// Loop-variable bindings; a flat list since nests are shallow.
class Env {
 public:
  const std::int64_t* find(const std::string& name) const {
    for (const auto& [n, v] : vars_)
      if (n == name) return &v;
    return nullptr;
  }
  void set(const std::string& name, std::int64_t value) {
    for (auto& [n, v] : vars_)
      if (n == name) {
        v = value;
        return;
      }
    vars_.emplace_back(name, value);
  }
  void erase(const std::string& name) {
    for (auto it = vars_.begin(); it != vars_.end(); ++it)
      if (it->first == name) {
        vars_.erase(it);
        return;
      }
  }

 private:
  std::vector<std::pair<std::string, std::int64_t>> vars_;
};

/// constant + Σ coef·var
struct Affine {
  std::int64_t constant = 0;
  std::vector<std::pair<std::string, std::int64_t>> terms;

  Affine() = default;
  Affine(std::int64_t c) : constant(c) {}  // NOLINT: implicit from integers is intended
  static Affine var(const std::string& v, std::int64_t k = 1) {
    Affine a;
    if (k) a.terms.push_back({v, k});
    return a;
  }

  std::int64_t coef(const std::string& v) const {
    for (const auto& [n, k] : terms)
      if (n == v) return k;
    return 0;
  }
  bool uses(const std::string& v) const { return coef(v) != 0; }
  bool is_constant() const { return terms.empty(); }

  Affine& operator+=(const Affine& o) {
    constant += o.constant;
    for (const auto& [n, k] : o.terms) {
      auto it = std::find_if(terms.begin(), terms.end(), [&](const auto& t) { return t.first == n; });
      if (it == terms.end())
        terms.push_back({n, k});
      else
        it->second += k;
    }
    terms.erase(std::remove_if(terms.begin(), terms.end(), [](const auto& t) { return t.second == 0; }), terms.end());
    return *this;
  }
  friend Affine operator+(Affine a, const Affine& b) { return a += b; }
  friend Affine operator-(Affine a, const Affine& b) { return a += b * -1; }
  friend Affine operator*(Affine a, std::int64_t k) {
    a.constant *= k;
    for (auto& t : a.terms) t.second *= k;
    if (k == 0) a.terms.clear();
    return a;
  }

  std::int64_t eval(const Env& env) const {
    std::int64_t v = constant;
    for (const auto& [n, k] : terms) {
      const std::int64_t* x = env.find(n);
      if (!x) fail(ErrorKind::OutOfBounds, "unbound loop variable " + n);
      v += k * *x;
    }
    return v;
  }

  Affine substitute(const std::string& v, const Affine& by) const {
    Affine out(constant);
    for (const auto& [n, k] : terms) out += n == v ? by * k : Affine::var(n, k);
    return out;
  }

  friend bool operator==(const Affine& a, const Affine& b) {
    Affine d = a - b;
    return d.constant == 0 && d.terms.empty();
  }

  std::string str() const {
    std::string s;
    for (const auto& [n, k] : terms) {
      if (s.empty())
        s += k == 1 ? n : k == -1 ? "-" + n : std::to_string(k) + "*" + n;
      else
        s += (k < 0 ? " - " : " + ") + (std::abs(k) == 1 ? n : std::to_string(std::abs(k)) + "*" + n);
    }
    if (s.empty()) return std::to_string(constant);
    if (constant) s += (constant < 0 ? " - " : " + ") + std::to_string(std::abs(constant));
    return s;
  }
};

/// Element access; `sym` marks a logical read of a symmetric operand whose
/// position may fall in the alias triangle.
struct Access {
  std::string operand;
  Affine row, col;
  bool sym = false;

  Access substitute(const std::string& v, const Affine& by) const {
    return {operand, row.substitute(v, by), col.substitute(v, by), sym};
  }
  std::string str() const { return operand + "[" + row.str() + ", " + col.str() + "]"; }
};

enum class NodeKind { Loop, Op, Gather, Scatter, NuCall, Region };

/// dst = a | dst -= s·a·b | dst -= s·a | dst = sqrt(dst) | dst /= a | dst /= (a + b)
enum class ScalarKind { Copy, MulSub, Sub, Sqrt, Div, DivSum };

inline std::int64_t scalar_flops(ScalarKind k) {
  switch (k) {
    case ScalarKind::Copy: return 0;
    case ScalarKind::MulSub: return 2;
    case ScalarKind::Sub: return 1;
    case ScalarKind::Sqrt: return 1;
    case ScalarKind::Div: return 1;
    case ScalarKind::DivSum: return 2;
  }
  return 0;
}

struct Node {
  NodeKind kind = NodeKind::Op;

  // Loop: var ranges over [max(lo), min(hi)) with the given step.
  std::string var;
  std::vector<Affine> lo, hi;
  std::int64_t step = 1;
  std::vector<Node> body;  // also used by Region

  // Op
  ScalarKind op = ScalarKind::Copy;
  Access dst, a, b;
  double sign = 1.0;

  // Gather (buffer <- operand tile) / Scatter (operand tile <- buffer). Both
  // honor the operand's structure: zero regions are filled, not read, and
  // only the stored triangle of a symmetric operand is written.
  std::string buffer, operand;
  Affine row, col;
  std::int64_t rows = 0, cols = 0;

  // NuCall
  NuKernel kernel = NuKernel::Mac;
  std::vector<std::string> args;
  int flags = 0;

  // Region: statement index in the algorithm (-1 for prologue/epilogue).
  int stmt = -1;
  std::string label;
};

inline Node make_loop(std::string var, std::vector<Affine> lo, std::vector<Affine> hi, std::vector<Node> body,
                      std::int64_t step = 1) {
  Node n;
  n.kind = NodeKind::Loop;
  n.var = std::move(var);
  n.lo = std::move(lo);
  n.hi = std::move(hi);
  n.step = step;
  n.body = std::move(body);
  return n;
}

inline Node make_op(ScalarKind k, Access dst, Access a = {}, Access b = {}, double sign = 1.0) {
  Node n;
  n.kind = NodeKind::Op;
  n.op = k;
  n.dst = std::move(dst);
  n.a = std::move(a);
  n.b = std::move(b);
  n.sign = sign;
  return n;
}

inline Node make_transfer(NodeKind k, std::string buffer, std::string operand, Affine row, Affine col,
                          std::int64_t rows, std::int64_t cols) {
  Node n;
  n.kind = k;
  n.buffer = std::move(buffer);
  n.operand = std::move(operand);
  n.row = std::move(row);
  n.col = std::move(col);
  n.rows = rows;
  n.cols = cols;
  return n;
}

inline Node make_call(NuKernel k, std::vector<std::string> args, int flags = 0) {
  Node n;
  n.kind = NodeKind::NuCall;
  n.kernel = k;
  n.args = std::move(args);
  n.flags = flags;
  return n;
}

inline Node make_region(int stmt, std::string label, std::vector<Node> body) {
  Node n;
  n.kind = NodeKind::Region;
  n.stmt = stmt;
  n.label = std::move(label);
  n.body = std::move(body);
  return n;
}

struct Buffer {
  std::string name;
  std::int64_t rows = 0, cols = 0;
};

enum class Mode { Scalar, NuTiled };

struct SigmaProgram {
  std::string name;
  Algorithm algorithm;
  std::int64_t n = 0, b = 0;
  std::int64_t tile = 0;  // 0 = untiled
  Mode mode = Mode::Scalar;
  int nu = 0;
  bool pruned = false;
  std::string workspace;                   // local copy of the rhs operand
  std::map<std::string, Structure> structures;  // operands, workspace and buffers
  std::vector<Buffer> buffers;
  std::vector<Node> body;

  bool is_buffer(const std::string& name) const {
    return std::any_of(buffers.begin(), buffers.end(), [&](const Buffer& b) { return b.name == name; });
  }
  void add_buffer(const std::string& name, std::int64_t r, std::int64_t c) {
    if (is_buffer(name)) return;
    buffers.push_back({name, r, c});
    structures[name] = Structure::General;
  }
  Structure structure(const std::string& name) const {
    auto it = structures.find(name);
    return it == structures.end() ? Structure::General : it->second;
  }
};

// ---------------------------------------------------------------------------
// Traversal helpers

inline std::int64_t loop_lo(const Node& l, const Env& env) {
  std::int64_t v = l.lo.front().eval(env);
  for (const auto& a : l.lo) v = std::max(v, a.eval(env));
  return v;
}
inline std::int64_t loop_hi(const Node& l, const Env& env) {
  std::int64_t v = l.hi.front().eval(env);
  for (const auto& a : l.hi) v = std::min(v, a.eval(env));
  return v;
}

/// Calls fn at every point of the nested loops in `chain` (outermost first).
inline void for_each_point(const std::vector<const Node*>& chain, Env& env, const std::function<void(Env&)>& fn,
                           std::size_t depth = 0) {
  if (depth == chain.size()) {
    fn(env);
    return;
  }
  const Node& l = *chain[depth];
  std::int64_t hi = loop_hi(l, env);
  for (std::int64_t v = loop_lo(l, env); v < hi; v += l.step) {
    env.set(l.var, v);
    for_each_point(chain, env, fn, depth + 1);
  }
  env.erase(l.var);
}

inline std::string bounds_str(const std::vector<Affine>& parts, bool lower) {
  if (parts.size() == 1) return parts.front().str();
  std::string s = lower ? "max(" : "min(";
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? ", " : "") + parts[i].str();
  return s + ")";
}

inline std::string domain_str(const Node& l) {
  std::string s = l.var + " in [" + bounds_str(l.lo, true) + ", " + bounds_str(l.hi, false) + ")";
  if (l.step != 1) s += " step " + std::to_string(l.step);
  return s;
}

inline std::string op_str(const Node& n) {
  std::ostringstream os;
  switch (n.op) {
    case ScalarKind::Copy: os << n.dst.str() << " = " << n.a.str(); break;
    case ScalarKind::MulSub:
      os << n.dst.str() << (n.sign > 0 ? " -= " : " += ") << n.a.str() << " * " << n.b.str();
      break;
    case ScalarKind::Sub: os << n.dst.str() << (n.sign > 0 ? " -= " : " += ") << n.a.str(); break;
    case ScalarKind::Sqrt: os << n.dst.str() << " = sqrt(" << n.dst.str() << ")"; break;
    case ScalarKind::Div: os << n.dst.str() << " /= " << n.a.str(); break;
    case ScalarKind::DivSum: os << n.dst.str() << " /= (" << n.a.str() << " + " << n.b.str() << ")"; break;
  }
  return os.str();
}

/// One line per leaf: `depth | domain | op | gathers | scatters`.
inline std::string dump(const SigmaProgram& p) {
  std::ostringstream os;
  std::vector<const Node*> stack;
  std::function<void(const std::vector<Node>&)> walk = [&](const std::vector<Node>& nodes) {
    for (const auto& n : nodes) {
      if (n.kind == NodeKind::Loop) {
        stack.push_back(&n);
        walk(n.body);
        stack.pop_back();
        continue;
      }
      if (n.kind == NodeKind::Region) {
        walk(n.body);
        continue;
      }
      std::string domain;
      for (const Node* l : stack) domain += (domain.empty() ? "" : ", ") + domain_str(*l);
      if (domain.empty()) domain = "-";
      std::string op, gathers = "-", scatters = "-";
      switch (n.kind) {
        case NodeKind::Op: {
          op = op_str(n);
          std::vector<std::string> reads;
          if (n.op != ScalarKind::Copy) reads.push_back(n.dst.operand);
          if (!n.a.operand.empty()) reads.push_back(n.a.operand);
          if (!n.b.operand.empty()) reads.push_back(n.b.operand);
          gathers.clear();
          for (std::size_t i = 0; i < reads.size(); ++i) gathers += (i ? "," : "") + reads[i];
          scatters = n.dst.operand;
          break;
        }
        case NodeKind::Gather:
          op = "gather";
          gathers = n.operand + "[" + n.row.str() + ", " + n.col.str() + "] " + std::to_string(n.rows) + "x" +
                    std::to_string(n.cols);
          scatters = n.buffer;
          break;
        case NodeKind::Scatter:
          op = "scatter";
          gathers = n.buffer;
          scatters = n.operand + "[" + n.row.str() + ", " + n.col.str() + "] " + std::to_string(n.rows) + "x" +
                     std::to_string(n.cols);
          break;
        case NodeKind::NuCall: {
          op = "nu_" + kernel_name(n.kernel) + "(";
          for (std::size_t i = 0; i < n.args.size(); ++i) op += (i ? "," : "") + n.args[i];
          op += ")";
          if (n.flags) op += " flags=" + std::to_string(n.flags);
          gathers.clear();
          for (std::size_t i = 1; i < n.args.size(); ++i) gathers += (i > 1 ? "," : "") + n.args[i];
          if (gathers.empty()) gathers = "-";
          scatters = n.args.empty() ? "-" : n.args.front();
          break;
        }
        default: break;
      }
      os << stack.size() << " | " << domain << " | " << op << " | " << gathers << " | " << scatters << "\n";
    }
  };
  walk(p.body);
  return os.str();
}

/// Counts leaf nodes satisfying pred.
inline std::int64_t count_nodes(const std::vector<Node>& nodes, const std::function<bool(const Node&)>& pred) {
  std::int64_t c = 0;
  for (const auto& n : nodes) {
    if (pred(n)) ++c;
    c += count_nodes(n.body, pred);
  }
  return c;
}

}  // namespace lagen
