#pragma once

// C99 emission of Σ programs, the ν-kernel header, and a standalone
// benchmark harness.

#include <algorithm>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lagen/sigma.hpp"

namespace lagen {

struct EmittedSource {
  std::string name;      // function name (or program name for harnesses)
  std::string filename;  // suggested file name
  std::string text;
  std::vector<std::string> headers;  // generated headers the text includes
};

struct EmitOptions {
  std::string name;  // function name; defaults to the program name
  bool unroll_leaf = false;
};

namespace codegen_detail {

inline std::string affine_c(const Affine& a) {
  std::string s = a.str();
  return a.terms.empty() || (a.terms.size() == 1 && a.constant == 0 && a.terms[0].second == 1) ? s : "(" + s + ")";
}

inline std::string bound_c(const std::vector<Affine>& parts, bool lower) {
  std::string s = affine_c(parts.front());
  for (std::size_t i = 1; i < parts.size(); ++i)
    s = std::string(lower ? "lg_max(" : "lg_min(") + s + ", " + affine_c(parts[i]) + ")";
  return s;
}

class Emitter {
 public:
  Emitter(const SigmaProgram& p, const EmitOptions& o) : p_(p), opts_(o) {}

  std::string emit() {
    std::ostringstream os;
    const Equation& eq = p_.algorithm.equation;
    std::string fname = opts_.name.empty() ? p_.name : opts_.name;
    std::int64_t n = p_.n, nn = p_.n * p_.n;
    os << "#include <math.h>\n#include <stdlib.h>\n#include <string.h>\n";
    if (p_.mode == Mode::NuTiled) os << "#include \"nu_kernels_" << p_.nu << ".h\"\n";
    os << "\n#ifndef LG_MINMAX\n#define LG_MINMAX\n"
       << "static inline int lg_max(int a, int b) { return a > b ? a : b; }\n"
       << "static inline int lg_min(int a, int b) { return a < b ? a : b; }\n#endif\n\n";
    os << "/* " << to_string(eq.lhs) << " = " << to_string(eq.rhs) << ", n = " << n << ", b = " << p_.b;
    if (p_.tile) os << ", tile = " << p_.tile;
    if (p_.mode == Mode::NuTiled) os << ", nu = " << p_.nu;
    os << ".\n   Row-major, leading dimension " << n << ". Only the stored triangle of a structured output\n"
       << "   is written; symmetric outputs are mirrored on exit. */\n";
    os << "void " << fname << "(";
    bool first = true;
    for (const auto& op : eq.operands)
      if (op.role == Role::Input) {
        os << (first ? "" : ", ") << "const double *" << op.name;
        first = false;
      }
    for (const auto& op : eq.operands)
      if (op.role == Role::Output) {
        os << (first ? "" : ", ") << "double *" << op.name;
        first = false;
      }
    os << ") {\n";
    os << "  double *" << p_.workspace << " = (double *)malloc(sizeof(double) * " << nn << ");\n";
    std::set<std::string> used;
    collect(p_.body, used);
    for (const auto& b : p_.buffers)
      if (used.count(b.name)) os << "  double " << b.name << "[" << b.rows * b.cols << "];\n";
    os << "  memcpy(" << p_.workspace << ", " << p_.algorithm.workspace << ", sizeof(double) * " << nn << ");\n";
    const std::string& x = p_.algorithm.unknown;
    Structure xs = p_.structure(x);
    std::string jlo = xs == Structure::Upper || is_symmetric(xs) ? "i" : "0";
    std::string jhi = xs == Structure::Lower ? "i + 1" : std::to_string(n);
    os << "  for (int i = 0; i < " << n << "; ++i)\n    for (int j = " << jlo << "; j < " << jhi << "; ++j) " << x
       << "[i * " << n << " + j] = 0.0;\n";
    depth_ = 1;
    emit_nodes(os, p_.body, false);
    if (is_symmetric(xs))
      os << "  for (int i = 1; i < " << n << "; ++i)\n    for (int j = 0; j < i; ++j) " << x << "[i * " << n
         << " + j] = " << x << "[j * " << n << " + i];\n";
    os << "  free(" << p_.workspace << ");\n}\n";
    return os.str();
  }

 private:
  static void collect(const std::vector<Node>& nodes, std::set<std::string>& used) {
    for (const auto& n : nodes) {
      if (n.kind == NodeKind::Gather || n.kind == NodeKind::Scatter) used.insert(n.buffer);
      if (n.kind == NodeKind::Op)
        for (const Access* a : {&n.dst, &n.a, &n.b}) used.insert(a->operand);
      for (const auto& a : n.args) used.insert(a);
      collect(n.body, used);
    }
  }

  std::string indent() const { return std::string(static_cast<std::size_t>(2 * depth_), ' '); }

  std::int64_t ld(const std::string& name) const {
    for (const auto& b : p_.buffers)
      if (b.name == name) return b.cols;
    return p_.n;
  }

  std::string element(const std::string& name, const std::string& r, const std::string& c) const {
    return name + "[" + r + " * " + std::to_string(ld(name)) + " + " + c + "]";
  }

  std::string access(const Access& a) const {
    std::string r = affine_c(a.row), c = affine_c(a.col);
    if (!a.sym) return element(a.operand, r, c);
    return "(" + r + " <= " + c + " ? " + element(a.operand, r, c) + " : " + element(a.operand, c, r) + ")";
  }

  std::string op(const Node& n) const {
    std::string d = access(n.dst);
    switch (n.op) {
      case ScalarKind::Copy: return d + " = " + access(n.a) + ";";
      case ScalarKind::MulSub: return d + (n.sign > 0 ? " -= " : " += ") + access(n.a) + " * " + access(n.b) + ";";
      case ScalarKind::Sub: return d + (n.sign > 0 ? " -= " : " += ") + access(n.a) + ";";
      case ScalarKind::Sqrt: return d + " = sqrt(" + d + ");";
      case ScalarKind::Div: return d + " /= " + access(n.a) + ";";
      case ScalarKind::DivSum: return d + " /= (" + access(n.a) + " + " + access(n.b) + ");";
    }
    return "";
  }

  void transfer(std::ostringstream& os, const Node& n) {
    Structure s = p_.structure(n.operand);
    std::string r0 = affine_c(n.row), c0 = affine_c(n.col);
    bool gather = n.kind == NodeKind::Gather;
    if (p_.mode == Mode::NuTiled) {
      os << indent() << (gather ? "nu_load_" : "nu_store_") << p_.nu << "(" << (gather ? n.buffer : n.operand) << ", "
         << (gather ? n.operand : n.buffer) << ", " << p_.n << ", " << r0 << ", " << c0 << ", " << structure_code(s)
         << ");\n";
      return;
    }
    std::string src = element(n.operand, "(" + r0 + " + r)", "(" + c0 + " + c)");
    std::string buf = n.buffer + "[r * " + std::to_string(ld(n.buffer)) + " + c]";
    os << indent() << "for (int r = 0; r < " << n.rows << "; ++r)\n"
       << indent() << "  for (int c = 0; c < " << n.cols << "; ++c) ";
    if (s != Structure::General) fail(ErrorKind::Unsupported, "scalar tile transfers expect a general operand");
    os << (gather ? buf + " = " + src : src + " = " + buf) << ";\n";
  }

  void call(std::ostringstream& os, const Node& n) {
    os << indent() << "nu_" << kernel_name(n.kernel) << "_" << p_.nu << "(";
    for (std::size_t i = 0; i < n.args.size(); ++i) os << (i ? ", " : "") << n.args[i];
    switch (n.kernel) {
      case NuKernel::Mac:
      case NuKernel::AddSub:
      case NuKernel::Trsm: os << ", " << n.flags; break;
      case NuKernel::Scale: os << ", 1.0"; break;
      default: break;
    }
    os << ");\n";
  }

  /// Constant trip count of a box loop, if any.
  static std::optional<std::int64_t> const_trip(const Node& l) {
    if (l.lo.size() != 1 || l.hi.size() != 1) return std::nullopt;
    Affine d = l.hi.front() - l.lo.front();
    if (!d.is_constant()) return std::nullopt;
    return d.constant <= 0 ? 0 : (d.constant + l.step - 1) / l.step;
  }

  void emit_nodes(std::ostringstream& os, const std::vector<Node>& nodes, bool leaf) {
    for (const auto& n : nodes) {
      switch (n.kind) {
        case NodeKind::Region: {
          os << indent() << "/* " << n.label << " */\n";
          const Statement& s = p_.algorithm.updates[static_cast<std::size_t>(n.stmt)];
          emit_nodes(os, n.body, is_solver(s.kind));
          break;
        }
        case NodeKind::Loop: {
          auto trip = const_trip(n);
          if ((trip && *trip <= 1) || (opts_.unroll_leaf && leaf && trip && *trip < 8)) {
            for (std::int64_t t = 0; t < *trip; ++t) {
              std::vector<Node> body = n.body;
              sigma_detail::substitute(body, n.var, n.lo.front() + t * n.step);
              emit_nodes(os, body, leaf);
            }
            break;
          }
          os << indent() << "for (int " << n.var << " = " << bound_c(n.lo, true) << "; " << n.var << " < "
             << bound_c(n.hi, false) << "; " << n.var << (n.step == 1 ? "++" : " += " + std::to_string(n.step))
             << ") {\n";
          ++depth_;
          emit_nodes(os, n.body, leaf);
          --depth_;
          os << indent() << "}\n";
          break;
        }
        case NodeKind::Op: os << indent() << op(n) << "\n"; break;
        case NodeKind::Gather:
        case NodeKind::Scatter: transfer(os, n); break;
        case NodeKind::NuCall: call(os, n); break;
      }
    }
  }

  const SigmaProgram& p_;
  EmitOptions opts_;
  int depth_ = 0;
};

}  // namespace codegen_detail

inline EmittedSource emit_function(const SigmaProgram& p, const EmitOptions& opts = {}) {
  EmittedSource src;
  src.name = opts.name.empty() ? p.name : opts.name;
  src.filename = src.name + ".c";
  src.text = codegen_detail::Emitter(p, opts).emit();
  if (p.mode == Mode::NuTiled) src.headers.push_back("nu_kernels_" + std::to_string(p.nu) + ".h");
  return src;
}

inline EmittedSource emit_nu_header_source(int nu) {
  return {"nu_kernels_" + std::to_string(nu), "nu_kernels_" + std::to_string(nu) + ".h", emit_nu_kernel_header(nu), {}};
}

/// Median of timing samples; the mean of the middle pair for even counts.
inline std::int64_t median_ns(std::vector<std::int64_t> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2;
}

struct BenchEntry {
  EmittedSource fn;
  std::int64_t n = 0;
  std::int64_t flops = 0;
};

namespace codegen_detail {

/// C statements evaluating an expression into freshly allocated n×n temporaries.
class ExprEmitter {
 public:
  explicit ExprEmitter(std::ostringstream& os) : os_(os) {}
  std::string emit(const Expr& e) {
    switch (e->kind) {
      case ExprKind::Ref: return e->name;
      case ExprKind::Transpose: {
        std::string a = emit(e->lhs), t = fresh();
        os_ << "  lg_trans(n, " << a << ", " << t << ");\n";
        return t;
      }
      case ExprKind::Neg: {
        std::string a = emit(e->lhs), t = fresh();
        os_ << "  lg_axpby(n, 0.0, " << a << ", -1.0, " << a << ", " << t << ");\n";
        return t;
      }
      case ExprKind::Add:
      case ExprKind::Sub: {
        std::string a = emit(e->lhs), b = emit(e->rhs), t = fresh();
        os_ << "  lg_axpby(n, 1.0, " << a << ", " << (e->kind == ExprKind::Add ? "1.0" : "-1.0") << ", " << b << ", "
            << t << ");\n";
        return t;
      }
      case ExprKind::Mul: {
        std::string a = emit(e->lhs), b = emit(e->rhs), t = fresh();
        os_ << "  lg_mul(n, " << a << ", " << b << ", " << t << ");\n";
        return t;
      }
    }
    return "";
  }
  int count() const { return next_; }

 private:
  std::string fresh() {
    std::string t = "tmp" + std::to_string(next_++);
    os_ << "  double *" << t << " = (double *)calloc((size_t)n * n, sizeof(double));\n";
    return t;
  }
  std::ostringstream& os_;
  int next_ = 0;
};

/// C mirror of random_structured; the same stream gives the same matrices.
inline const char* c_runtime() {
  return R"(static unsigned long long lg_state;
static unsigned long long lg_next(void) {
  unsigned long long z = (lg_state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
static double lg_uniform(double lo, double hi) {
  return lo + (hi - lo) * (double)(lg_next() >> 11) * (1.0 / 9007199254740992.0);
}
/* kind: 0 general, 1 lower, 2 upper, 3 symmetric, 4 spd, 5 zero, 6 identity */
static void lg_random(int n, int kind, double *m) {
  double scale = 1.0 / (double)(n > 1 ? n : 1);
  memset(m, 0, sizeof(double) * (size_t)n * n);
  if (kind == 0) {
    for (int i = 0; i < n * n; ++i) m[i] = lg_uniform(-1, 1);
  } else if (kind == 1 || kind == 2) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) m[i * n + j] = lg_uniform(1, 2);
        else if ((kind == 1) == (i > j)) m[i * n + j] = lg_uniform(-1, 1) * scale;
      }
  } else if (kind == 3) {
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) m[i * n + j] = m[j * n + i] = lg_uniform(-1, 1);
  } else if (kind == 4) {
    double *b = (double *)malloc(sizeof(double) * (size_t)n * n);
    for (int i = 0; i < n * n; ++i) b[i] = lg_uniform(-1, 1);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) {
        double v = b[k * n + i];
        if (v == 0.0) continue;
        for (int j = 0; j < n; ++j) m[i * n + j] += v * b[k * n + j];
      }
    for (int i = 0; i < n; ++i) m[i * n + i] += (double)n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < i; ++j) m[i * n + j] = m[j * n + i];
    free(b);
  } else if (kind == 6) {
    for (int i = 0; i < n; ++i) m[i * n + i] = 1.0;
  }
}
static void lg_trans(int n, const double *a, double *t) {
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) t[j * n + i] = a[i * n + j];
}
static void lg_axpby(int n, double x, const double *a, double y, const double *b, double *t) {
  for (int i = 0; i < n * n; ++i) t[i] = x * a[i] + y * b[i];
}
static void lg_mul(int n, const double *a, const double *b, double *c) {
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      double v = a[i * n + k];
      if (v == 0.0) continue;
      for (int j = 0; j < n; ++j) c[i * n + j] += v * b[k * n + j];
    }
}
static int lg_cmp(const void *a, const void *b) {
  long long x = *(const long long *)a, y = *(const long long *)b;
  return x < y ? -1 : x > y;
}
static long long lg_median(long long *v, int k) {
  qsort(v, (size_t)k, sizeof(long long), lg_cmp);
  return k % 2 ? v[k / 2] : (v[k / 2 - 1] + v[k / 2]) / 2;
}
static long long lg_now_ns(void) {
  struct timespec ts;
  clock_gettime(CLOCK_MONOTONIC, &ts);
  return (long long)ts.tv_sec * 1000000000LL + ts.tv_nsec;
}
)";
}

inline int structure_kind(Structure s) {
  switch (s) {
    case Structure::General: return 0;
    case Structure::Lower: return 1;
    case Structure::Upper: return 2;
    case Structure::Symmetric: return 3;
    case Structure::SPD: return 4;
    case Structure::Zero: return 5;
    case Structure::Identity: return 6;
  }
  return 0;
}

}  // namespace codegen_detail

/// Standalone timing program: seeded structured inputs, a residual guard,
/// one warm-up call, then `reps` timed calls per entry.
inline EmittedSource emit_bench_harness(const Equation& eq, const std::vector<BenchEntry>& entries, int reps,
                                        std::uint64_t seed = 42, double guard = 1e-8) {
  if (reps < 1) fail(ErrorKind::Usage, "reps must be >= 1");
  std::ostringstream os;
  os << "#define _POSIX_C_SOURCE 199309L\n#include <math.h>\n#include <stdio.h>\n#include <stdlib.h>\n"
     << "#include <string.h>\n#include <time.h>\n\n";
  std::vector<std::string> headers;
  for (const auto& e : entries) {
    os << e.fn.text << "\n";
    for (const auto& h : e.fn.headers)
      if (std::find(headers.begin(), headers.end(), h) == headers.end()) headers.push_back(h);
  }
  os << codegen_detail::c_runtime() << "\n";
  // Residual of the equation for bound operands.
  os << "static double lg_residual(int n";
  for (const auto& op : eq.operands) os << ", const double *" << op.name;
  os << ") {\n";
  {
    std::ostringstream body;
    codegen_detail::ExprEmitter ee(body);
    std::string l = ee.emit(eq.lhs), r = ee.emit(eq.rhs);
    os << body.str();
    os << "  double num = 0.0, den = 0.0;\n"
       << "  for (int i = 0; i < n * n; ++i) {\n"
       << "    double d = " << l << "[i] - " << r << "[i];\n"
       << "    num += d * d;\n    den += " << r << "[i] * " << r << "[i];\n  }\n";
    for (int t = 0; t < ee.count(); ++t) os << "  free(tmp" << t << ");\n";
    os << "  den = sqrt(den);\n  return sqrt(num) / (den > 1.0 ? den : 1.0);\n}\n\n";
  }
  os << "int main(void) {\n  int status = 0;\n";
  for (const auto& e : entries) {
    std::int64_t n = e.n;
    os << "  {\n    const int n = " << n << ";\n    lg_state = " << seed << "ULL;\n";
    for (const auto& op : eq.operands) {
      os << "    double *" << op.name << " = (double *)calloc((size_t)n * n, sizeof(double));\n";
      if (op.role == Role::Input)
        os << "    lg_random(n, " << codegen_detail::structure_kind(op.structure) << ", " << op.name << ");\n";
    }
    std::string call = e.fn.name + "(";
    bool first = true;
    for (const auto& op : eq.operands)
      if (op.role == Role::Input) {
        call += (first ? "" : ", ") + op.name;
        first = false;
      }
    for (const auto& op : eq.operands)
      if (op.role == Role::Output) {
        call += (first ? "" : ", ") + op.name;
        first = false;
      }
    call += ")";
    std::string args;
    for (const auto& op : eq.operands) args += ", " + op.name;
    os << "    " << call << ";\n"
       << "    double res = lg_residual(n" << args << ");\n"
       << "    if (!(res <= " << guard << ")) {\n"
       << "      printf(\"RESIDUAL_FAIL " << e.fn.name << " %d %.3e\\n\", n, res);\n      status = 1;\n"
       << "    } else {\n"
       << "      long long samples[" << reps << "];\n"
       << "      for (int r = 0; r < " << reps << "; ++r) {\n"
       << "        long long t0 = lg_now_ns();\n        " << call << ";\n"
       << "        samples[r] = lg_now_ns() - t0;\n      }\n"
       << "      printf(\"RESULT " << e.fn.name << " %d %lld %lld\\n\", n, lg_median(samples, " << reps << "), "
       << e.flops << "LL);\n"
       << "    }\n";
    for (const auto& op : eq.operands) os << "    free(" << op.name << ");\n";
    os << "  }\n";
  }
  os << "  return status;\n}\n";
  EmittedSource src{"bench", "bench.c", os.str(), headers};
  return src;
}

}  // namespace lagen
