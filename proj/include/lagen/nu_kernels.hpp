#pragma once

// The fixed ν-kernel set. Each kernel has a C++ reference body used by the
// Σ interpreter and an equivalent C body emitted into nu_kernels_<ν>.h; both
// perform the same operations in the same order.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "lagen/common.hpp"

namespace lagen {

enum class NuKernel { Load, Store, Mac, Trans, AddSub, Scale, Trsm, Chol, Sylv };

inline std::string kernel_name(NuKernel k) {
  switch (k) {
    case NuKernel::Load: return "load";
    case NuKernel::Store: return "store";
    case NuKernel::Mac: return "mac";
    case NuKernel::Trans: return "trans";
    case NuKernel::AddSub: return "addsub";
    case NuKernel::Scale: return "scale";
    case NuKernel::Trsm: return "trsm";
    case NuKernel::Chol: return "chol";
    case NuKernel::Sylv: return "sylv";
  }
  return "?";
}

inline const std::vector<NuKernel>& all_nu_kernels() {
  static const std::vector<NuKernel> ks{NuKernel::Load,  NuKernel::Store, NuKernel::Mac,  NuKernel::Trans, NuKernel::AddSub,
                                        NuKernel::Scale, NuKernel::Trsm,  NuKernel::Chol, NuKernel::Sylv};
  return ks;
}

inline bool supported_nu(int nu) { return nu == 2 || nu == 4 || nu == 8; }

/// Structure codes for tile load/store: which part of the source is stored.
enum StructureCode { kGeneral = 0, kLowerCode = 1, kUpperCode = 2, kSymmetricCode = 3 };

inline int structure_code(Structure s) {
  switch (s) {
    case Structure::Lower: return kLowerCode;
    case Structure::Upper: return kUpperCode;
    case Structure::Symmetric:
    case Structure::SPD: return kSymmetricCode;
    default: return kGeneral;
  }
}

// Trsm flags.
inline constexpr int kTrsmRight = 1;
inline constexpr int kTrsmUpper = 2;

namespace nu {

// All tiles are ν×ν row-major. Each function returns its flop count.

inline std::int64_t mac(int v, double* c, const double* a, const double* b, bool sub) {
  for (int i = 0; i < v; ++i)
    for (int j = 0; j < v; ++j) {
      double acc = c[i * v + j];
      for (int p = 0; p < v; ++p) acc = sub ? acc - a[i * v + p] * b[p * v + j] : acc + a[i * v + p] * b[p * v + j];
      c[i * v + j] = acc;
    }
  return 2LL * v * v * v;
}

inline std::int64_t trans(int v, double* b, const double* a) {
  for (int i = 0; i < v; ++i)
    for (int j = 0; j < v; ++j) b[i * v + j] = a[j * v + i];
  return 0;
}

inline std::int64_t addsub(int v, double* c, const double* a, bool sub) {
  for (int i = 0; i < v * v; ++i) c[i] = sub ? c[i] - a[i] : c[i] + a[i];
  return static_cast<std::int64_t>(v) * v;
}

inline std::int64_t scale(int v, double* c, double alpha) {
  for (int i = 0; i < v * v; ++i) c[i] *= alpha;
  return static_cast<std::int64_t>(v) * v;
}

inline std::int64_t trsm(int v, double* c, const double* d, int flags) {
  bool right = flags & kTrsmRight, upper = flags & kTrsmUpper;
  bool forward = right ? upper : !upper;
  std::int64_t f = 0;
  for (int s = 0; s < v; ++s) {
    int k = forward ? s : v - 1 - s;
    int lo = forward ? 0 : k + 1, hi = forward ? k : v;
    for (int o = 0; o < v; ++o) {
      int i = right ? o : k, j = right ? k : o;
      double acc = c[i * v + j];
      for (int t = lo; t < hi; ++t) {
        acc -= right ? c[i * v + t] * d[t * v + k] : d[k * v + t] * c[t * v + j];
        f += 2;
      }
      c[i * v + j] = acc / d[k * v + k];
      ++f;
    }
  }
  return f;
}

/// Upper Cholesky in place on the upper triangle; the lower triangle is untouched.
inline std::int64_t chol(int v, double* c) {
  std::int64_t f = 0;
  for (int i = 0; i < v; ++i)
    for (int j = i; j < v; ++j) {
      double acc = c[i * v + j];
      for (int t = 0; t < i; ++t) {
        acc -= c[t * v + i] * c[t * v + j];
        f += 2;
      }
      if (i == j) {
        if (!(acc > 0.0)) fail(ErrorKind::NotSPD, "non-positive pivot in nu_chol");
        c[i * v + i] = std::sqrt(acc);
      } else {
        c[i * v + j] = acc / c[i * v + i];
      }
      ++f;
    }
  return f;
}

/// Solves A Y + Y B = C in place, A lower and B upper triangular.
inline std::int64_t sylv(int v, double* c, const double* a, const double* b) {
  std::int64_t f = 0;
  for (int i = 0; i < v; ++i)
    for (int j = 0; j < v; ++j) {
      double acc = c[i * v + j];
      for (int t = 0; t < i; ++t) acc -= a[i * v + t] * c[t * v + j];
      for (int t = 0; t < j; ++t) acc -= c[i * v + t] * b[t * v + j];
      c[i * v + j] = acc / (a[i * v + i] + b[j * v + j]);
      f += 2 * i + 2 * j + 2;
    }
  return f;
}

}  // namespace nu

/// C source of the kernel header for one ν.
inline std::string emit_nu_kernel_header(int v) {
  if (!supported_nu(v)) fail(ErrorKind::UnsupportedNu, "nu must be 2, 4 or 8, got " + std::to_string(v));
  const std::string V = std::to_string(v);
  const std::string s = "_" + V;
  std::ostringstream o;
  o << "#ifndef NU_KERNELS" << s << "_H\n#define NU_KERNELS" << s << "_H\n\n#include <math.h>\n\n";
  o << "/* Tiles are " << V << "x" << V << " row-major. Structure codes: 0 general, 1 lower, 2 upper,\n"
    << "   3 symmetric (upper triangle stored). */\n\n";
  o << "static inline void nu_load" << s << "(double *t, const double *a, int ld, int r0, int c0, int code) {\n"
    << "  for (int i = 0; i < " << V << "; ++i)\n"
    << "    for (int j = 0; j < " << V << "; ++j) {\n"
    << "      int r = r0 + i, c = c0 + j;\n"
    << "      if ((code == 1 && c > r) || (code == 2 && r > c)) t[i * " << V << " + j] = 0.0;\n"
    << "      else if (code == 3 && r > c) t[i * " << V << " + j] = a[c * ld + r];\n"
    << "      else t[i * " << V << " + j] = a[r * ld + c];\n"
    << "    }\n}\n\n";
  o << "static inline void nu_store" << s << "(double *a, const double *t, int ld, int r0, int c0, int code) {\n"
    << "  for (int i = 0; i < " << V << "; ++i)\n"
    << "    for (int j = 0; j < " << V << "; ++j) {\n"
    << "      int r = r0 + i, c = c0 + j;\n"
    << "      if ((code == 1 && c > r) || (code >= 2 && r > c)) continue;\n"
    << "      a[r * ld + c] = t[i * " << V << " + j];\n"
    << "    }\n}\n\n";
  o << "static inline void nu_mac" << s << "(double *c, const double *a, const double *b, int sub) {\n"
    << "  for (int i = 0; i < " << V << "; ++i)\n"
    << "    for (int j = 0; j < " << V << "; ++j) {\n"
    << "      double acc = c[i * " << V << " + j];\n"
    << "      for (int p = 0; p < " << V << "; ++p)\n"
    << "        acc = sub ? acc - a[i * " << V << " + p] * b[p * " << V << " + j] : acc + a[i * " << V << " + p] * b[p * "
    << V << " + j];\n"
    << "      c[i * " << V << " + j] = acc;\n"
    << "    }\n}\n\n";
  o << "static inline void nu_trans" << s << "(double *b, const double *a) {\n"
    << "  for (int i = 0; i < " << V << "; ++i)\n"
    << "    for (int j = 0; j < " << V << "; ++j) b[i * " << V << " + j] = a[j * " << V << " + i];\n}\n\n";
  o << "static inline void nu_addsub" << s << "(double *c, const double *a, int sub) {\n"
    << "  for (int i = 0; i < " << v * v << "; ++i) c[i] = sub ? c[i] - a[i] : c[i] + a[i];\n}\n\n";
  o << "static inline void nu_scale" << s << "(double *c, double alpha) {\n"
    << "  for (int i = 0; i < " << v * v << "; ++i) c[i] *= alpha;\n}\n\n";
  o << "/* flags: 1 = right side (Y D = C), 2 = D upper. */\n"
    << "static inline void nu_trsm" << s << "(double *c, const double *d, int flags) {\n"
    << "  int right = flags & 1, upper = flags & 2;\n"
    << "  int forward = right ? upper : !upper;\n"
    << "  for (int s = 0; s < " << V << "; ++s) {\n"
    << "    int k = forward ? s : " << V << " - 1 - s;\n"
    << "    int lo = forward ? 0 : k + 1, hi = forward ? k : " << V << ";\n"
    << "    for (int o = 0; o < " << V << "; ++o) {\n"
    << "      int i = right ? o : k, j = right ? k : o;\n"
    << "      double acc = c[i * " << V << " + j];\n"
    << "      for (int t = lo; t < hi; ++t)\n"
    << "        acc -= right ? c[i * " << V << " + t] * d[t * " << V << " + k] : d[k * " << V << " + t] * c[t * " << V
    << " + j];\n"
    << "      c[i * " << V << " + j] = acc / d[k * " << V << " + k];\n"
    << "    }\n  }\n}\n\n";
  o << "static inline void nu_chol" << s << "(double *c) {\n"
    << "  for (int i = 0; i < " << V << "; ++i)\n"
    << "    for (int j = i; j < " << V << "; ++j) {\n"
    << "      double acc = c[i * " << V << " + j];\n"
    << "      for (int t = 0; t < i; ++t) acc -= c[t * " << V << " + i] * c[t * " << V << " + j];\n"
    << "      if (i == j) c[i * " << V << " + i] = sqrt(acc);\n"
    << "      else c[i * " << V << " + j] = acc / c[i * " << V << " + i];\n"
    << "    }\n}\n\n";
  o << "static inline void nu_sylv" << s << "(double *c, const double *a, const double *b) {\n"
    << "  for (int i = 0; i < " << V << "; ++i)\n"
    << "    for (int j = 0; j < " << V << "; ++j) {\n"
    << "      double acc = c[i * " << V << " + j];\n"
    << "      for (int t = 0; t < i; ++t) acc -= a[i * " << V << " + t] * c[t * " << V << " + j];\n"
    << "      for (int t = 0; t < j; ++t) acc -= c[i * " << V << " + t] * b[t * " << V << " + j];\n"
    << "      c[i * " << V << " + j] = acc / (a[i * " << V << " + i] + b[j * " << V << " + j]);\n"
    << "    }\n}\n\n";
  o << "#endif\n";
  return o.str();
}

}  // namespace lagen
