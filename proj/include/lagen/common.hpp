#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lagen {

enum class ErrorKind {
  Syntax,
  UndeclaredOperand,
  DuplicateDeclaration,
  ShapeMismatch,
  StructureContradiction,
  IncompatibleGrid,
  NonconformalPartitioning,
  NoPME,
  CyclicDependency,
  NoInvariant,
  PreconditionViolation,
  NonSynthesizable,
  NoAlgorithm,
  NonDivisible,
  NotDivisible,
  UnsupportedNu,
  Unsupported,
  OutOfBounds,
  NumericalFailure,
  SingularSystem,
  NotSPD,
  EmptySearchSpace,
  Toolchain,
  Usage,
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Syntax: return "syntax error";
    case ErrorKind::UndeclaredOperand: return "undeclared operand";
    case ErrorKind::DuplicateDeclaration: return "duplicate declaration";
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::StructureContradiction: return "structure contradiction";
    case ErrorKind::IncompatibleGrid: return "incompatible grid";
    case ErrorKind::NonconformalPartitioning: return "nonconformal partitioning";
    case ErrorKind::NoPME: return "no PME";
    case ErrorKind::CyclicDependency: return "cyclic dependency";
    case ErrorKind::NoInvariant: return "no invariant";
    case ErrorKind::PreconditionViolation: return "precondition violation";
    case ErrorKind::NonSynthesizable: return "non-synthesizable invariant";
    case ErrorKind::NoAlgorithm: return "no algorithm";
    case ErrorKind::NonDivisible: return "non-divisible size";
    case ErrorKind::NotDivisible: return "not divisible by nu";
    case ErrorKind::UnsupportedNu: return "unsupported nu";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::OutOfBounds: return "out-of-bounds view";
    case ErrorKind::NumericalFailure: return "numerical failure";
    case ErrorKind::SingularSystem: return "singular system";
    case ErrorKind::NotSPD: return "matrix not SPD";
    case ErrorKind::EmptySearchSpace: return "empty search space";
    case ErrorKind::Toolchain: return "toolchain error";
    case ErrorKind::Usage: return "usage error";
  }
  return "error";
}

/// Every failure in the pipeline is reported through this one exception type;
/// `kind()` is what callers branch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

enum class Structure { General, Lower, Upper, Symmetric, SPD, Zero, Identity };

inline std::string_view to_string(Structure s) {
  switch (s) {
    case Structure::General: return "general";
    case Structure::Lower: return "lower_triangular";
    case Structure::Upper: return "upper_triangular";
    case Structure::Symmetric: return "symmetric";
    case Structure::SPD: return "spd";
    case Structure::Zero: return "zero";
    case Structure::Identity: return "identity";
  }
  return "?";
}

inline bool is_symmetric(Structure s) {
  return s == Structure::Symmetric || s == Structure::SPD || s == Structure::Zero ||
         s == Structure::Identity;
}
inline bool is_triangular(Structure s) { return s == Structure::Lower || s == Structure::Upper; }
inline bool is_square_structure(Structure s) { return s != Structure::General && s != Structure::Zero; }

inline Structure transposed(Structure s) {
  if (s == Structure::Lower) return Structure::Upper;
  if (s == Structure::Upper) return Structure::Lower;
  return s;
}

enum class Role { Input, Output };

enum class OperationKind { Chol, TrsmLeftTransposed, TrsmRight, Sylv, Lyap, GemmUpdate, Assign };

inline std::string_view to_string(OperationKind k) {
  switch (k) {
    case OperationKind::Chol: return "CHOL";
    case OperationKind::TrsmLeftTransposed: return "TRSM_LT";
    case OperationKind::TrsmRight: return "TRSM_R";
    case OperationKind::Sylv: return "SYLV";
    case OperationKind::Lyap: return "LYAP";
    case OperationKind::GemmUpdate: return "GEMM_UPDATE";
    case OperationKind::Assign: return "ADD";
  }
  return "?";
}

inline bool is_solver(OperationKind k) { return k != OperationKind::GemmUpdate; }

}  // namespace lagen
