#pragma once

// Operand storage used by both interpreters. Every access is bounds-checked
// and classified against the operand's declared structure.

#include <cmath>
#include <map>
#include <string>

#include "lagen/dense.hpp"

namespace lagen {

struct AccessStats {
  std::int64_t reads = 0, writes = 0;
  std::int64_t zero_reads = 0;    // structurally-zero locations read
  std::int64_t zero_writes = 0;   // structurally-zero locations written
  std::int64_t alias_writes = 0;  // strictly-lower half of a symmetric operand written
  std::int64_t alias_reads = 0;   // raw reads of that half, bypassing the stored triangle
};

/// True when (i, j) is a structural zero of an operand with structure s.
inline bool structural_zero(Structure s, std::int64_t i, std::int64_t j) {
  switch (s) {
    case Structure::Zero: return true;
    case Structure::Identity: return i != j;
    case Structure::Lower: return j > i;
    case Structure::Upper: return i > j;
    default: return false;
  }
}

class Store {
 public:
  void bind(const std::string& name, DenseMatrix m, Structure s) { slots_[name] = Slot{std::move(m), s}; }
  bool has(const std::string& name) const { return slots_.count(name) > 0; }

  /// Logical reads of symmetric operands go through the stored upper
  /// triangle; raw reads of the lower half are counted as alias reads.
  double read(const std::string& name, std::int64_t i, std::int64_t j, bool logical = true) {
    Slot& s = slot(name);
    check(s, name, i, j);
    ++stats_.reads;
    if (is_symmetric(s.structure) && i > j) {
      if (logical)
        std::swap(i, j);
      else
        ++stats_.alias_reads;
    }
    if (structural_zero(s.structure, i, j)) ++stats_.zero_reads;
    return s.m(i, j);
  }

  void write(const std::string& name, std::int64_t i, std::int64_t j, double v) {
    Slot& s = slot(name);
    check(s, name, i, j);
    ++stats_.writes;
    if (!std::isfinite(v)) fail(ErrorKind::NumericalFailure, "non-finite value written to " + name);
    if (is_symmetric(s.structure) && i > j) ++stats_.alias_writes;
    if (structural_zero(s.structure, i, j)) ++stats_.zero_writes;
    s.m(i, j) = v;
  }

  const DenseMatrix& raw(const std::string& name) const {
    auto it = slots_.find(name);
    if (it == slots_.end()) fail(ErrorKind::UndeclaredOperand, "no storage for " + name);
    return it->second.m;
  }

  /// The operand as a full matrix: symmetric halves mirrored, zero regions cleared.
  DenseMatrix materialize(const std::string& name) const {
    auto it = slots_.find(name);
    if (it == slots_.end()) fail(ErrorKind::UndeclaredOperand, "no storage for " + name);
    DenseMatrix m = it->second.m;
    Structure s = it->second.structure;
    for (std::int64_t i = 0; i < m.rows(); ++i)
      for (std::int64_t j = 0; j < m.cols(); ++j) {
        if (is_symmetric(s) && i > j) m(i, j) = m(j, i);
        else if (structural_zero(s, i, j)) m(i, j) = 0.0;
      }
    return m;
  }

  const AccessStats& stats() const { return stats_; }

 private:
  struct Slot {
    DenseMatrix m;
    Structure structure = Structure::General;
  };
  Slot& slot(const std::string& name) {
    auto it = slots_.find(name);
    if (it == slots_.end()) fail(ErrorKind::UndeclaredOperand, "no storage for " + name);
    return it->second;
  }
  static void check(const Slot& s, const std::string& name, std::int64_t i, std::int64_t j) {
    if (i < 0 || j < 0 || i >= s.m.rows() || j >= s.m.cols())
      fail(ErrorKind::OutOfBounds, name + "(" + std::to_string(i) + "," + std::to_string(j) + ") out of bounds");
  }
  std::map<std::string, Slot> slots_;
  AccessStats stats_;
};

/// Binds inputs, a zeroed unknown and the workspace copy of the rhs operand.
/// The copy itself is not counted in the access statistics.
inline Store make_store(const Equation& eq, const Instance& inst, const std::string& workspace) {
  Store st;
  for (const auto& op : eq.operands) {
    std::int64_t r = operand_extent(op.rows, inst.n), c = operand_extent(op.cols, inst.n);
    if (op.role == Role::Input)
      st.bind(op.name, inst.bindings.at(op.name), op.structure);
    else
      st.bind(op.name, DenseMatrix(r, c), op.structure);
  }
  if (!workspace.empty()) st.bind(workspace + "_w", inst.bindings.at(workspace), Structure::General);
  return st;
}

}  // namespace lagen
