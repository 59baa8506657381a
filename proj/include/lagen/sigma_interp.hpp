#pragma once

// Executable semantics of Σ programs over instrumented storage.

#include "lagen/sigma.hpp"
#include "lagen/verifier.hpp"

namespace lagen {

namespace sigma_detail {

class Interpreter {
 public:
  Interpreter(const SigmaProgram& p, const Instance& inst)
      : p_(p), st_(make_store(p.algorithm.equation, inst, p.algorithm.workspace)) {
    for (const auto& b : p.buffers) bufs_[b.name] = DenseMatrix(b.rows, b.cols);
  }

  RunResult run() {
    exec(p_.body);
    RunResult r;
    r.outputs[p_.algorithm.unknown] = st_.materialize(p_.algorithm.unknown);
    r.flops = flops_;
    r.stats = st_.stats();
    return r;
  }

 private:
  DenseMatrix& buffer(const std::string& name, std::int64_t i, std::int64_t j) {
    auto it = bufs_.find(name);
    if (it == bufs_.end()) fail(ErrorKind::UndeclaredOperand, "no buffer " + name);
    if (i < 0 || j < 0 || i >= it->second.rows() || j >= it->second.cols())
      fail(ErrorKind::OutOfBounds, name + " buffer access out of bounds");
    return it->second;
  }

  double read(const Access& a) {
    std::int64_t r = a.row.eval(env_), c = a.col.eval(env_);
    if (bufs_.count(a.operand)) return buffer(a.operand, r, c)(r, c);
    return st_.read(a.operand, r, c, a.sym);
  }

  void write(const Access& a, double v) {
    std::int64_t r = a.row.eval(env_), c = a.col.eval(env_);
    if (!std::isfinite(v)) fail(ErrorKind::NumericalFailure, "non-finite value in " + a.operand);
    if (bufs_.count(a.operand)) {
      buffer(a.operand, r, c)(r, c) = v;
      return;
    }
    st_.write(a.operand, r, c, v);
  }

  void op(const Node& n) {
    switch (n.op) {
      case ScalarKind::Copy: write(n.dst, read(n.a)); break;
      case ScalarKind::MulSub: {
        double d = read(n.dst), a = read(n.a), b = read(n.b);
        write(n.dst, d - n.sign * a * b);
        break;
      }
      case ScalarKind::Sub: {
        double d = read(n.dst), a = read(n.a);
        write(n.dst, d - n.sign * a);
        break;
      }
      case ScalarKind::Sqrt: {
        double d = read(n.dst);
        if (!(d > 0.0)) fail(ErrorKind::NotSPD, "non-positive pivot");
        write(n.dst, std::sqrt(d));
        break;
      }
      case ScalarKind::Div: {
        double d = read(n.dst), a = read(n.a);
        write(n.dst, d / a);
        break;
      }
      case ScalarKind::DivSum: {
        double d = read(n.dst), a = read(n.a), b = read(n.b);
        write(n.dst, d / (a + b));
        break;
      }
    }
    flops_ += scalar_flops(n.op);
  }

  void transfer(const Node& n) {
    DenseMatrix& buf = bufs_.at(n.buffer);
    if (buf.rows() < n.rows || buf.cols() < n.cols) fail(ErrorKind::OutOfBounds, "tile exceeds buffer " + n.buffer);
    std::int64_t r0 = n.row.eval(env_), c0 = n.col.eval(env_);
    Structure s = p_.structure(n.operand);
    for (std::int64_t i = 0; i < n.rows; ++i)
      for (std::int64_t j = 0; j < n.cols; ++j) {
        std::int64_t r = r0 + i, c = c0 + j;
        if (n.kind == NodeKind::Gather) {
          buf(i, j) = structural_zero(s, r, c) ? 0.0 : st_.read(n.operand, r, c, true);
        } else {
          if (structural_zero(s, r, c) || (is_symmetric(s) && r > c)) continue;
          st_.write(n.operand, r, c, buf(i, j));
        }
      }
  }

  void call(const Node& n) {
    int v = p_.nu;
    auto arg = [&](std::size_t i) -> double* {
      DenseMatrix& m = bufs_.at(n.args.at(i));
      if (m.rows() != v || m.cols() != v) fail(ErrorKind::OutOfBounds, "ν-kernel argument is not ν×ν");
      return m.data();
    };
    switch (n.kernel) {
      case NuKernel::Mac: flops_ += nu::mac(v, arg(0), arg(1), arg(2), n.flags != 0); break;
      case NuKernel::Trans: flops_ += nu::trans(v, arg(0), arg(1)); break;
      case NuKernel::AddSub: flops_ += nu::addsub(v, arg(0), arg(1), n.flags != 0); break;
      case NuKernel::Scale: flops_ += nu::scale(v, arg(0), 1.0); break;
      case NuKernel::Trsm: flops_ += nu::trsm(v, arg(0), arg(1), n.flags); break;
      case NuKernel::Chol: flops_ += nu::chol(v, arg(0)); break;
      case NuKernel::Sylv: flops_ += nu::sylv(v, arg(0), arg(1), arg(2)); break;
      case NuKernel::Load:
      case NuKernel::Store: fail(ErrorKind::Unsupported, "tile transfers are gather/scatter nodes");
    }
    for (std::size_t i = 0; i < n.args.size(); ++i)
      for (double x : bufs_.at(n.args[i]).values())
        if (!std::isfinite(x)) fail(ErrorKind::NumericalFailure, "non-finite value from nu_" + kernel_name(n.kernel));
  }

  void exec(const std::vector<Node>& nodes) {
    for (const auto& n : nodes) {
      switch (n.kind) {
        case NodeKind::Loop: {
          std::int64_t hi = loop_hi(n, env_);
          for (std::int64_t v = loop_lo(n, env_); v < hi; v += n.step) {
            env_.set(n.var, v);
            exec(n.body);
          }
          env_.erase(n.var);
          break;
        }
        case NodeKind::Region: exec(n.body); break;
        case NodeKind::Op: op(n); break;
        case NodeKind::Gather:
        case NodeKind::Scatter: transfer(n); break;
        case NodeKind::NuCall: call(n); break;
      }
    }
  }

  const SigmaProgram& p_;
  Store st_;
  std::map<std::string, DenseMatrix> bufs_;
  Env env_;
  std::int64_t flops_ = 0;
};

}  // namespace sigma_detail

inline RunResult interpret(const SigmaProgram& p, const Instance& inst) {
  if (inst.n != p.n) fail(ErrorKind::ShapeMismatch, "instance size differs from program size");
  return sigma_detail::Interpreter(p, inst).run();
}

}  // namespace lagen
