// lagen: synthesize, generate, verify and tune linear-algebra kernels from .la files.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "lagen/autotune.hpp"

namespace fs = std::filesystem;
using namespace lagen;

namespace {

enum Exit { Ok = 0, VerifyFailed = 1, UsageError = 2, ToolchainError = 3 };

struct Args {
  std::string input;
  std::vector<std::int64_t> sizes;
  std::uint64_t seed = 42;
  double tol = 1e-10;
  std::vector<std::int64_t> blocks{4, 8, 16};
  int nu = 4;
  std::string mode = "scalar";
  std::string cc;
  int reps = 5;
  std::string out;
  std::string report;
  bool pme_only = false, list_invariants = false, unroll = false;
};

Equation read_equation(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::Usage, "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return load_equation(ss.str());
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

SearchConfig search_of(const Args& a) {
  SearchConfig s;
  s.blocks = a.blocks;
  s.nu = a.nu;
  s.modes = {a.mode == "nu" ? Mode::NuTiled : Mode::Scalar};
  return s;
}

std::string sci(double x) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << x;
  return os.str();
}

int run_synth(const Args& a) {
  Equation eq = read_equation(a.input);
  std::vector<PME> pmes = derive_pmes(eq);
  if (a.pme_only) {
    for (std::size_t i = 0; i < pmes.size(); ++i) std::cout << (i ? "\n" : "") << to_string(pmes[i]);
    return Ok;
  }
  if (a.list_invariants) {
    int k = 1;
    for (std::size_t i = 0; i < pmes.size(); ++i)
      for (const auto& inv : enumerate_invariants(pmes[i], static_cast<int>(i)))
        std::cout << "INV" << k++ << ": " << to_string(inv) << "\n";
    return Ok;
  }
  for (const auto& alg : enumerate_algorithms(eq)) std::cout << to_string(alg) << "\n";
  return Ok;
}

int run_gen(const Args& a) {
  Equation eq = read_equation(a.input);
  std::vector<Algorithm> algs = enumerate_algorithms(eq);
  fs::path out = a.out.empty() ? fs::path(".") : fs::path(a.out);
  fs::create_directories(out);
  SearchConfig s = search_of(a);
  s.allow_full_block = true;
  std::set<int> nus;
  for (auto n : a.sizes)
    for (const auto& v : enumerate_variants(algs, n, s)) {
      std::string name = stem(a.input) + "_" + v.id + "_" + std::to_string(n);
      EmittedSource src = emit_function(build_program(algs[v.algorithm], n, v, name), {name, a.unroll});
      std::ofstream(out / src.filename) << src.text;
      std::cout << (out / src.filename).string() << "\n";
      if (v.mode == Mode::NuTiled) nus.insert(v.nu);
    }
  for (int nu : nus) {
    EmittedSource h = emit_nu_header_source(nu);
    std::ofstream(out / h.filename) << h.text;
    std::cout << (out / h.filename).string() << "\n";
  }
  return Ok;
}

int run_verify(const Args& a) {
  Equation eq = read_equation(a.input);
  std::vector<Algorithm> algs = enumerate_algorithms(eq);
  SearchConfig s = search_of(a);
  s.allow_full_block = true;
  bool ok = true;
  for (auto n : a.sizes) {
    Instance inst = random_instance(eq, n, a.seed);
    for (const auto& v : enumerate_variants(algs, n, s)) {
      const Algorithm& alg = algs[v.algorithm];
      std::string err;
      double r = verify_program(build_program(alg, n, v, v.id), inst, &err);
      bool pass = r <= a.tol;
      ok = ok && pass;
      std::cout << "VERIFY " << v.id << " n=" << n << " residual=" << sci(r) << " flops=" << flop_count(alg, n, v.b)
                << " " << (pass ? "PASS" : "FAIL") << "\n";
      if (!err.empty()) std::cerr << v.id << " n=" << n << ": " << err << "\n";
    }
  }
  return ok ? Ok : VerifyFailed;
}

int run_tune(const Args& a) {
  Equation eq = read_equation(a.input);
  TuneOptions opt;
  opt.search = search_of(a);
  opt.seed = a.seed;
  opt.tol = a.tol;
  if (!a.cc.empty()) opt.toolchain = Toolchain{a.cc, a.reps, {}};
  nlohmann::json reports = nlohmann::json::array();
  bool verified = true, timed = false;
  for (auto n : a.sizes) {
    if (!a.out.empty()) opt.out = fs::path(a.out);
    TuneReport r = tune(eq, stem(a.input), n, opt);
    for (const auto& v : r.variants) {
      verified = verified && v.verified;
      timed = timed || v.median_ns.has_value();
      std::cout << "VARIANT " << v.config.id << " n=" << n << " flops=" << v.flops
                << " residual=" << sci(v.residuals.count(n) ? v.residuals.at(n) : NAN)
                << " median_ns=" << (v.median_ns ? std::to_string(*v.median_ns) : "-") << " "
                << (v.verified ? "PASS" : "FAIL") << (v.selected ? " SELECTED" : "") << "\n";
      if (!v.error.empty()) std::cerr << v.config.id << ": " << v.error << "\n";
    }
    reports.push_back(to_json(r));
  }
  nlohmann::json doc = reports.size() == 1 ? reports[0] : reports;
  if (!a.report.empty()) {
    std::ofstream f(a.report);
    if (!f) fail(ErrorKind::Usage, "cannot write " + a.report);
    f << doc.dump(2) << "\n";
  }
  if (opt.toolchain && !timed) return ToolchainError;
  return verified ? Ok : VerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear-algebra kernel generator"};
  app.require_subcommand(1);
  Args a;
  std::string sizes;

  auto common = [&](CLI::App* sub, const std::string& default_sizes) {
    sub->add_option("--input", a.input, "equation file (.la)")->required();
    sub->add_option("--n", sizes, "comma-separated problem sizes")->default_val(default_sizes);
    sub->add_option("--blocks", a.blocks, "candidate block sizes")->delimiter(',');
    sub->add_option("--nu", a.nu, "vector length for nu mode");
    sub->add_option("--mode", a.mode, "scalar or nu")->check(CLI::IsMember({"scalar", "nu"}));
    sub->add_option("--seed", a.seed, "instance seed");
  };

  auto* synth = app.add_subcommand("synth", "print PMEs, loop invariants or algorithms");
  synth->add_option("--input", a.input, "equation file (.la)")->required();
  synth->add_flag("--pme-only", a.pme_only, "print PMEs only");
  synth->add_flag("--list-invariants", a.list_invariants, "print loop invariants only");

  auto* gen = app.add_subcommand("gen", "emit C sources for every variant");
  common(gen, "16");
  gen->add_option("--out", a.out, "output directory");
  gen->add_flag("--unroll", a.unroll, "fully unroll small leaf loops");

  auto* verify = app.add_subcommand("verify", "check every variant against the equation");
  common(verify, "4,8,16");
  verify->add_option("--tol", a.tol, "residual tolerance");

  auto* tune = app.add_subcommand("tune", "verify, benchmark and select variants");
  common(tune, "16");
  tune->add_option("--tol", a.tol, "residual tolerance");
  tune->add_option("--cc", a.cc, "C compiler command used for benchmarking");
  tune->add_option("--reps", a.reps, "timed repetitions")->check(CLI::PositiveNumber);
  tune->add_option("--out", a.out, "directory for emitted sources");
  tune->add_option("--report", a.report, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? Ok : UsageError;
  }

  try {
    std::stringstream ss(sizes);
    for (std::string item; std::getline(ss, item, ',');) {
      std::size_t used = 0;
      long long n = std::stoll(item, &used);
      if (used != item.size() || n < 2) fail(ErrorKind::Usage, "bad size '" + item + "'");
      a.sizes.push_back(n);
    }
    if (*synth) return run_synth(a);
    if (*gen) return run_gen(a);
    if (*verify) return run_verify(a);
    return run_tune(a);
  } catch (const Error& e) {
    std::cerr << "lagen: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::Syntax:
      case ErrorKind::UndeclaredOperand:
      case ErrorKind::DuplicateDeclaration:
      case ErrorKind::ShapeMismatch:
      case ErrorKind::StructureContradiction:
      case ErrorKind::Usage:
      case ErrorKind::EmptySearchSpace:
      case ErrorKind::UnsupportedNu: return UsageError;
      case ErrorKind::Toolchain: return ToolchainError;
      default: return VerifyFailed;
    }
  } catch (const std::invalid_argument&) {
    std::cerr << "lagen: bad size list '" << sizes << "'\n";
    return UsageError;
  } catch (const std::out_of_range&) {
    std::cerr << "lagen: size out of range\n";
    return UsageError;
  }
}
