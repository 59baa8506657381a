#pragma once

// Variant search: every synthesized algorithm crossed with block sizes and
// execution modes, verified by interpretation, optionally timed through an
// external C toolchain, and summarized as a JSON report.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "lagen/codegen.hpp"
#include "lagen/sigma_interp.hpp"

namespace lagen {

struct SearchConfig {
  std::vector<std::int64_t> blocks{4, 8, 16};
  std::vector<Mode> modes{Mode::Scalar};
  int nu = 4;
  bool allow_full_block = false;  // admit b = n (a single iteration)
};

struct VariantConfig {
  std::string id;
  std::size_t algorithm = 0;  // index into the algorithm list
  std::int64_t b = 0;
  std::int64_t tiles = 0;
  Mode mode = Mode::Scalar;
  int nu = 0;
};

inline std::string mode_name(Mode m, int nu) { return m == Mode::Scalar ? "scalar" : "nu" + std::to_string(nu); }

inline std::vector<VariantConfig> enumerate_variants(const std::vector<Algorithm>& algs, std::int64_t n,
                                                     const SearchConfig& search) {
  if (n < 2) fail(ErrorKind::PreconditionViolation, "n must be at least 2");
  std::vector<std::int64_t> blocks;
  for (auto b : search.blocks)
    if (b > 0 && n % b == 0 && (b < n || search.allow_full_block) &&
        std::find(blocks.begin(), blocks.end(), b) == blocks.end())
      blocks.push_back(b);
  std::vector<VariantConfig> out;
  for (std::size_t a = 0; a < algs.size(); ++a)
    for (auto b : blocks)
      for (Mode m : search.modes) {
        std::int64_t tiles = b;
        if (m == Mode::NuTiled) {
          if (!supported_nu(search.nu)) fail(ErrorKind::UnsupportedNu, "nu must be 2, 4 or 8");
          if (tiles % search.nu != 0) continue;
        }
        VariantConfig v{"", a, b, tiles, m, m == Mode::NuTiled ? search.nu : 0};
        v.id = algs[a].name + "_b" + std::to_string(b) + "_t" + std::to_string(tiles) + "_" + mode_name(m, search.nu);
        out.push_back(v);
      }
  if (out.empty()) fail(ErrorKind::EmptySearchSpace, "no admissible block size divides n = " + std::to_string(n));
  return out;
}

inline std::vector<VariantConfig> enumerate_variants(const Equation& eq, std::int64_t n, const SearchConfig& search) {
  return enumerate_variants(enumerate_algorithms(eq), n, search);
}

/// Lowered, pruned and (when requested) tiled and ν-mapped program.
inline SigmaProgram build_program(const Algorithm& alg, std::int64_t n, const VariantConfig& v, const std::string& name) {
  SigmaProgram p = prune_structure(lower_algorithm(alg, n, v.b));
  if (v.tiles < v.b) p = tile(p, v.tiles);
  if (v.mode == Mode::NuTiled) p = map_nu_kernels(p, v.nu);
  p.name = name;
  return p;
}

struct VariantResult {
  VariantConfig config;
  std::string algorithm, invariant;
  std::int64_t flops = 0;
  std::map<std::int64_t, double> residuals;
  bool verified = false;
  std::string error;  // first failure message, verification or toolchain
  std::optional<std::int64_t> median_ns;
  bool selected = false;
};

struct TuneReport {
  std::string equation;
  std::int64_t n = 0;
  std::vector<VariantResult> variants;
};

/// Runs the variant's program on a seeded instance; the residual, or +inf
/// with `error` set when execution fails.
inline double verify_program(const SigmaProgram& p, const Instance& inst, std::string* error = nullptr) {
  try {
    RunResult r = interpret(p, inst);
    return residual(p.algorithm.equation, inst, r.outputs);
  } catch (const Error& e) {
    if (error) *error = e.what();
    return std::numeric_limits<double>::infinity();
  }
}

// ---- toolchain ----

struct Toolchain {
  std::string cc;  // compiler command, e.g. "cc -O3"
  int reps = 5;
  std::filesystem::path workdir;  // defaults to a fresh directory under the system temp dir
};

namespace autotune_detail {

inline std::mutex& run_mutex() {
  static std::mutex m;
  return m;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

inline std::filesystem::path fresh_dir(const std::filesystem::path& base, const std::string& stem) {
  static std::atomic<int> counter{0};
  auto root = base.empty() ? std::filesystem::temp_directory_path() / "lagen-bench" : base;
  auto d = root / (stem + "-" + std::to_string(counter++));
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace autotune_detail

/// Median from the `RESULT <name> <n> <median_ns> <flops>` line of a harness run.
inline std::int64_t parse_result_line(const std::string& output, const std::string& name, std::int64_t n) {
  std::istringstream is(output);
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag, fn;
    std::int64_t size = 0, median = 0, flops = 0;
    if (!(ls >> tag >> fn >> size >> median >> flops) || tag != "RESULT") continue;
    if (fn == name && size == n) return median;
  }
  if (output.find("RESIDUAL_FAIL") != std::string::npos)
    fail(ErrorKind::NumericalFailure, "runtime residual guard tripped for " + name);
  fail(ErrorKind::Toolchain, "no RESULT line for " + name + " n=" + std::to_string(n));
}

/// Compiles the harness for one function and runs it. Compilation may overlap
/// with other calls; execution never does.
inline std::int64_t benchmark_variant(const EmittedSource& fn, const Equation& eq, std::int64_t n, std::int64_t flops,
                                      const Toolchain& tc) {
  namespace fs = std::filesystem;
  using autotune_detail::quote;
  fs::path dir = autotune_detail::fresh_dir(tc.workdir, fn.name);
  struct Cleanup {
    fs::path dir;
    bool keep;
    ~Cleanup() {
      std::error_code ec;
      if (!keep) fs::remove_all(dir, ec);
    }
  } cleanup{dir, !tc.workdir.empty()};
  for (const auto& h : fn.headers) {
    int nu = std::stoi(h.substr(h.rfind('_') + 1));
    std::ofstream(dir / h) << emit_nu_kernel_header(nu);
  }
  EmittedSource harness = emit_bench_harness(eq, {{fn, n, flops}}, tc.reps);
  fs::path src = dir / harness.filename, exe = dir / "bench", log = dir / "compile.log", out = dir / "run.log";
  std::ofstream(src) << harness.text;
  std::string compile = tc.cc + " -I" + quote(dir.string()) + " -o " + quote(exe.string()) + " " + quote(src.string()) +
                        " -lm > " + quote(log.string()) + " 2>&1";
  if (std::system(compile.c_str()) != 0) {
    std::string msg = autotune_detail::slurp(log);
    msg.erase(msg.find_last_not_of(" \n\r\t") + 1);
    fail(ErrorKind::Toolchain, "compilation failed for " + fn.name + ": " + msg);
  }
  int rc;
  {
    std::lock_guard<std::mutex> lock(autotune_detail::run_mutex());
    rc = std::system((quote(exe.string()) + " > " + quote(out.string()) + " 2>&1").c_str());
  }
  std::string text = autotune_detail::slurp(out);
  std::int64_t median = parse_result_line(text, fn.name, n);
  if (rc != 0) fail(ErrorKind::Toolchain, "harness exited with status " + std::to_string(rc));
  return median;
}

/// Marks the fastest verified, timed variant: minimum median, then fewer flops,
/// then variant id.
inline void select_variant(TuneReport& r) {
  VariantResult* best = nullptr;
  for (auto& v : r.variants) {
    v.selected = false;
    if (!v.verified || !v.median_ns) continue;
    if (!best || std::tie(*v.median_ns, v.flops, v.config.id) < std::tie(*best->median_ns, best->flops, best->config.id))
      best = &v;
  }
  if (best) best->selected = true;
}

struct TuneOptions {
  SearchConfig search;
  std::uint64_t seed = 42;
  double tol = 1e-10;
  std::optional<Toolchain> toolchain;
  std::filesystem::path out;  // emitted sources, when non-empty
};

inline TuneReport tune(const Equation& eq, const std::string& eq_name, std::int64_t n, const TuneOptions& opt) {
  std::vector<Algorithm> algs = enumerate_algorithms(eq);
  std::vector<VariantConfig> configs = enumerate_variants(algs, n, opt.search);
  Instance inst = random_instance(eq, n, opt.seed);
  TuneReport report{eq_name, n, {}};
  std::vector<EmittedSource> sources(configs.size());
  std::set<int> nus;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const VariantConfig& c = configs[i];
    const Algorithm& a = algs[c.algorithm];
    VariantResult v;
    v.config = c;
    v.algorithm = a.name;
    v.invariant = to_string(a.invariant);
    try {
      v.flops = flop_count(a, n, c.b);
      std::string name = eq_name + "_" + c.id + "_" + std::to_string(n);
      SigmaProgram p = build_program(a, n, c, name);
      double r = verify_program(p, inst, &v.error);
      v.residuals[n] = r;
      v.verified = r <= opt.tol;
      if (!v.verified && v.error.empty()) v.error = "residual above tolerance";
      sources[i] = emit_function(p);
      if (c.mode == Mode::NuTiled) nus.insert(c.nu);
    } catch (const Error& e) {
      v.error = e.what();
    }
    report.variants.push_back(std::move(v));
  }
  if (!opt.out.empty()) {
    std::filesystem::create_directories(opt.out);
    for (const auto& s : sources)
      if (!s.name.empty()) std::ofstream(opt.out / s.filename) << s.text;
    for (int nu : nus) std::ofstream(opt.out / ("nu_kernels_" + std::to_string(nu) + ".h")) << emit_nu_kernel_header(nu);
  }
  if (opt.toolchain) {
    std::vector<std::future<void>> jobs;
    for (std::size_t i = 0; i < configs.size(); ++i) {
      VariantResult& v = report.variants[i];
      if (!v.verified) continue;
      jobs.push_back(std::async(std::launch::async, [&, i] {
        try {
          v.median_ns = benchmark_variant(sources[i], eq, n, v.flops, *opt.toolchain);
        } catch (const Error& e) {
          v.error = e.what();
        }
      }));
    }
    for (auto& j : jobs) j.get();
    select_variant(report);
  }
  return report;
}

inline nlohmann::json to_json(const TuneReport& r) {
  nlohmann::json vs = nlohmann::json::array();
  for (const auto& v : r.variants) {
    nlohmann::json res = nlohmann::json::object();
    for (const auto& [size, x] : v.residuals) res[std::to_string(size)] = std::isfinite(x) ? nlohmann::json(x) : nlohmann::json();
    nlohmann::json j{{"id", v.config.id},
                     {"algorithm", v.algorithm},
                     {"invariant", v.invariant},
                     {"b", v.config.b},
                     {"tiles", v.config.tiles},
                     {"mode", mode_name(v.config.mode, v.config.nu)},
                     {"flops", v.flops},
                     {"residuals", res},
                     {"median_ns", v.median_ns ? nlohmann::json(*v.median_ns) : nlohmann::json()},
                     {"selected", v.selected},
                     {"status", v.verified ? "PASS" : "FAIL"}};
    if (!v.error.empty()) j["error"] = v.error;
    vs.push_back(j);
  }
  return {{"equation", r.equation}, {"n", r.n}, {"variants", vs}};
}

}  // namespace lagen
