#include <regex>

#include "test_util.hpp"

using namespace lagen;
using namespace lagen::testing;

namespace {

CommandResult lagen_cmd(const std::string& args, bool merge_stderr = false) {
  return run(std::string(LAGEN_BIN) + " " + args + (merge_stderr ? " 2>&1" : " 2>/dev/null"));
}

std::string input(const std::string& name) { return "--input " + equation_path(name); }

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Synth, WorksheetsMatchGolden) {
  auto r = lagen_cmd("synth " + input("cholesky"));
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, read_file(golden("cholesky_worksheets.txt")));
  r = lagen_cmd("synth " + input("lyapunov"));
  EXPECT_EQ(r.out, read_file(golden("lyapunov_worksheets.txt")));
}

TEST(Synth, PmeOnlyMatchesGolden) {
  EXPECT_EQ(lagen_cmd("synth --pme-only " + input("cholesky")).out, read_file(golden("cholesky_pme.txt")));
  EXPECT_EQ(lagen_cmd("synth --pme-only " + input("sylvester")).out, read_file(golden("sylvester_pme.txt")));
}

TEST(Synth, InvariantListing) {
  auto r = lagen_cmd("synth --list-invariants " + input("cholesky"));
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, "INV1: {T1} dir=TL_to_BR\nINV2: {T1,T2} dir=TL_to_BR\nINV3: {T1,T2,T3} dir=TL_to_BR\n");
  auto s = lines_of(lagen_cmd("synth --list-invariants " + input("sylvester")).out);
  EXPECT_GE(s.size(), 4u);
  std::regex inv(R"(^INV(\d+): \{T\d+(,T\d+)*\} dir=(TL_to_BR|BR_to_TL)$)");
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::smatch m;
    ASSERT_TRUE(std::regex_match(s[i], m, inv)) << s[i];
    EXPECT_EQ(std::stoul(m[1]), i + 1);
  }
}

TEST(Synth, MalformedInputExitsTwo) {
  auto dir = scratch_dir("cli_bad");
  std::ofstream(dir / "bad.la") << "A: Matrix(n,n), spd, input\nX: Matrix(n,n), upper_triangular, output\n"
                                   "Equation: X^T * = A\n";
  auto r = lagen_cmd("synth --input " + (dir / "bad.la").string(), true);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("\"=\""), std::string::npos) << r.out;
  EXPECT_EQ(lagen_cmd("synth --input " + (dir / "missing.la").string()).status, 2);
}

TEST(Verify, LinesAndExitCode) {
  auto r = lagen_cmd("verify " + input("sylvester") + " --n 4,8");
  EXPECT_EQ(r.status, 0);
  std::regex line(R"(^VERIFY (alg\d+_b\d+_t\d+_(scalar|nu\d)) n=(\d+) residual=(\S+) flops=(\d+) (PASS|FAIL)$)");
  auto ls = lines_of(r.out);
  ASSERT_FALSE(ls.empty());
  std::set<std::string> sizes;
  for (const auto& l : ls) {
    std::smatch m;
    ASSERT_TRUE(std::regex_match(l, m, line)) << l;
    EXPECT_EQ(m[6], "PASS");
    EXPECT_LE(std::stod(m[4]), 1e-10);
    sizes.insert(m[3]);
  }
  EXPECT_EQ(sizes, (std::set<std::string>{"4", "8"}));
}

TEST(Verify, ImpossibleToleranceExitsOne) {
  auto r = lagen_cmd("verify " + input("cholesky") + " --n 8 --tol 1e-30");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find(" FAIL"), std::string::npos);
}

TEST(Verify, NuModeAndBadOptions) {
  EXPECT_EQ(lagen_cmd("verify " + input("lyapunov") + " --n 8 --mode nu --nu 2").status, 0);
  EXPECT_EQ(lagen_cmd("verify " + input("cholesky") + " --n 8 --mode nu --nu 3").status, 2);
  EXPECT_EQ(lagen_cmd("verify " + input("cholesky") + " --n x").status, 2);
  EXPECT_EQ(lagen_cmd("").status, 2);
}

TEST(Gen, WritesOneFilePerVariant) {
  auto dir = scratch_dir("cli_gen");
  auto r = lagen_cmd("gen " + input("cholesky") + " --n 8 --blocks 4 --mode nu --out " + dir.string());
  EXPECT_EQ(r.status, 0);
  for (const char* f : {"cholesky_alg1_b4_t4_nu4_8.c", "cholesky_alg2_b4_t4_nu4_8.c", "cholesky_alg3_b4_t4_nu4_8.c",
                        "nu_kernels_4.h"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
}

TEST(Tune, ReportIsJson) {
  auto dir = scratch_dir("cli_tune");
  auto report = dir / "report.json";
  auto r = lagen_cmd("tune " + input("cholesky") + " --n 16 --blocks 4,8 --report " + report.string());
  EXPECT_EQ(r.status, 0);
  auto j = nlohmann::json::parse(read_file(report));
  ASSERT_TRUE(j.is_object());
  EXPECT_EQ(j.at("equation"), "cholesky");
  EXPECT_EQ(j.at("n"), 16);
  EXPECT_EQ(j.at("variants").size(), 6u);
  EXPECT_EQ(lines_of(r.out).size(), 6u);

  r = lagen_cmd("tune " + input("cholesky") + " --n 8,16 --blocks 4 --report " + report.string());
  EXPECT_EQ(r.status, 0);
  j = nlohmann::json::parse(read_file(report));
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j.size(), 2u);
}

TEST(Tune, EmptySearchSpaceExitsTwo) {
  auto r = lagen_cmd("tune " + input("cholesky") + " --n 7", true);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("empty search space"), std::string::npos) << r.out;
}

TEST(Tune, BrokenToolchainExitsThree) {
  EXPECT_EQ(lagen_cmd("tune " + input("cholesky") + " --n 8 --blocks 4 --cc /nonexistent/cc").status, 3);
}

TEST(Tune, RealToolchainSelectsOne) {
  if (!have_cc()) GTEST_SKIP() << "no C compiler";
  auto r = lagen_cmd("tune " + input("cholesky") + " --n 8 --blocks 4 --reps 3 --cc '" + std::string(LAGEN_CC) + " -O0'");
  EXPECT_EQ(r.status, 0);
  int selected = 0;
  for (const auto& l : lines_of(r.out)) {
    EXPECT_EQ(l.find("median_ns=-"), std::string::npos) << l;
    selected += l.find("SELECTED") != std::string::npos;
  }
  EXPECT_EQ(selected, 1) << r.out;
}
