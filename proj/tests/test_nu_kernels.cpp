#include <regex>

#include "test_util.hpp"

using namespace lagen;
using namespace lagen::testing;

namespace {

std::vector<double> tile_of(const DenseMatrix& m) { return {m.values().begin(), m.values().end()}; }

DenseMatrix matrix_of(int v, const std::vector<double>& t) {
  DenseMatrix m(v, v);
  std::copy(t.begin(), t.end(), m.data());
  return m;
}

DenseMatrix random_tile(Structure s, int v, std::uint64_t seed) {
  Rng rng(seed);
  return random_structured(s, v, v, rng);
}

DenseMatrix sum(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out = a;
  for (std::int64_t i = 0; i < a.rows() * a.cols(); ++i) out.data()[i] += b.values()[static_cast<std::size_t>(i)];
  return out;
}

DenseMatrix diag_shift(DenseMatrix m, double by) {
  for (std::int64_t i = 0; i < m.rows(); ++i) m(i, i) += by;
  return m;
}

}  // namespace

TEST(Header, OneFunctionPerKernelCategory) {
  for (int v : {2, 4, 8}) {
    std::string h = emit_nu_kernel_header(v);
    std::regex fn("static inline void (nu_[a-z]+)_" + std::to_string(v) + "\\(");
    std::set<std::string> names;
    for (auto it = std::sregex_iterator(h.begin(), h.end(), fn); it != std::sregex_iterator(); ++it)
      names.insert((*it)[1]);
    // load and store are the two directions of one transfer kernel.
    EXPECT_EQ(names, (std::set<std::string>{"nu_load", "nu_store", "nu_mac", "nu_trans", "nu_addsub", "nu_scale",
                                            "nu_trsm", "nu_chol", "nu_sylv"}));
    EXPECT_EQ(all_nu_kernels().size(), names.size());
  }
}

TEST(Header, UnsupportedNu) {
  for (int v : {0, 1, 3, 16}) {
    EXPECT_FALSE(supported_nu(v));
    try {
      emit_nu_kernel_header(v);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::UnsupportedNu);
    }
  }
}

TEST(Reference, MacWithIdentityAddsA) {
  const int v = 4;
  DenseMatrix a = random_tile(Structure::General, v, 1), c = random_tile(Structure::General, v, 2);
  auto ct = tile_of(c), at = tile_of(a), id = tile_of(DenseMatrix::identity(v));
  EXPECT_EQ(nu::mac(v, ct.data(), at.data(), id.data(), false), 2 * v * v * v);
  EXPECT_LE(relative_distance(matrix_of(v, ct), sum(c, a)), 1e-15);
}

TEST(Reference, KernelsMatchDenseOperations) {
  for (int v : {2, 4, 8}) {
    DenseMatrix a = random_tile(Structure::General, v, 3), b = random_tile(Structure::General, v, 4),
                c = random_tile(Structure::General, v, 5);
    auto ct = tile_of(c);
    nu::mac(v, ct.data(), tile_of(a).data(), tile_of(b).data(), true);
    EXPECT_LE(relative_distance(matrix_of(v, ct), c - matmul(a, b)), 1e-14);

    std::vector<double> tt(static_cast<std::size_t>(v * v));
    nu::trans(v, tt.data(), tile_of(a).data());
    EXPECT_EQ(matrix_of(v, tt), transpose(a));

    ct = tile_of(c);
    nu::addsub(v, ct.data(), tile_of(a).data(), true);
    EXPECT_EQ(matrix_of(v, ct), c - a);

    ct = tile_of(c);
    nu::scale(v, ct.data(), 0.0);
    EXPECT_EQ(matrix_of(v, ct), DenseMatrix(v, v));
  }
}

TEST(Reference, TriangularSolvesInvertProducts) {
  for (int v : {2, 4, 8}) {
    DenseMatrix y = random_tile(Structure::General, v, 6);
    DenseMatrix lo = diag_shift(random_tile(Structure::Lower, v, 7), v);
    DenseMatrix up = diag_shift(random_tile(Structure::Upper, v, 8), v);
    struct Case {
      int flags;
      DenseMatrix d, rhs;
    };
    for (const Case& k : {Case{0, lo, matmul(lo, y)}, Case{kTrsmUpper, up, matmul(up, y)},
                          Case{kTrsmRight, lo, matmul(y, lo)}, Case{kTrsmRight | kTrsmUpper, up, matmul(y, up)}}) {
      auto ct = tile_of(k.rhs);
      nu::trsm(v, ct.data(), tile_of(k.d).data(), k.flags);
      EXPECT_LE(relative_distance(matrix_of(v, ct), y), 1e-12) << "v=" << v << " flags=" << k.flags;
    }
  }
}

TEST(Reference, CholeskyAndSylvesterMatchOracles) {
  for (int v : {2, 4, 8}) {
    Rng rng(9);
    DenseMatrix spd = random_structured(Structure::SPD, v, v, rng);
    auto ct = tile_of(spd);
    nu::chol(v, ct.data());
    DenseMatrix got = matrix_of(v, ct), ref = textbook_cholesky(spd);
    for (int i = 0; i < v; ++i)
      for (int j = i; j < v; ++j) EXPECT_NEAR(got(i, j), ref(i, j), 1e-13);

    DenseMatrix l = diag_shift(random_tile(Structure::Lower, v, 10), 1.0);
    DenseMatrix u = diag_shift(random_tile(Structure::Upper, v, 11), 1.0);
    DenseMatrix y = random_tile(Structure::General, v, 12);
    auto st = tile_of(sum(matmul(l, y), matmul(y, u)));
    nu::sylv(v, st.data(), tile_of(l).data(), tile_of(u).data());
    EXPECT_LE(relative_distance(matrix_of(v, st), y), 1e-12);
  }
}

TEST(Reference, CholeskyRejectsIndefiniteTile) {
  std::vector<double> t{-1, 0, 0, 1};
  try {
    nu::chol(2, t.data());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotSPD);
  }
}

TEST(Compiled, HeaderAgreesWithReference) {
  if (!have_cc()) GTEST_SKIP() << "no C compiler";
  const int v = 4;
  auto dir = scratch_dir("nu_header");
  std::ofstream(dir / "nu_kernels_4.h") << emit_nu_kernel_header(v);

  DenseMatrix a = random_tile(Structure::General, v, 13), c = random_tile(Structure::General, v, 14);
  DenseMatrix lo = diag_shift(random_tile(Structure::Lower, v, 15), v);
  DenseMatrix up = diag_shift(random_tile(Structure::Upper, v, 16), v);
  Rng rng(17);
  DenseMatrix spd = random_structured(Structure::SPD, v, v, rng);
  auto literal = [](const DenseMatrix& m) {
    std::ostringstream o;
    o.precision(17);
    o << "{";
    for (double x : m.values()) o << x << ",";
    o << "}";
    return o.str();
  };
  std::ostringstream src;
  src << "#include <stdio.h>\n#include \"nu_kernels_4.h\"\n"
      << "static void put(const double *t) { for (int i = 0; i < 16; ++i) printf(\"%.17g \", t[i]); printf(\"\\n\"); }\n"
      << "static void set(double *t, const double *s) { for (int i = 0; i < 16; ++i) t[i] = s[i]; }\n"
      << "int main(void) {\n"
      << "  double a[16] = " << literal(a) << ", c[16] = " << literal(c) << ", id[16] = " << literal(DenseMatrix::identity(v))
      << ";\n  double lo[16] = " << literal(lo) << ", up[16] = " << literal(up) << ", spd[16] = " << literal(spd) << ";\n"
      << "  double t[16];\n"
      << "  set(t, c); nu_mac_4(t, a, id, 0); put(t);\n"
      << "  set(t, c); nu_mac_4(t, a, c, 1); put(t);\n"
      << "  nu_trans_4(t, a); put(t);\n"
      << "  set(t, c); nu_trsm_4(t, up, 3); put(t);\n"
      << "  set(t, c); nu_sylv_4(t, lo, up); put(t);\n"
      << "  set(t, spd); nu_chol_4(t); put(t);\n"
      << "  return 0;\n}\n";
  std::ofstream(dir / "k.c") << src.str();
  auto build = run(std::string(LAGEN_CC) + " -std=c99 -Wall -Werror -I" + dir.string() + " -o " + (dir / "k").string() +
                   " " + (dir / "k.c").string() + " -lm 2>&1");
  ASSERT_EQ(build.status, 0) << build.out;
  auto out = run((dir / "k").string());
  ASSERT_EQ(out.status, 0);

  std::vector<std::vector<double>> expected;
  auto t = tile_of(c);
  nu::mac(v, t.data(), tile_of(a).data(), tile_of(DenseMatrix::identity(v)).data(), false);
  expected.push_back(t);
  t = tile_of(c);
  nu::mac(v, t.data(), tile_of(a).data(), tile_of(c).data(), true);
  expected.push_back(t);
  nu::trans(v, t.data(), tile_of(a).data());
  expected.push_back(t);
  t = tile_of(c);
  nu::trsm(v, t.data(), tile_of(up).data(), kTrsmRight | kTrsmUpper);
  expected.push_back(t);
  t = tile_of(c);
  nu::sylv(v, t.data(), tile_of(lo).data(), tile_of(up).data());
  expected.push_back(t);
  t = tile_of(spd);
  nu::chol(v, t.data());
  expected.push_back(t);

  std::istringstream lines(out.out);
  std::string line;
  for (std::size_t k = 0; k < expected.size(); ++k) {
    ASSERT_TRUE(std::getline(lines, line)) << "missing output line " << k;
    std::istringstream vals(line);
    std::vector<double> got((std::istream_iterator<double>(vals)), std::istream_iterator<double>());
    ASSERT_EQ(got.size(), 16u);
    EXPECT_LE(relative_distance(matrix_of(v, got), matrix_of(v, expected[k])), 1e-15) << "line " << k;
  }
  // The identity product adds A exactly.
  EXPECT_EQ(matrix_of(v, expected[0]), sum(c, a));
}
