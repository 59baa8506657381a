#include "test_util.hpp"

using namespace lagen;
using namespace lagen::testing;

namespace {

DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  DenseMatrix m(static_cast<std::int64_t>(rows.size()), static_cast<std::int64_t>(rows.begin()->size()));
  std::int64_t i = 0;
  for (const auto& r : rows) {
    std::int64_t j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

Instance manual(const Equation& eq, std::int64_t n, Bindings b) {
  Instance inst;
  inst.equation = eq;
  inst.n = n;
  inst.bindings = std::move(b);
  return inst;
}

const Algorithm& right_looking_cholesky() {
  static const std::vector<Algorithm> algs = enumerate_algorithms(equation("cholesky"));
  return algs.back();
}

}  // namespace

TEST(Instances, SpdShiftBoundsDiagonal) {
  Instance inst = random_instance(equation("cholesky"), 4, 42);
  const DenseMatrix& a = inst.bindings.at("A");
  for (std::int64_t i = 0; i < 4; ++i) {
    EXPECT_GE(a(i, i), 4.0);
    for (std::int64_t j = 0; j < 4; ++j) EXPECT_EQ(a(i, j), a(j, i));
  }
}

TEST(Instances, SylvesterSpectraSeparated) {
  Instance inst = random_instance(equation("sylvester"), 8, 7);
  const DenseMatrix &l = inst.bindings.at("L"), &u = inst.bindings.at("U");
  for (std::int64_t i = 0; i < 8; ++i)
    for (std::int64_t j = 0; j < 8; ++j) {
      EXPECT_GE(l(i, i) + u(j, j), 2.0);
      if (j > i) {
        EXPECT_EQ(l(i, j), 0.0);
      }
      if (j < i) {
        EXPECT_EQ(u(i, j), 0.0);
      }
    }
}

TEST(Instances, Deterministic) {
  for (const char* name : kEquations) {
    Instance a = random_instance(equation(name), 8, 99), b = random_instance(equation(name), 8, 99);
    EXPECT_EQ(a.bindings, b.bindings) << name;
    Instance c = random_instance(equation(name), 8, 100);
    EXPECT_NE(a.bindings, c.bindings) << name;
  }
}

TEST(Oracle, CholeskyOfIdentity) {
  Equation eq = equation("cholesky");
  Bindings out = oracle_solve(manual(eq, 4, {{"A", DenseMatrix::identity(4)}}));
  EXPECT_EQ(out.at("X"), DenseMatrix::identity(4));
}

TEST(Oracle, ScalarSylvester) {
  Equation eq = equation("sylvester");
  Bindings out = oracle_solve(
      manual(eq, 1, {{"L", from_rows({{2}})}, {"U", from_rows({{3}})}, {"C", from_rows({{10}})}}));
  EXPECT_DOUBLE_EQ(out.at("X")(0, 0), 2.0);
}

TEST(Oracle, TwoByTwoSylvesterByHand) {
  // Forward substitution of L X + X U = 1 worked by hand:
  // x00 = 1/2, x01 = (1 - x00)/4, x10 = (1 - x00)/3, x11 = (1 - x01 - x10)/5.
  Equation eq = equation("sylvester");
  Instance inst = manual(eq, 2,
                         {{"L", from_rows({{1, 0}, {1, 2}})},
                          {"U", from_rows({{1, 1}, {0, 3}})},
                          {"C", from_rows({{1, 1}, {1, 1}})}});
  DenseMatrix x = oracle_solve(inst).at("X");
  const double x00 = 0.5, x01 = 0.125, x10 = 1.0 / 6.0, x11 = (1.0 - x01 - x10) / 5.0;
  EXPECT_NEAR(x(0, 0), x00, 1e-15);
  EXPECT_NEAR(x(0, 1), x01, 1e-15);
  EXPECT_NEAR(x(1, 0), x10, 1e-15);
  EXPECT_NEAR(x(1, 1), x11, 1e-15);
  EXPECT_LE(residual(eq, inst, {{"X", x}}), 1e-14);
}

TEST(Oracle, SelfResidualSmall) {
  for (const char* name : kEquations)
    for (std::int64_t n : {1, 4, 8, 16, 32})
      for (std::uint64_t seed : {1, 2}) {
        Instance inst = random_instance(equation(name), n, seed);
        EXPECT_LE(residual(inst.equation, inst, oracle_solve(inst)), 1e-12) << name << " n=" << n;
      }
}

TEST(Oracle, LyapunovExactlySymmetric) {
  Instance inst = random_instance(equation("lyapunov"), 12, 5);
  DenseMatrix x = oracle_solve(inst).at("X");
  EXPECT_EQ(x, transpose(x));
}

TEST(Oracle, NonSpdInputRejected) {
  Equation eq = equation("cholesky");
  DenseMatrix a = DenseMatrix::identity(3);
  a(1, 1) = -1.0;
  try {
    oracle_solve(manual(eq, 3, {{"A", a}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotSPD);
  }
}

TEST(Oracle, SingularSylvesterRejected) {
  Equation eq = equation("sylvester");
  Instance inst = manual(eq, 1, {{"L", from_rows({{1}})}, {"U", from_rows({{-1}})}, {"C", from_rows({{1}})}});
  try {
    oracle_solve(inst);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularSystem);
  }
}

TEST(Residual, PerturbedEntryIsDetected) {
  for (const char* name : kEquations) {
    Instance inst = random_instance(equation(name), 6, 8);
    Bindings out = oracle_solve(inst);
    out.begin()->second(2, 3) += 1.0;
    EXPECT_GT(residual(inst.equation, inst, out), 1e-2) << name;
  }
}

TEST(Residual, ZeroOutputForIdentityCholeskyIsOne) {
  Equation eq = equation("cholesky");
  Instance inst = manual(eq, 5, {{"A", DenseMatrix::identity(5)}});
  EXPECT_DOUBLE_EQ(residual(eq, inst, {{"X", DenseMatrix(5, 5)}}), 1.0);
}

TEST(Interpret, RightLookingCholeskyOnIdentity) {
  Equation eq = equation("cholesky");
  Instance inst = manual(eq, 8, {{"A", DenseMatrix::identity(8)}});
  RunResult r = interpret(right_looking_cholesky(), inst, 4);
  EXPECT_EQ(r.outputs.at("X"), DenseMatrix::identity(8));
  EXPECT_LE(residual(eq, inst, r.outputs), 1e-15);
}

TEST(Interpret, BlockSizesAgreeOnSeed42) {
  Instance inst = random_instance(equation("cholesky"), 8, 42);
  DenseMatrix one = interpret(right_looking_cholesky(), inst, 1).outputs.at("X");
  DenseMatrix eight = interpret(right_looking_cholesky(), inst, 8).outputs.at("X");
  EXPECT_LE(relative_distance(one, eight), 1e-12);
}

TEST(Interpret, UnblockedCholeskyFlopsAtFour) {
  Instance inst = random_instance(equation("cholesky"), 4, 1);
  EXPECT_EQ(interpret(right_looking_cholesky(), inst, 1).flops, 30);
}

TEST(Interpret, DynamicCholeskyFlopsInBand) {
  Instance inst = random_instance(equation("cholesky"), 32, 1);
  for (const auto& a : enumerate_algorithms(equation("cholesky"))) {
    double f = static_cast<double>(interpret(a, inst, 8).flops);
    EXPECT_GE(f, 32.0 * 32 * 32 / 3);
    EXPECT_LE(f, 32.0 * 32 * 32 / 3 + 8 * 32 * 32);
  }
}

TEST(Interpret, AgreesWithIndependentOracles) {
  for (const char* name : kEquations) {
    Equation eq = equation(name);
    for (std::int64_t n : {4, 8, 16}) {
      Instance inst = random_instance(eq, n, 21);
      DenseMatrix ref = oracle_solve(inst).at("X");
      for (const auto& a : enumerate_algorithms(eq))
        for (std::int64_t b : {2, 4}) {
          DenseMatrix x = interpret(a, inst, b).outputs.at("X");
          EXPECT_LE(relative_distance(x, ref), 1e-10) << name << " " << a.name;
        }
    }
  }
}

TEST(Interpret, LyapunovVariantsSymmetric) {
  Instance inst = random_instance(equation("lyapunov"), 16, 2);
  for (const auto& a : enumerate_algorithms(equation("lyapunov"))) {
    DenseMatrix x = interpret(a, inst, 4).outputs.at("X");
    EXPECT_LE(relative_distance(x, transpose(x)), 1e-12) << a.name;
  }
}

TEST(Interpret, NonFiniteValueIsNumericalFailure) {
  Equation eq = equation("sylvester");
  Instance inst = random_instance(eq, 4, 1);
  inst.bindings.at("L")(0, 0) = 0.0;
  inst.bindings.at("U")(0, 0) = 0.0;
  try {
    interpret(enumerate_algorithms(eq).front(), inst, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NumericalFailure);
  }
}

TEST(Store, ZeroAndAliasAccessesAreCounted) {
  Store st;
  st.bind("U", DenseMatrix(3, 3), Structure::Upper);
  st.bind("S", DenseMatrix(3, 3), Structure::Symmetric);
  st.read("U", 2, 0);
  st.write("S", 2, 1, 1.0);
  st.read("S", 2, 1, false);
  EXPECT_EQ(st.stats().zero_reads, 1);
  EXPECT_EQ(st.stats().alias_writes, 1);
  EXPECT_EQ(st.stats().alias_reads, 1);
  EXPECT_THROW(st.read("U", 3, 0), Error);
}
