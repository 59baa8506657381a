#include "test_util.hpp"

using namespace lagen;
using namespace lagen::testing;

namespace {

std::string worksheets(const std::vector<Algorithm>& algs) {
  std::string s;
  for (const auto& a : algs) s += to_string(a) + "\n";
  return s;
}

std::vector<std::int64_t> divisors(std::int64_t n) {
  std::vector<std::int64_t> d;
  for (std::int64_t b = 1; b <= n; ++b)
    if (n % b == 0) d.push_back(b);
  return d;
}

}  // namespace

TEST(Worksheet, CholeskyGolden) {
  EXPECT_EQ(worksheets(enumerate_algorithms(equation("cholesky"))), read_file(golden("cholesky_worksheets.txt")));
}

TEST(Worksheet, LyapunovGolden) {
  EXPECT_EQ(worksheets(enumerate_algorithms(equation("lyapunov"))), read_file(golden("lyapunov_worksheets.txt")));
}

TEST(Worksheet, CholeskyLeftLookingUpdates) {
  Algorithm a = enumerate_algorithms(equation("cholesky")).front();
  EXPECT_EQ(a.invariant.computed, (std::vector<int>{1}));
  ASSERT_EQ(a.updates.size(), 3u);
  EXPECT_EQ(a.updates[0].kind, OperationKind::TrsmLeftTransposed);
  EXPECT_EQ(a.updates[1].kind, OperationKind::GemmUpdate);
  EXPECT_EQ(a.updates[2].kind, OperationKind::Chol);
  EXPECT_EQ(statement_text(a.updates[0], a.workspace), "X_01 := TRSM_LT(X_00^T * X_01 = A_01)");
  EXPECT_EQ(statement_text(a.updates[1], a.workspace), "A_11 -= X_01^T * X_01");
}

TEST(Worksheet, CholeskyRightLookingUpdates) {
  Algorithm a = enumerate_algorithms(equation("cholesky")).back();
  EXPECT_EQ(a.invariant.computed, (std::vector<int>{1, 2, 3}));
  ASSERT_EQ(a.updates.size(), 3u);
  EXPECT_EQ(statement_text(a.updates[0], a.workspace), "X_11 := CHOL(X_11^T * X_11 = A_11)");
  EXPECT_EQ(statement_text(a.updates[1], a.workspace), "X_12 := TRSM_LT(X_11^T * X_12 = A_12)");
  EXPECT_EQ(statement_text(a.updates[2], a.workspace), "A_22 -= X_12^T * X_12");
}

TEST(Worksheet, EmptyOrFullInvariantIsPreconditionViolation) {
  Equation eq = equation("cholesky");
  PME pme = derive_pmes(eq).front();
  for (std::vector<int> computed : {std::vector<int>{}, std::vector<int>{1, 2, 3, 4}}) {
    try {
      derive_algorithm(pme, LoopInvariant{0, computed, Traversal::TLtoBR}, eq);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::PreconditionViolation);
    }
  }
}

TEST(Worksheet, UpdatesRespectDependencies) {
  // Every block a statement reads must not be written by a later statement of
  // the same iteration.
  for (const char* name : kEquations)
    for (const auto& a : enumerate_algorithms(equation(name)))
      for (std::size_t i = 0; i < a.updates.size(); ++i)
        for (std::size_t j = i + 1; j < a.updates.size(); ++j) {
          const Statement& later = a.updates[j];
          auto reads = [&](const Statement& s, int r, int c) {
            if (s.kind != OperationKind::GemmUpdate && later.target == a.workspace && s.row == r && s.col == c)
              return true;  // a solver reads its own workspace block
            std::vector<BlockTerm> terms = s.solve_terms;
            terms.push_back(s.update);
            for (const auto& t : terms)
              for (const auto& f : t.factors)
                if (f.operand == later.target && f.row == r && f.col == c &&
                    !(s.kind != OperationKind::GemmUpdate && f.operand == a.unknown && f.row == s.row && f.col == s.col))
                  return true;
            return false;
          };
          EXPECT_FALSE(reads(a.updates[i], later.row, later.col))
              << name << " " << a.name << ": statement " << i + 1 << " reads what statement " << j + 1 << " writes";
        }
}

TEST(Enumerate, Counts) {
  EXPECT_EQ(enumerate_algorithms(equation("cholesky")).size(), 3u);
  EXPECT_GE(enumerate_algorithms(equation("sylvester")).size(), 4u);
  EXPECT_GE(enumerate_algorithms(equation("lyapunov")).size(), 1u);
}

TEST(Enumerate, NoAlgorithmForSquareRoot) {
  Equation eq = load_equation("A: Matrix(n,n), general, input\nX: Matrix(n,n), general, output\nEquation: X * X = A\n");
  EXPECT_THROW(enumerate_algorithms(eq), Error);
}

TEST(Flops, SingleSquareRoot) {
  EXPECT_EQ(flop_count(enumerate_algorithms(equation("cholesky")).front(), 1, 1), 1);
}

TEST(Flops, UnblockedCholeskyClosedForm) {
  // n^3/3 + n^2/2 + n/6 at n = 4.
  for (const auto& a : enumerate_algorithms(equation("cholesky"))) EXPECT_EQ(flop_count(a, 4, 1), 30) << a.name;
}

TEST(Flops, CholeskyBandAt32) {
  const double n = 32;
  for (const auto& a : enumerate_algorithms(equation("cholesky"))) {
    double f = static_cast<double>(flop_count(a, 32, 8));
    EXPECT_GE(f, n * n * n / 3) << a.name;
    EXPECT_LE(f, n * n * n / 3 + 8 * n * n) << a.name;
  }
}

TEST(Flops, SylvesterWithinQuarterOfTwoNCubed) {
  for (const auto& a : enumerate_algorithms(equation("sylvester"))) {
    double f = static_cast<double>(flop_count(a, 16, 4));
    EXPECT_NEAR(f, 8192.0, 0.25 * 8192.0) << a.name;
  }
}

TEST(Flops, NonDivisibleRejected) {
  try {
    flop_count(enumerate_algorithms(equation("cholesky")).front(), 6, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonDivisible);
  }
}

TEST(Flops, StaticCountEqualsInterpreterCount) {
  for (const char* name : kEquations) {
    Equation eq = equation(name);
    for (std::int64_t n : {4, 12}) {
      Instance inst = random_instance(eq, n, 2);
      for (const auto& a : enumerate_algorithms(eq))
        for (auto b : divisors(n)) EXPECT_EQ(interpret(a, inst, b).flops, flop_count(a, n, b)) << name << a.name << b;
    }
  }
}

TEST(Semantics, VariantsAgree) {
  for (const char* name : kEquations) {
    Equation eq = equation(name);
    for (std::int64_t n : {4, 8, 16}) {
      Instance inst = random_instance(eq, n, 9);
      std::optional<DenseMatrix> first;
      for (const auto& a : enumerate_algorithms(eq))
        for (auto b : divisors(n)) {
          DenseMatrix x = interpret(a, inst, b).outputs.at(a.unknown);
          if (!first) first = x;
          EXPECT_LE(relative_distance(x, *first), 1e-10) << name << " " << a.name << " n=" << n << " b=" << b;
        }
    }
  }
}

TEST(Semantics, WorksheetInvariantHoldsEveryIteration) {
  for (const char* name : kEquations) {
    Equation eq = equation(name);
    for (std::int64_t n : {8, 12}) {
      Instance inst = random_instance(eq, n, 4);
      DenseMatrix ref = oracle_solve(inst).at(eq.unknowns.front());
      for (const auto& a : enumerate_algorithms(eq))
        for (std::int64_t b : {1, 2, 4})
          EXPECT_LE(worksheet_error(a, inst, b, ref), 1e-10) << name << " " << a.name << " b=" << b;
    }
  }
}

TEST(Semantics, BlockedMatchesUnblocked) {
  for (const char* name : kEquations) {
    Equation eq = equation(name);
    Instance inst = random_instance(eq, 8, 42);
    for (const auto& a : enumerate_algorithms(eq)) {
      DenseMatrix one = interpret(a, inst, 1).outputs.at(a.unknown);
      DenseMatrix whole = interpret(a, inst, 8).outputs.at(a.unknown);
      EXPECT_LE(relative_distance(one, whole), 1e-12) << name << " " << a.name;
    }
  }
}

TEST(Repartition, BoundariesAdvanceByB) {
  Repartition r = repartition(Traversal::TLtoBR, 12, 4, 1);
  EXPECT_EQ(r.offset[0], 0);
  EXPECT_EQ(r.offset[1], 4);
  EXPECT_EQ(r.offset[2], 8);
  EXPECT_EQ(r.extent[1], 4);
  EXPECT_EQ(r.extent[2], 4);
}
