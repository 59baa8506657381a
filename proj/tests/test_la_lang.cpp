#include "test_util.hpp"

using namespace lagen;
using namespace lagen::testing;

namespace {

const char* kCholesky =
    "A: Matrix(n,n), spd, input\n"
    "X: Matrix(n,n), upper_triangular, output\n"
    "Equation: X^T * X = A\n";

Equation parse_with(const std::string& decls, const std::string& eqn) {
  return load_equation(decls + "Equation: " + eqn + "\n");
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Usage;
}

}  // namespace

TEST(Parse, CholeskyHasUnknownX) {
  Equation eq = load_equation(kCholesky);
  EXPECT_EQ(eq.unknowns, std::vector<std::string>{"X"});
  EXPECT_EQ(eq.operand("A").structure, Structure::SPD);
  EXPECT_EQ(to_string(eq.lhs), "X^T * X");
}

TEST(Parse, SylvesterHasUnknownX) {
  Equation eq = equation("sylvester");
  EXPECT_EQ(eq.unknowns, std::vector<std::string>{"X"});
  EXPECT_EQ(eq.operands.size(), 4u);
  EXPECT_EQ(to_string(eq.lhs), "L * X + X * U");
}

TEST(Parse, DanglingOperatorReportsEqualsToken) {
  try {
    parse_with("A: Matrix(n,n), spd, input\nX: Matrix(n,n), upper_triangular, output\n", "X^T * = A");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Syntax);
    EXPECT_NE(std::string(e.what()).find("\"=\""), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Parse, UndeclaredAndDuplicateOperands) {
  EXPECT_EQ(kind_of([] { parse_with("A: Matrix(n,n), spd, input\n", "X^T * X = A"); }), ErrorKind::UndeclaredOperand);
  EXPECT_EQ(kind_of([] {
              parse_with("A: Matrix(n,n), spd, input\nA: Matrix(n,n), general, input\nX: Matrix(n,n), general, output\n",
                         "X = A");
            }),
            ErrorKind::DuplicateDeclaration);
}

TEST(Parse, RoundTripThroughPrinter) {
  for (const char* name : kEquations) {
    Equation eq = equation(name);
    Equation again = load_equation(to_la(eq));
    EXPECT_TRUE(structurally_equal(eq, again)) << name;
  }
  Equation nested = parse_with("A: Matrix(n,n), general, input\nB: Matrix(n,n), general, input\n"
                               "X: Matrix(n,n), general, output\n",
                               "-A^T * X - A * (X - B^T) + (B) = A");
  EXPECT_TRUE(structurally_equal(nested, load_equation(to_la(nested))));
}

TEST(Properties, TransposeOfLowerIsUpper) {
  Equation eq = equation("lyapunov");
  // lhs = L*X + X*L^T; the second product's right factor is L^T.
  const Expr& lt = eq.lhs->rhs->rhs;
  ASSERT_EQ(lt->kind, ExprKind::Transpose);
  EXPECT_EQ(lt->structure, Structure::Upper);
  EXPECT_EQ(lt->lhs->structure, Structure::Lower);
}

TEST(Properties, LyapunovLhsIsDerivablySymmetric) {
  Equation eq = equation("lyapunov");
  EXPECT_TRUE(is_symmetric(eq.lhs->structure));
}

TEST(Properties, ShapeMismatchOnDistinctSymbols) {
  EXPECT_EQ(kind_of([] {
              parse_with("A: Matrix(n,n), general, input\nB: Matrix(m,m), general, input\nX: Matrix(n,n), general, output\n",
                         "A * B = X");
            }),
            ErrorKind::ShapeMismatch);
}

TEST(Properties, SymmetricRhsContradicted) {
  EXPECT_EQ(kind_of([] {
              parse_with("L: Matrix(n,n), lower_triangular, input\nS: Matrix(n,n), symmetric, input\n"
                         "X: Matrix(n,n), general, output\n",
                         "L * X = S");
            }),
            ErrorKind::StructureContradiction);
}

TEST(Properties, StructureSoundnessOnRandomMatrices) {
  for (const char* name : kEquations) {
    Equation eq = equation(name);
    Instance inst = random_instance(eq, 6, 11);
    Bindings env = inst.bindings;
    Bindings outs = oracle_solve(inst);
    env.insert(outs.begin(), outs.end());
    std::function<void(const Expr&)> check = [&](const Expr& e) {
      if (!e) return;
      check(e->lhs);
      check(e->rhs);
      DenseMatrix v = evaluate(e, env);
      for (std::int64_t i = 0; i < v.rows(); ++i)
        for (std::int64_t j = 0; j < v.cols(); ++j) {
          if (structural_zero(e->structure, i, j)) {
            EXPECT_EQ(v(i, j), 0.0) << name << " " << to_string(e);
          }
          if (is_symmetric(e->structure)) {
            EXPECT_NEAR(v(i, j), v(j, i), 1e-14 * std::max(1.0, frobenius(v))) << name << " " << to_string(e);
          }
        }
    };
    check(eq.lhs);
    check(eq.rhs);
  }
}

TEST(Partition, LowerTriangularTable) {
  Operand l{"L", Dim::sym("n"), Dim::sym("n"), Structure::Lower, Role::Input};
  auto p = partition_operand(l, Grid::G2x2);
  EXPECT_EQ(p.at("TL").structure, Structure::Lower);
  EXPECT_EQ(p.at("TR").structure, Structure::Zero);
  EXPECT_EQ(p.at("BL").structure, Structure::General);
  EXPECT_EQ(p.at("BR").structure, Structure::Lower);
}

TEST(Partition, UpperTriangularTable) {
  Operand u{"U", Dim::sym("n"), Dim::sym("n"), Structure::Upper, Role::Input};
  auto p = partition_operand(u, Grid::G2x2);
  EXPECT_EQ(p.at("TL").structure, Structure::Upper);
  EXPECT_EQ(p.at("TR").structure, Structure::General);
  EXPECT_EQ(p.at("BL").structure, Structure::Zero);
  EXPECT_EQ(p.at("BR").structure, Structure::Upper);
}

TEST(Partition, SpdHasAliasedBottomLeft) {
  Operand s{"S", Dim::sym("n"), Dim::sym("n"), Structure::SPD, Role::Input};
  auto p = partition_operand(s, Grid::G2x2);
  EXPECT_EQ(p.at("TL").structure, Structure::SPD);
  EXPECT_EQ(p.at("BR").structure, Structure::SPD);
  EXPECT_EQ(p.at("TR").structure, Structure::General);
  ASSERT_TRUE(p.at("BL").alias_of.has_value());
  EXPECT_EQ(*p.at("BL").alias_of, "TR");
  EXPECT_FALSE(p.at("TR").alias_of.has_value());
}

TEST(Partition, GeneralOneByTwo) {
  Operand c{"C", Dim::sym("n"), Dim::sym("n"), Structure::General, Role::Input};
  auto p = partition_operand(c, Grid::G1x2);
  ASSERT_EQ(p.quadrants.size(), 2u);
  EXPECT_EQ(p.at("L").structure, Structure::General);
  EXPECT_EQ(p.at("R").structure, Structure::General);
  EXPECT_EQ(p.at("L").rows, Dim::sym("n"));
  EXPECT_NE(p.at("L").cols, p.at("R").cols);
}

TEST(Partition, StructuredOperandRejectsRectangularGrid) {
  Operand l{"L", Dim::sym("n"), Dim::sym("n"), Structure::Lower, Role::Input};
  EXPECT_EQ(kind_of([&] { partition_operand(l, Grid::G1x2); }), ErrorKind::IncompatibleGrid);
}

TEST(Partition, ReassemblyReproducesRandomMatrix) {
  // Split concrete structured matrices at every cut point; zero quadrants must
  // be exactly zero, alias quadrants the transpose of their sibling, and the
  // four blocks must cover the matrix.
  const std::int64_t n = 7;
  for (Structure s : {Structure::Lower, Structure::Upper, Structure::Symmetric, Structure::SPD, Structure::General}) {
    Operand op{"M", Dim::sym("n"), Dim::sym("n"), s, Role::Input};
    auto p = partition_operand(op, Grid::G2x2);
    Rng rng(5);
    DenseMatrix m = random_structured(s, n, n, rng);
    for (std::int64_t cut = 1; cut < n; ++cut) {
      DenseMatrix re(n, n);
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
          const auto& q = p.at(r, c);
          std::int64_t r0 = r ? cut : 0, r1 = r ? n : cut, c0 = c ? cut : 0, c1 = c ? n : cut;
          for (std::int64_t i = r0; i < r1; ++i)
            for (std::int64_t j = c0; j < c1; ++j) {
              if (q.structure == Structure::Zero) {
                EXPECT_EQ(m(i, j), 0.0);
              }
              if (q.alias_of) {
                EXPECT_EQ(m(i, j), m(j, i));
              }
              re(i, j) = m(i, j);
            }
        }
      EXPECT_EQ(re, m);
    }
  }
}
