#include "test_util.hpp"

using namespace lagen;
using namespace lagen::testing;

namespace {

const std::vector<Algorithm>& algorithms(const std::string& name) {
  static std::map<std::string, std::vector<Algorithm>> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, enumerate_algorithms(equation(name))).first;
  return it->second;
}

/// Loops whose iteration range is empty at every point of the enclosing nest.
int never_entered_loops(const std::vector<Node>& nodes) {
  std::map<const Node*, bool> entered;
  Env env;
  std::function<void(const std::vector<Node>&)> walk = [&](const std::vector<Node>& ns) {
    for (const auto& n : ns) {
      if (n.kind == NodeKind::Region) walk(n.body);
      if (n.kind != NodeKind::Loop) continue;
      entered.try_emplace(&n, false);
      std::int64_t hi = loop_hi(n, env);
      for (std::int64_t v = loop_lo(n, env); v < hi; v += n.step) {
        entered[&n] = true;
        env.set(n.var, v);
        walk(n.body);
      }
      env.erase(n.var);
    }
  };
  walk(nodes);
  int count = 0;
  for (const auto& [node, e] : entered) count += !e;
  return count;
}

std::int64_t op_nodes(const SigmaProgram& p) {
  return count_nodes(p.body, [](const Node& n) { return n.kind == NodeKind::Op; });
}

}  // namespace

TEST(Lower, RightLookingCholeskyDumpGolden) {
  SigmaProgram p = prune_structure(lower_algorithm(algorithms("cholesky").back(), 8, 4));
  EXPECT_EQ(dump(p), read_file(golden("cholesky_alg3_n8_b4.dump")));
}

TEST(Lower, NonDivisibleBlockRejected) {
  try {
    lower_algorithm(algorithms("cholesky").front(), 6, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonDivisible);
  }
}

TEST(Lower, FullBlockRunsOneIteration) {
  SigmaProgram p = lower_algorithm(algorithms("cholesky").back(), 8, 8);
  ASSERT_EQ(p.body.size(), 1u);
  const Node& k = p.body.front();
  ASSERT_EQ(k.kind, NodeKind::Loop);
  Env env;
  EXPECT_EQ((loop_hi(k, env) - loop_lo(k, env) + k.step - 1) / k.step, 1);
}

TEST(Lower, DenseProgramReadsStructuralZeros) {
  Instance inst = random_instance(equation("sylvester"), 8, 1);
  SigmaProgram p = lower_algorithm(algorithms("sylvester").front(), 8, 4);
  EXPECT_GT(interpret(p, inst).stats.zero_reads, 0);
}

TEST(Prune, NoZeroReadsOrAliasWrites) {
  for (const char* name : kEquations)
    for (const auto& a : algorithms(name))
      for (std::int64_t b : {2, 4}) {
        Instance inst = random_instance(equation(name), 8, 3);
        SigmaProgram p = prune_structure(lower_algorithm(a, 8, b));
        for (const SigmaProgram& q : {p, tile(p, 2), map_nu_kernels(p, 2)}) {
          AccessStats s = interpret(q, inst).stats;
          EXPECT_EQ(s.zero_reads, 0) << name << " " << a.name << " b=" << b;
          EXPECT_EQ(s.alias_writes, 0) << name << " " << a.name << " b=" << b;
        }
      }
}

TEST(Prune, NoStaticallyEmptyLoops) {
  for (const char* name : kEquations)
    for (const auto& a : algorithms(name))
      for (std::int64_t b : {1, 4, 8}) {
        SigmaProgram p = prune_structure(lower_algorithm(a, 8, b));
        EXPECT_EQ(never_entered_loops(p.body), 0) << name << " " << a.name << " b=" << b;
        if (b == 8) continue;
        EXPECT_EQ(never_entered_loops(tile(p, b / 2 ? b / 2 : 1).body), 0) << name << " " << a.name;
      }
}

TEST(Transform, OutputsPreservedOnFiveSeeds) {
  for (const char* name : kEquations)
    for (const auto& a : algorithms(name)) {
      SigmaProgram dense = lower_algorithm(a, 8, 4);
      SigmaProgram pruned = prune_structure(dense);
      std::vector<std::pair<std::string, SigmaProgram>> variants{
          {"prune", pruned}, {"tile", tile(pruned, 2)}, {"nu2", map_nu_kernels(pruned, 2)},
          {"nu4", map_nu_kernels(pruned, 4)}, {"tile+nu2", map_nu_kernels(tile(pruned, 2), 2)}};
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Instance inst = random_instance(equation(name), 8, seed);
        DenseMatrix ref = interpret(dense, inst).outputs.at(a.unknown);
        for (const auto& [label, v] : variants)
          EXPECT_LE(relative_distance(interpret(v, inst).outputs.at(a.unknown), ref), 1e-13)
              << name << " " << a.name << " " << label << " seed=" << seed;
      }
    }
}

TEST(Transform, SigmaMatchesWorksheetInterpreter) {
  for (const char* name : kEquations)
    for (const auto& a : algorithms(name)) {
      Instance inst = random_instance(equation(name), 12, 6);
      DenseMatrix ref = interpret(a, inst, 4).outputs.at(a.unknown);
      DenseMatrix got = interpret(prune_structure(lower_algorithm(a, 12, 4)), inst).outputs.at(a.unknown);
      EXPECT_LE(relative_distance(got, ref), 1e-13) << name << " " << a.name;
    }
}

TEST(Transform, ScalarFlopsMatchStaticCount) {
  for (const char* name : kEquations)
    for (const auto& a : algorithms(name)) {
      Instance inst = random_instance(equation(name), 8, 2);
      SigmaProgram p = prune_structure(lower_algorithm(a, 8, 4));
      EXPECT_EQ(interpret(p, inst).flops, flop_count(a, 8, 4)) << name << " " << a.name;
    }
}

TEST(Tile, DivisibilityEnforced) {
  SigmaProgram p = prune_structure(lower_algorithm(algorithms("cholesky").back(), 8, 4));
  try {
    tile(p, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonDivisible);
  }
}

TEST(NuMap, NonDivisibleSize) {
  SigmaProgram p = prune_structure(lower_algorithm(algorithms("cholesky").back(), 6, 6));
  try {
    map_nu_kernels(p, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotDivisible);
  }
}

TEST(NuMap, UnsupportedNu) {
  SigmaProgram p = prune_structure(lower_algorithm(algorithms("cholesky").back(), 6, 6));
  try {
    map_nu_kernels(p, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedNu);
  }
}

TEST(NuMap, SingleLeafIsOneCholCall) {
  SigmaProgram p = map_nu_kernels(prune_structure(lower_algorithm(algorithms("cholesky").back(), 4, 4)), 4);
  auto chol = count_nodes(p.body, [](const Node& n) { return n.kind == NodeKind::NuCall && n.kernel == NuKernel::Chol; });
  EXPECT_EQ(chol, 1);
  EXPECT_EQ(op_nodes(p), 0);
}

TEST(NuMap, OnlyKernelCallsRemain) {
  for (const char* name : kEquations)
    for (const auto& a : algorithms(name))
      for (int nu : {2, 4}) {
        SigmaProgram p = map_nu_kernels(prune_structure(lower_algorithm(a, 8, 4)), nu);
        EXPECT_EQ(op_nodes(p), 0) << name << " " << a.name;
        EXPECT_GT(count_nodes(p.body, [](const Node& n) { return n.kind == NodeKind::NuCall; }), 0);
      }
}
