// Walks one equation through every stage and prints what each produces.
// Usage: pipeline_demo <file.la> [n] [b]

#include <fstream>
#include <iostream>
#include <sstream>

#include "lagen/autotune.hpp"

using namespace lagen;

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: pipeline_demo <file.la> [n] [b]\n";
    return 2;
  }
  std::ifstream f(argv[1]);
  std::stringstream ss;
  ss << f.rdbuf();
  std::int64_t n = argc > 2 ? std::stoll(argv[2]) : 8, b = argc > 3 ? std::stoll(argv[3]) : 4;
  try {
    Equation eq = load_equation(ss.str());
    std::vector<PME> pmes = derive_pmes(eq);
    std::cout << "== PME\n" << to_string(pmes.front());
    std::cout << "== invariants\n";
    for (const auto& inv : enumerate_invariants(pmes.front())) std::cout << to_string(inv) << "\n";
    std::vector<Algorithm> algs = enumerate_algorithms(eq);
    const Algorithm& alg = algs.front();
    std::cout << "== " << algs.size() << " algorithms; first:\n" << to_string(alg);

    SigmaProgram p = prune_structure(lower_algorithm(alg, n, b));
    std::cout << "== pruned Σ program\n" << dump(p);
    Instance inst = random_instance(eq, n, 1);
    RunResult r = interpret(p, inst);
    std::cout << "== n=" << n << " b=" << b << " flops=" << r.flops << " (static " << flop_count(alg, n, b)
              << ") residual=" << residual(eq, inst, r.outputs) << "\n";
    std::cout << "== C\n" << emit_function(map_nu_kernels(p, 4), {"demo", false}).text;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
