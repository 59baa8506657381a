#pragma once

// Task dependency graphs of PMEs and enumeration of loop invariants
// (dependency-closed proper subsets of tasks).

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lagen/pme.hpp"

namespace lagen {

enum class Traversal { TLtoBR, BRtoTL };

inline std::string_view to_string(Traversal t) { return t == Traversal::TLtoBR ? "TL_to_BR" : "BR_to_TL"; }

struct TaskGraph {
  std::vector<int> nodes;
  std::set<std::pair<int, int>> edges;  // (producer, consumer)

  std::vector<int> predecessors(int id) const {
    std::vector<int> out;
    for (const auto& [p, c] : edges)
      if (c == id) out.push_back(p);
    return out;
  }
};

inline TaskGraph build_task_graph(const PME& pme) {
  TaskGraph g;
  auto same = [](const BlockFactor& a, const BlockFactor& b) {
    return a.operand == b.operand && a.row == b.row && a.col == b.col;
  };
  for (const auto& t : pme.tasks) g.nodes.push_back(t.id);
  for (const auto& producer : pme.tasks)
    for (const auto& consumer : pme.tasks) {
      if (producer.id == consumer.id) continue;
      for (const auto& in : consumer.inputs)
        if (same(in, producer.output)) g.edges.insert({producer.id, consumer.id});
    }

  // Kahn's algorithm to reject cycles.
  std::map<int, int> indeg;
  for (int n : g.nodes) indeg[n] = 0;
  for (const auto& e : g.edges) ++indeg[e.second];
  std::vector<int> ready;
  for (auto& [n, d] : indeg)
    if (d == 0) ready.push_back(n);
  std::size_t seen = 0;
  while (!ready.empty()) {
    int n = ready.back();
    ready.pop_back();
    ++seen;
    for (const auto& e : g.edges)
      if (e.first == n && --indeg[e.second] == 0) ready.push_back(e.second);
  }
  if (seen != g.nodes.size()) fail(ErrorKind::CyclicDependency, "task graph has a cycle");
  return g;
}

struct LoopInvariant {
  int pme_index = 0;
  std::vector<int> computed;  // sorted task ids
  Traversal traversal = Traversal::TLtoBR;
  friend bool operator==(const LoopInvariant&, const LoopInvariant&) = default;
};

inline std::string to_string(const LoopInvariant& inv) {
  std::ostringstream os;
  os << "{";
  for (std::size_t i = 0; i < inv.computed.size(); ++i) os << (i ? "," : "") << "T" << inv.computed[i];
  os << "} dir=" << to_string(inv.traversal);
  return os.str();
}

/// True when relabelling TL<->BR and TR<->BL maps the task set onto itself.
inline bool reversal_symmetric(const PME& pme) {
  auto key = [](const Task& t, bool rev) {
    auto q = [&](const BlockFactor& f) {
      return rev ? BlockFactor{f.operand, 1 - f.row, 1 - f.col, false} : BlockFactor{f.operand, f.row, f.col, false};
    };
    std::vector<BlockFactor> ins;
    for (const auto& i : t.inputs) ins.push_back(q(i));
    std::sort(ins.begin(), ins.end());
    return std::make_tuple(t.kind, q(t.output), ins);
  };
  std::multiset<decltype(key(pme.tasks.front(), false))> a, b;
  for (const auto& t : pme.tasks) {
    a.insert(key(t, false));
    b.insert(key(t, true));
  }
  return a == b;
}

/// All dependency-closed, proper, non-empty task subsets, ordered by size then
/// lexicographically by task id.
inline std::vector<LoopInvariant> enumerate_invariants(const PME& pme, int pme_index = 0) {
  TaskGraph g = build_task_graph(pme);
  // Tasks are created in dependency order by derive_pmes, but sort
  // topologically anyway so the include/exclude recursion sees producers first.
  std::vector<int> order;
  {
    std::map<int, int> indeg;
    for (int n : g.nodes) indeg[n] = 0;
    for (const auto& e : g.edges) ++indeg[e.second];
    std::set<int> ready;
    for (auto& [n, d] : indeg)
      if (d == 0) ready.insert(n);
    while (!ready.empty()) {
      int n = *ready.begin();
      ready.erase(ready.begin());
      order.push_back(n);
      for (const auto& e : g.edges)
        if (e.first == n && --indeg[e.second] == 0) ready.insert(e.second);
    }
  }
  std::map<int, std::vector<int>> preds;
  for (int n : g.nodes) preds[n] = g.predecessors(n);

  std::vector<std::vector<int>> ideals;
  std::set<int> current;
  std::function<void(std::size_t)> walk = [&](std::size_t i) {
    if (i == order.size()) {
      if (!current.empty() && current.size() < order.size()) ideals.emplace_back(current.begin(), current.end());
      return;
    }
    walk(i + 1);
    int n = order[i];
    if (std::all_of(preds[n].begin(), preds[n].end(), [&](int p) { return current.count(p) > 0; })) {
      current.insert(n);
      walk(i + 1);
      current.erase(n);
    }
  };
  walk(0);
  if (ideals.empty()) fail(ErrorKind::NoInvariant, "PME has no proper non-empty closed task subset");
  std::sort(ideals.begin(), ideals.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });

  bool both = reversal_symmetric(pme);
  std::vector<LoopInvariant> out;
  for (const auto& s : ideals) {
    out.push_back({pme_index, s, Traversal::TLtoBR});
    if (both) out.push_back({pme_index, s, Traversal::BRtoTL});
  }
  return out;
}

}  // namespace lagen
