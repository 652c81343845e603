#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gridreconf/network.hpp"
#include "gridreconf/power_flow.hpp"

namespace gridreconf {

enum class Method { exhaustive, branch_exchange };

inline const char* to_string(Method m) { return m == Method::exhaustive ? "exhaustive" : "branch_exchange"; }

struct OptimizationResult {
  LineSet open_lines;
  double loss = 0.0;  // kW
  Method method = Method::branch_exchange;
  std::int64_t evaluations = 0;  // power flows over candidate configurations
  std::vector<double> loss_trace;  // loss after start and after every accepted exchange
};

struct ExhaustiveOptions {
  double max_trees = 1e6;
  double tie_tolerance = 1e-10;  // relative; losses closer than this are ties
  SolverOptions solver;
};

struct BranchExchangeOptions {
  double min_improvement = 1e-12;  // relative to the current loss
  int max_exchanges = 10000;
  SolverOptions solver;
};

/// Number of spanning trees that contain every non-switchable line (matrix-tree theorem on
/// the graph with fixed lines contracted). Zero when the fixed lines close a loop.
inline double count_spanning_trees(const Network& net) {
  const auto n = static_cast<std::size_t>(net.bus_count());
  UnionFind uf(n);
  for (const auto& l : net.lines())
    if (!l.switchable && !uf.unite(static_cast<std::size_t>(l.ends.lo - 1), static_cast<std::size_t>(l.ends.hi - 1)))
      return 0.0;
  std::vector<std::size_t> group(n, SIZE_MAX);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = uf.find(i);
    if (group[r] == SIZE_MAX) group[r] = k++;
    group[i] = group[r];
  }
  if (k == 1) return 1.0;
  const std::size_t m = k - 1;  // drop the last row/column
  std::vector<long double> lap(m * m, 0.0L);
  for (const auto& l : net.lines()) {
    if (!l.switchable) continue;
    std::size_t a = group[static_cast<std::size_t>(l.ends.lo - 1)];
    std::size_t b = group[static_cast<std::size_t>(l.ends.hi - 1)];
    if (a == b) continue;
    if (a < m) lap[a * m + a] += 1;
    if (b < m) lap[b * m + b] += 1;
    if (a < m && b < m) {
      lap[a * m + b] -= 1;
      lap[b * m + a] -= 1;
    }
  }
  long double det = 1.0L;
  for (std::size_t c = 0; c < m; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < m; ++r)
      if (std::fabs(lap[r * m + c]) > std::fabs(lap[piv * m + c])) piv = r;
    if (lap[piv * m + c] == 0.0L) return 0.0;
    if (piv != c) {
      for (std::size_t j = 0; j < m; ++j) std::swap(lap[c * m + j], lap[piv * m + j]);
      det = -det;
    }
    det *= lap[c * m + c];
    for (std::size_t r = c + 1; r < m; ++r) {
      long double f = lap[r * m + c] / lap[c * m + c];
      if (f == 0.0L) continue;
      for (std::size_t j = c; j < m; ++j) lap[r * m + j] -= f * lap[c * m + j];
    }
  }
  return static_cast<double>(std::round(det));
}

/// Calls visit(open_lines) once per spanning tree that keeps every fixed line closed.
/// Trees are produced by include/exclude backtracking over switchable lines in ascending
/// pair order, pruning branches that can no longer connect the graph.
inline void enumerate_spanning_trees(const Network& net, const std::function<void(const LineSet&)>& visit) {
  const auto n = static_cast<std::size_t>(net.bus_count());
  std::vector<LinePair> free_lines;
  for (const auto& l : net.lines())
    if (l.switchable) free_lines.push_back(l.ends);
  std::sort(free_lines.begin(), free_lines.end());

  // union-find with rollback
  std::vector<std::size_t> parent(n), size(n, 1);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  std::vector<std::size_t> history;  // merged child roots, SIZE_MAX for no-op
  std::size_t sets = n;
  auto find = [&](std::size_t v) {
    while (parent[v] != v) v = parent[v];
    return v;
  };
  auto unite = [&](std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size[a] < size[b]) std::swap(a, b);
    parent[b] = a;
    size[a] += size[b];
    history.push_back(b);
    --sets;
    return true;
  };
  auto rollback = [&] {
    std::size_t b = history.back();
    history.pop_back();
    std::size_t a = parent[b];
    size[a] -= size[b];
    parent[b] = b;
    ++sets;
  };

  for (const auto& l : net.lines())
    if (!l.switchable && !unite(static_cast<std::size_t>(l.ends.lo - 1), static_cast<std::size_t>(l.ends.hi - 1)))
      return;

  std::vector<char> closed(free_lines.size(), 0);

  auto reachable_with_rest = [&](std::size_t from) {
    UnionFind probe(n);
    for (std::size_t v = 0; v < n; ++v) probe.unite(v, find(v));
    for (std::size_t j = from; j < free_lines.size(); ++j)
      probe.unite(static_cast<std::size_t>(free_lines[j].lo - 1), static_cast<std::size_t>(free_lines[j].hi - 1));
    return probe.set_count() == 1;
  };

  auto emit = [&] {
    LineSet open;
    for (std::size_t j = 0; j < free_lines.size(); ++j)
      if (!closed[j]) open.insert(free_lines[j]);
    visit(open);
  };

  std::function<void(std::size_t)> recurse = [&](std::size_t i) {
    if (sets == 1) {
      emit();
      return;
    }
    if (i == free_lines.size()) return;
    if (sets - 1 > free_lines.size() - i) return;
    const LinePair e = free_lines[i];
    if (unite(static_cast<std::size_t>(e.lo - 1), static_cast<std::size_t>(e.hi - 1))) {
      closed[i] = 1;
      recurse(i + 1);
      closed[i] = 0;
      rollback();
    }
    if (reachable_with_rest(i + 1)) recurse(i + 1);
  };
  recurse(0);
}

/// Minimum-loss radial configuration by solving power flow on every spanning tree.
/// Equal losses (within tie_tolerance) resolve to the lexicographically smallest open set.
inline OptimizationResult optimize_exhaustive(const NetworkPtr& net, std::span<const Complex> loads,
                                              const ExhaustiveOptions& opt = {}) {
  const double trees = count_spanning_trees(*net);
  if (trees > opt.max_trees)
    throw TooLarge("network has " + std::to_string(trees) + " spanning trees, cap is " + std::to_string(opt.max_trees));
  if (trees == 0.0) throw NotRadial("no radial configuration keeps every fixed line closed");

  OptimizationResult best;
  best.method = Method::exhaustive;
  best.loss = std::numeric_limits<double>::infinity();
  bool found = false;
  enumerate_spanning_trees(*net, [&](const LineSet& open) {
    Configuration cfg(net, open);
    PowerFlowResult r = solve(cfg, loads, opt.solver);
    ++best.evaluations;
    if (!r.converged) return;
    const double tol = opt.tie_tolerance * std::max(1.0, std::abs(best.loss));
    const bool better = !found || r.total_loss < best.loss - tol ||
                        (std::abs(r.total_loss - best.loss) <= tol && open < best.open_lines);
    if (better) {
      best.open_lines = open;
      best.loss = r.total_loss;
      found = true;
    }
  });
  if (!found) throw NotRadial("no spanning tree produced a converged power flow");
  best.loss_trace = {best.loss};
  return best;
}

namespace detail {

/// Closed lines on the tree path between a and b.
inline std::vector<LinePair> tree_path(const Graph& tree, BusId a, BusId b) {
  const auto n = static_cast<std::size_t>(tree.bus_count);
  std::vector<std::vector<std::pair<BusId, LinePair>>> adj(n);
  for (const auto& e : tree.edges) {
    adj[static_cast<std::size_t>(e.lo - 1)].push_back({e.hi, e});
    adj[static_cast<std::size_t>(e.hi - 1)].push_back({e.lo, e});
  }
  std::vector<LinePair> via(n);
  std::vector<char> seen(n, 0);
  std::vector<BusId> queue{a};
  seen[static_cast<std::size_t>(a - 1)] = 1;
  for (std::size_t h = 0; h < queue.size(); ++h) {
    BusId u = queue[h];
    if (u == b) break;
    for (auto [w, e] : adj[static_cast<std::size_t>(u - 1)]) {
      if (seen[static_cast<std::size_t>(w - 1)]) continue;
      seen[static_cast<std::size_t>(w - 1)] = 1;
      via[static_cast<std::size_t>(w - 1)] = e;
      queue.push_back(w);
    }
  }
  std::vector<LinePair> path;
  if (!seen[static_cast<std::size_t>(b - 1)]) return path;
  for (BusId cur = b; cur != a;) {
    LinePair e = via[static_cast<std::size_t>(cur - 1)];
    path.push_back(e);
    cur = e.lo == cur ? e.hi : e.lo;
  }
  std::sort(path.begin(), path.end());
  return path;
}

}  // namespace detail

/// Best-improvement branch exchange. Each round closes every open line in turn and
/// opens each switchable line on the loop it creates; the single best strictly improving
/// exchange is applied. Stops at the first round with no improving exchange.
inline OptimizationResult optimize_branch_exchange(const Configuration& start, std::span<const Complex> loads,
                                                   const BranchExchangeOptions& opt = {}) {
  const NetworkPtr& net = start.network_ptr();
  if (auto bad = start.fixed_lines_opened(); !bad.empty())
    throw InvalidLine("start opens non-switchable line " + bad.front().str());
  if (!is_radial(start)) throw NotRadial("branch exchange start is not radial");

  OptimizationResult res;
  res.method = Method::branch_exchange;
  res.open_lines = start.open_lines();
  PowerFlowResult first = solve(start, loads, opt.solver);
  if (!first.converged) throw NoConvergence("power flow did not converge on the start configuration", first);
  res.loss = first.total_loss;
  res.loss_trace.push_back(res.loss);

  for (int round = 0; round < opt.max_exchanges; ++round) {
    const Graph tree = closed_graph(Configuration(net, res.open_lines));
    double best_loss = res.loss;
    LineSet best_open;
    bool improved = false;
    for (const LinePair& o : res.open_lines) {
      for (const LinePair& c : detail::tree_path(tree, o.lo, o.hi)) {
        if (!net->line(c).switchable) continue;
        LineSet candidate = res.open_lines;
        candidate.erase(o);
        candidate.insert(c);
        PowerFlowResult r = solve(Configuration(net, candidate), loads, opt.solver);
        ++res.evaluations;
        if (r.converged && r.total_loss < best_loss) {
          best_loss = r.total_loss;
          best_open = std::move(candidate);
          improved = true;
        }
      }
    }
    if (!improved || best_loss >= res.loss - opt.min_improvement * std::max(1.0, res.loss)) break;
    res.open_lines = std::move(best_open);
    res.loss = best_loss;
    res.loss_trace.push_back(res.loss);
  }
  return res;
}

}  // namespace gridreconf
