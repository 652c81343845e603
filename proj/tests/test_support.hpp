#pragma once

// Shared generators and independent oracles for the test suites.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <vector>

#include "gridreconf/gridreconf.hpp"

namespace testing_support {

using namespace gridreconf;

/// Small deterministic generator; tests should not depend on <random> distributions,
/// whose output differs between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64(state_);
  }
  double uniform(double lo = 0.0, double hi = 1.0) { return lo + (hi - lo) * unit_interval(next()); }
  int between(int lo, int hi) { return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1)); }
  bool coin(double p = 0.5) { return uniform() < p; }

 private:
  std::uint64_t state_;
};

struct RandomNetworkSpec {
  int min_buses = 3;
  int max_buses = 10;
  int max_extra_lines = 3;
  double r_lo = 0.002, r_hi = 0.03;
  double x_lo = 0.001, x_hi = 0.03;
  double p_hi = 0.05;
  double q_hi = 0.03;
};

/// Random spanning tree (each bus attached to an earlier one) plus extra non-duplicate
/// lines. Bus 1 is the substation.
inline Network random_network(Rng& rng, const RandomNetworkSpec& spec = {}) {
  const int n = rng.between(spec.min_buses, spec.max_buses);
  std::vector<Bus> buses;
  for (int i = 1; i <= n; ++i) {
    Bus b;
    b.id = i;
    b.is_substation = i == 1;
    if (i != 1) b.load = {rng.uniform(0.0, spec.p_hi), rng.uniform(0.0, spec.q_hi)};
    buses.push_back(b);
  }
  std::vector<Line> lines;
  LineSet used;
  auto add = [&](int a, int b) {
    LinePair p(a, b);
    if (a == b || used.contains(p)) return false;
    used.insert(p);
    Line l;
    l.ends = p;
    l.r = rng.uniform(spec.r_lo, spec.r_hi);
    l.x = rng.uniform(spec.x_lo, spec.x_hi);
    lines.push_back(l);
    return true;
  };
  for (int i = 2; i <= n; ++i) add(rng.between(1, i - 1), i);
  const int max_possible = n * (n - 1) / 2 - (n - 1);
  const int extra = std::min(rng.between(0, spec.max_extra_lines), max_possible);
  for (int e = 0; e < extra;) {
    if (add(rng.between(1, n), rng.between(1, n))) ++e;
  }
  return Network(std::move(buses), std::move(lines), 1.0);
}

inline NetworkPtr random_network_ptr(Rng& rng, const RandomNetworkSpec& spec = {}) {
  return std::make_shared<const Network>(random_network(rng, spec));
}

/// Random spanning tree of `net`, returned as the open set.
inline LineSet random_radial_open(Rng& rng, const Network& net) {
  std::vector<LinePair> pairs = net.line_pairs();
  for (std::size_t i = pairs.size(); i > 1; --i) std::swap(pairs[i - 1], pairs[rng.next() % i]);
  UnionFind uf(static_cast<std::size_t>(net.bus_count()));
  LineSet open;
  for (const auto& p : pairs)
    if (!uf.unite(static_cast<std::size_t>(p.lo - 1), static_cast<std::size_t>(p.hi - 1))) open.insert(p);
  return open;
}

// ---------------------------------------------------------------------------
// Topology oracles (adjacency search, not union-find)
// ---------------------------------------------------------------------------

inline int bfs_components(int n, const std::vector<LinePair>& edges) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (const auto& e : edges) {
    adj[static_cast<std::size_t>(e.lo - 1)].push_back(e.hi - 1);
    adj[static_cast<std::size_t>(e.hi - 1)].push_back(e.lo - 1);
  }
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  int k = 0;
  for (int s = 0; s < n; ++s) {
    if (seen[static_cast<std::size_t>(s)]) continue;
    ++k;
    std::vector<int> stack{s};
    seen[static_cast<std::size_t>(s)] = 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int w : adj[static_cast<std::size_t>(v)])
        if (!seen[static_cast<std::size_t>(w)]) {
          seen[static_cast<std::size_t>(w)] = 1;
          stack.push_back(w);
        }
    }
  }
  return k;
}

/// Dimension of the cycle space by counting even-degree edge subsets (2^dim of them).
/// Exponential; only for small edge counts.
inline int cycle_space_dimension_bruteforce(int n, const std::vector<LinePair>& edges) {
  const std::size_t m = edges.size();
  std::uint64_t count = 0;
  std::vector<int> deg(static_cast<std::size_t>(n));
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
    std::fill(deg.begin(), deg.end(), 0);
    for (std::size_t i = 0; i < m; ++i)
      if (mask >> i & 1) {
        ++deg[static_cast<std::size_t>(edges[i].lo - 1)];
        ++deg[static_cast<std::size_t>(edges[i].hi - 1)];
      }
    if (std::all_of(deg.begin(), deg.end(), [](int d) { return d % 2 == 0; })) ++count;
  }
  int dim = 0;
  while ((std::uint64_t{1} << dim) < count) ++dim;
  return dim;
}

/// |E| minus the GF(2) rank of the incidence matrix; Gaussian elimination on bitsets.
inline int cycle_space_dimension_gf2(int n, const std::vector<LinePair>& edges) {
  const std::size_t words = static_cast<std::size_t>(n + 63) / 64;
  std::vector<std::vector<std::uint64_t>> rows;
  for (const auto& e : edges) {
    std::vector<std::uint64_t> r(words, 0);
    r[static_cast<std::size_t>(e.lo - 1) / 64] ^= std::uint64_t{1} << ((e.lo - 1) % 64);
    r[static_cast<std::size_t>(e.hi - 1) / 64] ^= std::uint64_t{1} << ((e.hi - 1) % 64);
    rows.push_back(r);
  }
  int rank = 0;
  for (int col = 0; col < n && rank < static_cast<int>(rows.size()); ++col) {
    const std::size_t w = static_cast<std::size_t>(col) / 64;
    const std::uint64_t bit = std::uint64_t{1} << (col % 64);
    std::size_t pivot = static_cast<std::size_t>(rank);
    while (pivot < rows.size() && !(rows[pivot][w] & bit)) ++pivot;
    if (pivot == rows.size()) continue;
    std::swap(rows[pivot], rows[static_cast<std::size_t>(rank)]);
    for (std::size_t r = 0; r < rows.size(); ++r)
      if (r != static_cast<std::size_t>(rank) && (rows[r][w] & bit))
        for (std::size_t k = 0; k < words; ++k) rows[r][k] ^= rows[static_cast<std::size_t>(rank)][k];
    ++rank;
  }
  return static_cast<int>(edges.size()) - rank;
}

// ---------------------------------------------------------------------------
// Newton-Raphson power flow (polar form, dense Jacobian)
// ---------------------------------------------------------------------------

struct NrResult {
  std::vector<Complex> voltages;
  bool converged = false;
  int iterations = 0;
};

inline NrResult newton_raphson(const Network& net, const LineSet& open, const std::vector<Complex>& loads,
                               double tol = 1e-12, int max_iter = 50) {
  const int n = net.bus_count();
  Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& l : net.lines()) {
    if (open.contains(l.ends)) continue;
    const Complex y = 1.0 / l.impedance();
    const int a = l.ends.lo - 1, b = l.ends.hi - 1;
    Y(a, a) += y;
    Y(b, b) += y;
    Y(a, b) -= y;
    Y(b, a) -= y;
  }
  const Eigen::MatrixXd G = Y.real(), B = Y.imag();
  const int slack = net.substation() - 1;
  std::vector<int> pq;
  for (int i = 0; i < n; ++i)
    if (i != slack) pq.push_back(i);
  const int m = static_cast<int>(pq.size());
  std::vector<double> vm(static_cast<std::size_t>(n), 1.0), va(static_cast<std::size_t>(n), 0.0);

  NrResult out;
  for (int it = 0; it <= max_iter; ++it) {
    std::vector<double> P(static_cast<std::size_t>(n), 0.0), Q(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double t = va[i] - va[j];
        P[i] += vm[i] * vm[j] * (G(i, j) * std::cos(t) + B(i, j) * std::sin(t));
        Q[i] += vm[i] * vm[j] * (G(i, j) * std::sin(t) - B(i, j) * std::cos(t));
      }
    Eigen::VectorXd f(2 * m);
    for (int k = 0; k < m; ++k) {
      const int i = pq[k];
      f(k) = -loads[i].real() - P[i];
      f(m + k) = -loads[i].imag() - Q[i];
    }
    out.iterations = it;
    if (f.cwiseAbs().maxCoeff() < tol) {
      out.converged = true;
      break;
    }
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * m, 2 * m);
    for (int a = 0; a < m; ++a) {
      const int i = pq[a];
      for (int b = 0; b < m; ++b) {
        const int j = pq[b];
        if (i == j) {
          J(a, b) = -Q[i] - B(i, i) * vm[i] * vm[i];
          J(a, m + b) = P[i] / vm[i] + G(i, i) * vm[i];
          J(m + a, b) = P[i] - G(i, i) * vm[i] * vm[i];
          J(m + a, m + b) = Q[i] / vm[i] - B(i, i) * vm[i];
        } else {
          const double t = va[i] - va[j];
          J(a, b) = vm[i] * vm[j] * (G(i, j) * std::sin(t) - B(i, j) * std::cos(t));
          J(a, m + b) = vm[i] * (G(i, j) * std::cos(t) + B(i, j) * std::sin(t));
          J(m + a, b) = -vm[i] * vm[j] * (G(i, j) * std::cos(t) + B(i, j) * std::sin(t));
          J(m + a, m + b) = vm[i] * (G(i, j) * std::sin(t) - B(i, j) * std::cos(t));
        }
      }
    }
    const Eigen::VectorXd dx = J.fullPivLu().solve(f);
    for (int k = 0; k < m; ++k) {
      va[pq[k]] += dx(k);
      vm[pq[k]] += dx(m + k);
    }
  }
  for (int i = 0; i < n; ++i) out.voltages.push_back(std::polar(vm[i], va[i]));
  return out;
}

/// Closed form for one line feeding one resistive load: V = (1 + sqrt(1 - 4RP)) / 2.
inline double two_bus_voltage(double r, double p) { return (1.0 + std::sqrt(1.0 - 4.0 * r * p)) / 2.0; }

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

inline NetworkPtr make_network(int n, const std::vector<std::tuple<int, int, double, double>>& lines,
                               const std::vector<Complex>& loads, std::vector<LinePair> normally_open = {}) {
  std::vector<Bus> buses;
  for (int i = 1; i <= n; ++i) buses.push_back({i, loads.empty() ? Complex{} : loads[static_cast<std::size_t>(i - 1)], i == 1});
  std::vector<Line> ls;
  for (auto [a, b, r, x] : lines) ls.push_back({LinePair(a, b), r, x, true, std::nullopt});
  return std::make_shared<const Network>(std::move(buses), std::move(ls), 1.0, std::move(normally_open));
}

/// Open lines of the optimized 33-bus reference sample.
inline std::vector<LinePair> reference_open_lines() { return {{14, 15}, {32, 33}, {7, 8}, {25, 29}, {9, 10}}; }

/// A well-formed model response for the 33-bus reference sample; it differs from the
/// reference label in one open line.
inline const char* reference_response() {
  return "Extracted open lines: (14, 15), (32, 33), (7, 8), (25, 29), (11, 10)\n"
         "Extracted node voltages: 1.0, 0.9988, 0.9946, 0.9928, 0.9911, 0.9869, 0.9867, 0.9846, 0.9829, 0.9827, "
         "0.9854, 0.9854, 0.9843, 0.984, 0.9804, 0.9797, 0.9786, 0.9781, 0.998, 0.9912, 0.9893, 0.9878, 0.993, "
         "0.99, 0.9886, 0.9862, 0.9853, 0.9814, 0.9786, 0.9774, 0.9757, 0.9754, 0.978\n"
         "Extracted system loss: 22.4551";
}

inline ParsedResponse parsed_with_open(std::vector<LinePair> open) {
  ParsedResponse p;
  p.open_lines = std::move(open);
  p.has_open_lines = true;
  p.has_node_voltages = true;
  p.has_system_loss = true;
  p.system_loss = 0.0;
  p.status = ParseStatus::proper;
  return p;
}

}  // namespace testing_support
