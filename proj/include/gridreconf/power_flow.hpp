#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gridreconf/network.hpp"

namespace gridreconf {

struct SolverOptions {
  double tolerance = 1e-8;  // max per-bus voltage change between sweeps, p.u.
  int max_iterations = 100;
};

struct PowerFlowResult {
  std::vector<double> voltages;    // |V| p.u., index = bus id - 1
  std::vector<Complex> phasors;    // complex V p.u., same indexing
  std::vector<LinePair> closed_lines;
  std::vector<double> currents;    // |I| p.u., aligned with closed_lines
  std::vector<Complex> sending_power;  // S at the substation-side end, aligned with closed_lines
  double loss_pu = 0.0;
  double total_loss = 0.0;  // kW
  double generation_pu = 0.0;  // real power injected at the substation
  double demand_pu = 0.0;
  bool converged = false;
  int iterations = 0;

  double current(LinePair p) const {
    auto it = std::find(closed_lines.begin(), closed_lines.end(), p);
    return it == closed_lines.end() ? 0.0 : currents[static_cast<std::size_t>(it - closed_lines.begin())];
  }
};

class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, PowerFlowResult partial)
      : Error(what), partial_(std::move(partial)) {}
  const PowerFlowResult& partial() const { return partial_; }

 private:
  PowerFlowResult partial_;
};

namespace detail {

struct RadialTree {
  std::vector<int> order;        // bus indices, root first, every parent before its children
  std::vector<int> parent;       // bus index of parent, -1 at root
  std::vector<int> parent_line;  // index into network lines, -1 at root
};

inline RadialTree orient(const Network& net, const Graph& closed) {
  const auto n = static_cast<std::size_t>(net.bus_count());
  std::vector<std::vector<std::pair<int, int>>> adj(n);
  for (const auto& e : closed.edges) {
    int li = static_cast<int>(*net.find_line(e));
    adj[static_cast<std::size_t>(e.lo - 1)].emplace_back(e.hi - 1, li);
    adj[static_cast<std::size_t>(e.hi - 1)].emplace_back(e.lo - 1, li);
  }
  RadialTree t;
  t.parent.assign(n, -1);
  t.parent_line.assign(n, -1);
  std::vector<char> seen(n, 0);
  int root = net.substation() - 1;
  t.order.reserve(n);
  t.order.push_back(root);
  seen[static_cast<std::size_t>(root)] = 1;
  for (std::size_t head = 0; head < t.order.size(); ++head) {
    int u = t.order[head];
    for (auto [v, li] : adj[static_cast<std::size_t>(u)]) {
      if (seen[static_cast<std::size_t>(v)]) continue;
      seen[static_cast<std::size_t>(v)] = 1;
      t.parent[static_cast<std::size_t>(v)] = u;
      t.parent_line[static_cast<std::size_t>(v)] = li;
      t.order.push_back(v);
    }
  }
  return t;
}

}  // namespace detail

/// Backward/forward sweep on a radial configuration with constant-power loads.
///
/// Loads are per-unit demand indexed by bus id - 1; the substation entry is ignored.
/// Starts flat (1.0 p.u. everywhere). A solve that hits the iteration cap or produces
/// non-finite voltages returns with converged = false instead of throwing.
inline PowerFlowResult solve(const Configuration& config, std::span<const Complex> loads,
                             const SolverOptions& opt = {}) {
  const Network& net = config.network();
  const Graph closed = closed_graph(config);
  if (!is_radial(closed)) throw NotRadial("configuration is not radial");
  if (loads.size() != static_cast<std::size_t>(net.bus_count()))
    throw InvalidNetwork("load vector has " + std::to_string(loads.size()) + " entries, expected " +
                         std::to_string(net.bus_count()));

  const auto n = static_cast<std::size_t>(net.bus_count());
  const int root = net.substation() - 1;
  const detail::RadialTree tree = detail::orient(net, closed);
  const auto lines = net.lines();

  std::vector<Complex> v(n, Complex{1.0, 0.0});
  std::vector<Complex> branch(n, Complex{});  // current in the line feeding bus i
  std::vector<Complex> acc(n);

  auto backward = [&] {
    for (std::size_t i = 0; i < n; ++i)
      acc[i] = static_cast<int>(i) == root ? Complex{} : std::conj(loads[i] / v[i]);
    for (auto it = tree.order.rbegin(); it != tree.order.rend(); ++it) {
      const auto b = static_cast<std::size_t>(*it);
      if (*it == root) continue;
      branch[b] = acc[b];
      acc[static_cast<std::size_t>(tree.parent[b])] += acc[b];
    }
  };

  PowerFlowResult res;
  for (int iter = 1; iter <= opt.max_iterations; ++iter) {
    res.iterations = iter;
    backward();
    double dv = 0.0;
    bool finite = true;
    for (int bi : tree.order) {
      if (bi == root) continue;
      const auto b = static_cast<std::size_t>(bi);
      const Line& l = lines[static_cast<std::size_t>(tree.parent_line[b])];
      Complex updated = v[static_cast<std::size_t>(tree.parent[b])] - l.impedance() * branch[b];
      dv = std::max(dv, std::abs(updated - v[b]));
      if (!std::isfinite(updated.real()) || !std::isfinite(updated.imag())) finite = false;
      v[b] = updated;
    }
    if (!finite) break;
    if (dv < opt.tolerance) {
      res.converged = true;
      break;
    }
  }

  backward();
  res.phasors = v;
  res.voltages.resize(n);
  for (std::size_t i = 0; i < n; ++i) res.voltages[i] = std::abs(v[i]);
  for (int bi : tree.order) {
    if (bi == root) continue;
    const auto b = static_cast<std::size_t>(bi);
    const Line& l = lines[static_cast<std::size_t>(tree.parent_line[b])];
    const double mag = std::abs(branch[b]);
    res.closed_lines.push_back(l.ends);
    res.currents.push_back(mag);
    res.sending_power.push_back(v[static_cast<std::size_t>(tree.parent[b])] * std::conj(branch[b]));
    res.loss_pu += mag * mag * l.r;
  }
  res.total_loss = res.loss_pu * net.base_power() * 1000.0;
  res.generation_pu = (v[static_cast<std::size_t>(root)] * std::conj(acc[static_cast<std::size_t>(root)])).real();
  for (std::size_t i = 0; i < n; ++i)
    if (static_cast<int>(i) != root) res.demand_pu += loads[i].real();
  if (!std::isfinite(res.loss_pu)) res.converged = false;
  return res;
}

/// Total real loss in kW. Throws NoConvergence carrying the partial result.
inline double system_loss(const Configuration& config, std::span<const Complex> loads,
                          const SolverOptions& opt = {}) {
  PowerFlowResult r = solve(config, loads, opt);
  if (!r.converged) {
    std::string msg = "power flow did not converge in " + std::to_string(r.iterations) + " iterations";
    throw NoConvergence(msg, std::move(r));
  }
  return r.total_loss;
}

struct VoltageViolation {
  BusId bus = 0;
  double value = 0.0;
};

struct ConstraintReport {
  double balance_residual = 0.0;  // p.u., |generation - demand - loss|
  std::vector<LinePair> overloaded_lines;
  std::vector<VoltageViolation> voltage_violations;
  bool radial = false;

  bool capacity_ok() const { return overloaded_lines.empty(); }
  bool voltage_ok() const { return voltage_violations.empty(); }
  bool feasible(double balance_tol = 1e-6) const {
    return radial && capacity_ok() && voltage_ok() && balance_residual <= balance_tol;
  }
};

inline ConstraintReport check_constraints(const Configuration& config, const PowerFlowResult& result,
                                          double v_min = 0.9, double v_max = 1.1) {
  ConstraintReport rep;
  rep.radial = is_radial(config);
  rep.balance_residual = std::abs(result.generation_pu - result.demand_pu - result.loss_pu);
  const Network& net = config.network();
  for (std::size_t i = 0; i < result.closed_lines.size(); ++i) {
    const Line& l = net.line(result.closed_lines[i]);
    if (l.capacity && std::abs(result.sending_power[i].real()) > *l.capacity)
      rep.overloaded_lines.push_back(l.ends);
  }
  for (std::size_t i = 0; i < result.voltages.size(); ++i) {
    const double vm = result.voltages[i];
    if (vm < v_min || vm > v_max) rep.voltage_violations.push_back({static_cast<BusId>(i + 1), vm});
  }
  return rep;
}

}  // namespace gridreconf
