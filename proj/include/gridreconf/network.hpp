#pragma once

#include <algorithm>
#include <complex>
#include <compare>
#include <cstddef>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gridreconf/errors.hpp"

namespace gridreconf {

using BusId = int;
using Complex = std::complex<double>;

/// Unordered bus pair stored as (min, max) so that (a,b) and (b,a) compare equal.
struct LinePair {
  BusId lo = 0;
  BusId hi = 0;

  constexpr LinePair() = default;
  constexpr LinePair(BusId a, BusId b) : lo(std::min(a, b)), hi(std::max(a, b)) {}

  friend constexpr auto operator<=>(const LinePair&, const LinePair&) = default;

  std::string str() const { return "(" + std::to_string(lo) + ", " + std::to_string(hi) + ")"; }
};

using LineSet = std::set<LinePair>;

struct Bus {
  BusId id = 0;
  Complex load{0.0, 0.0};  // per-unit demand
  bool is_substation = false;
};

struct Line {
  LinePair ends;
  double r = 0.0;  // per-unit
  double x = 0.0;  // per-unit
  bool switchable = true;
  std::optional<double> capacity;  // per-unit real power; unbounded when empty

  Complex impedance() const { return {r, x}; }
};

/// Disjoint-set forest with union by size and path halving.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1), sets_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t v) {
    while (parent_[v] != v) {
      parent_[v] = parent_[parent_[v]];
      v = parent_[v];
    }
    return v;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    --sets_;
    return true;
  }

  std::size_t set_count() const { return sets_; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
  std::size_t sets_;
};

/// Plain undirected graph over buses 1..bus_count. Value type, no ownership of a Network.
struct Graph {
  int bus_count = 0;
  std::vector<LinePair> edges;
};

inline int count_components(const Graph& g) {
  if (g.bus_count <= 0) return 0;
  UnionFind uf(static_cast<std::size_t>(g.bus_count));
  for (const auto& e : g.edges) uf.unite(static_cast<std::size_t>(e.lo - 1), static_cast<std::size_t>(e.hi - 1));
  return static_cast<int>(uf.set_count());
}

/// Cyclomatic number |E| - |N| + k. Zero iff the graph is a forest.
inline int count_cycles(const Graph& g) {
  return static_cast<int>(g.edges.size()) - g.bus_count + count_components(g);
}

inline bool is_radial(const Graph& g) {
  return static_cast<int>(g.edges.size()) == g.bus_count - 1 && count_components(g) == 1;
}

/// Immutable distribution network. Buses are 1..N with exactly one substation;
/// the all-closed graph is connected.
class Network {
 public:
  Network(std::vector<Bus> buses, std::vector<Line> lines, double base_power,
          std::vector<LinePair> normally_open = {}, std::string name = {})
      : buses_(std::move(buses)), lines_(std::move(lines)), base_power_(base_power),
        name_(std::move(name)) {
    std::sort(buses_.begin(), buses_.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });
    if (buses_.empty()) throw InvalidNetwork("network has no buses");
    int substations = 0;
    for (std::size_t i = 0; i < buses_.size(); ++i) {
      if (buses_[i].id != static_cast<BusId>(i + 1))
        throw InvalidNetwork("bus ids must be contiguous 1..N, missing id " + std::to_string(i + 1));
      if (buses_[i].is_substation) {
        substation_ = buses_[i].id;
        ++substations;
      }
    }
    if (substations != 1)
      throw InvalidNetwork("expected exactly one substation, found " + std::to_string(substations));
    if (!(base_power_ > 0.0)) throw InvalidNetwork("base_power must be positive");

    for (std::size_t i = 0; i < lines_.size(); ++i) {
      const Line& l = lines_[i];
      if (l.ends.lo == l.ends.hi) throw InvalidNetwork("self-loop line at bus " + std::to_string(l.ends.lo));
      if (l.ends.lo < 1 || l.ends.hi > bus_count())
        throw InvalidNetwork("line " + l.ends.str() + " references a missing bus");
      if (l.r < 0.0 || l.x < 0.0) throw InvalidNetwork("line " + l.ends.str() + " has negative impedance");
      if (!index_.emplace(l.ends, i).second) throw InvalidNetwork("duplicate line " + l.ends.str());
    }
    if (count_components(full_graph()) != 1) throw InvalidNetwork("network graph is not connected");

    for (const auto& p : normally_open) {
      auto idx = find_line(p);
      if (!idx) throw InvalidNetwork("normally-open line " + p.str() + " is not a network line");
      if (!lines_[*idx].switchable) throw InvalidNetwork("normally-open line " + p.str() + " is not switchable");
      normally_open_.insert(p);
    }
  }

  int bus_count() const { return static_cast<int>(buses_.size()); }
  std::span<const Bus> buses() const { return buses_; }
  std::span<const Line> lines() const { return lines_; }
  const Bus& bus(BusId id) const { return buses_.at(static_cast<std::size_t>(id - 1)); }
  BusId substation() const { return substation_; }
  double base_power() const { return base_power_; }
  const std::string& name() const { return name_; }
  const LineSet& normally_open() const { return normally_open_; }

  std::optional<std::size_t> find_line(LinePair p) const {
    auto it = index_.find(p);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  const Line& line(LinePair p) const {
    auto idx = find_line(p);
    if (!idx) throw InvalidLine("line " + p.str() + " is not in the network");
    return lines_[*idx];
  }
  bool has_line(LinePair p) const { return index_.contains(p); }

  std::vector<LinePair> line_pairs() const {
    std::vector<LinePair> out;
    out.reserve(lines_.size());
    for (const auto& l : lines_) out.push_back(l.ends);
    return out;
  }

  /// Per-bus base demand, index = bus id - 1.
  std::vector<Complex> base_loads() const {
    std::vector<Complex> out;
    out.reserve(buses_.size());
    for (const auto& b : buses_) out.push_back(b.load);
    return out;
  }

  Graph full_graph() const { return Graph{bus_count(), line_pairs()}; }

 private:
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  double base_power_;
  std::string name_;
  BusId substation_ = 0;
  std::map<LinePair, std::size_t> index_;
  LineSet normally_open_;
};

using NetworkPtr = std::shared_ptr<const Network>;

/// A topology: the set of open lines applied to a shared network. Invalid pairs
/// are kept as given and reported, never dropped.
class Configuration {
 public:
  Configuration(NetworkPtr network, LineSet open_lines)
      : network_(std::move(network)), open_(std::move(open_lines)) {
    if (!network_) throw InvalidNetwork("configuration without network");
  }

  const Network& network() const { return *network_; }
  const NetworkPtr& network_ptr() const { return network_; }
  const LineSet& open_lines() const { return open_; }

  /// Pairs absent from the network.
  std::vector<LinePair> unknown_lines() const {
    std::vector<LinePair> out;
    for (const auto& p : open_)
      if (!network_->has_line(p)) out.push_back(p);
    return out;
  }

  /// Pairs present in the network but not switchable.
  std::vector<LinePair> fixed_lines_opened() const {
    std::vector<LinePair> out;
    for (const auto& p : open_) {
      auto idx = network_->find_line(p);
      if (idx && !network_->lines()[*idx].switchable) out.push_back(p);
    }
    return out;
  }

  bool is_valid() const { return unknown_lines().empty() && fixed_lines_opened().empty(); }

 private:
  NetworkPtr network_;
  LineSet open_;
};

/// Subgraph of every line not in config.open_lines().
inline Graph closed_graph(const Configuration& config) {
  const Network& net = config.network();
  if (auto bad = config.unknown_lines(); !bad.empty())
    throw InvalidLine("open line " + bad.front().str() + " is not in the network");
  Graph g{net.bus_count(), {}};
  g.edges.reserve(net.lines().size());
  for (const auto& l : net.lines())
    if (!config.open_lines().contains(l.ends)) g.edges.push_back(l.ends);
  return g;
}

/// Both N-1 closed lines and a single component are required.
inline bool is_radial(const Configuration& config) { return is_radial(closed_graph(config)); }

/// Existing open lines used when a scenario does not specify them: the network's
/// normally-open set, or else the lines left out of a Kruskal spanning tree taken in
/// file order with fixed lines first.
inline LineSet default_open_lines(const Network& net) {
  if (!net.normally_open().empty()) return net.normally_open();
  std::vector<const Line*> order;
  for (const auto& l : net.lines()) order.push_back(&l);
  std::stable_partition(order.begin(), order.end(), [](const Line* l) { return !l->switchable; });
  UnionFind uf(static_cast<std::size_t>(net.bus_count()));
  LineSet open;
  for (const Line* l : order) {
    bool joined = uf.unite(static_cast<std::size_t>(l->ends.lo - 1), static_cast<std::size_t>(l->ends.hi - 1));
    if (!joined) {
      if (!l->switchable) throw NotRadial("fixed lines form a loop at " + l->ends.str());
      open.insert(l->ends);
    }
  }
  return open;
}

}  // namespace gridreconf
