#pragma once

#include <algorithm>
#include <span>
#include <string>

#include "gridreconf/network.hpp"
#include "gridreconf/network_io.hpp"
#include "gridreconf/response_parser.hpp"

namespace gridreconf {

struct Lambdas {
  double cycle = 1.0;
  double subgraph = 1.0;
  double subconfig = 1.0;
};

/// Which count normalizes the subgraph and suboptimal-configuration terms.
enum class ScalingBase { predicted_open_lines, closed_lines };

struct LossOptions {
  Lambdas lambdas;
  ScalingBase base = ScalingBase::predicted_open_lines;
};

struct ComponentValue {
  double raw = 0.0;
  double scaled = 0.0;
};

struct LossComponents {
  double cycle = 0.0;
  double subgraph = 0.0;
  double subconfig = 0.0;
  double cycle_scaled = 0.0;
  double subgraph_scaled = 0.0;
  double subconfig_scaled = 0.0;
  Lambdas lambdas;
  double reg = 0.0;
  double total = 0.0;
  bool improper = false;
  int predicted_lines = 0;  // distinct predicted open pairs, invalid ones included
  int invalid_edges = 0;
  int available_lines = 0;
};

class ZeroPredictedLines : public Error {
 public:
  ZeroPredictedLines() : Error("response predicts no open lines") {}
};

/// E_output split against the network, and the closed graph E_available \ E_output
/// with invalid pairs left out.
struct OutputGraph {
  Graph closed;
  LineSet valid_open;
  LineSet invalid_open;
  int predicted() const { return static_cast<int>(valid_open.size() + invalid_open.size()); }
};

inline OutputGraph output_graph(const ParsedResponse& parsed, const Network& net) {
  OutputGraph og;
  for (const auto& p : parsed.open_lines) (net.has_line(p) ? og.valid_open : og.invalid_open).insert(p);
  og.closed.bus_count = net.bus_count();
  for (const auto& l : net.lines())
    if (!og.valid_open.contains(l.ends)) og.closed.edges.push_back(l.ends);
  return og;
}

namespace detail {
inline double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

inline double scaling_count(const OutputGraph& og, ScalingBase base) {
  return base == ScalingBase::predicted_open_lines ? static_cast<double>(og.predicted())
                                                   : static_cast<double>(og.closed.edges.size());
}
}  // namespace detail

/// Cyclomatic number of the closed graph, scaled by the number of available lines.
inline ComponentValue cycle_loss(const ParsedResponse& parsed, const Network& net) {
  const OutputGraph og = output_graph(parsed, net);
  const double raw = count_cycles(og.closed);
  const double avail = static_cast<double>(net.lines().size());
  return {raw, avail > 0 ? detail::clamp_unit(raw / avail) : 0.0};
}

/// Connected components minus one, scaled by the predicted line count.
inline ComponentValue subgraph_loss(const ParsedResponse& parsed, const Network& net,
                                    ScalingBase base = ScalingBase::predicted_open_lines) {
  const OutputGraph og = output_graph(parsed, net);
  if (og.predicted() == 0) throw ZeroPredictedLines();
  const double raw = count_components(og.closed) - 1;
  const double denom = detail::scaling_count(og, base);
  return {raw, denom > 0 ? detail::clamp_unit(raw / denom) : 1.0};
}

/// Predicted open lines missing from the label; each invalid pair counts as one more.
inline ComponentValue subconfig_loss(const ParsedResponse& parsed, std::span<const LinePair> label, const Network& net,
                                     ScalingBase base = ScalingBase::predicted_open_lines) {
  const OutputGraph og = output_graph(parsed, net);
  if (og.predicted() == 0) throw ZeroPredictedLines();
  const LineSet optimal(label.begin(), label.end());
  double raw = static_cast<double>(og.invalid_open.size());
  for (const auto& p : og.valid_open)
    if (!optimal.contains(p)) raw += 1.0;
  const double denom = detail::scaling_count(og, base);
  return {raw, denom > 0 ? detail::clamp_unit(raw / denom) : 1.0};
}

/// total = reg + l1*cycle_scaled + l2*subgraph_scaled + l3*subconfig_scaled; an improper
/// response has every scaled component forced to 1.
inline LossComponents total_loss(LossComponents c, double reg, const Lambdas& lambdas) {
  if (reg < 0.0) throw Error("regular loss must be non-negative");
  if (lambdas.cycle < 0.0 || lambdas.subgraph < 0.0 || lambdas.subconfig < 0.0)
    throw Error("loss weights must be non-negative");
  if (c.improper) c.cycle_scaled = c.subgraph_scaled = c.subconfig_scaled = 1.0;
  c.reg = reg;
  c.lambdas = lambdas;
  c.total = reg + lambdas.cycle * c.cycle_scaled + lambdas.subgraph * c.subgraph_scaled +
            lambdas.subconfig * c.subconfig_scaled;
  return c;
}

/// All components for one response against its label.
inline LossComponents evaluate_loss(const ParsedResponse& parsed, const Network& net, std::span<const LinePair> label,
                                    double reg = 0.0, const LossOptions& opt = {}) {
  LossComponents c;
  c.available_lines = static_cast<int>(net.lines().size());
  const OutputGraph og = output_graph(parsed, net);
  c.predicted_lines = og.predicted();
  c.invalid_edges = static_cast<int>(og.invalid_open.size());
  if (parsed.status == ParseStatus::improper || og.predicted() == 0) {
    c.improper = true;
    return total_loss(c, reg, opt.lambdas);
  }
  const auto cyc = cycle_loss(parsed, net);
  const auto sub = subgraph_loss(parsed, net, opt.base);
  const auto cfg = subconfig_loss(parsed, label, net, opt.base);
  c.cycle = cyc.raw;
  c.cycle_scaled = cyc.scaled;
  c.subgraph = sub.raw;
  c.subgraph_scaled = sub.scaled;
  c.subconfig = cfg.raw;
  c.subconfig_scaled = cfg.scaled;
  return total_loss(c, reg, opt.lambdas);
}

inline Json lambdas_to_json(const Lambdas& l) { return Json::array({l.cycle, l.subgraph, l.subconfig}); }

inline Lambdas lambdas_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("lambdas must be a three-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Json loss_to_json(const LossComponents& c) {
  Json j;
  j["improper"] = c.improper;
  j["cycle"] = c.improper ? Json(nullptr) : Json(c.cycle);
  j["subgraph"] = c.improper ? Json(nullptr) : Json(c.subgraph);
  j["subconfig"] = c.improper ? Json(nullptr) : Json(c.subconfig);
  j["cycle_scaled"] = c.cycle_scaled;
  j["subgraph_scaled"] = c.subgraph_scaled;
  j["subconfig_scaled"] = c.subconfig_scaled;
  j["lambdas"] = lambdas_to_json(c.lambdas);
  j["reg"] = c.reg;
  j["total"] = c.total;
  j["predicted_lines"] = c.predicted_lines;
  j["invalid_edges"] = c.invalid_edges;
  j["available_lines"] = c.available_lines;
  return j;
}

}  // namespace gridreconf
