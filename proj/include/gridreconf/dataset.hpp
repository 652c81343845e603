#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gridreconf/csv.hpp"
#include "gridreconf/format.hpp"
#include "gridreconf/network.hpp"
#include "gridreconf/network_io.hpp"
#include "gridreconf/optimizer.hpp"
#include "gridreconf/parallel.hpp"
#include "gridreconf/power_flow.hpp"

namespace gridreconf {

// ---------------------------------------------------------------------------
// Load scenarios
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Uniform in [0, 1) from a hash value.
inline double unit_interval(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

/// Multiplier time series. Column `global` (or the only column) applies to every bus;
/// columns named `bus_<id>` or `<id>` apply to that bus.
struct LoadProfile {
  std::vector<std::string> timestamps;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // rows[t][column]

  bool empty() const { return rows.empty(); }
};

inline LoadProfile parse_load_profile_csv(std::string_view text) {
  std::vector<CsvRow> table = parse_csv(text);
  LoadProfile p;
  if (table.empty()) return p;
  const CsvRow& header = table.front();
  if (header.size() < 2) throw FormatError("load profile needs a timestamp column and at least one multiplier column");
  p.columns.assign(header.begin() + 1, header.end());
  for (std::size_t r = 1; r < table.size(); ++r) {
    const CsvRow& row = table[r];
    if (row.size() != header.size())
      throw FormatError("load profile row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                        " fields, expected " + std::to_string(header.size()));
    p.timestamps.push_back(row[0]);
    std::vector<double> values;
    for (std::size_t c = 1; c < row.size(); ++c) {
      Scanner s(row[c]);
      auto v = s.number();
      s.skip_space();
      if (!v || !s.done()) throw FormatError("load profile row " + std::to_string(r + 1) + ": bad multiplier '" + row[c] + "'");
      values.push_back(*v);
    }
    p.rows.push_back(std::move(values));
  }
  return p;
}

inline LoadProfile read_load_profile_csv(const std::filesystem::path& path) {
  return parse_load_profile_csv(read_text_file(path));
}

inline std::string load_profile_to_csv(const LoadProfile& p) {
  CsvRow header{"timestamp"};
  header.insert(header.end(), p.columns.begin(), p.columns.end());
  std::string out = csv_line(header);
  for (std::size_t t = 0; t < p.rows.size(); ++t) {
    CsvRow row{t < p.timestamps.size() ? p.timestamps[t] : std::to_string(t)};
    for (double v : p.rows[t]) row.push_back(format_decimal(v, 6));
    out += csv_line(row);
  }
  return out;
}

inline LoadProfile constant_profile(double multiplier, std::size_t hours = 1) {
  LoadProfile p;
  p.columns = {"global"};
  for (std::size_t t = 0; t < hours; ++t) {
    p.timestamps.push_back(std::to_string(t));
    p.rows.push_back({multiplier});
  }
  return p;
}

/// Hourly residential-style curve: evening peak, night trough, weekly and yearly swing,
/// seeded noise. Values stay in [0.2, 1.2].
inline LoadProfile synthetic_profile(std::size_t hours, std::uint64_t seed) {
  constexpr double pi = 3.14159265358979323846;
  LoadProfile p;
  p.columns = {"global"};
  for (std::size_t t = 0; t < hours; ++t) {
    const double hour = static_cast<double>(t % 24);
    const double day = static_cast<double>(t / 24);
    double m = 0.62 + 0.22 * std::sin(2 * pi * (hour - 13.0) / 24.0) + 0.08 * std::sin(2 * pi * (hour - 17.0) / 12.0);
    m *= 1.0 + 0.12 * std::cos(2 * pi * day / 365.0) - ((t / 24) % 7 >= 5 ? 0.05 : 0.0);
    m *= 1.0 + 0.1 * (2.0 * unit_interval(splitmix64(seed ^ (t * 0x9e3779b97f4a7c15ULL))) - 1.0);
    p.timestamps.push_back("h" + std::to_string(t));
    p.rows.push_back({std::clamp(m, 0.2, 1.2)});
  }
  return p;
}

struct ScenarioOptions {
  std::uint64_t seed = 0;
  double jitter = 0.0;  // per-bus relative noise amplitude on top of the profile
};

/// Random-access scenario source: scenario i uses profile row (offset + i) mod rows, where
/// the offset is derived from the seed. Bit-identical for the same seed and inputs.
class ScenarioGenerator {
 public:
  ScenarioGenerator(const Network& net, LoadProfile profile, ScenarioOptions opt = {})
      : base_(net.base_loads()), profile_(std::move(profile)), opt_(opt), substation_(net.substation()) {
    if (profile_.empty()) throw EmptyProfile("load profile has no rows");
    std::map<std::string, std::size_t> by_name;
    for (std::size_t c = 0; c < profile_.columns.size(); ++c) by_name[profile_.columns[c]] = c;
    long global = -1;
    if (profile_.columns.size() == 1) global = 0;
    for (const char* name : {"global", "multiplier"})
      if (auto it = by_name.find(name); it != by_name.end()) global = static_cast<long>(it->second);
    column_.assign(base_.size(), global);
    for (std::size_t b = 0; b < base_.size(); ++b) {
      const std::string id = std::to_string(b + 1);
      for (const std::string& key : {"bus_" + id, id})
        if (auto it = by_name.find(key); it != by_name.end()) column_[b] = static_cast<long>(it->second);
    }
    offset_ = splitmix64(opt_.seed) % profile_.rows.size();
  }

  std::size_t profile_row(std::size_t index) const { return (offset_ + index) % profile_.rows.size(); }

  std::vector<Complex> operator()(std::size_t index) const {
    const auto& row = profile_.rows[profile_row(index)];
    std::vector<Complex> loads(base_.size());
    for (std::size_t b = 0; b < base_.size(); ++b) {
      if (static_cast<BusId>(b + 1) == substation_) continue;
      double m = column_[b] >= 0 ? row[static_cast<std::size_t>(column_[b])] : 1.0;
      if (opt_.jitter != 0.0) {
        std::uint64_t h = splitmix64(opt_.seed ^ splitmix64(index * 0x100000001b3ULL + b));
        m *= 1.0 + opt_.jitter * (2.0 * unit_interval(h) - 1.0);
      }
      loads[b] = base_[b] * m;
    }
    return loads;
  }

 private:
  std::vector<Complex> base_;
  LoadProfile profile_;
  ScenarioOptions opt_;
  BusId substation_;
  std::vector<long> column_;
  std::size_t offset_ = 0;
};

inline std::vector<std::vector<Complex>> generate_scenarios(const Network& net, const LoadProfile& profile,
                                                            std::size_t count, const ScenarioOptions& opt = {}) {
  ScenarioGenerator gen(net, profile, opt);
  std::vector<std::vector<Complex>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(gen(i));
  return out;
}

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------

/// One record with the ten retained columns; connectivity matrices are derived on demand.
struct DatasetSample {
  std::string network_id;
  std::string sample_id;
  int buses = 0;
  std::vector<LinePair> lines;
  std::vector<Complex> line_impedances;  // r + jx per line, aligned with `lines`
  std::vector<LinePair> existing_open_lines;
  std::vector<double> existing_node_voltages;
  double existing_system_loss = 0.0;
  std::vector<Complex> system_load;
  std::vector<LinePair> updated_open_lines;
  std::vector<double> updated_node_voltages;
  double updated_system_loss = 0.0;
};

enum class LabelMethod { branch_exchange, exhaustive };

struct LabelOptions {
  LabelMethod method = LabelMethod::branch_exchange;
  ExhaustiveOptions exhaustive;
  BranchExchangeOptions branch_exchange;
};

inline std::string make_sample_id(std::string_view network_id, std::size_t index) {
  std::string n = std::to_string(index);
  if (n.size() < 6) n.insert(0, 6 - n.size(), '0');
  return std::string(network_id) + "-" + n;
}

/// Solves the existing configuration, labels it with the optimizer and records both.
inline DatasetSample make_sample(const NetworkPtr& net, std::span<const Complex> loads, const LineSet& existing_open,
                                 const LabelOptions& opt, std::string network_id, std::size_t index) {
  DatasetSample s;
  s.network_id = std::move(network_id);
  s.sample_id = make_sample_id(s.network_id, index);
  s.buses = net->bus_count();
  for (const auto& l : net->lines()) {
    s.lines.push_back(l.ends);
    s.line_impedances.push_back(l.impedance());
  }
  s.system_load.assign(loads.begin(), loads.end());

  Configuration existing(net, existing_open);
  PowerFlowResult before = solve(existing, loads, opt.branch_exchange.solver);
  if (!before.converged) throw NoConvergence("existing configuration of " + s.sample_id + " did not converge", before);
  s.existing_open_lines.assign(existing_open.begin(), existing_open.end());
  s.existing_node_voltages = before.voltages;
  s.existing_system_loss = before.total_loss;

  OptimizationResult best = opt.method == LabelMethod::exhaustive ? optimize_exhaustive(net, loads, opt.exhaustive)
                                                                  : optimize_branch_exchange(existing, loads, opt.branch_exchange);
  if (best.loss > before.total_loss) {  // exhaustive with ties cannot do worse, but keep the label monotone
    best.open_lines = existing_open;
    best.loss = before.total_loss;
  }
  PowerFlowResult after = solve(Configuration(net, best.open_lines), loads, opt.branch_exchange.solver);
  s.updated_open_lines.assign(best.open_lines.begin(), best.open_lines.end());
  s.updated_node_voltages = after.voltages;
  s.updated_system_loss = after.total_loss;
  return s;
}

struct PrecisionOptions {
  int impedance_digits = 5;
  int load_digits = 5;
  int voltage_digits = 4;
  int loss_digits = 4;
};

inline DatasetSample reduce_precision(DatasetSample s, const PrecisionOptions& p = {}) {
  for (auto& z : s.line_impedances) z = round_to(z, p.impedance_digits);
  for (auto& l : s.system_load) l = round_to(l, p.load_digits);
  for (auto& v : s.existing_node_voltages) v = round_to(v, p.voltage_digits);
  for (auto& v : s.updated_node_voltages) v = round_to(v, p.voltage_digits);
  s.existing_system_loss = round_to(s.existing_system_loss, p.loss_digits);
  s.updated_system_loss = round_to(s.updated_system_loss, p.loss_digits);
  return s;
}

/// N x N 0/1 adjacency of the closed lines.
inline std::vector<std::vector<int>> connectivity_matrix(int buses, std::span<const LinePair> lines,
                                                         std::span<const LinePair> open) {
  std::vector<std::vector<int>> m(static_cast<std::size_t>(buses), std::vector<int>(static_cast<std::size_t>(buses), 0));
  LineSet opened(open.begin(), open.end());
  for (const auto& l : lines) {
    if (opened.contains(l)) continue;
    m[static_cast<std::size_t>(l.lo - 1)][static_cast<std::size_t>(l.hi - 1)] = 1;
    m[static_cast<std::size_t>(l.hi - 1)][static_cast<std::size_t>(l.lo - 1)] = 1;
  }
  return m;
}

inline std::vector<double> impedance_magnitudes(std::span<const Complex> z, int digits = -1) {
  std::vector<double> out;
  out.reserve(z.size());
  for (const auto& v : z) out.push_back(digits < 0 ? std::abs(v) : round_to(std::abs(v), digits));
  return out;
}

inline Json sample_to_json(const DatasetSample& s) {
  Json j;
  j["network_id"] = s.network_id;
  j["sample_id"] = s.sample_id;
  j["buses"] = s.buses;
  j["lines"] = pairs_to_json(s.lines);
  Json z = Json::array();
  for (const auto& v : s.line_impedances) z.push_back({v.real(), v.imag()});
  j["line_impedances"] = std::move(z);
  j["existing_open_lines"] = pairs_to_json(s.existing_open_lines);
  j["existing_node_voltages"] = s.existing_node_voltages;
  j["existing_system_loss"] = s.existing_system_loss;
  Json load = Json::array();
  for (const auto& v : s.system_load) load.push_back({v.real(), v.imag()});
  j["system_load"] = std::move(load);
  j["updated_open_lines"] = pairs_to_json(s.updated_open_lines);
  j["updated_node_voltages"] = s.updated_node_voltages;
  j["updated_system_loss"] = s.updated_system_loss;
  return j;
}

inline DatasetSample sample_from_json(const Json& j) {
  try {
    DatasetSample s;
    s.network_id = j.value("network_id", std::string{});
    s.sample_id = j.value("sample_id", std::string{});
    s.buses = j.at("buses").get<int>();
    s.lines = pairs_from_json(j.at("lines"));
    for (const auto& z : j.at("line_impedances"))
      s.line_impedances.push_back(z.is_array() ? Complex{z.at(0).get<double>(), z.at(1).get<double>()} : Complex{z.get<double>(), 0.0});
    s.existing_open_lines = pairs_from_json(j.at("existing_open_lines"));
    s.existing_node_voltages = j.at("existing_node_voltages").get<std::vector<double>>();
    s.existing_system_loss = j.at("existing_system_loss").get<double>();
    for (const auto& v : j.at("system_load"))
      s.system_load.push_back(v.is_array() ? Complex{v.at(0).get<double>(), v.at(1).get<double>()} : Complex{v.get<double>(), 0.0});
    s.updated_open_lines = pairs_from_json(j.at("updated_open_lines"));
    s.updated_node_voltages = j.at("updated_node_voltages").get<std::vector<double>>();
    s.updated_system_loss = j.at("updated_system_loss").get<double>();
    return s;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed sample: ") + e.what());
  }
}

// Tabular layout: one column per field, list cells in Python literal syntax.
inline const std::vector<std::string>& sample_csv_columns() {
  static const std::vector<std::string> cols{
      "buses", "lines", "line_impedances", "existing_open_lines", "existing_node_voltages",
      "existing_system_loss", "system_load", "updated_open_lines", "updated_node_voltages", "updated_system_loss"};
  return cols;
}

inline std::string samples_to_csv(std::span<const DatasetSample> samples) {
  std::string out = csv_line(sample_csv_columns());
  for (const auto& s : samples) {
    out += csv_line({std::to_string(s.buses), format_pair_list(s.lines, false, true),
                     format_complex_list(s.line_impedances, -1), format_pair_list(s.existing_open_lines, false, true),
                     format_number_list(s.existing_node_voltages, -1, true), format_decimal(s.existing_system_loss),
                     format_complex_list(s.system_load, -1), format_pair_list(s.updated_open_lines, false, true),
                     format_number_list(s.updated_node_voltages, -1, true), format_decimal(s.updated_system_loss)});
  }
  return out;
}

/// Reads the tabular layout. Extra columns (e.g. connectivity matrices) are ignored;
/// scalar impedance cells are read as pure resistance magnitudes.
inline std::vector<DatasetSample> samples_from_csv(std::string_view text, std::string_view network_id = "") {
  std::vector<CsvRow> table = parse_csv(text);
  if (table.empty()) return {};
  std::map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < table[0].size(); ++c) col[table[0][c]] = c;
  for (const auto& name : sample_csv_columns())
    if (!col.contains(name)) throw FormatError("sample table is missing column '" + name + "'");
  std::vector<DatasetSample> out;
  for (std::size_t r = 1; r < table.size(); ++r) {
    const CsvRow& row = table[r];
    auto cell = [&](const char* name) -> const std::string& {
      std::size_t c = col.at(name);
      if (c >= row.size()) throw FormatError("sample row " + std::to_string(r + 1) + " is short");
      return row[c];
    };
    auto scalar = [&](const char* name) {
      Scanner s(cell(name));
      auto v = s.number();
      if (!v) throw FormatError(std::string("bad ") + name + " in row " + std::to_string(r + 1));
      return *v;
    };
    DatasetSample s;
    s.network_id = std::string(network_id);
    s.sample_id = make_sample_id(network_id.empty() ? "row" : network_id, r - 1);
    s.buses = static_cast<int>(scalar("buses"));
    s.lines = parse_pair_list(cell("lines"));
    s.line_impedances = parse_complex_list(cell("line_impedances"));
    s.existing_open_lines = parse_pair_list(cell("existing_open_lines"));
    s.existing_node_voltages = parse_number_list(cell("existing_node_voltages"));
    s.existing_system_loss = scalar("existing_system_loss");
    s.system_load = parse_complex_list(cell("system_load"));
    s.updated_open_lines = parse_pair_list(cell("updated_open_lines"));
    s.updated_node_voltages = parse_number_list(cell("updated_node_voltages"));
    s.updated_system_loss = scalar("updated_system_loss");
    out.push_back(std::move(s));
  }
  return out;
}

/// Rebuilds a network from a tabular sample: loads from system_load, normally-open lines
/// from existing_open_lines, every line switchable.
inline Network network_from_sample(const DatasetSample& s, BusId substation = 1, double base_power = 1.0) {
  if (s.line_impedances.size() != s.lines.size()) throw FormatError("impedance list does not match line list");
  if (static_cast<int>(s.system_load.size()) != s.buses) throw FormatError("load list does not match bus count");
  std::vector<Bus> buses;
  for (int i = 0; i < s.buses; ++i)
    buses.push_back(Bus{i + 1, s.system_load[static_cast<std::size_t>(i)], i + 1 == substation});
  std::vector<Line> lines;
  for (std::size_t i = 0; i < s.lines.size(); ++i)
    lines.push_back(Line{s.lines[i], s.line_impedances[i].real(), s.line_impedances[i].imag(), true, std::nullopt});
  return Network(std::move(buses), std::move(lines), base_power, s.existing_open_lines, s.network_id);
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

struct PromptTemplate {
  std::string system;
  std::string instruction;  // task text, constraint clauses, output format
  std::string input;        // {placeholders} for the serialized input fields
  int augmentation_level = 4;
  bool include_impedances = false;
};

inline constexpr std::string_view kTaskText =
    "Find the optimal configuration, i.e. the optimal connectivity and optimal open lines of these buses and "
    "lines so as to ensure energy distribution to the whole system while minimizing the power loss.";

inline const std::array<std::string_view, 4>& constraint_clauses() {
  static const std::array<std::string_view, 4> clauses{
      "Use only lines that appear in the Lines list of the input; never output a line that is not listed.",
      "The closed lines (all lines except the open lines) must form a single connected component without cycles, "
      "i.e. a radial network.",
      "The number of closed lines must equal the number of buses minus one.",
      "If reconfiguring would increase the system loss, do not reconfigure: return the existing open lines, "
      "node voltages and system loss.",
  };
  return clauses;
}

inline constexpr std::string_view kOutputFormat =
    "Respond with exactly three lines in this format:\n"
    "Updated open lines: (a, b), (c, d), ...\n"
    "Updated node voltages: v1, v2, ..., vN\n"
    "Updated system loss: value";

/// Instruction prompt at a given augmentation level: 0 is the bare task, each level adds one
/// constraint clause (levels above 4 are clamped).
inline PromptTemplate default_template(int augmentation_level = 4, bool include_impedances = false) {
  PromptTemplate t;
  t.augmentation_level = std::clamp(augmentation_level, 0, 4);
  t.include_impedances = include_impedances;
  t.system = "You are a power distribution network operator that reconfigures radial feeders to minimize real power loss.";
  std::string ins(kTaskText);
  ins += "\nBuses is the number of buses N; buses are numbered 1 to N and bus 1 is the substation. "
         "Lines are (from, to) bus pairs. Open lines are deactivated lines; all other lines are closed.";
  if (include_impedances) ins += " Line Impedances are per-unit magnitudes aligned with Lines.";
  for (int i = 0; i < t.augmentation_level; ++i) {
    ins += "\n- ";
    ins += constraint_clauses()[static_cast<std::size_t>(i)];
  }
  ins += "\n";
  ins += kOutputFormat;
  t.instruction = std::move(ins);
  t.input = include_impedances
                ? "Buses: {buses}, Lines: {lines}, Line Impedances: {line_impedances}, Existing Open Lines: "
                  "{existing_open_lines}, Existing Node Voltages: {existing_node_voltages}, Existing System Loss: "
                  "{existing_system_loss}, System Load: {system_load}"
                : "Buses: {buses}, Lines: {lines}, Existing Open Lines: {existing_open_lines}, Existing Node "
                  "Voltages: {existing_node_voltages}, Existing System Loss: {existing_system_loss}, System Load: "
                  "{system_load}";
  return t;
}

inline std::uint64_t template_hash(const PromptTemplate& t) {
  std::uint64_t h = fnv1a(t.system);
  h = fnv1a("\x1f", h);
  h = fnv1a(t.instruction, h);
  h = fnv1a("\x1f", h);
  h = fnv1a(t.input, h);
  return fnv1a(std::to_string(t.augmentation_level) + (t.include_impedances ? "z" : ""), h);
}

struct ChatMessage {
  std::string role;
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct PromptRecord {
  std::vector<ChatMessage> messages;  // system, user
  std::string completion;             // expected assistant turn
  std::string sample_ref;
  std::string network_id;
  int augmentation_level = 0;
  // structured label, carried so evaluators need not re-parse the completion
  std::vector<LinePair> label_open_lines;
  std::vector<double> label_node_voltages;
  double label_system_loss = 0.0;
};

/// Three labeled sections; empty open-line sets render as "[]".
inline std::string render_completion(std::span<const LinePair> open, std::span<const double> voltages, double loss,
                                     int voltage_digits = 4, int loss_digits = 4) {
  std::string out = "Updated open lines: ";
  out += open.empty() ? "[]" : format_pair_list(open, false, false);
  out += "\nUpdated node voltages: ";
  out += voltages.empty() ? "[]" : format_number_list(voltages, voltage_digits, false);
  out += "\nUpdated system loss: ";
  out += format_decimal(loss, loss_digits);
  return out;
}

inline std::string render_completion(const DatasetSample& s, const PrecisionOptions& p = {}) {
  return render_completion(s.updated_open_lines, s.updated_node_voltages, s.updated_system_loss, p.voltage_digits,
                           p.loss_digits);
}

namespace detail {
inline std::string fill_slots(std::string_view tmpl, const std::map<std::string, std::string>& values,
                              std::span<const std::string> required) {
  for (const auto& key : required)
    if (tmpl.find("{" + key + "}") == std::string_view::npos)
      throw TemplateMissingSlot("prompt template has no {" + key + "} placeholder");
  std::string out;
  out.reserve(tmpl.size() * 4);
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] == '{') {
      std::size_t close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}
}  // namespace detail

/// Renders a precision-reduced sample into a chat record. Numbers are printed with the
/// precision they carry, buses as a single count, no connectivity matrices.
inline PromptRecord render_prompt(const DatasetSample& s, const PromptTemplate& t, const PrecisionOptions& p = {}) {
  std::map<std::string, std::string> values{
      {"buses", std::to_string(s.buses)},
      {"lines", format_pair_list(s.lines, true, true)},
      {"existing_open_lines", format_pair_list(s.existing_open_lines, true, true)},
      {"existing_node_voltages", format_number_list(s.existing_node_voltages, p.voltage_digits, true)},
      {"existing_system_loss", format_decimal(s.existing_system_loss, p.loss_digits)},
      {"system_load", format_complex_list(s.system_load, p.load_digits)},
      {"line_impedances", format_number_list(impedance_magnitudes(s.line_impedances, p.impedance_digits), p.impedance_digits, true)},
  };
  std::vector<std::string> required{"buses", "lines", "existing_open_lines", "existing_node_voltages",
                                    "existing_system_loss", "system_load"};
  if (t.include_impedances) required.push_back("line_impedances");
  else values.erase("line_impedances");

  PromptRecord r;
  r.messages.push_back({"system", t.system});
  r.messages.push_back({"user", t.instruction + "\n\n" + detail::fill_slots(t.input, values, required)});
  r.completion = render_completion(s, p);
  r.sample_ref = s.sample_id;
  r.network_id = s.network_id;
  r.augmentation_level = t.augmentation_level;
  r.label_open_lines = s.updated_open_lines;
  r.label_node_voltages = s.updated_node_voltages;
  r.label_system_loss = s.updated_system_loss;
  return r;
}

/// Every input column at full precision plus the bus list and the existing connectivity
/// matrix; the baseline the reduced prompt is measured against.
inline std::string render_unreduced_input(const DatasetSample& s, const PromptTemplate& t) {
  std::vector<double> bus_ids;
  for (int i = 1; i <= s.buses; ++i) bus_ids.push_back(i);
  std::string matrix = "[";
  auto m = connectivity_matrix(s.buses, s.lines, s.existing_open_lines);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (i) matrix += ", ";
    matrix += "[";
    for (std::size_t k = 0; k < m[i].size(); ++k) {
      if (k) matrix += ", ";
      matrix += m[i][k] ? "1" : "0";
    }
    matrix += "]";
  }
  matrix += "]";
  std::string buses = "[";
  for (int i = 1; i <= s.buses; ++i) buses += (i > 1 ? ", " : "") + std::to_string(i);
  buses += "]";
  return t.instruction + "\n\nBuses: " + buses + ", Lines: " + format_pair_list(s.lines, true, true) +
         ", Line Impedances: " + format_number_list(impedance_magnitudes(s.line_impedances), -1, true) +
         ", Existing Connectivity: " + matrix + ", Existing Open Lines: " + format_pair_list(s.existing_open_lines, true, true) +
         ", Existing Node Voltages: " + format_number_list(s.existing_node_voltages, -1, true) +
         ", Existing System Loss: " + format_decimal(s.existing_system_loss) +
         ", System Load: " + format_complex_list(s.system_load, -1);
}

inline Json record_to_json(const PromptRecord& r) {
  Json msgs = Json::array();
  for (const auto& m : r.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  Json label{{"updated_open_lines", pairs_to_json(r.label_open_lines)},
             {"updated_node_voltages", r.label_node_voltages},
             {"updated_system_loss", r.label_system_loss}};
  return Json{{"messages", std::move(msgs)},
              {"completion", r.completion},
              {"meta", {{"network_id", r.network_id}, {"sample_id", r.sample_ref},
                        {"augmentation_level", r.augmentation_level}, {"label", std::move(label)}}}};
}

inline PromptRecord record_from_json(const Json& j) {
  try {
    PromptRecord r;
    for (const auto& m : j.at("messages")) r.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    r.completion = j.value("completion", std::string{});
    const Json& meta = j.at("meta");
    r.network_id = meta.value("network_id", std::string{});
    r.sample_ref = meta.value("sample_id", std::string{});
    r.augmentation_level = meta.value("augmentation_level", 0);
    if (meta.contains("label")) {
      const Json& label = meta["label"];
      r.label_open_lines = pairs_from_json(label.at("updated_open_lines"));
      r.label_node_voltages = label.value("updated_node_voltages", std::vector<double>{});
      r.label_system_loss = label.value("updated_system_loss", 0.0);
    }
    return r;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed prompt record: ") + e.what());
  }
}

/// ChatML text for trainers that consume a flat string.
inline std::string to_chatml(const PromptRecord& r, bool with_completion = true) {
  std::string out;
  for (const auto& m : r.messages) out += "<|im_start|>" + m.role + "\n" + m.content + "<|im_end|>\n";
  out += "<|im_start|>assistant\n";
  if (with_completion) out += r.completion + "<|im_end|>\n";
  return out;
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

enum class Interleave { round_robin, random };

struct DatasetSource {
  NetworkPtr network;
  std::string id;
  LoadProfile profile;
  std::size_t count = 0;
  ScenarioOptions scenario;
  std::optional<LineSet> existing_open;  // defaults to default_open_lines(network)
};

struct DatasetOptions {
  std::array<double, 3> splits{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  std::uint64_t seed = 0;
  Interleave interleave = Interleave::round_robin;
  PromptTemplate prompt = default_template();
  PrecisionOptions precision;
  LabelOptions label;
  unsigned workers = default_workers();
};

inline constexpr std::array<const char*, 3> kSplitNames{"train", "val", "test"};

struct NetworkDataset {
  std::string id;
  NetworkPtr network;
  std::vector<DatasetSample> samples;  // precision-reduced
  std::vector<PromptRecord> records;   // aligned with samples
  std::array<std::vector<std::size_t>, 3> splits;
};

struct BuiltDataset {
  std::vector<NetworkDataset> networks;
  std::array<std::vector<PromptRecord>, 3> combined;
  Json manifest;
};

/// Deterministic Fisher-Yates driven by splitmix64.
inline void seeded_shuffle(std::vector<std::size_t>& v, std::uint64_t seed) {
  std::uint64_t state = seed;
  for (std::size_t i = v.size(); i > 1; --i) {
    state = splitmix64(state);
    std::swap(v[i - 1], v[state % i]);
  }
}

/// Largest-remainder apportionment of `n` items to the split fractions.
inline std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& fractions) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f < 0.0 || !std::isfinite(f)) throw Error("split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("split fractions must sum to 1");
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(counts[i]);
    used += counts[i];
  }
  while (used < n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i)
      if (rem[i] > rem[best]) best = i;
    ++counts[best];
    rem[best] = -1.0;
    ++used;
  }
  while (used > n) {  // only reachable through the epsilon in floor
    for (std::size_t i = 3; i-- > 0;)
      if (counts[i] > 0) {
        --counts[i];
        --used;
        break;
      }
  }
  return counts;
}

inline std::uint64_t records_hash(std::span<const PromptRecord> records) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& r : records) h = fnv1a(record_to_json(r).dump() + "\n", h);
  return h;
}

inline BuiltDataset build_dataset(std::span<const DatasetSource> sources, const DatasetOptions& opt) {
  BuiltDataset out;
  (void)split_counts(0, opt.splits);  // validates fractions before any work
  Json nets_manifest = Json::array();
  for (std::size_t si = 0; si < sources.size(); ++si) {
    const DatasetSource& src = sources[si];
    NetworkDataset nd;
    nd.id = src.id.empty() ? src.network->name() : src.id;
    nd.network = src.network;
    const LineSet existing = src.existing_open ? *src.existing_open : default_open_lines(*src.network);
    ScenarioGenerator gen(*src.network, src.profile, src.scenario);
    nd.samples.resize(src.count);
    nd.records.resize(src.count);
    parallel_for(src.count, opt.workers, [&](std::size_t i) {
      const auto loads = gen(i);
      DatasetSample raw = make_sample(src.network, loads, existing, opt.label, nd.id, i);
      nd.samples[i] = reduce_precision(std::move(raw), opt.precision);
      nd.records[i] = render_prompt(nd.samples[i], opt.prompt, opt.precision);
    });

    std::vector<std::size_t> order(src.count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    seeded_shuffle(order, splitmix64(opt.seed ^ fnv1a(nd.id)));
    const auto counts = split_counts(src.count, opt.splits);
    std::size_t at = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      nd.splits[s].assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                          order.begin() + static_cast<std::ptrdiff_t>(at + counts[s]));
      std::sort(nd.splits[s].begin(), nd.splits[s].end());
      at += counts[s];
    }

    Json nm{{"id", nd.id}, {"buses", src.network->bus_count()}, {"lines", src.network->lines().size()},
            {"samples", src.count}, {"scenario_seed", src.scenario.seed}};
    for (std::size_t s = 0; s < 3; ++s) {
      std::vector<PromptRecord> rs;
      for (std::size_t i : nd.splits[s]) rs.push_back(nd.records[i]);
      nm[kSplitNames[s]] = rs.size();
      nm[std::string(kSplitNames[s]) + "_hash"] = hex64(records_hash(rs));
    }
    nets_manifest.push_back(std::move(nm));
    out.networks.push_back(std::move(nd));
  }

  for (std::size_t s = 0; s < 3; ++s) {
    auto& dst = out.combined[s];
    if (opt.interleave == Interleave::round_robin) {
      std::size_t longest = 0;
      for (const auto& nd : out.networks) longest = std::max(longest, nd.splits[s].size());
      for (std::size_t r = 0; r < longest; ++r)
        for (const auto& nd : out.networks)
          if (r < nd.splits[s].size()) dst.push_back(nd.records[nd.splits[s][r]]);
    } else {
      for (const auto& nd : out.networks)
        for (std::size_t i : nd.splits[s]) dst.push_back(nd.records[i]);
      std::vector<std::size_t> perm(dst.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      seeded_shuffle(perm, splitmix64(opt.seed + s + 1));
      std::vector<PromptRecord> shuffled;
      shuffled.reserve(dst.size());
      for (std::size_t i : perm) shuffled.push_back(std::move(dst[i]));
      dst = std::move(shuffled);
    }
  }

  Json m;
  m["seed"] = opt.seed;
  m["template_hash"] = hex64(template_hash(opt.prompt));
  m["augmentation_level"] = opt.prompt.augmentation_level;
  m["include_impedances"] = opt.prompt.include_impedances;
  m["splits"] = opt.splits;
  m["interleave"] = opt.interleave == Interleave::round_robin ? "round_robin" : "random";
  m["label_method"] = opt.label.method == LabelMethod::exhaustive ? "exhaustive" : "branch_exchange";
  m["precision"] = {{"impedance", opt.precision.impedance_digits}, {"load", opt.precision.load_digits},
                    {"voltage", opt.precision.voltage_digits}, {"loss", opt.precision.loss_digits}};
  m["networks"] = std::move(nets_manifest);
  Json comb;
  std::size_t total = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    comb[kSplitNames[s]] = out.combined[s].size();
    comb[std::string(kSplitNames[s]) + "_hash"] = hex64(records_hash(out.combined[s]));
    total += out.combined[s].size();
  }
  comb["total"] = total;
  m["combined"] = std::move(comb);
  m["manifest_hash"] = hex64(fnv1a(m.dump()));
  out.manifest = std::move(m);
  return out;
}

/// Layout: <out>/<network>/{samples.jsonl,samples.csv,train.jsonl,val.jsonl,test.jsonl},
/// <out>/combined/{train,val,test}.jsonl, <out>/manifest.json.
inline void write_dataset(const BuiltDataset& ds, const std::filesystem::path& out) {
  for (const auto& nd : ds.networks) {
    const auto dir = out / nd.id;
    std::vector<Json> rows;
    for (const auto& s : nd.samples) rows.push_back(sample_to_json(s));
    write_jsonl(dir / "samples.jsonl", rows);
    write_text_file(dir / "samples.csv", samples_to_csv(nd.samples));
    for (std::size_t s = 0; s < 3; ++s) {
      std::vector<Json> recs;
      for (std::size_t i : nd.splits[s]) recs.push_back(record_to_json(nd.records[i]));
      write_jsonl(dir / (std::string(kSplitNames[s]) + ".jsonl"), recs);
    }
  }
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<Json> recs;
    for (const auto& r : ds.combined[s]) recs.push_back(record_to_json(r));
    write_jsonl(out / "combined" / (std::string(kSplitNames[s]) + ".jsonl"), recs);
  }
  write_text_file(out / "manifest.json", ds.manifest.dump(2) + "\n");
}

}  // namespace gridreconf
