#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "gridreconf/network.hpp"

namespace gridreconf {

using Json = nlohmann::json;

inline Json pair_to_json(LinePair p) { return Json::array({p.lo, p.hi}); }

inline LinePair pair_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    throw FormatError("line pair must be a two-element integer array, got " + j.dump());
  return LinePair{j[0].get<BusId>(), j[1].get<BusId>()};
}

template <typename Range>
Json pairs_to_json(const Range& pairs) {
  Json out = Json::array();
  for (const LinePair& p : pairs) out.push_back(pair_to_json(p));
  return out;
}

inline std::vector<LinePair> pairs_from_json(const Json& j) {
  if (!j.is_array()) throw FormatError("expected an array of line pairs");
  std::vector<LinePair> out;
  out.reserve(j.size());
  for (const auto& e : j) out.push_back(pair_from_json(e));
  return out;
}

/// Network document: `buses` (id, p_load, q_load, is_substation), `lines`
/// (from, to, r, x, switchable, capacity), `base_power`, optional `name` and
/// `normally_open`. Bus loads and impedances are per-unit; base_power is MVA.
inline Json network_to_json(const Network& net) {
  Json j;
  j["name"] = net.name();
  j["base_power"] = net.base_power();
  Json buses = Json::array();
  for (const auto& b : net.buses())
    buses.push_back({{"id", b.id}, {"p_load", b.load.real()}, {"q_load", b.load.imag()}, {"is_substation", b.is_substation}});
  j["buses"] = std::move(buses);
  Json lines = Json::array();
  for (const auto& l : net.lines()) {
    Json lj{{"from", l.ends.lo}, {"to", l.ends.hi}, {"r", l.r}, {"x", l.x}, {"switchable", l.switchable}};
    lj["capacity"] = l.capacity ? Json(*l.capacity) : Json(nullptr);
    lines.push_back(std::move(lj));
  }
  j["lines"] = std::move(lines);
  j["normally_open"] = pairs_to_json(net.normally_open());
  return j;
}

inline Network network_from_json(const Json& j) {
  try {
    std::vector<Bus> buses;
    for (const auto& bj : j.at("buses")) {
      Bus b;
      b.id = bj.at("id").get<BusId>();
      b.load = {bj.value("p_load", 0.0), bj.value("q_load", 0.0)};
      b.is_substation = bj.value("is_substation", false);
      buses.push_back(b);
    }
    std::vector<Line> lines;
    for (const auto& lj : j.at("lines")) {
      Line l;
      l.ends = LinePair{lj.at("from").get<BusId>(), lj.at("to").get<BusId>()};
      l.r = lj.at("r").get<double>();
      l.x = lj.value("x", 0.0);
      l.switchable = lj.value("switchable", true);
      if (lj.contains("capacity") && !lj["capacity"].is_null()) l.capacity = lj["capacity"].get<double>();
      lines.push_back(l);
    }
    std::vector<LinePair> normally_open;
    if (j.contains("normally_open")) normally_open = pairs_from_json(j["normally_open"]);
    return Network(std::move(buses), std::move(lines), j.value("base_power", 1.0), std::move(normally_open),
                   j.value("name", std::string{}));
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed network document: ") + e.what());
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

inline Network load_network_json(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  Network net = network_from_json(j);
  if (net.name().empty())
    return Network({net.buses().begin(), net.buses().end()}, {net.lines().begin(), net.lines().end()},
                   net.base_power(), {net.normally_open().begin(), net.normally_open().end()},
                   path.stem().string());
  return net;
}

inline void save_network_json(const Network& net, const std::filesystem::path& path) {
  write_text_file(path, network_to_json(net).dump(2) + "\n");
}

/// Reads a JSONL file, one document per non-empty line.
inline std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<Json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows) {
  std::string text;
  for (const auto& r : rows) {
    text += r.dump(-1, ' ', false, Json::error_handler_t::replace);
    text += '\n';
  }
  write_text_file(path, text);
}

}  // namespace gridreconf
