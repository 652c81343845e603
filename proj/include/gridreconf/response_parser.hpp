#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "gridreconf/format.hpp"
#include "gridreconf/network.hpp"
#include "gridreconf/network_io.hpp"

namespace gridreconf {

enum class ParseStatus { proper, partial, improper };

inline const char* to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::proper: return "proper";
    case ParseStatus::partial: return "partial";
    case ParseStatus::improper: return "improper";
  }
  return "improper";
}

inline ParseStatus parse_status_from_string(std::string_view s) {
  if (s == "proper") return ParseStatus::proper;
  if (s == "partial") return ParseStatus::partial;
  return ParseStatus::improper;
}

struct ParsedResponse {
  std::vector<LinePair> open_lines;  // canonical, in response order, duplicates kept
  std::vector<double> node_voltages;
  std::optional<double> system_loss;
  ParseStatus status = ParseStatus::improper;
  std::size_t raw_length = 0;
  std::vector<std::string> diagnostics;

  bool has_open_lines = false;
  bool has_node_voltages = false;
  bool has_system_loss = false;
};

namespace detail {

inline bool is_closing(char c) { return c == ')' || c == ']' || c == '}'; }

/// One cleaning pass; appends the names of the rules that changed something.
inline std::string clean_pass(std::string_view in, std::set<std::string>& actions) {
  std::string s;
  s.reserve(in.size());
  for (unsigned char c : in) {
    if (c == '\n' || (c >= 0x20 && c < 0x7F)) {
      s.push_back(static_cast<char>(c));
    } else if (c == '\t' || c == '\v' || c == '\f') {
      s.push_back(' ');
      actions.insert("collapsed_whitespace");
    } else {
      actions.insert("removed_invalid_characters");
    }
  }

  // collapse space runs, trim line ends, drop blank lines
  std::string t;
  t.reserve(s.size());
  std::size_t start = 0;
  bool first_line = true;
  while (start <= s.size()) {
    std::size_t end = s.find('\n', start);
    if (end == std::string::npos) end = s.size();
    std::string_view line(s.data() + start, end - start);
    std::string collapsed;
    for (char c : line) {
      if (c == ' ' && (collapsed.empty() || collapsed.back() == ' ')) continue;
      collapsed.push_back(c);
    }
    while (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
    if (collapsed.size() != line.size()) actions.insert("collapsed_whitespace");
    if (collapsed.empty()) {
      if (end < s.size() || !line.empty()) actions.insert("collapsed_whitespace");
    } else {
      if (!first_line) t.push_back('\n');
      t += collapsed;
      first_line = false;
    }
    start = end + 1;
  }

  // comma rules: no space before a comma, no repeated commas, no trailing comma
  std::string u;
  u.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    char c = t[i];
    if (c == ',') {
      if (!u.empty() && u.back() == ' ') {
        u.pop_back();
        actions.insert("removed_space_before_comma");
      }
      if (!u.empty() && u.back() == ',') {
        actions.insert("removed_repeated_comma");
        continue;
      }
      std::size_t j = i + 1;
      while (j < t.size() && t[j] == ' ') ++j;
      if (j == t.size() || t[j] == '\n' || is_closing(t[j])) {
        actions.insert("removed_trailing_comma");
        continue;
      }
    }
    u.push_back(c);
  }
  return u;
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    else if (c == '_') c = ' ';
  }
  return out;
}

}  // namespace detail

/// Strips non-printable and non-ASCII bytes, collapses whitespace runs and blank lines,
/// and removes stray commas (before a comma, repeated, or before a line end / closing
/// delimiter). Applied to a fixpoint, so clean(clean(x)) == clean(x).
inline std::string clean(std::string_view raw, std::vector<std::string>* actions = nullptr) {
  std::set<std::string> applied;
  std::string cur = detail::clean_pass(raw, applied);
  for (int guard = 0; guard < 64; ++guard) {
    std::string next = detail::clean_pass(cur, applied);
    if (next == cur) break;
    cur = std::move(next);
  }
  if (actions) actions->assign(applied.begin(), applied.end());
  return cur;
}

namespace detail {

enum class Section { open_lines, node_voltages, system_loss };

/// Position just after "<key>:" for each acceptable label occurrence, in text order.
/// Labels preceded by the word "existing" refer to the prompt's input and are skipped.
inline std::vector<std::pair<std::size_t, std::string>> label_sites(const std::string& lower, std::string_view key) {
  std::vector<std::pair<std::size_t, std::string>> out;
  for (std::size_t at = lower.find(key); at != std::string::npos; at = lower.find(key, at + 1)) {
    std::size_t p = at + key.size();
    while (p < lower.size() && lower[p] == ' ') ++p;
    if (p >= lower.size() || lower[p] != ':') continue;
    std::size_t q = at;
    while (q > 0 && lower[q - 1] == ' ') --q;
    std::size_t w = q;
    while (w > 0 && lower[w - 1] >= 'a' && lower[w - 1] <= 'z') --w;
    std::string prefix = lower.substr(w, q - w);
    if (prefix == "existing" || prefix == "initial") continue;
    out.emplace_back(p + 1, prefix);
  }
  return out;
}

template <typename Item>
bool scan_list(Scanner& s, std::vector<Item>& out, auto&& read_item) {
  s.skip_space_and_newlines();
  const bool bracket = s.eat('[');
  if (bracket && s.eat(']')) return true;
  auto first = read_item();
  if (!first) return false;
  out.push_back(*first);
  while (true) {
    std::size_t before = s.pos();
    if (!s.eat(',')) break;
    auto next = read_item();
    if (!next) {
      s.seek(before);
      break;
    }
    out.push_back(*next);
  }
  if (bracket) s.eat(']');
  return true;
}

}  // namespace detail

/// Extracts the open-line, node-voltage and system-loss sections of a model response.
/// Labels are matched case-insensitively with any leading qualifier ("Updated",
/// "Extracted", ...); the first occurrence whose value parses wins. Never throws.
inline ParsedResponse extract(std::string_view raw) {
  ParsedResponse out;
  out.raw_length = raw.size();
  std::vector<std::string> actions;
  const std::string text = clean(raw, &actions);
  for (auto& a : actions) out.diagnostics.push_back("clean:" + a);
  const std::string lower = detail::ascii_lower(text);

  for (auto [site, prefix] : detail::label_sites(lower, "open lines")) {
    Scanner s(text, site);
    std::vector<LinePair> pairs;
    if (detail::scan_list(s, pairs, [&] { return s.pair(); })) {
      out.open_lines = std::move(pairs);
      out.has_open_lines = true;
      out.diagnostics.push_back("label:open lines:" + (prefix.empty() ? std::string("bare") : prefix));
      break;
    }
  }
  for (auto [site, prefix] : detail::label_sites(lower, "node voltages")) {
    Scanner s(text, site);
    std::vector<double> values;
    if (detail::scan_list(s, values, [&] { return s.number(); })) {
      out.node_voltages = std::move(values);
      out.has_node_voltages = true;
      out.diagnostics.push_back("label:node voltages:" + (prefix.empty() ? std::string("bare") : prefix));
      break;
    }
  }
  for (auto [site, prefix] : detail::label_sites(lower, "system loss")) {
    Scanner s(text, site);
    s.skip_space_and_newlines();
    if (auto v = s.number()) {
      out.system_loss = *v;
      out.has_system_loss = true;
      out.diagnostics.push_back("label:system loss:" + (prefix.empty() ? std::string("bare") : prefix));
      break;
    }
  }

  const int matched = int(out.has_open_lines) + int(out.has_node_voltages) + int(out.has_system_loss);
  out.status = matched == 3 ? ParseStatus::proper : matched == 0 ? ParseStatus::improper : ParseStatus::partial;
  return out;
}

enum class ViolationKind { invalid_edge, wrong_voltage_count, negative_loss, duplicate_pair };

inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::invalid_edge: return "invalid_edge";
    case ViolationKind::wrong_voltage_count: return "wrong_voltage_count";
    case ViolationKind::negative_loss: return "negative_loss";
    case ViolationKind::duplicate_pair: return "duplicate_pair";
  }
  return "unknown";
}

struct Violation {
  ViolationKind kind;
  std::string detail;
};

/// Semantic checks on a parsed response. Does not change the parse status.
inline std::vector<Violation> validate(const ParsedResponse& parsed, const Network& net, int n_buses) {
  std::vector<Violation> out;
  LineSet seen;
  for (const auto& p : parsed.open_lines) {
    if (!net.has_line(p)) out.push_back({ViolationKind::invalid_edge, p.str()});
    if (!seen.insert(p).second) out.push_back({ViolationKind::duplicate_pair, p.str()});
  }
  if (static_cast<int>(parsed.node_voltages.size()) != n_buses)
    out.push_back({ViolationKind::wrong_voltage_count,
                   std::to_string(parsed.node_voltages.size()) + " voltages for " + std::to_string(n_buses) + " buses"});
  if (parsed.system_loss && *parsed.system_loss < 0.0)
    out.push_back({ViolationKind::negative_loss, format_decimal(*parsed.system_loss)});
  return out;
}

inline Json parsed_to_json(const ParsedResponse& p) {
  Json j;
  j["open_lines"] = pairs_to_json(p.open_lines);
  j["node_voltages"] = p.node_voltages;
  j["system_loss"] = p.system_loss ? Json(*p.system_loss) : Json(nullptr);
  j["status"] = to_string(p.status);
  j["raw_length"] = p.raw_length;
  j["diagnostics"] = p.diagnostics;
  j["sections"] = {{"open_lines", p.has_open_lines}, {"node_voltages", p.has_node_voltages}, {"system_loss", p.has_system_loss}};
  return j;
}

inline ParsedResponse parsed_from_json(const Json& j) {
  try {
    ParsedResponse p;
    p.open_lines = pairs_from_json(j.value("open_lines", Json::array()));
    p.node_voltages = j.value("node_voltages", std::vector<double>{});
    if (j.contains("system_loss") && !j["system_loss"].is_null()) p.system_loss = j["system_loss"].get<double>();
    p.status = parse_status_from_string(j.value("status", std::string("improper")));
    p.raw_length = j.value("raw_length", std::size_t{0});
    p.diagnostics = j.value("diagnostics", std::vector<std::string>{});
    if (j.contains("sections")) {
      const Json& s = j["sections"];
      p.has_open_lines = s.value("open_lines", false);
      p.has_node_voltages = s.value("node_voltages", false);
      p.has_system_loss = s.value("system_loss", false);
    } else {
      p.has_open_lines = !p.open_lines.empty() || p.status == ParseStatus::proper;
      p.has_node_voltages = !p.node_voltages.empty() || p.status == ParseStatus::proper;
      p.has_system_loss = p.system_loss.has_value();
    }
    return p;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed parsed row: ") + e.what());
  }
}

inline Json violations_to_json(const std::vector<Violation>& vs) {
  Json out = Json::array();
  for (const auto& v : vs) out.push_back({{"kind", to_string(v.kind)}, {"detail", v.detail}});
  return out;
}

}  // namespace gridreconf
