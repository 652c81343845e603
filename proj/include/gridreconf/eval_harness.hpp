#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridreconf/csv.hpp"
#include "gridreconf/dataset.hpp"
#include "gridreconf/format.hpp"
#include "gridreconf/loss_evaluator.hpp"
#include "gridreconf/network.hpp"
#include "gridreconf/network_io.hpp"
#include "gridreconf/parallel.hpp"
#include "gridreconf/response_parser.hpp"

namespace gridreconf {

struct ResponseRow {
  std::string id;
  std::string response_text;
  std::optional<double> inference_seconds;
};

struct LabelRow {
  std::string id;
  std::vector<LinePair> open_lines;
  std::vector<double> node_voltages;
  std::optional<double> system_loss;
};

namespace detail {
inline std::string id_of(const Json& row) {
  for (const char* key : {"id", "sample_id"})
    if (row.contains(key)) return row[key].is_string() ? row[key].get<std::string>() : row[key].dump();
  if (row.contains("meta") && row["meta"].contains("sample_id")) return row["meta"]["sample_id"].get<std::string>();
  throw FormatError("row has no id: " + row.dump().substr(0, 120));
}
}  // namespace detail

inline ResponseRow response_from_json(const Json& row) {
  ResponseRow r;
  r.id = detail::id_of(row);
  for (const char* key : {"response_text", "response", "text"})
    if (row.contains(key) && row[key].is_string()) {
      r.response_text = row[key].get<std::string>();
      break;
    }
  if (row.contains("inference_seconds") && row["inference_seconds"].is_number())
    r.inference_seconds = row["inference_seconds"].get<double>();
  return r;
}

/// Accepts dataset records (label under meta.label), sample rows, or flat label rows.
inline LabelRow label_from_json(const Json& row) {
  LabelRow l;
  l.id = detail::id_of(row);
  const Json* src = &row;
  if (row.contains("meta") && row["meta"].contains("label")) src = &row["meta"]["label"];
  else if (row.contains("label") && row["label"].is_object()) src = &row["label"];
  if (src->contains("updated_open_lines")) l.open_lines = pairs_from_json((*src)["updated_open_lines"]);
  else if (src->contains("label_open_lines")) l.open_lines = pairs_from_json((*src)["label_open_lines"]);
  else throw FormatError("label row " + l.id + " has no updated_open_lines");
  if (src->contains("updated_node_voltages")) l.node_voltages = (*src)["updated_node_voltages"].get<std::vector<double>>();
  if (src->contains("updated_system_loss") && (*src)["updated_system_loss"].is_number())
    l.system_loss = (*src)["updated_system_loss"].get<double>();
  return l;
}

struct SampleScore {
  std::string id;
  ParsedResponse parsed;
  std::vector<Violation> violations;
  LossComponents loss;
  std::optional<double> voltage_mae;
  std::optional<double> true_loss;
  std::optional<double> inferred_loss;
  std::optional<double> inference_seconds;
};

struct TimingStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  std::vector<double> run_means;
  int runs = 0;

  friend bool operator==(const TimingStats&, const TimingStats&) = default;
};

struct EvalReport {
  std::string network_id;
  std::size_t n_samples = 0;
  std::size_t proper_count = 0;
  std::size_t partial_count = 0;
  std::size_t improper_count = 0;
  double mean_cycles = 0.0;     // over scored (non-improper) samples
  double mean_subgraphs = 0.0;  // over scored (non-improper) samples
  std::size_t cycle_count = 0;     // samples with cycle raw > 0
  std::size_t subgraph_count = 0;  // samples with subgraph raw > 0
  std::size_t suboptimal_count = 0;
  std::size_t invalid_edge_count = 0;  // samples predicting at least one line absent from the network
  double voltage_mae = 0.0;
  std::size_t voltage_mae_samples = 0;
  double mean_total_loss = 0.0;
  std::vector<std::pair<double, double>> loss_curve;  // (true, inferred), ordered by sample id
  std::optional<double> mean_inference_seconds;
  std::optional<TimingStats> timing;
  std::size_t missing_labels = 0;
  bool endpoint_failure = false;
  std::size_t failed_requests = 0;
  std::string config_hash;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct CorpusEvaluation {
  EvalReport report;
  std::vector<SampleScore> samples;  // in response order, missing labels skipped
};

inline SampleScore score_response(const ResponseRow& resp, const LabelRow& label, const Network& net,
                                  const LossOptions& opt) {
  SampleScore s;
  s.id = resp.id;
  s.inference_seconds = resp.inference_seconds;
  s.parsed = extract(resp.response_text);
  if (s.parsed.status != ParseStatus::improper) s.violations = validate(s.parsed, net, net.bus_count());
  s.loss = evaluate_loss(s.parsed, net, label.open_lines, 0.0, opt);
  const auto n = static_cast<std::size_t>(net.bus_count());
  if (s.parsed.status == ParseStatus::proper && s.parsed.node_voltages.size() == n && label.node_voltages.size() == n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::abs(s.parsed.node_voltages[i] - label.node_voltages[i]);
    s.voltage_mae = sum / static_cast<double>(n);
  }
  s.true_loss = label.system_loss;
  if (s.parsed.system_loss && !s.loss.improper) s.inferred_loss = s.parsed.system_loss;
  return s;
}

inline std::string eval_config_hash(const Network& net, const LossOptions& opt, std::span<const LabelRow> labels) {
  std::uint64_t h = fnv1a(network_to_json(net).dump());
  h = fnv1a(lambdas_to_json(opt.lambdas).dump(), h);
  h = fnv1a(opt.base == ScalingBase::predicted_open_lines ? "predicted" : "closed", h);
  std::vector<std::string> ids;
  for (const auto& l : labels) ids.push_back(l.id);
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) h = fnv1a(id + ";", h);
  return hex64(h);
}

/// Aggregates independent of row order: contributions are reduced in sample-id order.
inline EvalReport aggregate(std::vector<const SampleScore*> rows, std::size_t missing) {
  std::sort(rows.begin(), rows.end(), [](const SampleScore* a, const SampleScore* b) { return a->id < b->id; });
  EvalReport r;
  r.n_samples = rows.size();
  r.missing_labels = missing;
  double cyc = 0.0, sub = 0.0, mae_sum = 0.0, total = 0.0, secs = 0.0;
  std::size_t scored = 0, timed = 0;
  for (const SampleScore* s : rows) {
    switch (s->parsed.status) {
      case ParseStatus::proper: ++r.proper_count; break;
      case ParseStatus::partial: ++r.partial_count; break;
      case ParseStatus::improper: break;
    }
    total += s->loss.total;
    if (s->inference_seconds) {
      secs += *s->inference_seconds;
      ++timed;
    }
    if (s->loss.improper) {
      ++r.improper_count;
      continue;
    }
    ++scored;
    cyc += s->loss.cycle;
    sub += s->loss.subgraph;
    if (s->loss.cycle > 0) ++r.cycle_count;
    if (s->loss.subgraph > 0) ++r.subgraph_count;
    if (s->loss.subconfig > 0) ++r.suboptimal_count;
    if (s->loss.invalid_edges > 0) ++r.invalid_edge_count;
    if (s->voltage_mae) {
      mae_sum += *s->voltage_mae;
      ++r.voltage_mae_samples;
    }
    if (s->true_loss && s->inferred_loss) r.loss_curve.emplace_back(*s->true_loss, *s->inferred_loss);
  }
  if (scored) {
    r.mean_cycles = cyc / static_cast<double>(scored);
    r.mean_subgraphs = sub / static_cast<double>(scored);
  }
  if (r.voltage_mae_samples) r.voltage_mae = mae_sum / static_cast<double>(r.voltage_mae_samples);
  if (!rows.empty()) r.mean_total_loss = total / static_cast<double>(rows.size());
  if (timed) r.mean_inference_seconds = secs / static_cast<double>(timed);
  return r;
}

/// parse -> validate -> loss components for every response with a label; rows without a
/// label are skipped and counted.
inline CorpusEvaluation evaluate_corpus(std::span<const ResponseRow> responses, std::span<const LabelRow> labels,
                                        const Network& net, const LossOptions& opt = {},
                                        unsigned workers = default_workers()) {
  std::map<std::string, const LabelRow*> by_id;
  for (const auto& l : labels) by_id.emplace(l.id, &l);
  std::vector<std::pair<const ResponseRow*, const LabelRow*>> jobs;
  std::size_t missing = 0;
  for (const auto& r : responses) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) ++missing;
    else jobs.emplace_back(&r, it->second);
  }
  CorpusEvaluation out;
  out.samples.resize(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    out.samples[i] = score_response(*jobs[i].first, *jobs[i].second, net, opt);
  });
  std::vector<const SampleScore*> ptrs;
  for (const auto& s : out.samples) ptrs.push_back(&s);
  out.report = aggregate(std::move(ptrs), missing);
  out.report.network_id = net.name();
  out.report.config_hash = eval_config_hash(net, opt, labels);
  return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

enum class ReportFormat { text, csv, json };

inline Json report_to_json(const EvalReport& r) {
  Json j;
  j["network_id"] = r.network_id;
  j["n_samples"] = r.n_samples;
  j["proper_count"] = r.proper_count;
  j["partial_count"] = r.partial_count;
  j["improper_count"] = r.improper_count;
  j["mean_cycles"] = r.mean_cycles;
  j["mean_subgraphs"] = r.mean_subgraphs;
  j["cycle_count"] = r.cycle_count;
  j["subgraph_count"] = r.subgraph_count;
  j["suboptimal_count"] = r.suboptimal_count;
  j["invalid_edge_count"] = r.invalid_edge_count;
  j["voltage_mae"] = r.voltage_mae;
  j["voltage_mae_samples"] = r.voltage_mae_samples;
  j["mean_total_loss"] = r.mean_total_loss;
  Json curve = Json::array();
  for (auto [t, i] : r.loss_curve) curve.push_back({t, i});
  j["loss_curve"] = std::move(curve);
  j["mean_inference_seconds"] = r.mean_inference_seconds ? Json(*r.mean_inference_seconds) : Json(nullptr);
  if (r.timing) {
    j["timing"] = {{"min", r.timing->min}, {"mean", r.timing->mean}, {"max", r.timing->max},
                   {"run_means", r.timing->run_means}, {"runs", r.timing->runs}};
  } else {
    j["timing"] = nullptr;
  }
  j["missing_labels"] = r.missing_labels;
  j["endpoint_failure"] = r.endpoint_failure;
  j["failed_requests"] = r.failed_requests;
  j["config_hash"] = r.config_hash;
  return j;
}

inline EvalReport report_from_json(const Json& j) {
  EvalReport r;
  r.network_id = j.value("network_id", std::string{});
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.proper_count = j.value("proper_count", std::size_t{0});
  r.partial_count = j.value("partial_count", std::size_t{0});
  r.improper_count = j.at("improper_count").get<std::size_t>();
  r.mean_cycles = j.at("mean_cycles").get<double>();
  r.mean_subgraphs = j.at("mean_subgraphs").get<double>();
  r.cycle_count = j.value("cycle_count", std::size_t{0});
  r.subgraph_count = j.value("subgraph_count", std::size_t{0});
  r.suboptimal_count = j.at("suboptimal_count").get<std::size_t>();
  r.invalid_edge_count = j.value("invalid_edge_count", std::size_t{0});
  r.voltage_mae = j.at("voltage_mae").get<double>();
  r.voltage_mae_samples = j.value("voltage_mae_samples", std::size_t{0});
  r.mean_total_loss = j.value("mean_total_loss", 0.0);
  for (const auto& p : j.at("loss_curve")) r.loss_curve.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  if (!j["mean_inference_seconds"].is_null()) r.mean_inference_seconds = j["mean_inference_seconds"].get<double>();
  if (j.contains("timing") && !j["timing"].is_null()) {
    const Json& t = j["timing"];
    r.timing = TimingStats{t.at("min").get<double>(), t.at("mean").get<double>(), t.at("max").get<double>(),
                           t.at("run_means").get<std::vector<double>>(), t.at("runs").get<int>()};
  }
  r.missing_labels = j.value("missing_labels", std::size_t{0});
  r.endpoint_failure = j.value("endpoint_failure", false);
  r.failed_requests = j.value("failed_requests", std::size_t{0});
  r.config_hash = j.value("config_hash", std::string{});
  return r;
}

/// Text layout is a metric table: Cycles, Subgraphs, Suboptimal Config.,
/// Improper outputs, plus the sample count.
inline std::string render_report(const EvalReport& r, ReportFormat fmt) {
  if (fmt == ReportFormat::json) return report_to_json(r).dump(2) + "\n";
  const std::string name = r.network_id.empty() ? "-" : r.network_id;
  if (fmt == ReportFormat::csv) {
    std::string out = csv_line({"network", "samples", "cycles", "subgraphs", "suboptimal_config", "improper_outputs",
                                "cycle_count", "subgraph_count", "invalid_edge_count", "voltage_mae",
                                "mean_inference_seconds"});
    out += csv_line({name, std::to_string(r.n_samples), format_decimal(r.mean_cycles, 2),
                     format_decimal(r.mean_subgraphs, 2), std::to_string(r.suboptimal_count),
                     std::to_string(r.improper_count), std::to_string(r.cycle_count), std::to_string(r.subgraph_count),
                     std::to_string(r.invalid_edge_count), format_decimal(r.voltage_mae, 6),
                     r.mean_inference_seconds ? format_decimal(*r.mean_inference_seconds, 3) : ""});
    return out;
  }
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  char buf[32];
  auto fixed2 = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  const std::size_t w0 = std::max<std::size_t>(name.size(), 7) + 2;
  std::string out = pad("Network", w0) + pad("Samples", 9) + pad("Cycles", 8) + pad("Subgraphs", 11) +
                    pad("Suboptimal Config.", 20) + "Improper outputs\n";
  out += pad(name, w0) + pad(std::to_string(r.n_samples), 9) + pad(fixed2(r.mean_cycles), 8) +
         pad(fixed2(r.mean_subgraphs), 11) + pad(std::to_string(r.suboptimal_count), 20) +
         std::to_string(r.improper_count) + "\n\n";
  out += "proper / partial / improper: " + std::to_string(r.proper_count) + " / " + std::to_string(r.partial_count) +
         " / " + std::to_string(r.improper_count) + "\n";
  out += "samples with cycles: " + std::to_string(r.cycle_count) + ", with subgraphs: " +
         std::to_string(r.subgraph_count) + ", with invalid edges: " + std::to_string(r.invalid_edge_count) + "\n";
  out += "voltage MAE (p.u.): " + format_decimal(r.voltage_mae, 6) + " over " + std::to_string(r.voltage_mae_samples) +
         " responses\n";
  if (r.timing) {
    std::snprintf(buf, sizeof buf, "%.3f", r.timing->mean);
    out += "inference time (s): mean " + std::string(buf);
    std::snprintf(buf, sizeof buf, "%.3f", r.timing->min);
    out += ", min " + std::string(buf);
    std::snprintf(buf, sizeof buf, "%.3f", r.timing->max);
    out += ", max " + std::string(buf) + " over " + std::to_string(r.timing->runs) + " run(s)\n";
  }
  if (r.missing_labels) out += "responses without label: " + std::to_string(r.missing_labels) + "\n";
  if (r.endpoint_failure) out += "endpoint failure: " + std::to_string(r.failed_requests) + " request(s) failed\n";
  out += "config hash: " + r.config_hash + "\n";
  return out;
}

inline Json score_to_json(const SampleScore& s) {
  Json j = parsed_to_json(s.parsed);
  j["id"] = s.id;
  j["violations"] = violations_to_json(s.violations);
  j["loss"] = loss_to_json(s.loss);
  j["voltage_mae"] = s.voltage_mae ? Json(*s.voltage_mae) : Json(nullptr);
  j["true_loss"] = s.true_loss ? Json(*s.true_loss) : Json(nullptr);
  j["inferred_loss"] = s.inferred_loss ? Json(*s.inferred_loss) : Json(nullptr);
  j["inference_seconds"] = s.inference_seconds ? Json(*s.inference_seconds) : Json(nullptr);
  return j;
}

/// report.{txt,csv,json}, per_sample.jsonl, plots/loss_overlay.csv, plots/voltage_mae.csv.
inline void write_eval_outputs(const CorpusEvaluation& ev, const std::filesystem::path& dir) {
  write_text_file(dir / "report.txt", render_report(ev.report, ReportFormat::text));
  write_text_file(dir / "report.csv", render_report(ev.report, ReportFormat::csv));
  write_text_file(dir / "report.json", render_report(ev.report, ReportFormat::json));
  std::vector<Json> rows;
  for (const auto& s : ev.samples) rows.push_back(score_to_json(s));
  write_jsonl(dir / "per_sample.jsonl", rows);

  std::vector<const SampleScore*> sorted;
  for (const auto& s : ev.samples) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::string overlay = csv_line({"index", "sample_id", "true_loss", "inferred_loss"});
  std::string mae = csv_line({"index", "sample_id", "voltage_mae"});
  std::size_t oi = 0, mi = 0;
  for (const SampleScore* s : sorted) {
    if (s->true_loss && s->inferred_loss)
      overlay += csv_line({std::to_string(oi++), s->id, format_decimal(*s->true_loss), format_decimal(*s->inferred_loss)});
    if (s->voltage_mae) mae += csv_line({std::to_string(mi++), s->id, format_decimal(*s->voltage_mae)});
  }
  write_text_file(dir / "plots" / "loss_overlay.csv", overlay);
  write_text_file(dir / "plots" / "voltage_mae.csv", mae);
}

// ---------------------------------------------------------------------------
// Scoring rows (CLI `score` and the HTTP /score endpoint share this schema)
// ---------------------------------------------------------------------------

/// Request: a parsed row (open_lines, node_voltages, system_loss, status[, sections]) or a
/// raw `response_text`, plus the label as `label_open_lines`, `updated_open_lines` or
/// `label.updated_open_lines`; optional `reg` and `lambdas`.
inline Json score_row(const Json& request, const Network& net, const LossOptions& defaults) {
  LossOptions opt = defaults;
  if (request.contains("lambdas")) opt.lambdas = lambdas_from_json(request["lambdas"]);
  const double reg = request.value("reg", 0.0);
  ParsedResponse parsed;
  if (request.contains("response_text") && request["response_text"].is_string())
    parsed = extract(request["response_text"].get<std::string>());
  else
    parsed = parsed_from_json(request);
  Json label_src = request;
  if (!request.contains("updated_open_lines") && !request.contains("label_open_lines") && !request.contains("label") &&
      !request.contains("meta"))
    throw FormatError("score request has no label open lines");
  if (!label_src.contains("id")) label_src["id"] = "";
  const LabelRow label = label_from_json(label_src);
  std::vector<Violation> violations;
  if (parsed.status != ParseStatus::improper) violations = validate(parsed, net, net.bus_count());
  LossComponents loss = evaluate_loss(parsed, net, label.open_lines, reg, opt);
  Json out = loss_to_json(loss);
  out["id"] = request.contains("id") ? request["id"] : Json("");
  out["status"] = to_string(parsed.status);
  out["violations"] = violations_to_json(violations);
  return out;
}

}  // namespace gridreconf
