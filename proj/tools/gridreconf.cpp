// gridreconf command-line tool: dataset generation, response parsing, loss scoring,
// evaluation and a few network utilities.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "httplib.h"

#include "gridreconf/gridreconf.hpp"

namespace fs = std::filesystem;
using namespace gridreconf;

namespace {

/// Lets `--config file.json` hold the same keys as the TOML form, with subcommand
/// sections as nested objects.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    throw CLI::ConfigError("writing JSON config files is not supported");
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw CLI::ConfigError(e.what());
    }
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  static void flatten(const Json& j, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& items) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it->is_object()) {
        auto p = parents;
        p.push_back(it.key());
        flatten(*it, p, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it->is_array())
        for (const auto& v : *it) item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(*it));
      items.push_back(std::move(item));
    }
  }
};

NetworkPtr load_network_arg(const std::string& arg) {
  if (fs::exists(arg)) return std::make_shared<const Network>(load_network_json(arg));
  if (arg == "ieee33") return feeders::ieee33_ptr();
  throw FormatError("network file not found: " + arg);
}

std::array<double, 3> parse_splits(const std::string& text) {
  std::array<double, 3> out{};
  std::size_t idx = 0, start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    std::string part = text.substr(start, end - start);
    if (idx >= 3) throw FormatError("--splits takes three fractions");
    const std::size_t slash = part.find('/');
    try {
      out[idx++] = slash == std::string::npos ? std::stod(part)
                                              : std::stod(part.substr(0, slash)) / std::stod(part.substr(slash + 1));
    } catch (const std::exception&) {
      throw FormatError("bad split fraction '" + part + "'");
    }
    start = end + 1;
  }
  if (idx != 3) throw FormatError("--splits takes three fractions");
  return out;
}

Lambdas parse_lambdas(const std::string& text) {
  std::vector<double> v = parse_number_list(text);
  if (v.size() != 3) throw FormatError("--lambdas takes three comma-separated weights");
  return {v[0], v[1], v[2]};
}

LineSet parse_open_arg(const Network& net, const std::string& text) {
  if (text.empty()) return default_open_lines(net);
  auto pairs = parse_pair_list(text);
  return LineSet(pairs.begin(), pairs.end());
}

void write_rows_or_stdout(const std::string& out, const std::vector<Json>& rows) {
  if (out.empty() || out == "-") {
    for (const auto& r : rows) std::cout << r.dump() << "\n";
  } else {
    write_jsonl(out, rows);
  }
}

std::map<std::string, Json> rows_by_id(const std::vector<Json>& rows) {
  std::map<std::string, Json> out;
  for (const auto& r : rows) out.emplace(detail::id_of(r), r);
  return out;
}

Json flow_to_json(const PowerFlowResult& r, const ConstraintReport& c) {
  return Json{{"converged", r.converged},
              {"iterations", r.iterations},
              {"system_loss_kw", r.total_loss},
              {"node_voltages", r.voltages},
              {"min_voltage", *std::min_element(r.voltages.begin(), r.voltages.end())},
              {"balance_residual", c.balance_residual},
              {"feasible", c.feasible()},
              {"voltage_violations", c.voltage_violations.size()},
              {"overloaded_lines", pairs_to_json(c.overloaded_lines)}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distribution network reconfiguration toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML or JSON file holding any of the flags");
  for (int i = 1; i + 1 < argc; ++i) {
    const std::string a = argv[i];
    if ((a == "--config" && fs::path(argv[i + 1]).extension() == ".json")) {
      app.config_formatter(std::make_shared<JsonConfig>());
      break;
    }
    if (a.rfind("--config=", 0) == 0 && fs::path(a.substr(9)).extension() == ".json") {
      app.config_formatter(std::make_shared<JsonConfig>());
      break;
    }
  }

  // dataset
  auto* ds = app.add_subcommand("dataset", "Generate labeled samples and prompt records");
  std::vector<std::string> ds_networks, ds_profiles;
  std::vector<std::size_t> ds_counts{100};
  std::uint64_t ds_seed = 0;
  std::string ds_splits = "1/3,1/3,1/3", ds_out, ds_interleave = "round-robin", ds_method = "branch-exchange";
  int ds_aug = 4;
  bool ds_imp = false;
  double ds_jitter = 0.0;
  unsigned ds_workers = default_workers();
  ds->add_option("--network", ds_networks, "Network JSON file (repeatable) or 'ieee33'")->required();
  ds->add_option("--profiles", ds_profiles, "Load-profile CSV per network; synthetic when omitted");
  ds->add_option("--count", ds_counts, "Samples per network (one value or one per network)");
  ds->add_option("--seed", ds_seed, "Seed for scenarios and splits");
  ds->add_option("--splits", ds_splits, "train,val,test fractions, e.g. 1/3,1/3,1/3");
  ds->add_option("--out", ds_out, "Output directory")->required();
  ds->add_flag("--include-impedances", ds_imp, "Put line impedances in the prompt");
  ds->add_option("--augmentation", ds_aug, "Number of constraint clauses in the instruction (0-4)")
      ->check(CLI::Range(0, 4));
  ds->add_option("--interleave", ds_interleave, "round-robin or random")
      ->check(CLI::IsMember({"round-robin", "random"}));
  ds->add_option("--label-method", ds_method, "branch-exchange or exhaustive")
      ->check(CLI::IsMember({"branch-exchange", "exhaustive"}));
  ds->add_option("--jitter", ds_jitter, "Per-bus relative load noise");
  ds->add_option("--workers", ds_workers, "Worker threads");

  // parse
  auto* ps = app.add_subcommand("parse", "Extract structured fields from model responses");
  std::string ps_responses, ps_network, ps_out;
  ps->add_option("--responses", ps_responses, "JSONL rows {id, response_text}")->required();
  ps->add_option("--network", ps_network, "Network JSON file or 'ieee33'")->required();
  ps->add_option("--out", ps_out, "Output JSONL ('-' for stdout)");

  // score
  auto* sc = app.add_subcommand("score", "Loss components for parsed responses");
  std::string sc_parsed, sc_labels, sc_network, sc_lambdas = "1,1,1", sc_out, sc_base = "predicted";
  double sc_reg = 0.0;
  sc->add_option("--parsed", sc_parsed, "JSONL output of `parse`")->required();
  sc->add_option("--labels", sc_labels, "JSONL dataset records or label rows")->required();
  sc->add_option("--network", sc_network, "Network JSON file or 'ieee33'")->required();
  sc->add_option("--lambdas", sc_lambdas, "Weights for cycle, subgraph, subconfig");
  sc->add_option("--reg", sc_reg, "Regular loss added to every total");
  sc->add_option("--scaling", sc_base, "predicted (open lines) or closed (lines)")
      ->check(CLI::IsMember({"predicted", "closed"}));
  sc->add_option("--out", sc_out, "Output JSONL ('-' for stdout)");

  // serve
  auto* sv = app.add_subcommand("serve", "HTTP scoring service (POST /score)");
  std::string sv_network, sv_host = "127.0.0.1", sv_lambdas = "1,1,1";
  int sv_port = 8080;
  sv->add_option("--network", sv_network, "Network JSON file or 'ieee33'")->required();
  sv->add_option("--host", sv_host, "Bind address");
  sv->add_option("--port", sv_port, "Port");
  sv->add_option("--lambdas", sv_lambdas, "Default weights");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a response corpus or a live endpoint");
  std::string ev_mode, ev_split, ev_network, ev_labels, ev_out, ev_lambdas = "1,1,1";
  EndpointConfig ep;
  std::optional<double> ev_temperature;
  std::string ev_extra;
  ev->add_option("mode", ev_mode, "corpus or endpoint")->required()->check(CLI::IsMember({"corpus", "endpoint"}));
  ev->add_option("--split", ev_split, "corpus: response JSONL; endpoint: dataset split JSONL")->required();
  ev->add_option("--network", ev_network, "Network JSON file or 'ieee33'")->required();
  ev->add_option("--labels", ev_labels, "Label JSONL (defaults to the labels inside --split records)");
  ev->add_option("--out", ev_out, "Output directory")->required();
  ev->add_option("--lambdas", ev_lambdas, "Loss weights");
  ev->add_option("--url", ep.url, "Endpoint base URL");
  ev->add_option("--path", ep.path, "Request path override");
  ev->add_option("--model", ep.model, "Model name sent with each request");
  ev->add_option("--max-new-tokens", ep.max_new_tokens, "Generation budget (0 = by network size)");
  ev->add_option("--temperature", ev_temperature, "Sampling temperature");
  ev->add_option("--extra", ev_extra, "JSON object merged into each request body");
  ev->add_flag("--raw-completion", ep.raw_completion, "Use the completions API with a ChatML prompt");
  ev->add_option("--runs", ep.runs, "Repetitions for timing")->check(CLI::PositiveNumber);
  ev->add_option("--concurrency", ep.concurrency, "Parallel requests")->check(CLI::PositiveNumber);
  ev->add_option("--timeout", ep.timeout_seconds, "Per-request timeout in seconds");
  ev->add_option("--retries", ep.attempts, "Attempts per request");

  // utilities
  auto* so = app.add_subcommand("solve", "Power flow for one configuration");
  std::string so_network, so_open;
  double so_scale = 1.0;
  so->add_option("--network", so_network, "Network JSON file or 'ieee33'")->required();
  so->add_option("--open", so_open, "Open lines, e.g. \"(7, 8), (9, 10)\"; normally-open set by default");
  so->add_option("--scale", so_scale, "Load multiplier");

  auto* op = app.add_subcommand("optimize", "Minimum-loss radial configuration");
  std::string op_network, op_open, op_method = "branch-exchange";
  double op_scale = 1.0;
  op->add_option("--network", op_network, "Network JSON file or 'ieee33'")->required();
  op->add_option("--start", op_open, "Start open lines for branch exchange");
  op->add_option("--method", op_method, "branch-exchange or exhaustive")
      ->check(CLI::IsMember({"branch-exchange", "exhaustive"}));
  op->add_option("--scale", op_scale, "Load multiplier");

  auto* ex = app.add_subcommand("export-network", "Write a bundled feeder as network JSON");
  std::string ex_name = "ieee33", ex_out;
  ex->add_option("--name", ex_name, "Bundled feeder")->check(CLI::IsMember({"ieee33"}));
  ex->add_option("--out", ex_out, "Output file")->required();

  auto* pr = app.add_subcommand("profiles", "Write a synthetic hourly load profile CSV");
  std::size_t pr_hours = 8760;
  std::uint64_t pr_seed = 0;
  std::string pr_out;
  pr->add_option("--hours", pr_hours, "Number of hourly rows");
  pr->add_option("--seed", pr_seed, "Noise seed");
  pr->add_option("--out", pr_out, "Output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (ds->parsed()) {
      DatasetOptions opt;
      opt.seed = ds_seed;
      opt.splits = parse_splits(ds_splits);
      opt.interleave = ds_interleave == "random" ? Interleave::random : Interleave::round_robin;
      opt.prompt = default_template(ds_aug, ds_imp);
      opt.label.method = ds_method == "exhaustive" ? LabelMethod::exhaustive : LabelMethod::branch_exchange;
      opt.workers = std::max(1u, ds_workers);
      if (!ds_profiles.empty() && ds_profiles.size() != 1 && ds_profiles.size() != ds_networks.size())
        throw Error("--profiles must be given once or once per --network");
      if (ds_counts.size() != 1 && ds_counts.size() != ds_networks.size())
        throw Error("--count must be given once or once per --network");
      std::vector<DatasetSource> sources;
      for (std::size_t i = 0; i < ds_networks.size(); ++i) {
        DatasetSource src;
        src.network = load_network_arg(ds_networks[i]);
        src.id = src.network->name().empty() ? "net" + std::to_string(i) : src.network->name();
        if (ds_profiles.empty()) src.profile = synthetic_profile(8760, ds_seed);
        else src.profile = read_load_profile_csv(ds_profiles[ds_profiles.size() == 1 ? 0 : i]);
        src.count = ds_counts[ds_counts.size() == 1 ? 0 : i];
        src.scenario = {splitmix64(ds_seed + i), ds_jitter};
        sources.push_back(std::move(src));
      }
      BuiltDataset built = build_dataset(sources, opt);
      write_dataset(built, ds_out);
      std::cout << built.manifest.dump(2) << "\n";
    } else if (ps->parsed()) {
      NetworkPtr net = load_network_arg(ps_network);
      std::vector<Json> out;
      for (Json row : read_jsonl(ps_responses)) {
        const ResponseRow r = response_from_json(row);
        const ParsedResponse parsed = extract(r.response_text);
        const Json fields = parsed_to_json(parsed);
        for (auto it = fields.begin(); it != fields.end(); ++it) row[it.key()] = *it;
        row["violations"] = violations_to_json(validate(parsed, *net, net->bus_count()));
        out.push_back(std::move(row));
      }
      write_rows_or_stdout(ps_out, out);
    } else if (sc->parsed()) {
      NetworkPtr net = load_network_arg(sc_network);
      LossOptions opt;
      opt.lambdas = parse_lambdas(sc_lambdas);
      opt.base = sc_base == "closed" ? ScalingBase::closed_lines : ScalingBase::predicted_open_lines;
      const auto labels = rows_by_id(read_jsonl(sc_labels));
      std::vector<Json> out;
      std::size_t missing = 0;
      for (const Json& row : read_jsonl(sc_parsed)) {
        const std::string id = detail::id_of(row);
        auto it = labels.find(id);
        if (it == labels.end()) {
          ++missing;
          out.push_back({{"id", id}, {"error", "no label for this id"}});
          continue;
        }
        Json req = row;
        req.erase("response_text");
        req["id"] = id;
        req["label_open_lines"] = pairs_to_json(label_from_json(it->second).open_lines);
        req["reg"] = sc_reg;
        out.push_back(score_row(req, *net, opt));
      }
      write_rows_or_stdout(sc_out, out);
      if (missing) std::cerr << missing << " row(s) had no label\n";
    } else if (sv->parsed()) {
      NetworkPtr net = load_network_arg(sv_network);
      LossOptions opt;
      opt.lambdas = parse_lambdas(sv_lambdas);
      httplib::Server server;
      auto reply = [](httplib::Response& res, int status, const Json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
      };
      server.Get("/health", [&](const httplib::Request&, httplib::Response& res) {
        reply(res, 200, {{"status", "ok"}, {"network", net->name()}});
      });
      server.Post("/score", [&](const httplib::Request& req, httplib::Response& res) {
        try {
          Json body = Json::parse(req.body);
          if (body.is_array()) {
            Json out = Json::array();
            for (const auto& row : body) out.push_back(score_row(row, *net, opt));
            reply(res, 200, out);
          } else {
            reply(res, 200, score_row(body, *net, opt));
          }
        } catch (const std::exception& e) {
          reply(res, 400, {{"error", e.what()}});
        }
      });
      std::cerr << "listening on " << sv_host << ":" << sv_port << "\n";
      if (!server.listen(sv_host, sv_port)) throw Error("cannot bind " + sv_host + ":" + std::to_string(sv_port));
    } else if (ev->parsed()) {
      NetworkPtr net = load_network_arg(ev_network);
      LossOptions opt;
      opt.lambdas = parse_lambdas(ev_lambdas);
      std::vector<LabelRow> labels;
      if (!ev_labels.empty())
        for (const auto& row : read_jsonl(ev_labels)) labels.push_back(label_from_json(row));
      CorpusEvaluation result;
      if (ev_mode == "corpus") {
        if (ev_labels.empty()) throw Error("eval corpus needs --labels");
        std::vector<ResponseRow> responses;
        for (const auto& row : read_jsonl(ev_split)) responses.push_back(response_from_json(row));
        result = evaluate_corpus(responses, labels, *net, opt);
      } else {
        ep.temperature = ev_temperature;
        if (!ev_extra.empty()) ep.extra = Json::parse(ev_extra);
        std::vector<PromptRecord> records;
        for (const auto& row : read_jsonl(ev_split)) records.push_back(record_from_json(row));
        if (!labels.empty()) {
          std::map<std::string, const LabelRow*> by_id;
          for (const auto& l : labels) by_id.emplace(l.id, &l);
          for (auto& r : records)
            if (auto it = by_id.find(r.sample_ref); it != by_id.end()) {
              r.label_open_lines = it->second->open_lines;
              r.label_node_voltages = it->second->node_voltages;
              if (it->second->system_loss) r.label_system_loss = *it->second->system_loss;
            }
        }
        result = evaluate_endpoint(records, *net, ep, opt);
      }
      write_eval_outputs(result, ev_out);
      std::cout << render_report(result.report, ReportFormat::text);
      if (result.report.endpoint_failure) return 3;
    } else if (so->parsed()) {
      NetworkPtr net = load_network_arg(so_network);
      Configuration cfg(net, parse_open_arg(*net, so_open));
      auto loads = net->base_loads();
      for (auto& l : loads) l *= so_scale;
      PowerFlowResult r = solve(cfg, loads);
      Json j = flow_to_json(r, check_constraints(cfg, r));
      j["open_lines"] = pairs_to_json(cfg.open_lines());
      std::cout << j.dump(2) << "\n";
      if (!r.converged) return 2;
    } else if (op->parsed()) {
      NetworkPtr net = load_network_arg(op_network);
      auto loads = net->base_loads();
      for (auto& l : loads) l *= op_scale;
      OptimizationResult best =
          op_method == "exhaustive"
              ? optimize_exhaustive(net, loads)
              : optimize_branch_exchange(Configuration(net, parse_open_arg(*net, op_open)), loads);
      Json j{{"method", to_string(best.method)},
             {"open_lines", pairs_to_json(best.open_lines)},
             {"system_loss_kw", best.loss},
             {"evaluations", best.evaluations}};
      std::cout << j.dump(2) << "\n";
    } else if (ex->parsed()) {
      save_network_json(*feeders::ieee33_ptr(), ex_out);
    } else if (pr->parsed()) {
      write_text_file(pr_out, load_profile_to_csv(synthetic_profile(pr_hours, pr_seed)));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
