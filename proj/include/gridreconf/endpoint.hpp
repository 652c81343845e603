#pragma once

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"

#include "gridreconf/dataset.hpp"
#include "gridreconf/eval_harness.hpp"

namespace gridreconf {

/// Generation budget by feeder size.
inline int default_max_new_tokens(int buses) {
  if (buses <= 37) return 900;
  if (buses <= 69) return 1200;
  if (buses <= 84) return 1400;
  if (buses <= 136) return 2500;
  return 1400;
}

struct EndpointConfig {
  std::string url = "http://127.0.0.1:8000";  // a path component overrides `path`
  std::string path;                           // defaults per mode
  std::string model = "default";
  int max_new_tokens = 0;  // 0 picks default_max_new_tokens(bus count)
  std::optional<double> temperature;
  Json extra = Json::object();  // merged into the request body (top_k, repetition_penalty, ...)
  bool raw_completion = false;  // POST /v1/completions with a ChatML prompt instead of messages
  int attempts = 3;
  double backoff_seconds = 0.5;
  double timeout_seconds = 600.0;
  unsigned concurrency = 1;
  int runs = 1;
  std::string api_key;  // falls back to $GRIDRECONF_API_KEY
};

struct EndpointTarget {
  std::string base;  // scheme://host[:port]
  std::string path;
};

inline EndpointTarget split_url(const EndpointConfig& cfg) {
  EndpointTarget t;
  const std::string& u = cfg.url;
  const std::size_t scheme = u.find("://");
  const std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const std::size_t slash = u.find('/', host_start);
  t.base = slash == std::string::npos ? u : u.substr(0, slash);
  std::string url_path = slash == std::string::npos ? "" : u.substr(slash);
  while (url_path.size() > 1 && url_path.back() == '/') url_path.pop_back();
  if (!cfg.path.empty()) t.path = cfg.path;
  else if (!url_path.empty() && url_path != "/") t.path = url_path;
  else t.path = cfg.raw_completion ? "/v1/completions" : "/v1/chat/completions";
  return t;
}

inline Json endpoint_request_body(const PromptRecord& record, const EndpointConfig& cfg, int max_new_tokens) {
  Json body = cfg.extra.is_object() ? cfg.extra : Json::object();
  body["model"] = cfg.model;
  body["max_tokens"] = max_new_tokens;
  if (cfg.temperature) body["temperature"] = *cfg.temperature;
  if (cfg.raw_completion) {
    body["prompt"] = to_chatml(record, false);
  } else {
    Json msgs = Json::array();
    for (const auto& m : record.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    body["messages"] = std::move(msgs);
  }
  return body;
}

inline std::string completion_text(const Json& response, bool raw_completion) {
  try {
    const Json& choice = response.at("choices").at(0);
    if (raw_completion || !choice.contains("message")) return choice.at("text").get<std::string>();
    return choice.at("message").at("content").get<std::string>();
  } catch (const Json::exception& e) {
    throw EndpointError(std::string("unexpected completion payload: ") + e.what());
  }
}

struct EndpointReply {
  std::string text;
  double seconds = 0.0;  // wall-clock of the successful attempt
};

/// One request with retries and exponential backoff. Throws EndpointError once all
/// attempts fail.
inline EndpointReply query_endpoint(const PromptRecord& record, const EndpointConfig& cfg, int max_new_tokens) {
  const EndpointTarget target = split_url(cfg);
  std::string key = cfg.api_key;
  if (key.empty())
    if (const char* env = std::getenv("GRIDRECONF_API_KEY")) key = env;
  const std::string body = endpoint_request_body(record, cfg, max_new_tokens).dump();
  std::string last_error = "no attempts made";
  double delay = cfg.backoff_seconds;
  for (int attempt = 0; attempt < std::max(1, cfg.attempts); ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
      delay *= 2.0;
    }
    httplib::Client cli(target.base);
    const auto secs = static_cast<time_t>(cfg.timeout_seconds);
    cli.set_connection_timeout(std::min<time_t>(secs, 10), 0);
    cli.set_read_timeout(secs, 0);
    cli.set_write_timeout(secs, 0);
    httplib::Headers headers;
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
    const auto t0 = std::chrono::steady_clock::now();
    auto res = cli.Post(target.path, headers, body, "application/json");
    const auto t1 = std::chrono::steady_clock::now();
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      return {completion_text(Json::parse(res->body), cfg.raw_completion),
              std::chrono::duration<double>(t1 - t0).count()};
    } catch (const Json::parse_error& e) {
      last_error = std::string("invalid JSON body: ") + e.what();
    } catch (const EndpointError& e) {
      last_error = e.what();
    }
  }
  throw EndpointError(target.base + target.path + ": " + last_error);
}

/// Queries the endpoint for every record `runs` times and scores the first run. Failed
/// requests become empty (improper) responses and set endpoint_failure.
inline CorpusEvaluation evaluate_endpoint(std::span<const PromptRecord> records, const Network& net,
                                          const EndpointConfig& cfg, const LossOptions& opt = {}) {
  const int max_tokens = cfg.max_new_tokens > 0 ? cfg.max_new_tokens : default_max_new_tokens(net.bus_count());
  const int runs = std::max(1, cfg.runs);
  std::vector<ResponseRow> first(records.size());
  std::vector<std::vector<double>> seconds(static_cast<std::size_t>(runs));
  std::size_t failures = 0;
  std::mutex mu;
  for (int run = 0; run < runs; ++run) {
    std::vector<std::optional<double>> times(records.size());
    parallel_for(records.size(), std::max(1u, cfg.concurrency), [&](std::size_t i) {
      ResponseRow row;
      row.id = records[i].sample_ref;
      try {
        EndpointReply reply = query_endpoint(records[i], cfg, max_tokens);
        row.response_text = std::move(reply.text);
        row.inference_seconds = reply.seconds;
        times[i] = reply.seconds;
      } catch (const EndpointError&) {
        std::lock_guard lock(mu);
        ++failures;
      }
      if (run == 0) first[i] = std::move(row);
    });
    for (const auto& t : times)
      if (t) seconds[static_cast<std::size_t>(run)].push_back(*t);
  }

  std::vector<LabelRow> labels;
  labels.reserve(records.size());
  for (const auto& r : records)
    labels.push_back({r.sample_ref, r.label_open_lines, r.label_node_voltages, r.label_system_loss});
  CorpusEvaluation ev = evaluate_corpus(first, labels, net, opt, 1);

  TimingStats ts;
  ts.runs = runs;
  bool any = false;
  for (const auto& run_times : seconds) {
    if (run_times.empty()) continue;
    double sum = 0.0;
    for (double t : run_times) {
      sum += t;
      ts.min = any ? std::min(ts.min, t) : t;
      ts.max = any ? std::max(ts.max, t) : t;
      any = true;
    }
    ts.run_means.push_back(sum / static_cast<double>(run_times.size()));
  }
  if (any) {
    double sum = 0.0;
    for (double m : ts.run_means) sum += m;
    ts.mean = sum / static_cast<double>(ts.run_means.size());
    ev.report.timing = ts;
    ev.report.mean_inference_seconds = ts.mean;
  }
  ev.report.failed_requests = failures;
  ev.report.endpoint_failure = failures > 0;
  return ev;
}

}  // namespace gridreconf
