#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

// before httplib: resolv.h defines _res, which clashes with Eigen internals
#include "test_support.hpp"

#include <httplib.h>

using namespace gridreconf;
using namespace testing_support;

namespace {

const std::vector<PromptRecord>& ieee33_records() {
  static const std::vector<PromptRecord> recs = [] {
    DatasetSource src;
    src.network = feeders::ieee33_ptr();
    src.id = "ieee33";
    src.profile = synthetic_profile(200, 3);
    src.count = 12;
    src.scenario = {3, 0.1};
    DatasetOptions opt;
    opt.splits = {1.0, 0.0, 0.0};
    return build_dataset(std::span(&src, 1), opt).combined[0];
  }();
  return recs;
}

std::vector<LabelRow> labels_of(std::span<const PromptRecord> recs) {
  std::vector<LabelRow> out;
  for (const auto& r : recs) out.push_back(label_from_json(record_to_json(r)));
  return out;
}

std::vector<ResponseRow> ground_truth(std::span<const PromptRecord> recs) {
  std::vector<ResponseRow> out;
  for (const auto& r : recs) out.push_back({r.sample_ref, r.completion, {}});
  return out;
}

// Serves /v1/chat/completions by echoing the expected completion for the prompt it receives.
class EchoServer {
 public:
  explicit EchoServer(std::span<const PromptRecord> recs) {
    for (const auto& r : recs) by_prompt_[r.messages.back().content] = r.completion;
    srv_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      Json body = Json::parse(req.body);
      last_auth_ = req.get_header_value("Authorization");
      last_max_tokens_ = body.value("max_tokens", 0);
      const std::string prompt = body["messages"].back()["content"];
      auto it = by_prompt_.find(prompt);
      Json reply{{"choices", {{{"message", {{"role", "assistant"}, {"content", it == by_prompt_.end() ? "" : it->second}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = srv_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { srv_.listen_after_bind(); });
    srv_.wait_until_ready();
  }
  ~EchoServer() {
    srv_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::string last_auth() const { return last_auth_; }
  int last_max_tokens() const { return last_max_tokens_; }

 private:
  httplib::Server srv_;
  std::map<std::string, std::string> by_prompt_;
  std::string last_auth_;
  int last_max_tokens_ = 0;
  int port_ = 0;
  std::thread thread_;
};

// A port with nothing listening: bound once to learn a free number, then closed.
int free_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

}  // namespace

TEST(Corpus, GroundTruthScoresZero) {
  const auto& recs = ieee33_records();
  auto labels = labels_of(recs);
  auto resp = ground_truth(recs);
  CorpusEvaluation ev = evaluate_corpus(resp, labels, *feeders::ieee33_ptr());
  const EvalReport& r = ev.report;
  EXPECT_EQ(r.n_samples, recs.size());
  EXPECT_EQ(r.proper_count, recs.size());
  EXPECT_EQ(r.improper_count, 0u);
  EXPECT_EQ(r.cycle_count, 0u);
  EXPECT_EQ(r.subgraph_count, 0u);
  EXPECT_EQ(r.suboptimal_count, 0u);
  EXPECT_EQ(r.mean_cycles, 0.0);
  EXPECT_EQ(r.mean_subgraphs, 0.0);
  EXPECT_EQ(r.voltage_mae, 0.0);
  EXPECT_EQ(r.voltage_mae_samples, recs.size());
  EXPECT_EQ(r.mean_total_loss, 0.0);
  EXPECT_EQ(r.loss_curve.size(), recs.size());
  for (const auto& [t, i] : r.loss_curve) EXPECT_EQ(t, i);
}

TEST(Corpus, ProseRowsCountedImproper) {
  const auto& recs = ieee33_records();
  std::vector<LabelRow> labels;
  std::vector<ResponseRow> resp;
  for (std::size_t i = 0; i < 500; ++i) {
    LabelRow l = label_from_json(record_to_json(recs[i % recs.size()]));
    l.id = "s" + std::to_string(i);
    labels.push_back(l);
    const bool prose = i % 21 == 0 && i < 21 * 24;
    resp.push_back({l.id, prose ? "I think the best configuration keeps most lines closed." : recs[i % recs.size()].completion, {}});
  }
  EvalReport r = evaluate_corpus(resp, labels, *feeders::ieee33_ptr()).report;
  EXPECT_EQ(r.improper_count, 24u);
  EXPECT_EQ(r.proper_count, 476u);
  EXPECT_EQ(r.mean_cycles, 0.0);
  EXPECT_NEAR(r.mean_total_loss, 24.0 * 3.0 / 500.0, 1e-12);
}

TEST(Corpus, ReferenceResponseIsSuboptimal) {
  std::vector<ResponseRow> resp{{"ref", reference_response(), {}}};
  std::vector<LabelRow> labels{{"ref", reference_open_lines(), {}, 139.5513}};
  EvalReport r = evaluate_corpus(resp, labels, *feeders::ieee33_ptr()).report;
  EXPECT_EQ(r.suboptimal_count, 1u);
  EXPECT_EQ(r.cycle_count, 0u);
  EXPECT_EQ(r.subgraph_count, 0u);
  EXPECT_EQ(r.improper_count, 0u);
  EXPECT_NEAR(r.mean_total_loss, 0.2, 1e-15);
  const std::string csv = render_report(r, ReportFormat::csv);
  auto rows = parse_csv(csv);
  ASSERT_GE(rows.size(), 2u);
  EXPECT_EQ(rows[0][4], "suboptimal_config");
  EXPECT_EQ(rows[1][4], "1");
  EXPECT_EQ(rows[1][5], "0");
}

TEST(Corpus, MissingLabelsSkipped) {
  const auto& recs = ieee33_records();
  auto labels = labels_of(recs);
  auto resp = ground_truth(recs);
  resp.push_back({"nobody", "Updated open lines: (1, 2)", {}});
  EvalReport r = evaluate_corpus(resp, labels, *feeders::ieee33_ptr()).report;
  EXPECT_EQ(r.missing_labels, 1u);
  EXPECT_EQ(r.n_samples, recs.size());
}

TEST(Corpus, ShuffledInputGivesIdenticalReport) {
  const auto& recs = ieee33_records();
  auto labels = labels_of(recs);
  std::vector<ResponseRow> resp;
  Rng rng(17);
  for (const auto& r : recs) {
    std::string text = r.completion;
    if (rng.coin(0.4)) text = render_completion(std::vector<LinePair>{{7, 8}, {9, 10}}, r.label_node_voltages, rng.uniform(50, 200));
    resp.push_back({r.sample_ref, text, rng.uniform(0.1, 2.0)});
  }
  EvalReport base = evaluate_corpus(resp, labels, *feeders::ieee33_ptr(), {}, 1).report;
  for (int t = 0; t < 5; ++t) {
    auto r2 = resp;
    auto l2 = labels;
    for (std::size_t i = r2.size(); i > 1; --i) std::swap(r2[i - 1], r2[rng.next() % i]);
    for (std::size_t i = l2.size(); i > 1; --i) std::swap(l2[i - 1], l2[rng.next() % i]);
    EvalReport other = evaluate_corpus(r2, l2, *feeders::ieee33_ptr(), {}, 3).report;
    EXPECT_EQ(other, base);
    EXPECT_EQ(render_report(other, ReportFormat::json), render_report(base, ReportFormat::json));
  }
}

TEST(Report, JsonRoundTripAndTextColumns) {
  const auto& recs = ieee33_records();
  auto labels = labels_of(recs);
  std::vector<ResponseRow> resp = ground_truth(recs);
  resp[0].response_text = "nothing useful";
  resp[1].inference_seconds = 0.5;
  EvalReport r = evaluate_corpus(resp, labels, *feeders::ieee33_ptr()).report;
  EXPECT_EQ(report_from_json(report_to_json(r)), r);
  const std::string text = render_report(r, ReportFormat::text);
  for (const char* col : {"Network", "Samples", "Cycles", "Subgraphs", "Suboptimal Config.", "Improper outputs"})
    EXPECT_NE(text.find(col), std::string::npos) << col;
  EXPECT_NE(text.find("ieee33"), std::string::npos);
  ASSERT_TRUE(r.mean_inference_seconds);
  EXPECT_DOUBLE_EQ(*r.mean_inference_seconds, 0.5);
}

TEST(Report, ConfigHashTracksLambdas) {
  auto labels = labels_of(ieee33_records());
  LossOptions a, b;
  b.lambdas = {1, 2, 1};
  const Network net = feeders::ieee33();
  EXPECT_EQ(eval_config_hash(net, a, labels), eval_config_hash(net, a, labels));
  EXPECT_NE(eval_config_hash(net, a, labels), eval_config_hash(net, b, labels));
}

TEST(Report, OutputFilesWritten) {
  const auto& recs = ieee33_records();
  auto labels = labels_of(recs);
  CorpusEvaluation ev = evaluate_corpus(ground_truth(recs), labels, *feeders::ieee33_ptr());
  const auto dir = std::filesystem::temp_directory_path() / ("gridreconf_eval_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  write_eval_outputs(ev, dir);
  for (const char* f : {"report.txt", "report.csv", "report.json", "per_sample.jsonl", "plots/loss_overlay.csv",
                        "plots/voltage_mae.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  auto rows = read_jsonl(dir / "per_sample.jsonl");
  EXPECT_EQ(rows.size(), recs.size());
  auto overlay = parse_csv(read_text_file(dir / "plots/loss_overlay.csv"));
  EXPECT_EQ(overlay.size(), recs.size() + 1);
  EXPECT_EQ(overlay[0], (std::vector<std::string>{"index", "sample_id", "true_loss", "inferred_loss"}));
  EXPECT_EQ(report_from_json(Json::parse(read_text_file(dir / "report.json"))), ev.report);
  std::filesystem::remove_all(dir);
}

TEST(ScoreRow, TextAndParsedRequests) {
  const Network net = feeders::ieee33();
  Json req{{"id", "x"}, {"response_text", reference_response()}, {"label_open_lines", pairs_to_json(reference_open_lines())}};
  Json out = score_row(req, net, {});
  EXPECT_EQ(out["id"], "x");
  EXPECT_EQ(out["status"], "proper");
  EXPECT_DOUBLE_EQ(out["subconfig"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(out["total"].get<double>(), 0.2);

  Json parsed = parsed_to_json(parsed_with_open(reference_open_lines()));
  parsed["label"] = {{"updated_open_lines", pairs_to_json(reference_open_lines())}};
  parsed["reg"] = 0.5;
  parsed["lambdas"] = {2, 2, 2};
  EXPECT_DOUBLE_EQ(score_row(parsed, net, {})["total"].get<double>(), 0.5);

  EXPECT_THROW(score_row(Json{{"response_text", "x"}}, net, {}), FormatError);
}

TEST(Endpoint, DefaultTokenBudgets) {
  EXPECT_EQ(default_max_new_tokens(33), 900);
  EXPECT_EQ(default_max_new_tokens(69), 1200);
  EXPECT_EQ(default_max_new_tokens(84), 1400);
  EXPECT_EQ(default_max_new_tokens(136), 2500);
}

TEST(Endpoint, RequestBodyShapes) {
  const PromptRecord& rec = ieee33_records()[0];
  EndpointConfig cfg;
  cfg.temperature = 0.0;
  cfg.extra = {{"top_k", 1}};
  Json chat = endpoint_request_body(rec, cfg, 900);
  EXPECT_EQ(chat["messages"].size(), 2u);
  EXPECT_EQ(chat["max_tokens"], 900);
  EXPECT_EQ(chat["top_k"], 1);
  EXPECT_EQ(chat["temperature"], 0.0);
  cfg.raw_completion = true;
  Json raw = endpoint_request_body(rec, cfg, 900);
  EXPECT_FALSE(raw.contains("messages"));
  EXPECT_NE(raw["prompt"].get<std::string>().find("<|im_start|>assistant"), std::string::npos);
  EXPECT_EQ(split_url(cfg).path, "/v1/completions");
  cfg.url = "http://h:9/custom/path";
  EXPECT_EQ(split_url(cfg).base, "http://h:9");
  EXPECT_EQ(split_url(cfg).path, "/custom/path");
}

TEST(Endpoint, EchoServerGivesPerfectReport) {
  const auto& recs = ieee33_records();
  EchoServer server(recs);
  EndpointConfig cfg;
  cfg.url = server.url();
  cfg.api_key = "secret";
  cfg.concurrency = 3;
  cfg.runs = 2;
  CorpusEvaluation ev = evaluate_endpoint(recs, *feeders::ieee33_ptr(), cfg);
  const EvalReport& r = ev.report;
  EXPECT_FALSE(r.endpoint_failure);
  EXPECT_EQ(r.proper_count, recs.size());
  EXPECT_EQ(r.mean_total_loss, 0.0);
  EXPECT_EQ(r.suboptimal_count, 0u);
  ASSERT_TRUE(r.timing);
  EXPECT_EQ(r.timing->runs, 2);
  EXPECT_EQ(r.timing->run_means.size(), 2u);
  EXPECT_LE(r.timing->min, r.timing->mean);
  EXPECT_LE(r.timing->mean, r.timing->max);
  EXPECT_EQ(server.last_auth(), "Bearer secret");
  EXPECT_EQ(server.last_max_tokens(), 900);
}

TEST(Endpoint, UnreachableServerMarksFailure) {
  const int port = free_port();
  std::vector<PromptRecord> recs(ieee33_records().begin(), ieee33_records().begin() + 3);
  EndpointConfig cfg;
  cfg.url = "http://127.0.0.1:" + std::to_string(port);
  cfg.attempts = 2;
  cfg.backoff_seconds = 0.01;
  cfg.timeout_seconds = 2;
  EXPECT_THROW(query_endpoint(recs[0], cfg, 10), EndpointError);
  EvalReport r = evaluate_endpoint(recs, *feeders::ieee33_ptr(), cfg).report;
  EXPECT_TRUE(r.endpoint_failure);
  EXPECT_EQ(r.failed_requests, 3u);
  EXPECT_EQ(r.improper_count, 3u);
  EXPECT_FALSE(r.timing);
}
