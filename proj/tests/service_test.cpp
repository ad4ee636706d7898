#include <gtest/gtest.h>

#include <openssl/sha.h>

#include <atomic>
#include <fstream>
#include <set>
#include <thread>

#include "phishlens/service.hpp"
#include "test_support.hpp"

using namespace phishlens;
using namespace phishlens::service;
using phishlens::testing::TempDir;
using phishlens::testing::fixture_dir;

namespace {

std::filesystem::path corpus() { return fixture_dir() / "corpus"; }

// One RF model shared by every test; training it is the slow part.
struct SharedModel {
  TempDir dir;
  std::filesystem::path path = dir / "model.plm";
  SharedModel() {
    ml::TrainConfig cfg;
    cfg.kind = ml::ModelKind::random_forest;
    ml::save_model(ml::train(load_matrix(fixture_dir() / "expanded_matrix.csv"), cfg), path);
  }
};

const SharedModel& shared_model() {
  static SharedModel m;
  return m;
}

ServiceConfig config_for(const TempDir& dir) {
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.extract.evidence = offline_evidence(corpus());
  cfg.history_dir = dir / "history";
  return cfg;
}

struct Running {
  std::unique_ptr<Service> service;
  std::unique_ptr<httplib::Client> client;

  explicit Running(ServiceConfig cfg, bool with_model = true) : service(std::make_unique<Service>(std::move(cfg))) {
    if (with_model) service->load_model(shared_model().path);
    const int port = service->start();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(std::chrono::seconds(30));
  }

  httplib::Result post(const std::string& path, const Json& body) {
    return client->Post(path, body.dump(), "application/json");
  }
};

Json body_of(const httplib::Result& r) { return Json::parse(r->body); }

std::string sha256_oracle(const std::string& bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : digest) {
    out += hex[c >> 4];
    out += hex[c & 15];
  }
  return out;
}

Verdict sample_verdict(ml::Rng& rng, std::uint64_t i) {
  Verdict v;
  v.id = "id-" + std::to_string(i);
  v.url = "https://example-" + std::to_string(i) + ".com/p?q=" + std::to_string(rng.below(1000));
  v.score = static_cast<double>(rng.below(1001)) / 1000.0;
  v.deceptive = v.score >= 0.5;
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    switch (domain_of(static_cast<Feature>(f))) {
      case FeatureDomain::Binary: v.features.values[f] = static_cast<int>(rng.below(2)); break;
      case FeatureDomain::Ternary: v.features.values[f] = static_cast<int>(rng.below(3)) - 1; break;
      case FeatureDomain::Count: v.features.values[f] = static_cast<int>(rng.below(12)); break;
    }
  }
  v.model_id = std::string(64, 'a');
  v.latency_ms = static_cast<double>(rng.below(5000)) / 8.0;
  v.timestamp = Timestamp{std::chrono::milliseconds(1'700'000'000'000LL + static_cast<long long>(rng.below(1'000'000)))};
  return v;
}

class SlowPages : public SnapshotSource {
 public:
  explicit SlowPages(std::shared_ptr<SnapshotSource> inner) : inner_(std::move(inner)) {}
  PageSnapshot get(const std::string& url) override {
    std::this_thread::sleep_for(std::chrono::milliseconds(400));
    return inner_->get(url);
  }

 private:
  std::shared_ptr<SnapshotSource> inner_;
};

}  // namespace

TEST(Verdict, JsonRoundTripAndFieldOrder) {
  ml::Rng rng(11);
  for (std::uint64_t i = 0; i < 300; ++i) {
    const Verdict v = sample_verdict(rng, i);
    const Json j = to_json(v);
    std::vector<std::string> names;
    for (auto it = j["features"].begin(); it != j["features"].end(); ++it) names.push_back(it.key());
    ASSERT_EQ(names.size(), kFeatureCount);
    for (std::size_t f = 0; f < kFeatureCount; ++f) EXPECT_EQ(names[f], kFeatureNames[f]);
    EXPECT_EQ(j["class"] == "deceptive", v.score >= 0.5);
    Verdict back;
    ASSERT_FALSE(verdict_from_json(Json::parse(j.dump()), back).has_value());
    EXPECT_EQ(back, v);
  }
}

TEST(Verdict, RejectsInconsistentOrIncompleteVerdicts) {
  ml::Rng rng(5);
  const Json good = to_json(sample_verdict(rng, 1));
  Verdict out;
  auto broken = [&](auto mutate) {
    Json j = good;
    mutate(j);
    return verdict_from_json(j, out).has_value();
  };
  EXPECT_TRUE(broken([](Json& j) { j.erase("url"); }));
  EXPECT_TRUE(broken([](Json& j) { j["class"] = "unknown"; }));
  EXPECT_TRUE(broken([](Json& j) { j["score"] = 1.5; }));
  EXPECT_TRUE(broken([](Json& j) {
    j["score"] = 0.9;
    j["class"] = "safe";
  }));
  EXPECT_TRUE(broken([](Json& j) { j["features"].erase("SSL"); }));
  EXPECT_TRUE(broken([](Json& j) { j["features"]["Have_At"] = 2; }));
  EXPECT_TRUE(broken([](Json& j) { j["timestamp"] = "yesterday"; }));
  EXPECT_FALSE(broken([](Json&) {}));
}

TEST(HistoryStore, AppendsReadBackNewestFirstAndResumeSeq) {
  TempDir dir;
  ml::Rng rng(1);
  {
    HistoryStore store({dir / "h"});
    EXPECT_TRUE(store.recent(10).empty());
    for (std::uint64_t i = 0; i < 3; ++i) store.append(sample_verdict(rng, i), UserAction::visited);
    const auto two = store.recent(2);
    ASSERT_EQ(two.size(), 2u);
    EXPECT_EQ(two[0].seq, 3u);
    EXPECT_EQ(two[1].seq, 2u);
    EXPECT_EQ(store.recent(50).size(), 3u);
  }
  HistoryStore reopened({dir / "h"});
  EXPECT_EQ(reopened.append(sample_verdict(rng, 9), UserAction::declined).seq, 4u);
}

TEST(HistoryStore, TimestampsNeverDecreaseWithinAFile) {
  TempDir dir;
  HistoryStore store({dir.path(), 8u << 20, false});
  ml::Rng rng(2);
  for (std::uint64_t i = 0; i < 200; ++i) store.append(sample_verdict(rng, i), UserAction::none);
  const auto all = HistoryStore::read_all(dir.path());
  ASSERT_EQ(all.size(), 200u);
  for (std::size_t i = 1; i < all.size(); ++i) {
    EXPECT_LE(all[i - 1].recorded_at, all[i].recorded_at);
    EXPECT_EQ(all[i].seq, all[i - 1].seq + 1);
  }
}

TEST(HistoryStore, TornTailIsIgnoredThenRepaired) {
  TempDir dir;
  ml::Rng rng(3);
  std::vector<HistoryEntry> written;
  {
    HistoryStore store({dir.path()});
    for (std::uint64_t i = 0; i < 5; ++i) written.push_back(store.append(sample_verdict(rng, i), UserAction::visited));
  }
  const auto active = HistoryStore::active_path(dir.path());
  const std::string full = text::read_file(active);
  // Every possible crash point inside the last record.
  const auto last_start = full.rfind('\n', full.size() - 2) + 1;
  for (std::size_t cut = last_start; cut < full.size(); ++cut) {
    {
      std::ofstream out(active, std::ios::binary | std::ios::trunc);
      out << full.substr(0, cut);
    }
    const auto read = HistoryStore::read_all(dir.path());
    ASSERT_EQ(read.size(), 4u) << "cut at " << cut;
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(read[i], written[i]);
  }
  HistoryStore store({dir.path()});
  const auto next = store.append(sample_verdict(rng, 7), UserAction::declined);
  EXPECT_EQ(next.seq, 5u);
  const auto read = HistoryStore::read_all(dir.path());
  ASSERT_EQ(read.size(), 5u);
  EXPECT_EQ(read.back(), next);
}

TEST(HistoryStore, SkipsCorruptLinesInTheMiddle) {
  TempDir dir;
  ml::Rng rng(4);
  {
    HistoryStore store({dir.path()});
    store.append(sample_verdict(rng, 0), UserAction::visited);
  }
  {
    std::ofstream out(HistoryStore::active_path(dir.path()), std::ios::app);
    out << "{not json\n" << R"({"seq":2,"recorded_at":"x","user_action":"visited"})" << "\n";
  }
  HistoryStore store({dir.path()});
  store.append(sample_verdict(rng, 1), UserAction::declined);
  const auto all = HistoryStore::read_all(dir.path());
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[1].user_action, UserAction::declined);
}

TEST(HistoryStore, RotatesBySizeAndKeepsOrder) {
  TempDir dir;
  ml::Rng rng(5);
  HistoryStore store({dir.path(), 4096, false});
  for (std::uint64_t i = 0; i < 60; ++i) store.append(sample_verdict(rng, i), UserAction::visited);
  const auto files = HistoryStore::files(dir.path());
  ASSERT_GT(files.size(), 3u);
  for (const auto& f : files) EXPECT_LE(std::filesystem::file_size(f), 4096u);
  EXPECT_EQ(files.back().filename(), "history.jsonl");
  EXPECT_EQ(files.front().filename(), "history-000001.jsonl");
  const auto all = HistoryStore::read_all(dir.path());
  ASSERT_EQ(all.size(), 60u);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i].seq, i + 1);
  EXPECT_EQ(store.recent(1).front().seq, 60u);
}

TEST(Service, PredictReturnsGoldenClassForEveryFixtureUrl) {
  TempDir dir;
  Running s(config_for(dir));
  for (const auto& row : load_matrix(corpus() / "golden_matrix.csv")) {
    auto r = s.post("/predict", Json{{"url", row.url}});
    ASSERT_TRUE(r) << row.url;
    ASSERT_EQ(r->status, 200) << row.url << " " << r->body;
    const Json j = body_of(r);
    EXPECT_EQ(j["protocol_version"], kProtocolVersion);
    const bool phishing = *row.label == Label::phishing;
    EXPECT_EQ(j["class"], phishing ? "deceptive" : "safe") << row.url;
    EXPECT_EQ(j["score"].get<double>() >= 0.5, phishing) << row.url;
    for (std::size_t f = 0; f < kFeatureCount; ++f)
      EXPECT_EQ(j["features"][std::string(kFeatureNames[f])], row.features.values[f]) << row.url << " " << kFeatureNames[f];
    EXPECT_EQ(j["model_id"], s.service->model_id().value());
    EXPECT_EQ(j["url"], row.url);
  }
}

TEST(Service, PredictRejectsBadRequests) {
  TempDir dir;
  Running s(config_for(dir));
  EXPECT_EQ(s.post("/predict", Json{{"link", "https://www.google.com/"}})->status, 400);
  EXPECT_EQ(s.post("/predict", Json{{"url", 42}})->status, 400);
  EXPECT_EQ(s.client->Post("/predict", "{not json", "application/json")->status, 400);
  for (const char* bad : {"", "not a url", "http://", "https://exa mple.com/", "//no-scheme.com/"}) {
    auto r = s.post("/predict", Json{{"url", bad}});
    EXPECT_EQ(r->status, 400) << bad;
    EXPECT_EQ(body_of(r)["protocol_version"], kProtocolVersion);
    EXPECT_EQ(body_of(r)["error"]["code"], "malformed_url") << bad;
  }
  EXPECT_EQ(s.client->Get("/nowhere")->status, 404);
}

TEST(Service, WithoutModelPredictAndHealthAreUnavailable) {
  TempDir dir;
  Running s(config_for(dir), false);
  EXPECT_EQ(s.post("/predict", Json{{"url", "https://www.google.com/"}})->status, 503);
  auto h = s.client->Get("/health");
  EXPECT_EQ(h->status, 503);
  EXPECT_EQ(body_of(h)["status"], "no_model");
  s.service->load_model(shared_model().path);
  EXPECT_EQ(s.client->Get("/health")->status, 200);
}

TEST(Service, HealthReportsDigestOfLoadedModelFile) {
  TempDir dir;
  Running s(config_for(dir));
  auto h = s.client->Get("/health");
  ASSERT_EQ(h->status, 200);
  const Json j = body_of(h);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["protocol_version"], kProtocolVersion);
  EXPECT_EQ(j["model_id"], sha256_oracle(text::read_file(shared_model().path)));
  EXPECT_GE(j["uptime_s"].get<double>(), 0.0);
}

TEST(Service, DeadlineExceededGives504) {
  TempDir dir;
  auto cfg = config_for(dir);
  cfg.extract.evidence.pages = std::make_shared<SlowPages>(cfg.extract.evidence.pages);
  cfg.deadline = std::chrono::milliseconds(50);
  Running s(std::move(cfg));
  auto r = s.post("/predict", Json{{"url", "https://www.google.com/"}});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 504);
  EXPECT_EQ(body_of(r)["error"]["code"], "timeout");
}

TEST(Service, StopWhileExtractionStillRunningIsSafe) {
  TempDir dir;
  auto cfg = config_for(dir);
  cfg.extract.evidence.pages = std::make_shared<SlowPages>(cfg.extract.evidence.pages);
  cfg.deadline = std::chrono::milliseconds(20);
  {
    Running s(std::move(cfg));
    EXPECT_EQ(s.post("/predict", Json{{"url", "https://www.apple.com/"}})->status, 504);
  }
  // The abandoned extraction finishes after the service is gone.
  std::this_thread::sleep_for(std::chrono::milliseconds(600));
}

TEST(Service, HistoryRecordsActionsByIdOrFullVerdict) {
  TempDir dir;
  Running s(config_for(dir));
  EXPECT_TRUE(body_of(s.client->Get("/history"))["entries"].empty());

  const Json v1 = body_of(s.post("/predict", Json{{"url", "http://amaz0n-verify.com/"}}));
  const Json v2 = body_of(s.post("/predict", Json{{"url", "https://www.google.com/"}}));

  auto a = s.post("/history", Json{{"verdict_id", v1["id"]}, {"user_action", "declined"}});
  ASSERT_EQ(a->status, 200) << a->body;
  EXPECT_EQ(body_of(a)["ack"], true);
  auto b = s.post("/history", Json{{"verdict", v2}, {"user_action", "visited"}});
  ASSERT_EQ(b->status, 200) << b->body;
  // Replaying the same id appends again.
  ASSERT_EQ(s.post("/history", Json{{"verdict_id", v1["id"]}, {"user_action", "declined"}})->status, 200);

  const Json all = body_of(s.client->Get("/history?limit=10"))["entries"];
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0]["user_action"], "declined");
  EXPECT_EQ(all[0]["verdict"]["url"], "http://amaz0n-verify.com/");
  EXPECT_EQ(all[1]["user_action"], "visited");
  EXPECT_EQ(all[1]["verdict"]["class"], "safe");
  EXPECT_EQ(all[2]["verdict"]["id"], v1["id"]);
  EXPECT_GT(all[0]["seq"].get<int>(), all[1]["seq"].get<int>());

  const Json two = body_of(s.client->Get("/history?limit=2"))["entries"];
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0]["seq"], all[0]["seq"]);
  EXPECT_EQ(two[1]["seq"], all[1]["seq"]);
  EXPECT_EQ(body_of(s.client->Get("/history?limit=0"))["entries"].size(), 0u);
}

TEST(Service, HistoryRejectsBadInput) {
  TempDir dir;
  Running s(config_for(dir));
  const Json v = body_of(s.post("/predict", Json{{"url", "https://www.google.com/"}}));
  EXPECT_EQ(s.post("/history", Json{{"verdict_id", v["id"]}, {"user_action", "clicked"}})->status, 400);
  EXPECT_EQ(s.post("/history", Json{{"verdict_id", v["id"]}})->status, 400);
  EXPECT_EQ(s.post("/history", Json{{"verdict_id", "feedface"}, {"user_action", "visited"}})->status, 404);
  Json bad = v;
  bad["class"] = "deceptive";
  EXPECT_EQ(s.post("/history", Json{{"verdict", bad}, {"user_action", "visited"}})->status, 400);
  EXPECT_EQ(s.post("/history", Json{{"user_action", "visited"}})->status, 400);
  EXPECT_EQ(s.client->Get("/history?limit=-1")->status, 400);
  EXPECT_EQ(s.client->Get("/history?limit=abc")->status, 400);
  EXPECT_TRUE(body_of(s.client->Get("/history"))["entries"].empty());
}

TEST(Service, RepeatedPredictionsAreIdenticalApartFromTiming) {
  TempDir dir;
  Running s(config_for(dir));
  for (const char* url : {"https://github.com/login", "http://198.51.100.7/paypal/login.php"}) {
    Json a = body_of(s.post("/predict", Json{{"url", url}}));
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    Json b = body_of(s.post("/predict", Json{{"url", url}}));
    for (Json* j : {&a, &b}) {
      j->erase("timestamp");
      j->erase("latency_ms");
    }
    EXPECT_EQ(a, b) << url;
  }
}

TEST(Service, CorsFollowsTheAllowlist) {
  TempDir dir;
  auto cfg = config_for(dir);
  cfg.allowed_origins = {"chrome-extension://phishlens"};
  Running s(std::move(cfg));

  httplib::Headers allowed{{"Origin", "chrome-extension://phishlens"}};
  httplib::Headers other{{"Origin", "https://evil.example"}};

  auto pre = s.client->Options("/predict", httplib::Headers{{"Origin", "chrome-extension://phishlens"},
                                                            {"Access-Control-Request-Method", "POST"}});
  EXPECT_EQ(pre->status, 204);
  EXPECT_EQ(pre->get_header_value("Access-Control-Allow-Origin"), "chrome-extension://phishlens");
  EXPECT_NE(pre->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
  EXPECT_EQ(s.client->Options("/predict", other)->status, 403);

  auto ok = s.client->Get("/health", allowed);
  EXPECT_EQ(ok->get_header_value("Access-Control-Allow-Origin"), "chrome-extension://phishlens");
  EXPECT_EQ(ok->get_header_value("Vary"), "Origin");
  auto denied = s.client->Get("/health", other);
  EXPECT_EQ(denied->status, 200);
  EXPECT_FALSE(denied->has_header("Access-Control-Allow-Origin"));
  EXPECT_FALSE(s.client->Get("/health")->has_header("Access-Control-Allow-Origin"));
}

TEST(Service, ConcurrentPredictsAndAppendsAllSucceed) {
  TempDir dir;
  Running s(config_for(dir));
  const auto rows = load_matrix(corpus() / "golden_matrix.csv");
  const int n = 50;
  std::atomic<int> ok{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", s.service->port());
      c.set_read_timeout(std::chrono::seconds(30));
      // Distinct URLs: fixture URLs plus query variants once they run out.
      std::string url = rows[static_cast<std::size_t>(i) % rows.size()].url;
      if (i >= static_cast<int>(rows.size())) url += (url.find('?') == std::string::npos ? "?v=" : "&v=") + std::to_string(i);
      auto r = c.Post("/predict", Json{{"url", url}}.dump(), "application/json");
      if (!r || r->status != 200) {
        ADD_FAILURE() << url << " " << (r ? std::to_string(r->status) + r->body : httplib::to_string(r.error()));
        return;
      }
      const Json v = Json::parse(r->body);
      auto h = c.Post("/history", Json{{"verdict_id", v["id"]}, {"user_action", i % 2 ? "visited" : "declined"}}.dump(),
                      "application/json");
      if (h && h->status == 200) ++ok;
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(ok.load(), n);

  const auto all = HistoryStore::read_all(dir / "history");
  ASSERT_EQ(all.size(), static_cast<std::size_t>(n));
  std::set<std::uint64_t> seqs;
  for (const auto& e : all) seqs.insert(e.seq);
  EXPECT_EQ(seqs.size(), static_cast<std::size_t>(n));
  EXPECT_EQ(*seqs.begin(), 1u);
  EXPECT_EQ(*seqs.rbegin(), static_cast<std::uint64_t>(n));
}
