// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any failed.

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "phishlens/dataset.hpp"
#include "phishlens/history.hpp"
#include "phishlens/ml/cross_validation.hpp"
#include "phishlens/ml/model.hpp"
#include "phishlens/service.hpp"
#include "test_support.hpp"

using namespace phishlens;
namespace fs = std::filesystem;
using phishlens::testing::TempDir;
using phishlens::testing::fixture_dir;

namespace {

// Collects failures for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 20) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
};

fs::path corpus() { return fixture_dir() / "corpus"; }
fs::path expanded() { return fixture_dir() / "expanded_matrix.csv"; }

std::string fmt(double v, int digits = 4) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << v;
  return out.str();
}

int run_cli(const std::vector<std::string>& args) {
  const pid_t pid = ::fork();
  if (pid == 0) {
    const int null = ::open("/dev/null", O_WRONLY);
    ::dup2(null, 1);
    ::dup2(null, 2);
    std::vector<char*> argv{const_cast<char*>(PHISHLENS_CLI_PATH)};
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    ::execv(PHISHLENS_CLI_PATH, argv.data());
    ::_exit(127);
  }
  int status = 0;
  ::waitpid(pid, &status, 0);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------------------

void golden_matrix(Check& c) {
  ExtractConfig cfg;
  cfg.evidence = offline_evidence(corpus());
  ExtractReport report;
  const auto rows = extract_all(read_labeled_urls(corpus() / "urls.csv"), cfg, &report);
  const auto golden = load_matrix(corpus() / "golden_matrix.csv");
  c.expect(rows.size() == golden.size(), "row count " + std::to_string(rows.size()));
  for (std::size_t i = 0; i < std::min(rows.size(), golden.size()); ++i)
    for (std::size_t f = 0; f < kFeatureCount; ++f)
      c.expect(rows[i].features.values[f] == golden[i].features.values[f],
               rows[i].url + " " + std::string(kFeatureNames[f]));
  c.expect(serialize_matrix(rows) == text::read_file(corpus() / "golden_matrix.csv"), "serialized bytes differ");

  // Branch coverage: every value of every feature occurs in the golden set.
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    std::set<int> seen;
    for (const auto& r : golden) seen.insert(r.features.values[f]);
    const auto domain = domain_of(static_cast<Feature>(f));
    if (domain == FeatureDomain::Count) {
      // No bands on a count; require an empty path, one segment and several.
      c.expect(seen.count(0) && seen.count(1) && *seen.rbegin() >= 2, std::string(kFeatureNames[f]) + " lacks a depth case");
      continue;
    }
    const std::set<int> want = domain == FeatureDomain::Ternary ? std::set<int>{-1, 0, 1} : std::set<int>{0, 1};
    for (int v : want) c.expect(seen.count(v) == 1, std::string(kFeatureNames[f]) + " never takes " + std::to_string(v));
  }
  c.expect(report.fetch_failures > 0, "no unreachable page exercises the content fold");
  c.expect(report.whois_not_found > 0, "no missing WHOIS record exercises the reputation fold");
  c.expect(report.unranked > 0, "no unranked domain");
  c.note(std::to_string(rows.size()) + " rows, " + std::to_string(report.fetch_failures) + " unreachable, " +
         std::to_string(report.whois_not_found) + " without WHOIS");
}

void boundaries(Check& c) {
  auto url_of_length = [](std::size_t n) {
    std::string url = "http://example.com/";
    url.append(n - url.size(), 'a');
    return url;
  };
  c.expect(feat_url_length(parse_url(url_of_length(53))) == 0, "length 53 flagged");
  c.expect(feat_url_length(parse_url(url_of_length(54))) == 1, "length 54 not flagged");

  auto hops = [](std::size_t n) {
    PageSnapshot s;
    s.requested_url = s.final_url = "https://example.com/";
    s.status = 200;
    s.body = "";
    for (std::size_t i = 0; i < n; ++i) s.redirect_chain.push_back("https://hop" + std::to_string(i) + ".example.com/");
    return s;
  };
  c.expect(feat_web_forwards(hops(3)) == 0, "3 redirects flagged");
  c.expect(feat_web_forwards(hops(4)) == 1, "4 redirects not flagged");

  const Date now = *make_date(2024, 6, 1);
  auto created = [](Date d) { return WhoisRecord{"x.com", true, d, std::nullopt}; };
  auto expires = [](Date d) { return WhoisRecord{"x.com", true, std::nullopt, d}; };
  c.expect(feat_domain_age(created(now - std::chrono::days(364)), now) == 1, "age 364 days not flagged");
  c.expect(feat_domain_age(created(now - std::chrono::days(366)), now) == 0, "age 366 days flagged");
  c.expect(feat_domain_end(expires(now + std::chrono::days(182)), now) == 1, "182 days left not flagged");
  c.expect(feat_domain_end(expires(now + std::chrono::days(184)), now) == 0, "184 days left flagged");

  struct Band {
    const char* name;
    std::function<FeatureValue(std::size_t, std::size_t)> f;
    std::size_t low, high;
  };
  const std::vector<Band> bands{
      {"request_url", [](std::size_t p, std::size_t t) { LinkCensus l; l.external_request_objects = p; l.total_request_objects = t; return feat_request_url(l); }, 22, 61},
      {"url_anchor", [](std::size_t p, std::size_t t) { LinkCensus l; l.suspicious_anchors = p; l.total_anchors = t; return feat_url_anchor(l); }, 31, 67},
      {"links", [](std::size_t p, std::size_t t) { LinkCensus l; l.external_msl_links = p; l.total_msl_links = t; return feat_links(l); }, 17, 81}};
  for (const auto& b : bands) {
    const std::string n = b.name;
    c.expect(b.f(b.low - 1, 100) == 0, n + " just below the low bound");
    c.expect(b.f(b.low, 100) == -1, n + " exactly at the low bound");
    c.expect(b.f(b.high, 100) == -1, n + " exactly at the high bound");
    c.expect(b.f(b.high + 1, 100) == 1, n + " just above the high bound");
    // Same percentages on a larger denominator.
    c.expect(b.f(b.low * 3, 300) == -1 && b.f(b.high * 3, 300) == -1, n + " bounds at 300 elements");
  }
}

void classifier_ordering(Check& c) {
  const auto data = ml::TrainingSet::from_rows(load_matrix(expanded()));
  std::map<ml::ModelKind, double> acc;
  for (auto kind : {ml::ModelKind::naive_bayes, ml::ModelKind::logistic, ml::ModelKind::random_forest}) {
    const auto r = ml::grid_search(data, kind, ml::default_grid(kind), 10, 42);
    acc[kind] = r.best_row().cv.mean.at("accuracy");
  }
  const double nb = acc[ml::ModelKind::naive_bayes], lr = acc[ml::ModelKind::logistic],
               rf = acc[ml::ModelKind::random_forest];
  c.expect(data.size() >= 400, "matrix has fewer than 400 rows");
  c.expect(rf >= lr, "RF below LR");
  c.expect(lr >= nb, "LR below NB");
  c.expect(rf >= 0.90, "RF below 0.90");
  c.note(std::to_string(data.size()) + " rows, 10-fold: NB " + fmt(nb) + ", LR " + fmt(lr) + ", RF " + fmt(rf));
}

// Training set with a noisy rule so both classes appear.
ml::TrainingSet random_set(std::mt19937_64& rng, std::size_t n) {
  ml::TrainingSet s;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector v;
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      switch (domain_of(static_cast<Feature>(j))) {
        case FeatureDomain::Binary: v.values[j] = static_cast<int>(rng() % 2); break;
        case FeatureDomain::Ternary: v.values[j] = static_cast<int>(rng() % 3) - 1; break;
        case FeatureDomain::Count: v.values[j] = static_cast<int>(rng() % 7); break;
      }
    }
    const bool phish = (v.values[0] + v.values[6] + v.values[16] >= 1) != (rng() % 8 == 0);
    s.x.push_back(v);
    s.y.push_back(phish ? Label::phishing : Label::legitimate);
  }
  s.y[0] = Label::legitimate;
  s.y[1] = Label::phishing;
  return s;
}

void ml_properties(Check& c) {
  std::mt19937_64 rng(2024);

  // Gini: every node with at most 12 samples against exhaustive search.
  std::size_t nodes = 0;
  for (int it = 0; it < 60; ++it) {
    const auto s = random_set(rng, 6 + rng() % 40);
    ml::ForestParams p;
    p.n_trees = 4;
    p.features_per_split = 1 + rng() % 6;
    p.seed = rng();
    ml::train_forest(s, p, [&](const ml::SplitEvent& e) {
      if (e.indices.size() > 12) return;
      ++nodes;
      double best = 2;
      for (int f : e.candidates)
        for (int t = -1; t <= 7; ++t) {
          double l[2] = {0, 0}, r[2] = {0, 0};
          for (auto i : e.indices) (s.x[i].values[static_cast<std::size_t>(f)] <= t ? l : r)[static_cast<int>(s.y[i])] += 1;
          const double nl = l[0] + l[1], nr = r[0] + r[1];
          if (nl == 0 || nr == 0) continue;
          const double gl = 1 - (l[0] * l[0] + l[1] * l[1]) / (nl * nl), gr = 1 - (r[0] * r[0] + r[1] * r[1]) / (nr * nr);
          best = std::min(best, (nl * gl + nr * gr) / (nl + nr));
        }
      if (best > 1) {
        c.expect(!e.chosen, "split chosen where none exists");
      } else {
        c.expect(e.chosen && std::abs(e.chosen->impurity - best) < 1e-12, "split is not the Gini minimum");
      }
    });
  }
  c.expect(nodes > 200, "too few small nodes observed");

  // Logistic gradient against central differences.
  std::uniform_real_distribution<double> u(-1, 1);
  double worst = 0;
  for (int it = 0; it < 20; ++it) {
    const auto s = random_set(rng, 5 + rng() % 30);
    ml::LogisticModel m;
    for (auto& w : m.weights) w = u(rng);
    m.bias = u(rng);
    const double l2 = std::abs(u(rng)) * 0.1;
    const auto g = ml::logistic_gradient(m, s, l2);
    for (std::size_t j = 0; j <= kFeatureCount; ++j) {
      ml::LogisticModel plus = m, minus = m;
      const double h = 1e-5;
      double analytic;
      if (j < kFeatureCount) {
        plus.weights[j] += h;
        minus.weights[j] -= h;
        analytic = g.weights[j];
      } else {
        plus.bias += h;
        minus.bias -= h;
        analytic = g.bias;
      }
      const double numeric = (ml::logistic_loss(plus, s, l2) - ml::logistic_loss(minus, s, l2)) / (2 * h);
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  c.expect(worst < 1e-5, "gradient relative error " + std::to_string(worst));

  // Naive Bayes posteriors.
  double drift = 0;
  for (int it = 0; it < 20; ++it) {
    const auto s = random_set(rng, 10 + rng() % 80);
    const auto m = ml::train_naive_bayes(s, 1.0);
    for (const auto& x : random_set(rng, 50).x) {
      const auto p = m.posteriors(x);
      drift = std::max(drift, std::abs(p[0] + p[1] - 1));
    }
  }
  c.expect(drift <= 1e-9, "posterior sum off by " + std::to_string(drift));

  // Metric identities on random confusion counts.
  for (int it = 0; it < 1000; ++it) {
    const std::size_t tp = rng() % 60, fp = rng() % 60, tn = rng() % 60, fn = rng() % 60;
    const auto m = ml::Metrics::from_counts(tp, fp, tn, fn);
    const double n = static_cast<double>(tp + fp + tn + fn);
    c.expect(m.accuracy == (n > 0 ? double(tp + tn) / n : 0.0), "accuracy identity");
    c.expect(m.precision == (tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0), "precision identity");
    c.expect(m.recall == (tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0), "recall identity");
    const double f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    c.expect(std::abs(m.f1 - f1) <= 1e-15, "f1 identity");
    c.expect(m.tp + m.fp + m.tn + m.fn == tp + fp + tn + fn, "count identity");
  }

  // k-fold partitions.
  for (std::size_t n = 1; n <= 200; ++n) {
    for (std::size_t k : {2u, 5u, 10u}) {
      std::vector<Label> labels(n);
      for (auto& l : labels) l = rng() % 2 ? Label::phishing : Label::legitimate;
      const auto folds = ml::k_fold_split(labels, k, rng());
      std::vector<int> hits(n, 0);
      bool complement = true;
      for (const auto& f : folds) {
        for (auto i : f.test) ++hits[i];
        complement = complement && f.train.size() + f.test.size() == n;
      }
      c.expect(complement && std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }),
               "k-fold partition broken at n=" + std::to_string(n) + " k=" + std::to_string(k));
    }
  }
  c.note(std::to_string(nodes) + " small nodes, worst gradient error " + fmt(worst * 1e6, 3) + "e-6");
}

void determinism(Check& c, const fs::path& dir) {
  const auto a = dir / "a.bin", b = dir / "b.bin";
  for (const auto& out : {a, b}) {
    const int code = run_cli({"train", "--matrix", expanded().string(), "--model-kind", "rf", "--seed", "42", "--out",
                              out.string()});
    c.expect(code == 0, "train exited " + std::to_string(code));
  }
  c.expect(fs::exists(a) && text::read_file(a) == text::read_file(b), "model files differ");

  const auto rows = load_matrix(expanded());
  const auto golden = load_matrix(corpus() / "golden_matrix.csv");
  for (auto kind : {ml::ModelKind::naive_bayes, ml::ModelKind::logistic, ml::ModelKind::random_forest}) {
    const auto model = ml::train(rows, ml::TrainConfig{kind, 42, {}});
    const auto path = dir / ("m-" + std::string(ml::to_string(kind)));
    ml::save_model(model, path);
    const auto loaded = ml::load_model(path);
    for (const std::vector<FeatureRow>* set : {&rows, &golden})
      for (const auto& r : *set) {
        const auto p = ml::predict(model, r), q = ml::predict(loaded, r);
        c.expect(p.score == q.score && p.label == q.label, std::string(ml::to_string(kind)) + " differs on " + r.url);
      }
  }
}

// `phishlens serve` in a child process.
class ServeProcess {
 public:
  ServeProcess(const fs::path& model, const fs::path& history) {
    int out[2];
    if (::pipe(out) != 0) throw std::runtime_error("pipe");
    pid_ = ::fork();
    if (pid_ == 0) {
      ::dup2(out[1], 1);
      const int null = ::open("/dev/null", O_WRONLY);
      ::dup2(null, 2);
      ::close(out[0]);
      const std::string m = model.string(), h = history.string(), e = corpus().string();
      const char* argv[] = {PHISHLENS_CLI_PATH, "serve", "--offline", "--evidence-dir", e.c_str(), "--model", m.c_str(),
                            "--history-dir", h.c_str(), "--port", "0", nullptr};
      ::execv(PHISHLENS_CLI_PATH, const_cast<char* const*>(argv));
      ::_exit(127);
    }
    ::close(out[1]);
    std::string line;
    char ch;
    while (::read(out[0], &ch, 1) == 1 && ch != '\n') line += ch;
    ::close(out[0]);
    const auto colon = line.rfind(':');
    if (line.rfind("listening on", 0) != 0 || colon == std::string::npos)
      throw std::runtime_error("serve did not start: " + line);
    port_ = std::stoi(line.substr(colon + 1));
  }

  ~ServeProcess() { kill(SIGKILL); }

  void kill(int sig) {
    if (pid_ <= 0) return;
    ::kill(pid_, sig);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }

  int port() const { return port_; }

 private:
  pid_t pid_ = -1;
  int port_ = 0;
};

void service_round_trip(Check& c, const fs::path& dir) {
  const auto model = dir / "a.bin";
  if (!fs::exists(model)) run_cli({"train", "--matrix", expanded().string(), "--model-kind", "rf", "--out", model.string()});
  const auto history = dir / "history";
  const auto golden = load_matrix(corpus() / "golden_matrix.csv");

  std::vector<double> latencies;
  {
    ServeProcess srv(model, history);
    httplib::Client cl("127.0.0.1", srv.port());
    cl.set_read_timeout(std::chrono::seconds(30));
    std::size_t right = 0;
    for (const auto& row : golden) {
      const auto t0 = std::chrono::steady_clock::now();
      auto r = cl.Post("/predict", Json{{"url", row.url}}.dump(), "application/json");
      latencies.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      if (!r || r->status != 200) {
        c.expect(false, "predict failed for " + row.url);
        continue;
      }
      const auto cls = Json::parse(r->body)["class"].get<std::string>();
      const bool ok = cls == (*row.label == Label::phishing ? "deceptive" : "safe");
      right += ok;
      c.expect(ok, row.url + " classified " + cls);
    }
    std::sort(latencies.begin(), latencies.end());
    const double p95 = latencies[static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(latencies.size()))) - 1];
    c.expect(p95 < 1.0, "P95 latency " + fmt(p95) + " s");

    std::atomic<int> ok{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 50; ++i)
      threads.emplace_back([&, i] {
        httplib::Client tc("127.0.0.1", srv.port());
        tc.set_read_timeout(std::chrono::seconds(30));
        const auto& base = golden[static_cast<std::size_t>(i) % golden.size()].url;
        const std::string url = i < static_cast<int>(golden.size()) ? base : "https://concurrent-" + std::to_string(i) + ".example.com/";
        auto r = tc.Post("/predict", Json{{"url", url}}.dump(), "application/json");
        if (r && r->status == 200) ++ok;
      });
    for (auto& t : threads) t.join();
    c.expect(ok == 50, std::to_string(ok.load()) + "/50 concurrent predicts succeeded");
    c.note(std::to_string(right) + "/" + std::to_string(golden.size()) + " golden classes, P95 " + fmt(p95 * 1000, 1) +
           " ms, " + std::to_string(ok.load()) + "/50 concurrent");
  }

  // Crash during a stream of appends.
  fs::remove_all(history);
  std::set<std::uint64_t> acked;
  std::mutex acked_mu;
  {
    ServeProcess srv(model, history);
    httplib::Client cl("127.0.0.1", srv.port());
    auto v = cl.Post("/predict", Json{{"url", golden[0].url}}.dump(), "application/json");
    const Json verdict = Json::parse(v->body);
    std::atomic<bool> stop{false};
    std::vector<std::thread> writers;
    for (int w = 0; w < 4; ++w)
      writers.emplace_back([&] {
        httplib::Client wc("127.0.0.1", srv.port());
        wc.set_read_timeout(std::chrono::seconds(5));
        while (!stop) {
          auto r = wc.Post("/history", Json{{"verdict_id", verdict["id"]}, {"user_action", "visited"}}.dump(),
                           "application/json");
          if (!r) break;
          if (r->status == 200) {
            std::lock_guard lock(acked_mu);
            acked.insert(Json::parse(r->body)["entry"]["seq"].get<std::uint64_t>());
          }
        }
      });
    std::this_thread::sleep_for(std::chrono::milliseconds(400));
    srv.kill(SIGKILL);
    stop = true;
    for (auto& t : writers) t.join();
  }
  std::vector<HistoryEntry> survived;
  try {
    survived = HistoryStore::read_all(history);
  } catch (const std::exception& e) {
    c.expect(false, std::string("history unreadable after kill -9: ") + e.what());
  }
  for (std::size_t i = 0; i < survived.size(); ++i) c.expect(survived[i].seq == i + 1, "history is not a prefix");
  for (auto seq : acked) c.expect(seq <= survived.size(), "acknowledged entry " + std::to_string(seq) + " lost");
  c.expect(!acked.empty(), "no append was acknowledged before the kill");

  // A restarted service continues the log.
  {
    ServeProcess srv(model, history);
    httplib::Client cl("127.0.0.1", srv.port());
    auto v = cl.Post("/predict", Json{{"url", golden[1].url}}.dump(), "application/json");
    auto r = cl.Post("/history", Json{{"verdict", Json::parse(v->body)}, {"user_action", "declined"}}.dump(),
                     "application/json");
    c.expect(r && r->status == 200 &&
                 Json::parse(r->body)["entry"]["seq"].get<std::uint64_t>() == survived.size() + 1,
             "restart does not continue the log");
  }
  c.note(std::to_string(acked.size()) + " appends acknowledged before kill -9, " + std::to_string(survived.size()) +
         " readable after");
}

}  // namespace

int main() {
  log::set_level(log::Level::error);
  TempDir work;
  struct Criterion {
    const char* name;
    std::function<void(Check&)> run;
  };
  const std::vector<Criterion> criteria{
      {"feature-oracle: fixture corpus extracts to the golden matrix", golden_matrix},
      {"threshold boundaries: length, redirects, age, expiry, percentage bands", boundaries},
      {"classifier comparison: 10-fold CV accuracy RF >= LR >= NB and RF >= 0.90", classifier_ordering},
      {"ML properties: Gini, gradient, posteriors, metrics, k-fold", ml_properties},
      {"determinism: identical model bytes, save/load/predict agrees", [&](Check& c) { determinism(c, work.path()); }},
      {"service round trip: golden classes, P95 < 1 s, 50 concurrent, kill -9 safe history",
       [&](Check& c) { service_round_trip(c, work.path()); }},
  };

  int failed = 0;
  for (const auto& crit : criteria) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      crit.run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = c.failures.empty();
    failed += !ok;
    std::cout << (ok ? "PASS " : "FAIL ") << crit.name << " (" << fmt(secs, 1) << " s)";
    for (const auto& n : c.notes) std::cout << "; " << n;
    std::cout << '\n';
    for (const auto& f : c.failures) std::cout << "    " << f << '\n';
  }
  return failed == 0 ? 0 : 1;
}
