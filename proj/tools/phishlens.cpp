// phishlens: ingest feeds, extract features, train and evaluate models,
// predict single URLs and run the local verdict service.
//
// Exit codes: 0 success or safe verdict, 10 deceptive verdict, 2 usage or
// data error, 1 internal error.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "phishlens/dataset.hpp"
#include "phishlens/history.hpp"
#include "phishlens/ml/cross_validation.hpp"
#include "phishlens/ml/model.hpp"
#include "phishlens/service.hpp"
#include "phishlens/synthetic.hpp"

namespace fs = std::filesystem;
using namespace phishlens;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDeceptive = 10;

struct EvidenceOptions {
  bool offline = false;
  fs::path evidence_dir;
  fs::path cache_dir;
  fs::path rank_snapshot;
  fs::path record_dir;
  fs::path ca_bundle;
  int timeout_ms = 10'000;

  void add_to(CLI::App* cmd) {
    cmd->add_flag("--offline", offline, "Read evidence from --evidence-dir instead of the network");
    cmd->add_option("--evidence-dir", evidence_dir, "Offline evidence directory (snapshots/, whois/, ranks.csv, now.txt)");
    cmd->add_option("--cache-dir", cache_dir, "WHOIS response cache for online mode");
    cmd->add_option("--rank-snapshot", rank_snapshot, "Rank snapshot CSV for online mode");
    cmd->add_option("--record-dir", record_dir, "Store fetched page snapshots here for later offline runs");
    cmd->add_option("--ca-bundle", ca_bundle, "PEM bundle of trusted roots for the certificate check");
    cmd->add_option("--timeout-ms", timeout_ms, "Per-fetch timeout")->check(CLI::PositiveNumber);
  }

  Evidence build() const {
    if (offline) {
      if (evidence_dir.empty()) throw InvalidConfig("--offline needs --evidence-dir");
      return offline_evidence(evidence_dir);
    }
    OnlineEvidenceConfig cfg;
    cfg.fetch.timeout = std::chrono::milliseconds(timeout_ms);
    if (!ca_bundle.empty()) cfg.fetch.ca_bundle = ca_bundle.string();
    cfg.cache_dir = cache_dir;
    cfg.rank_snapshot = rank_snapshot;
    cfg.record_dir = record_dir;
    return online_evidence(cfg);
  }
};

std::string fixed(double v, int digits = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], row[i].size());
    }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      out << std::left << std::setw(static_cast<int>(width[i])) << rows[r][i];
      if (i + 1 < rows[r].size()) out << "  ";
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
}

void print_metrics(std::ostream& out, const ml::Metrics& m) {
  print_table(out, {{"metric", "value"},
                    {"accuracy", fixed(m.accuracy)},
                    {"precision", fixed(m.precision)},
                    {"recall", fixed(m.recall)},
                    {"f1", fixed(m.f1)},
                    {"macro_f1", fixed(m.macro_f1)},
                    {"weighted_f1", fixed(m.weighted_f1)}});
  out << "confusion: tp=" << m.tp << " fp=" << m.fp << " tn=" << m.tn << " fn=" << m.fn << '\n';
}

// Grid file: one axis per line, `name = v1, v2, ...`; '#' starts a comment.
ml::Grid read_grid(const fs::path& path) {
  ml::Grid grid;
  std::istringstream in(text::read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (text::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidConfig("grid line " + std::to_string(line_no) + " needs name = values");
    std::vector<double> values;
    for (const auto& cell : csv::parse_line(line.substr(eq + 1))) {
      auto v = ml::parse_double(text::trim(cell));
      if (!v) throw InvalidConfig("grid line " + std::to_string(line_no) + ": bad value '" + cell + "'");
      values.push_back(*v);
    }
    grid.emplace_back(std::string(text::trim(std::string_view(line).substr(0, eq))), std::move(values));
  }
  if (grid.empty()) throw InvalidConfig("grid file " + path.string() + " has no axes");
  return grid;
}

std::vector<ml::ModelKind> kinds_for(const std::string& name) {
  if (name == "all") return {ml::ModelKind::naive_bayes, ml::ModelKind::logistic, ml::ModelKind::random_forest};
  auto kind = ml::model_kind_from_string(name);
  if (!kind) throw InvalidConfig("unknown model kind '" + name + "' (nb, lr, rf or all)");
  return {*kind};
}

// ---------------------------------------------------------------------------

struct IngestCmd {
  fs::path feed, out;
  std::string label, source;
  std::optional<std::size_t> limit;
  bool append = false;

  void setup(CLI::App& app) {
    auto* cmd = app.add_subcommand("ingest", "Normalize a URL feed into a labeled URL list");
    cmd->add_option("--feed", feed, "Feed file: one URL per line or CSV with a url column")->required();
    cmd->add_option("--label", label, "Label for every URL")->required()->check(CLI::IsMember({"phish", "legit"}));
    cmd->add_option("--out", out, "Labeled URL list to write")->required();
    cmd->add_option("--limit", limit, "Keep at most N URLs")->check(CLI::NonNegativeNumber);
    cmd->add_option("--source", source, "Source tag (default: feed file name)");
    cmd->add_flag("--append", append, "Append to an existing list instead of replacing it");
    cmd->final_callback([this] { run(); });
  }

  void run() {
    auto items = ingest_feed(feed, label == "phish" ? Label::phishing : Label::legitimate, limit, source);
    const std::size_t n = items.size();
    if (append && fs::exists(out)) {
      auto existing = read_labeled_urls(out);
      existing.insert(existing.end(), items.begin(), items.end());
      items = std::move(existing);
    }
    write_labeled_urls(out, items);
    std::cout << "ingested " << n << " urls\n";
  }
};

struct ExtractCmd {
  fs::path in, out;
  std::size_t parallel = 1;
  EvidenceOptions evidence;

  void setup(CLI::App& app) {
    auto* cmd = app.add_subcommand("extract", "Extract the feature matrix for a labeled URL list");
    cmd->add_option("--in", in, "Labeled URL list (url,label,source)")->required();
    cmd->add_option("--out", out, "Feature matrix CSV to write")->required();
    cmd->add_option("--parallel", parallel, "Worker threads")->check(CLI::Range(1, 256));
    evidence.add_to(cmd);
    cmd->final_callback([this] { run(); });
  }

  void run() {
    const auto items = read_labeled_urls(in);
    ExtractConfig cfg;
    cfg.evidence = evidence.build();
    cfg.parallelism = parallel;
    ExtractReport report;
    const auto rows = extract_all(items, cfg, &report);
    save_matrix(rows, out);
    std::cout << "extracted " << rows.size() << " rows: malformed=" << report.malformed_urls
              << " fetch_failures=" << report.fetch_failures << " whois_not_found=" << report.whois_not_found
              << " unranked=" << report.unranked << '\n';
    std::cout << "folded:";
    for (std::size_t i = 0; i < kFeatureCount; ++i) std::cout << ' ' << kFeatureNames[i] << '=' << report.folded[i];
    std::cout << '\n';
  }
};

struct TrainCmd {
  fs::path matrix, out, report;
  std::string kind = "rf";
  std::string grid = "default";
  std::uint64_t seed = 42;
  std::size_t folds = 10;
  std::size_t threads = 0;

  void setup(CLI::App& app) {
    auto* cmd = app.add_subcommand("train", "Grid-search hyperparameters with k-fold CV and train the best model");
    cmd->add_option("--matrix", matrix, "Labeled feature matrix CSV")->required();
    cmd->add_option("--model-kind", kind, "nb, lr, rf, or all (keeps the most accurate)");
    cmd->add_option("--grid", grid, "'default', 'none', or a grid file (name = v1, v2 per line)");
    cmd->add_option("--seed", seed, "Seed for folds and training");
    cmd->add_option("--folds", folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
    cmd->add_option("--threads", threads, "Forest training threads (0: hardware concurrency)");
    cmd->add_option("--out", out, "Model file to write")->required();
    cmd->add_option("--report", report, "CSV report of every grid point");
    cmd->final_callback([this] { run(); });
  }

  void run() {
    const auto data = ml::TrainingSet::from_rows(load_matrix(matrix));
    ml::require_both_classes(data);
    const auto kinds = kinds_for(kind);
    if (grid != "default" && grid != "none" && kinds.size() > 1)
      throw InvalidConfig("a grid file applies to one model kind; pick --model-kind");

    ml::Hyperparams base;
    if (threads > 0) base["threads"] = static_cast<double>(threads);

    std::vector<ml::GridResult> results;
    for (auto k : kinds) {
      ml::Grid g;
      if (grid == "default") {
        g = ml::default_grid(k);
      } else if (grid == "none") {
        g = {};
      } else {
        g = read_grid(grid);
      }
      ml::Hyperparams kind_base;
      if (k == ml::ModelKind::random_forest) kind_base = base;
      log::info("grid search for " + std::string(ml::display_name(k)));
      results.push_back(ml::grid_search(data, k, g, folds, seed, kind_base));
    }

    std::size_t winner = 0;
    for (std::size_t i = 1; i < results.size(); ++i)
      if (results[i].best_row().cv.mean.at("accuracy") > results[winner].best_row().cv.mean.at("accuracy")) winner = i;
    const auto& best = results[winner];

    auto model = ml::train(data, best.best);
    model.metrics = best.best_row().cv.mean;
    model.metrics["cv_folds"] = static_cast<double>(folds);
    const std::string id = ml::save_model(model, out);

    if (!report.empty()) {
      std::ofstream rep(report, std::ios::binary | std::ios::trunc);
      if (!rep) throw FileUnreadable("cannot write " + report.string());
      bool first = true;
      for (const auto& r : results) {
        std::ostringstream one;
        ml::write_grid_report(one, r);
        std::string text = one.str();
        // Grid axes differ per classifier; each block keeps its own header.
        if (!first) rep << '\n';
        rep << text;
        first = false;
      }
    }

    std::vector<std::vector<std::string>> table{{"Classifier", "Accuracy", "Precision", "Recall", "F1-score"}};
    for (const auto& r : results) {
      const auto& m = r.best_row().cv.mean;
      table.push_back({std::string(ml::display_name(r.kind)), fixed(m.at("accuracy")), fixed(m.at("precision")),
                       fixed(m.at("recall")), fixed(m.at("f1"))});
    }
    print_table(std::cout, table);
    std::cout << "best: " << ml::display_name(best.kind);
    for (const auto& [name, v] : best.best_row().point) std::cout << ' ' << name << '=' << ml::format_double(v);
    std::cout << "\nmodel " << out.string() << " id " << id << '\n';
  }
};

struct EvaluateCmd {
  fs::path matrix, model;
  std::optional<std::size_t> cv;

  void setup(CLI::App& app) {
    auto* cmd = app.add_subcommand("evaluate", "Score a model on a labeled matrix");
    cmd->add_option("--matrix", matrix, "Labeled feature matrix CSV")->required();
    cmd->add_option("--model", model, "Model file")->required();
    cmd->add_option("--cv", cv, "Re-run k-fold CV with the model's configuration instead")->check(CLI::Range(2, 1000));
    cmd->final_callback([this] { run(); });
  }

  void run() {
    const auto loaded = ml::load_model_with_id(model);
    const auto data = ml::TrainingSet::from_rows(load_matrix(matrix));
    std::cout << "model " << ml::display_name(loaded.model.kind) << " id " << loaded.model_id << '\n';
    if (cv) {
      const auto summary = ml::cross_validate(data, loaded.model.config, *cv, loaded.model.config.seed);
      std::vector<std::vector<std::string>> table{{"metric", "mean", "std"}};
      for (auto name : ml::kSummaryMetrics) {
        const std::string key(name);
        table.push_back({key, ml::format_double(summary.mean.at(key)), ml::format_double(summary.stddev.at(key))});
      }
      print_table(std::cout, table);
      return;
    }
    if (data.y.empty()) throw EmptyInput("matrix has no rows");
    print_metrics(std::cout, ml::evaluate(loaded.model, data));
  }
};

struct PredictCmd {
  std::vector<std::string> urls;
  fs::path model;
  EvidenceOptions evidence;

  void setup(CLI::App& app, int& exit_code) {
    auto* cmd = app.add_subcommand("predict", "Classify URLs as safe or deceptive");
    cmd->add_option("--url", urls, "URL to classify (repeatable)")->required();
    cmd->add_option("--model", model, "Model file")->required();
    evidence.add_to(cmd);
    cmd->final_callback([this, &exit_code] { exit_code = run(); });
  }

  int run() {
    const auto loaded = ml::load_model_with_id(model);
    for (const auto& url : urls) parse_url(url);
    ExtractConfig cfg;
    cfg.evidence = evidence.build();
    bool any_deceptive = false;
    for (const auto& url : urls) {
      const auto x = extract_url(url, std::nullopt, cfg);
      const auto p = ml::predict(loaded.model, x.row.features);
      const bool deceptive = p.label == Label::phishing;
      any_deceptive = any_deceptive || deceptive;
      std::cout << url << '\t' << (deceptive ? "deceptive" : "safe") << '\t' << fixed(p.score) << '\n';
    }
    return any_deceptive ? kExitDeceptive : kExitOk;
  }
};

struct ServeCmd {
  fs::path model;
  std::string host = service::kDefaultHost;
  int port = service::kDefaultPort;
  fs::path history_dir = "phishlens-history";
  std::vector<std::string> origins;
  int deadline_ms = 10'000;
  std::size_t threads = 32;
  EvidenceOptions evidence;

  void setup(CLI::App& app) {
    auto* cmd = app.add_subcommand("serve", "Run the local verdict service");
    cmd->add_option("--model", model, "Model file (the service answers 503 until one loads)");
    cmd->add_option("--host", host, "Bind address");
    cmd->add_option("--port", port, "Port; 0 picks a free one")->envname("PHISHLENS_PORT")->check(CLI::Range(0, 65535));
    cmd->add_option("--history-dir", history_dir, "History log directory");
    cmd->add_option("--allow-origin", origins, "CORS origin allowed to call the service (repeatable)");
    cmd->add_option("--deadline-ms", deadline_ms, "Per-request extraction deadline")->check(CLI::PositiveNumber);
    cmd->add_option("--threads", threads, "Request handler threads")->check(CLI::Range(1, 1024));
    evidence.add_to(cmd);
    cmd->final_callback([this] { run(); });
  }

  void run() {
    service::ServiceConfig cfg;
    cfg.host = host;
    cfg.port = port;
    cfg.extract.evidence = evidence.build();
    cfg.history_dir = history_dir;
    cfg.allowed_origins = origins;
    cfg.deadline = std::chrono::milliseconds(deadline_ms);
    cfg.threads = threads;
    service::Service svc(std::move(cfg));
    if (!model.empty()) svc.load_model(model);
    const int bound = svc.bind();

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);
    std::thread waiter([&svc, signals] {
      int sig = 0;
      sigwait(&signals, &sig);
      if (sig != 0) svc.http().stop();
    });

    std::cout << "listening on http://" << host << ':' << bound << std::endl;
    svc.run();
    // run() can also return on its own; wake the waiter either way.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  }
};

struct HistoryCmd {
  fs::path history_dir = "phishlens-history";
  std::size_t limit = 20;
  bool json = false;

  void setup(CLI::App& app) {
    auto* cmd = app.add_subcommand("history", "Show recorded verdicts, newest first");
    cmd->add_option("--history-dir", history_dir, "History log directory");
    cmd->add_option("--limit", limit, "Entries to show");
    cmd->add_flag("--json", json, "One JSON object per line");
    cmd->final_callback([this] { run(); });
  }

  void run() {
    if (!fs::is_directory(history_dir)) throw FileUnreadable("no history directory " + history_dir.string());
    const auto entries = HistoryStore::read_recent(history_dir, limit);
    if (json) {
      for (const auto& e : entries) std::cout << to_json(e).dump() << '\n';
      return;
    }
    std::vector<std::vector<std::string>> table{{"seq", "recorded_at", "action", "class", "score", "url"}};
    for (const auto& e : entries)
      table.push_back({std::to_string(e.seq), format_timestamp(e.recorded_at), std::string(to_string(e.user_action)),
                       std::string(e.verdict.class_name()), fixed(e.verdict.score), e.verdict.url});
    print_table(std::cout, table);
  }
};

struct SynthCmd {
  fs::path base, out;
  std::size_t rows = 500;
  std::uint64_t seed = 7;

  void setup(CLI::App& app) {
    auto* cmd = app.add_subcommand("synth", "Grow a labeled matrix with synthetic rows");
    cmd->add_option("--base", base, "Matrix whose rows come first (optional)");
    cmd->add_option("--rows", rows, "Total rows")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Generator seed");
    cmd->add_option("--out", out, "Matrix CSV to write")->required();
    cmd->final_callback([this] { run(); });
  }

  void run() {
    std::vector<FeatureRow> result;
    if (base.empty()) {
      synthetic::SyntheticConfig cfg;
      cfg.rows = rows;
      cfg.seed = seed;
      result = synthetic::synthesize(cfg);
    } else {
      result = synthetic::expand(load_matrix(base), rows, seed);
    }
    save_matrix(result, out);
    std::cout << "wrote " << result.size() << " rows\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phishlens: phishing URL detection"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file (keys as flags, one [section] per subcommand)")
      ->envname("PHISHLENS_CONFIG");
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Log progress");
  app.add_flag("-q,--quiet", quiet, "Log errors only");
  app.parse_complete_callback([&] {
    if (verbose) log::set_level(log::Level::info);
    if (quiet) log::set_level(log::Level::error);
  });

  int exit_code = kExitOk;
  IngestCmd ingest;
  ExtractCmd extract;
  TrainCmd train;
  EvaluateCmd evaluate;
  PredictCmd predict;
  ServeCmd serve;
  HistoryCmd history;
  SynthCmd synth;
  ingest.setup(app);
  extract.setup(app);
  train.setup(app);
  evaluate.setup(app);
  predict.setup(app, exit_code);
  serve.setup(app);
  history.setup(app);
  synth.setup(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "phishlens: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "phishlens: internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return exit_code;
}
