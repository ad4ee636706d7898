#pragma once

#include <algorithm>
#include <chrono>
#include <deque>
#include <filesystem>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>

#include "phishlens/dataset.hpp"
#include "phishlens/history.hpp"
#include "phishlens/ml/model.hpp"
#include "phishlens/verdict.hpp"

namespace phishlens::service {

inline constexpr int kDefaultPort = 8970;
inline constexpr const char* kDefaultHost = "127.0.0.1";

struct ServiceConfig {
  std::string host = kDefaultHost;
  int port = kDefaultPort;  // 0 picks a free port
  ExtractConfig extract;
  std::filesystem::path history_dir;
  std::uintmax_t history_rotate_bytes = 8u << 20;
  std::vector<std::string> allowed_origins;  // "*" allows any origin
  std::chrono::milliseconds deadline{10'000};
  std::size_t threads = 32;
  std::size_t verdict_cache = 4096;
  std::size_t max_body_bytes = 1u << 20;
  std::size_t default_history_limit = 100;
};

/// Stable verdict id: the same model judging the same URL always yields the
/// same id, which keeps repeated predictions identical.
inline std::string verdict_id(const std::string& model_id, const std::string& url) {
  return ml::sha256_hex(model_id + "\n" + url).substr(0, 24);
}

inline Json error_body(std::string_view code, std::string_view message) {
  return Json{{"protocol_version", kProtocolVersion}, {"error", {{"code", code}, {"message", message}}}};
}

/// The verdict server. Owns an httplib server plus everything a handler
/// needs; extraction runs on its own thread so a request can give up at the
/// deadline while the work finishes in the background.
class Service {
 public:
  explicit Service(ServiceConfig cfg) : state_(std::make_shared<State>(std::move(cfg))) {
    if (!state_->cfg.extract.evidence.pages || !state_->cfg.extract.evidence.whois || !state_->cfg.extract.evidence.ranks)
      throw InvalidConfig("service needs page, WHOIS and rank evidence sources");
    if (state_->cfg.history_dir.empty()) throw InvalidConfig("service needs a history directory");
    if (state_->cfg.deadline.count() <= 0) throw InvalidConfig("deadline must be positive");
    state_->history = std::make_unique<HistoryStore>(
        HistoryStore::Options{state_->cfg.history_dir, state_->cfg.history_rotate_bytes, true});
    routes();
  }

  ~Service() { stop(); }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void set_model(ml::LoadedModel model) {
    ml::check_schema(model.model);
    std::lock_guard lock(state_->model_mu);
    state_->model = std::make_shared<const ml::LoadedModel>(std::move(model));
  }

  void load_model(const std::filesystem::path& path) { set_model(ml::load_model_with_id(path)); }

  std::optional<std::string> model_id() const {
    auto m = state_->current_model();
    return m ? std::optional(m->model_id) : std::nullopt;
  }

  /// Binds the listening socket and returns the port.
  int bind() {
    const auto& cfg = state_->cfg;
    if (cfg.port == 0) {
      port_ = server_.bind_to_any_port(cfg.host);
    } else {
      port_ = server_.bind_to_port(cfg.host, cfg.port) ? cfg.port : -1;
    }
    if (port_ < 0) throw InvalidConfig("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
    return port_;
  }

  /// Serves until stop(). Call bind() first.
  void run() { server_.listen_after_bind(); }

  /// bind() + run() on a background thread; returns the port once ready.
  int start() {
    const int port = bind();
    thread_ = std::thread([this] { run(); });
    server_.wait_until_ready();
    return port;
  }

  void stop() {
    if (server_.is_running()) server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  httplib::Server& http() { return server_; }

  /// Extraction plus prediction without HTTP. Throws MalformedUrl.
  Verdict predict(const std::string& url) const { return state_->predict(url); }

 private:
  struct State {
    explicit State(ServiceConfig c) : cfg(std::move(c)) {}

    ServiceConfig cfg;
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

    std::mutex model_mu;
    std::shared_ptr<const ml::LoadedModel> model;

    std::unique_ptr<HistoryStore> history;

    std::mutex cache_mu;
    std::unordered_map<std::string, Verdict> cache;
    std::deque<std::string> cache_order;

    std::shared_ptr<const ml::LoadedModel> current_model() {
      std::lock_guard lock(model_mu);
      return model;
    }

    Verdict predict(const std::string& url) {
      const auto begin = std::chrono::steady_clock::now();
      parse_url(url, cfg.extract.suffixes ? *cfg.extract.suffixes : default_suffix_list());
      auto m = current_model();
      if (!m) throw InvalidConfig("no model loaded");
      const Extraction x = extract_url(url, std::nullopt, cfg.extract);
      const ml::Prediction p = ml::predict(m->model, x.row.features);
      Verdict v;
      v.url = url;
      v.id = verdict_id(m->model_id, url);
      v.deceptive = p.label == Label::phishing;
      v.score = p.score;
      v.features = x.row.features;
      v.model_id = m->model_id;
      v.timestamp = now_timestamp();
      v.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - begin).count();
      remember(v);
      return v;
    }

    void remember(const Verdict& v) {
      std::lock_guard lock(cache_mu);
      if (cache.insert_or_assign(v.id, v).second) cache_order.push_back(v.id);
      while (cache_order.size() > std::max<std::size_t>(cfg.verdict_cache, 1)) {
        cache.erase(cache_order.front());
        cache_order.pop_front();
      }
    }

    std::optional<Verdict> cached(const std::string& id) {
      std::lock_guard lock(cache_mu);
      auto it = cache.find(id);
      if (it == cache.end()) return std::nullopt;
      return it->second;
    }
  };

  static void reply(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void reply_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
    reply(res, status, error_body(code, message));
  }

  bool origin_allowed(const std::string& origin) const {
    const auto& list = state_->cfg.allowed_origins;
    return std::find(list.begin(), list.end(), "*") != list.end() ||
           std::find(list.begin(), list.end(), origin) != list.end();
  }

  void routes() {
    const auto& cfg = state_->cfg;
    server_.new_task_queue = [n = std::max<std::size_t>(cfg.threads, 1)] { return new httplib::ThreadPool(n); };
    server_.set_payload_max_length(cfg.max_body_bytes);
    server_.set_read_timeout(std::chrono::seconds(10));
    server_.set_write_timeout(std::chrono::seconds(10));

    server_.set_post_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_header("Origin")) return;
      const auto origin = req.get_header_value("Origin");
      res.set_header("Vary", "Origin");
      if (origin_allowed(origin)) res.set_header("Access-Control-Allow-Origin", origin);
    });

    server_.Options(".*", [this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_header("Origin") || !origin_allowed(req.get_header_value("Origin"))) {
        reply_error(res, 403, "origin_not_allowed", "origin is not on the allowlist");
        return;
      }
      res.status = 204;
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Max-Age", "600");
    });

    server_.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) { handle_predict(req, res); });
    server_.Post("/history", [this](const httplib::Request& req, httplib::Response& res) { handle_append(req, res); });
    server_.Get("/history", [this](const httplib::Request& req, httplib::Response& res) { handle_history(req, res); });
    server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) { handle_health(res); });

    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      reply_error(res, res.status, res.status == 404 ? "not_found" : "http_error", httplib::status_message(res.status));
    });
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string message = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        message = e.what();
      } catch (...) {
      }
      log::error("request failed: " + message);
      reply_error(res, 500, "internal", message);
    });
  }

  void handle_predict(const httplib::Request& req, httplib::Response& res) {
    const Json body = Json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return reply_error(res, 400, "bad_request", "body must be a JSON object");
    if (!body.contains("url") || !body["url"].is_string())
      return reply_error(res, 400, "bad_request", "body needs a string \"url\"");
    const std::string url = body["url"].get<std::string>();
    try {
      const auto& cfg = state_->cfg;
      parse_url(url, cfg.extract.suffixes ? *cfg.extract.suffixes : default_suffix_list());
    } catch (const Error& e) {
      return reply_error(res, 400, "malformed_url", e.what());
    }
    if (!state_->current_model()) return reply_error(res, 503, "model_not_loaded", "no model loaded");

    auto task = std::make_shared<std::packaged_task<Verdict()>>([state = state_, url] { return state->predict(url); });
    auto future = task->get_future();
    std::thread([task] { (*task)(); }).detach();
    if (future.wait_for(state_->cfg.deadline) != std::future_status::ready)
      return reply_error(res, 504, "timeout", "verdict unavailable: extraction deadline exceeded");
    try {
      Json j = to_json(future.get());
      j["protocol_version"] = kProtocolVersion;
      reply(res, 200, j);
    } catch (const MalformedUrl& e) {
      reply_error(res, 400, "malformed_url", e.what());
    } catch (const Error& e) {
      reply_error(res, 503, "unavailable", e.what());
    }
  }

  void handle_append(const httplib::Request& req, httplib::Response& res) {
    const Json body = Json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return reply_error(res, 400, "bad_request", "body must be a JSON object");
    if (!body.contains("user_action") || !body["user_action"].is_string())
      return reply_error(res, 400, "bad_action", "body needs a string \"user_action\"");
    const auto action = user_action_from_string(body["user_action"].get<std::string>());
    if (!action) return reply_error(res, 400, "bad_action", "user_action must be visited, declined or none");

    Verdict verdict;
    if (body.contains("verdict")) {
      if (auto err = verdict_from_json(body["verdict"], verdict)) return reply_error(res, 400, "bad_verdict", *err);
    } else if (body.contains("verdict_id") && body["verdict_id"].is_string()) {
      auto found = state_->cached(body["verdict_id"].get<std::string>());
      if (!found) return reply_error(res, 404, "unknown_verdict", "no recent verdict with that id");
      verdict = std::move(*found);
    } else {
      return reply_error(res, 400, "bad_request", "body needs \"verdict_id\" or \"verdict\"");
    }

    const HistoryEntry entry = state_->history->append(verdict, *action);
    reply(res, 200, Json{{"protocol_version", kProtocolVersion}, {"ack", true}, {"entry", to_json(entry)}});
  }

  void handle_history(const httplib::Request& req, httplib::Response& res) {
    std::size_t limit = state_->cfg.default_history_limit;
    if (req.has_param("limit")) {
      auto n = text::parse_int(req.get_param_value("limit"));
      if (!n || *n < 0) return reply_error(res, 400, "bad_request", "limit must be a non-negative integer");
      limit = static_cast<std::size_t>(*n);
    }
    Json entries = Json::array();
    for (const auto& e : state_->history->recent(limit)) entries.push_back(to_json(e));
    reply(res, 200, Json{{"protocol_version", kProtocolVersion}, {"entries", std::move(entries)}});
  }

  void handle_health(httplib::Response& res) {
    const double uptime =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - state_->started).count();
    auto m = state_->current_model();
    if (!m) {
      return reply(res, 503, Json{{"protocol_version", kProtocolVersion}, {"status", "no_model"},
                                  {"model_id", nullptr}, {"uptime_s", uptime}});
    }
    reply(res, 200, Json{{"protocol_version", kProtocolVersion}, {"status", "ok"}, {"model_id", m->model_id},
                         {"model_kind", ml::to_string(m->model.kind)}, {"uptime_s", uptime}});
  }

  std::shared_ptr<State> state_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace phishlens::service
