#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "phishlens/dates.hpp"
#include "phishlens/feature_schema.hpp"

namespace phishlens {

using Json = nlohmann::ordered_json;

inline constexpr int kProtocolVersion = 1;

struct Verdict {
  std::string id;
  std::string url;
  bool deceptive = false;  // class: deceptive iff score >= 0.5
  double score = 0;
  FeatureVector features;
  std::string model_id;
  double latency_ms = 0;
  Timestamp timestamp{};

  std::string_view class_name() const { return deceptive ? "deceptive" : "safe"; }

  bool operator==(const Verdict&) const = default;
};

enum class UserAction { visited, declined, none };

constexpr std::string_view to_string(UserAction a) {
  switch (a) {
    case UserAction::visited: return "visited";
    case UserAction::declined: return "declined";
    case UserAction::none: return "none";
  }
  return "none";
}

inline std::optional<UserAction> user_action_from_string(std::string_view s) {
  if (s == "visited") return UserAction::visited;
  if (s == "declined") return UserAction::declined;
  if (s == "none") return UserAction::none;
  return std::nullopt;
}

struct HistoryEntry {
  std::uint64_t seq = 0;
  Timestamp recorded_at{};
  UserAction user_action = UserAction::none;
  Verdict verdict;

  bool operator==(const HistoryEntry&) const = default;
};

inline Json features_json(const FeatureVector& v) {
  Json j = Json::object();
  for (std::size_t i = 0; i < kFeatureCount; ++i) j[std::string(kFeatureNames[i])] = v.values[i];
  return j;
}

inline Json to_json(const Verdict& v) {
  return Json{{"id", v.id},
              {"url", v.url},
              {"class", v.class_name()},
              {"score", v.score},
              {"features", features_json(v.features)},
              {"model_id", v.model_id},
              {"latency_ms", v.latency_ms},
              {"timestamp", format_timestamp(v.timestamp)}};
}

inline Json to_json(const HistoryEntry& e) {
  return Json{{"seq", e.seq},
              {"recorded_at", format_timestamp(e.recorded_at)},
              {"user_action", to_string(e.user_action)},
              {"verdict", to_json(e.verdict)}};
}

/// Reads a verdict supplied by a client. Returns an error message instead
/// of throwing so callers can map it to a 400.
inline std::optional<std::string> verdict_from_json(const Json& j, Verdict& out) {
  if (!j.is_object()) return "verdict must be an object";
  auto str = [&](const char* key, std::string& dst, bool required) -> std::optional<std::string> {
    if (!j.contains(key)) return required ? std::optional<std::string>(std::string("verdict.") + key + " missing") : std::nullopt;
    if (!j[key].is_string()) return std::string("verdict.") + key + " must be a string";
    dst = j[key].get<std::string>();
    return std::nullopt;
  };
  Verdict v;
  if (auto e = str("id", v.id, false)) return e;
  if (auto e = str("url", v.url, true)) return e;
  if (auto e = str("model_id", v.model_id, true)) return e;
  std::string cls;
  if (auto e = str("class", cls, true)) return e;
  if (cls != "safe" && cls != "deceptive") return "verdict.class must be safe or deceptive";
  v.deceptive = cls == "deceptive";
  if (!j.contains("score") || !j["score"].is_number()) return "verdict.score must be a number";
  v.score = j["score"].get<double>();
  if (!(v.score >= 0 && v.score <= 1)) return "verdict.score must lie in [0, 1]";
  if (v.deceptive != (v.score >= 0.5)) return "verdict.class disagrees with score";
  if (!j.contains("features") || !j["features"].is_object()) return "verdict.features must be an object";
  const auto& f = j["features"];
  if (f.size() != kFeatureCount) return "verdict.features must hold exactly 23 values";
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const std::string name(kFeatureNames[i]);
    if (!f.contains(name) || !f[name].is_number_integer()) return "verdict.features." + name + " missing";
    const auto value = f[name].get<long long>();
    if (!in_domain(static_cast<Feature>(i), static_cast<int>(value)) || value > 1'000'000)
      return "verdict.features." + name + " out of domain";
    v.features.values[i] = static_cast<int>(value);
  }
  if (j.contains("latency_ms")) {
    if (!j["latency_ms"].is_number()) return "verdict.latency_ms must be a number";
    v.latency_ms = j["latency_ms"].get<double>();
  }
  if (j.contains("timestamp")) {
    if (!j["timestamp"].is_string()) return "verdict.timestamp must be a string";
    auto ts = parse_timestamp(j["timestamp"].get<std::string>());
    if (!ts) return "verdict.timestamp unreadable";
    v.timestamp = *ts;
  }
  out = std::move(v);
  return std::nullopt;
}

inline std::optional<std::string> history_entry_from_json(const Json& j, HistoryEntry& out) {
  if (!j.is_object() || !j.contains("seq") || !j["seq"].is_number_unsigned()) return "entry.seq missing";
  if (!j.contains("recorded_at") || !j["recorded_at"].is_string()) return "entry.recorded_at missing";
  if (!j.contains("user_action") || !j["user_action"].is_string()) return "entry.user_action missing";
  HistoryEntry e;
  e.seq = j["seq"].get<std::uint64_t>();
  auto ts = parse_timestamp(j["recorded_at"].get<std::string>());
  if (!ts) return "entry.recorded_at unreadable";
  e.recorded_at = *ts;
  auto action = user_action_from_string(j["user_action"].get<std::string>());
  if (!action) return "entry.user_action unknown";
  e.user_action = *action;
  if (!j.contains("verdict")) return "entry.verdict missing";
  if (auto err = verdict_from_json(j["verdict"], e.verdict)) return err;
  out = std::move(e);
  return std::nullopt;
}

}  // namespace phishlens
