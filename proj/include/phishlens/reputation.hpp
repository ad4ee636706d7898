#pragma once

#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>

#include "phishlens/dates.hpp"
#include "phishlens/feature_schema.hpp"
#include "phishlens/log.hpp"
#include "phishlens/text.hpp"

namespace phishlens {

struct WhoisRecord {
  std::string domain;
  bool found = false;
  std::optional<Date> creation_date;
  std::optional<Date> expiration_date;

  bool operator==(const WhoisRecord&) const = default;
};

struct RankRecord {
  std::string domain;
  std::optional<long long> rank;  // absent = unranked

  bool operator==(const RankRecord&) const = default;
};

// ---------------------------------------------------------------------------
// WHOIS

namespace detail {

inline constexpr std::array<std::string_view, 10> kNotFoundMarkers = {
    "no match",          "not found",       "no data found",         "no entries found",      "status: free",
    "status: available", "no object found", "domain not registered", "object does not exist", "domain not found",
};

inline constexpr std::array<std::string_view, 11> kCreationKeys = {
    "creation date", "created",       "created on",        "created date",       "registered on",    "registered",
    "registration date", "domain registration date", "domain create date", "registration time", "domain created",
};

inline constexpr std::array<std::string_view, 11> kExpirationKeys = {
    "registry expiry date", "registrar registration expiration date", "expiration date", "expiry date",
    "expires",              "expires on",                             "expire date",     "paid-till",
    "expiration time",      "domain expiration date",                 "renewal date",
};

template <std::size_t N>
bool key_in(std::string_view key, const std::array<std::string_view, N>& keys) {
  for (auto k : keys)
    if (k == key) return true;
  return false;
}

}  // namespace detail

/// Reads a raw registry response. Only the first creation-style and the
/// first expiry-style line are considered; dates that fail to parse are
/// left absent.
inline WhoisRecord parse_whois_text(std::string_view domain, std::string_view response) {
  WhoisRecord record;
  record.domain = std::string(domain);
  if (text::trim(response).empty()) return record;

  std::istringstream in{std::string(response)};
  std::string line;
  // Registries announce a miss on a line of its own, sometimes behind a
  // comment marker ("% No entries found").
  while (std::getline(in, line)) {
    std::string_view view = text::trim(line);
    while (!view.empty() && (view.front() == '%' || view.front() == '#' || view.front() == '>')) {
      view.remove_prefix(1);
      view = text::trim(view);
    }
    for (auto marker : detail::kNotFoundMarkers) {
      if (text::istarts_with(view, marker)) return record;
    }
  }
  record.found = true;

  bool creation_seen = false;
  bool expiration_seen = false;
  in = std::istringstream{std::string(response)};
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = text::to_lower(text::trim(std::string_view(line).substr(0, colon)));
    const std::string_view value = text::trim(std::string_view(line).substr(colon + 1));
    if (!creation_seen && detail::key_in(key, detail::kCreationKeys)) {
      creation_seen = true;
      record.creation_date = parse_loose_date(value);
    } else if (!expiration_seen && detail::key_in(key, detail::kExpirationKeys)) {
      expiration_seen = true;
      record.expiration_date = parse_loose_date(value);
    }
  }
  if (record.creation_date && record.expiration_date && *record.creation_date > *record.expiration_date)
    record.expiration_date.reset();
  return record;
}

/// Source of raw WHOIS responses. An empty optional means the lookup
/// itself failed (network, timeout), not that the domain is unregistered.
class WhoisProvider {
 public:
  virtual ~WhoisProvider() = default;
  virtual std::optional<std::string> query(const std::string& domain) = 0;
};

/// Offline provider: `<dir>/<domain>.txt` holds the raw response. A
/// missing file behaves like an unregistered domain.
class FixtureWhoisProvider : public WhoisProvider {
 public:
  explicit FixtureWhoisProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::optional<std::string> query(const std::string& domain) override {
    const auto path = dir_ / (domain + ".txt");
    if (!std::filesystem::exists(path)) return std::string{};
    return text::read_file(path);
  }

 private:
  std::filesystem::path dir_;
};

/// Spaces successive calls at least `interval` apart.
class RateLimiter {
 public:
  explicit RateLimiter(std::chrono::milliseconds interval) : interval_(interval) {}

  void wait() {
    std::unique_lock lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    const auto slot = std::max(now, next_);
    next_ = slot + interval_;
    lock.unlock();
    std::this_thread::sleep_until(slot);
  }

 private:
  std::mutex mu_;
  std::chrono::milliseconds interval_;
  std::chrono::steady_clock::time_point next_{};
};

/// Speaks the WHOIS protocol on TCP/43: asks the root server for the
/// TLD's registry, then asks the registry.
class TcpWhoisProvider : public WhoisProvider {
 public:
  explicit TcpWhoisProvider(std::string root_server = "whois.iana.org", int port = 43,
                            std::chrono::milliseconds timeout = std::chrono::seconds(10),
                            std::chrono::milliseconds min_interval = std::chrono::milliseconds(500))
      : root_(std::move(root_server)), port_(port), timeout_(timeout), limiter_(min_interval) {}

  std::optional<std::string> query(const std::string& domain) override {
    const auto dot = domain.rfind('.');
    const std::string tld = dot == std::string::npos ? domain : domain.substr(dot + 1);
    limiter_.wait();
    auto referral = ask(root_, tld);
    if (!referral) return std::nullopt;
    std::string server;
    std::istringstream in(*referral);
    std::string line;
    while (std::getline(in, line)) {
      const std::string lowered = text::to_lower(line);
      if (lowered.rfind("refer:", 0) == 0 || lowered.rfind("whois:", 0) == 0) {
        server = std::string(text::trim(std::string_view(line).substr(6)));
        break;
      }
    }
    if (server.empty()) return std::nullopt;
    limiter_.wait();
    return ask(server, domain);
  }

 private:
  std::optional<std::string> ask(const std::string& server, const std::string& question) {
    addrinfo hints{};
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* result = nullptr;
    if (getaddrinfo(server.c_str(), std::to_string(port_).c_str(), &hints, &result) != 0) return std::nullopt;
    std::unique_ptr<addrinfo, decltype(&freeaddrinfo)> guard(result, freeaddrinfo);
    for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
      const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd < 0) continue;
      timeval tv{static_cast<time_t>(timeout_.count() / 1000), static_cast<suseconds_t>((timeout_.count() % 1000) * 1000)};
      setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
      setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) != 0) {
        ::close(fd);
        continue;
      }
      const std::string request = question + "\r\n";
      if (::send(fd, request.data(), request.size(), 0) != static_cast<ssize_t>(request.size())) {
        ::close(fd);
        return std::nullopt;
      }
      std::string response;
      char buf[4096];
      ssize_t n = 0;
      while ((n = ::recv(fd, buf, sizeof buf, 0)) > 0) response.append(buf, static_cast<std::size_t>(n));
      ::close(fd);
      if (n < 0) return std::nullopt;
      return response;
    }
    return std::nullopt;
  }

  std::string root_;
  int port_;
  std::chrono::milliseconds timeout_;
  RateLimiter limiter_;
};

// ---------------------------------------------------------------------------
// Disk cache

/// One file per key under `dir`, each holding the fill time (unix seconds)
/// on the first line and the value after it. Entries older than `ttl` are
/// ignored on read.
class DiskCache {
 public:
  DiskCache(std::filesystem::path dir, std::chrono::seconds ttl) : dir_(std::move(dir)), ttl_(ttl) {
    std::filesystem::create_directories(dir_);
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".cache") continue;
      std::ifstream in(entry.path(), std::ios::binary);
      std::string key_line, time_line;
      if (!std::getline(in, key_line) || !std::getline(in, time_line)) continue;
      auto filled = text::parse_int(time_line);
      if (!filled) continue;
      std::ostringstream rest;
      rest << in.rdbuf();
      entries_[key_line] = Entry{*filled, rest.str()};
    }
  }

  std::optional<std::string> get(const std::string& key, std::chrono::system_clock::time_point now =
                                                             std::chrono::system_clock::now()) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    const auto age = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count() - it->second.filled;
    if (age < 0 || age > ttl_.count()) return std::nullopt;
    return it->second.value;
  }

  void put(const std::string& key, const std::string& value,
           std::chrono::system_clock::time_point now = std::chrono::system_clock::now()) {
    const long long filled = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    std::unique_lock lock(mu_);
    const auto path = dir_ / (file_stem(key) + ".cache");
    const auto tmp = dir_ / (file_stem(key) + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << key << '\n' << filled << '\n' << value;
    }
    std::filesystem::rename(tmp, path);
    entries_[key] = Entry{filled, value};
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  struct Entry {
    long long filled;
    std::string value;
  };

  static std::string file_stem(const std::string& key) {
    const bool safe = !key.empty() && key.find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789.-_") == std::string::npos;
    return safe ? key : text::hex64(text::fnv1a(key));
  }

  std::filesystem::path dir_;
  std::chrono::seconds ttl_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, Entry> entries_;
};

inline constexpr std::chrono::seconds kDefaultCacheTtl = std::chrono::hours(24 * 7);

/// Serves successful responses of `inner` from a DiskCache. Failed
/// lookups are not cached.
class CachingWhoisProvider : public WhoisProvider {
 public:
  CachingWhoisProvider(std::shared_ptr<WhoisProvider> inner, std::filesystem::path dir,
                       std::chrono::seconds ttl = kDefaultCacheTtl)
      : inner_(std::move(inner)), cache_(std::move(dir), ttl) {}

  std::optional<std::string> query(const std::string& domain) override {
    if (auto hit = cache_.get(domain)) return hit;
    auto response = inner_->query(domain);
    if (response) cache_.put(domain, *response);
    return response;
  }

 private:
  std::shared_ptr<WhoisProvider> inner_;
  DiskCache cache_;
};

/// Lookup failures fold into an unregistered-looking record.
inline WhoisRecord lookup_whois(const std::string& domain, WhoisProvider& provider) {
  std::optional<std::string> response;
  try {
    response = provider.query(domain);
  } catch (const std::exception& e) {
    log::warning("whois lookup for " + domain + " threw: " + e.what());
  }
  if (!response) {
    log::warning("whois lookup failed for " + domain);
    return WhoisRecord{domain, false, std::nullopt, std::nullopt};
  }
  return parse_whois_text(domain, *response);
}

// ---------------------------------------------------------------------------
// Traffic rank

class RankProvider {
 public:
  virtual ~RankProvider() = default;
  virtual RankRecord rank(const std::string& domain) = 0;
};

class NullRankProvider : public RankProvider {
 public:
  RankRecord rank(const std::string& domain) override { return RankRecord{domain, std::nullopt}; }
};

/// Rank list in CSV form with a header row: "rank,domain", "domain,rank",
/// or the wider Majestic Million layout (GlobalRank,...,Domain,...).
class SnapshotRankProvider : public RankProvider {
 public:
  static SnapshotRankProvider load(const std::filesystem::path& path) {
    std::istringstream in(text::read_file(path));
    SnapshotRankProvider provider;
    std::string line;
    std::optional<std::size_t> rank_col, domain_col;
    bool first = true;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (text::trim(line).empty()) continue;
      const auto cells = text::split(line, ',');
      if (first) {
        first = false;
        for (std::size_t i = 0; i < cells.size(); ++i) {
          const std::string name = text::to_lower(text::trim(cells[i]));
          if (name == "domain") domain_col = i;
          if (name == "globalrank" || (name == "rank" && !rank_col)) rank_col = i;
        }
        if (rank_col && domain_col) continue;
        // No usable header: infer from this row and keep it as data.
        if (cells.size() < 2) throw SchemaMismatch("rank snapshot needs two columns: " + path.string());
        const bool first_numeric = text::parse_int(cells[0]).has_value();
        const bool second_numeric = text::parse_int(cells[1]).has_value();
        rank_col = first_numeric ? 0 : 1;
        domain_col = first_numeric ? 1 : 0;
        if (!first_numeric && !second_numeric) continue;  // unrecognised header line, e.g. "site,position"
      }
      if (cells.size() <= std::max(*rank_col, *domain_col)) continue;
      auto rank = text::parse_int(cells[*rank_col]);
      if (!rank || *rank < 1) continue;
      const std::string domain = text::to_lower(text::trim(cells[*domain_col]));
      if (!domain.empty()) provider.ranks_.emplace(domain, *rank);
    }
    return provider;
  }

  RankRecord rank(const std::string& domain) override {
    auto it = ranks_.find(text::to_lower(domain));
    return RankRecord{domain, it == ranks_.end() ? std::nullopt : std::optional<long long>(it->second)};
  }

  std::size_t size() const { return ranks_.size(); }

 private:
  std::unordered_map<std::string, long long> ranks_;
};

// ---------------------------------------------------------------------------
// Features

inline constexpr long long kMinDomainAgeDays = 365;        // 12 months
inline constexpr long long kMinRemainingRegistrationDays = 183;  // 6 months
inline constexpr long long kPopularRankCutoff = 100000;

struct ReputationConfig {
  // Use the inverted inequality for Web_Traffic (rank below the cutoff is
  // flagged) instead of popular => legitimate.
  bool web_traffic_literal = false;
};

inline FeatureValue feat_dns_record(const WhoisRecord& w) { return w.found ? kLegitimate : kPhishing; }

inline FeatureValue feat_domain_age(const WhoisRecord& w, Date now) {
  if (!w.creation_date) return kPhishing;
  return days_between(*w.creation_date, now) < kMinDomainAgeDays ? kPhishing : kLegitimate;
}

inline FeatureValue feat_domain_end(const WhoisRecord& w, Date now) {
  if (!w.expiration_date) return kPhishing;
  return days_between(now, *w.expiration_date) < kMinRemainingRegistrationDays ? kPhishing : kLegitimate;
}

inline FeatureValue feat_web_traffic(const RankRecord& r, const ReputationConfig& cfg = {}) {
  if (!r.rank) return kPhishing;
  if (cfg.web_traffic_literal) return *r.rank < kPopularRankCutoff ? kPhishing : kLegitimate;
  return *r.rank <= kPopularRankCutoff ? kLegitimate : kPhishing;
}

inline void reputation_features(const WhoisRecord& w, const RankRecord& r, Date now, const ReputationConfig& cfg,
                                FeatureVector& out) {
  out[Feature::DnsRecord] = feat_dns_record(w);
  out[Feature::WebTraffic] = feat_web_traffic(r, cfg);
  out[Feature::DomainAge] = feat_domain_age(w, now);
  out[Feature::DomainEnd] = feat_domain_end(w, now);
}

}  // namespace phishlens
