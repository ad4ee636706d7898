#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

#include "phishlens/content.hpp"
#include "phishlens/fetch.hpp"
#include "phishlens/log.hpp"
#include "phishlens/reputation.hpp"

namespace phishlens {

/// Where page snapshots come from: the network, or a directory of stored
/// snapshot files.
class SnapshotSource {
 public:
  virtual ~SnapshotSource() = default;
  virtual PageSnapshot get(const std::string& url) = 0;
};

class LiveSnapshotSource : public SnapshotSource {
 public:
  explicit LiveSnapshotSource(FetchConfig cfg = {}, std::ptrdiff_t max_concurrent = 8)
      : fetcher_(std::move(cfg), max_concurrent) {}

  PageSnapshot get(const std::string& url) override { return fetcher_.fetch(url); }

 private:
  Fetcher fetcher_;
};

/// Replays snapshot files (any name, `.snap` extension) indexed by their
/// requested_url header. URLs without a stored snapshot replay as an
/// unreachable page.
class StoredSnapshotSource : public SnapshotSource {
 public:
  explicit StoredSnapshotSource(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw FileUnreadable("snapshot directory " + dir.string());
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".snap") continue;
      PageSnapshot snap = read_snapshot(entry.path());
      const std::string key = snap.requested_url;
      snapshots_.insert_or_assign(key, std::move(snap));
    }
  }

  PageSnapshot get(const std::string& url) override {
    auto it = snapshots_.find(std::string(text::trim(url)));
    if (it != snapshots_.end()) return it->second;
    log::warning("no stored snapshot for " + url);
    PageSnapshot missing = PageSnapshot::failure(url, FetchError::dns_failure);
    missing.fetched_at = Timestamp{};
    return missing;
  }

  std::size_t size() const { return snapshots_.size(); }

 private:
  std::unordered_map<std::string, PageSnapshot> snapshots_;
};

/// Fetches live and stores each snapshot under `dir` so a later run can
/// replay it offline.
class RecordingSnapshotSource : public SnapshotSource {
 public:
  RecordingSnapshotSource(std::shared_ptr<SnapshotSource> inner, std::filesystem::path dir)
      : inner_(std::move(inner)), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  PageSnapshot get(const std::string& url) override {
    PageSnapshot snap = inner_->get(url);
    write_snapshot(dir_ / (text::hex64(text::fnv1a(url)) + ".snap"), snap);
    return snap;
  }

 private:
  std::shared_ptr<SnapshotSource> inner_;
  std::filesystem::path dir_;
};

/// Everything feature extraction reads besides the URL itself.
struct Evidence {
  std::shared_ptr<SnapshotSource> pages;
  std::shared_ptr<WhoisProvider> whois;
  std::shared_ptr<RankProvider> ranks;
  // Reference date for domain age and remaining registration.
  Date now = today();
};

/// Offline evidence directory:
///   now.txt              reference date (YYYY-MM-DD); today when absent
///   ranks.csv            rank snapshot; everything unranked when absent
///   whois/<domain>.txt   raw WHOIS responses
///   snapshots/*.snap     page snapshots
inline Evidence offline_evidence(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw FileUnreadable("evidence directory " + dir.string());
  Evidence ev;
  ev.pages = std::make_shared<StoredSnapshotSource>(dir / "snapshots");
  ev.whois = std::make_shared<FixtureWhoisProvider>(dir / "whois");
  if (std::filesystem::exists(dir / "ranks.csv")) {
    ev.ranks = std::make_shared<SnapshotRankProvider>(SnapshotRankProvider::load(dir / "ranks.csv"));
  } else {
    ev.ranks = std::make_shared<NullRankProvider>();
  }
  if (std::filesystem::exists(dir / "now.txt")) {
    auto date = parse_iso_date(text::read_file(dir / "now.txt"));
    if (!date) throw SchemaMismatch("now.txt must hold a YYYY-MM-DD date");
    ev.now = *date;
  }
  return ev;
}

struct OnlineEvidenceConfig {
  FetchConfig fetch;
  std::ptrdiff_t max_concurrent_fetches = 8;
  std::filesystem::path cache_dir;       // WHOIS cache; disabled when empty
  std::filesystem::path rank_snapshot;   // unranked everywhere when empty
  std::filesystem::path record_dir;      // store fetched snapshots when set
};

inline Evidence online_evidence(const OnlineEvidenceConfig& cfg) {
  Evidence ev;
  std::shared_ptr<SnapshotSource> pages = std::make_shared<LiveSnapshotSource>(cfg.fetch, cfg.max_concurrent_fetches);
  if (!cfg.record_dir.empty()) pages = std::make_shared<RecordingSnapshotSource>(pages, cfg.record_dir);
  ev.pages = std::move(pages);
  std::shared_ptr<WhoisProvider> whois = std::make_shared<TcpWhoisProvider>();
  if (!cfg.cache_dir.empty()) whois = std::make_shared<CachingWhoisProvider>(whois, cfg.cache_dir / "whois");
  ev.whois = std::move(whois);
  if (!cfg.rank_snapshot.empty()) {
    ev.ranks = std::make_shared<SnapshotRankProvider>(SnapshotRankProvider::load(cfg.rank_snapshot));
  } else {
    ev.ranks = std::make_shared<NullRankProvider>();
  }
  return ev;
}

}  // namespace phishlens
