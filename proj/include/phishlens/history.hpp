#pragma once

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "phishlens/error.hpp"
#include "phishlens/log.hpp"
#include "phishlens/text.hpp"
#include "phishlens/verdict.hpp"

namespace phishlens {

/// Append-only JSON-lines history. The active file is history.jsonl; when
/// an append would push it past `rotate_bytes` it is renamed to
/// history-NNNNNN.jsonl and a fresh file is started. Every append is
/// written and fsync'd before append() returns.
class HistoryStore {
 public:
  struct Options {
    std::filesystem::path dir;
    std::uintmax_t rotate_bytes = 8u << 20;
    bool sync = true;
  };

  explicit HistoryStore(Options opts) : opts_(std::move(opts)) {
    std::error_code ec;
    std::filesystem::create_directories(opts_.dir, ec);
    if (!std::filesystem::is_directory(opts_.dir))
      throw FileUnreadable("cannot create history dir " + opts_.dir.string());
    repair_tail(active_path());
    for (const auto& e : read_all(opts_.dir)) {
      next_seq_ = std::max(next_seq_, e.seq + 1);
      last_ts_ = std::max(last_ts_, e.recorded_at);
    }
    open_active();
  }

  ~HistoryStore() {
    if (fd_ >= 0) ::close(fd_);
  }

  HistoryStore(const HistoryStore&) = delete;
  HistoryStore& operator=(const HistoryStore&) = delete;

  /// Stores the entry durably and returns it with seq and recorded_at set.
  /// Timestamps never go backwards, even if the wall clock does.
  HistoryEntry append(const Verdict& verdict, UserAction action) {
    std::lock_guard lock(mu_);
    HistoryEntry e;
    e.seq = next_seq_;
    e.recorded_at = std::max(now_timestamp(), last_ts_);
    e.user_action = action;
    e.verdict = verdict;
    const std::string line = to_json(e).dump() + "\n";

    if (size_ > 0 && size_ + line.size() > opts_.rotate_bytes) rotate();
    write_all(line);
    if (opts_.sync && ::fsync(fd_) != 0) throw FileUnreadable("fsync failed: " + std::string(std::strerror(errno)));
    size_ += line.size();
    ++next_seq_;
    last_ts_ = e.recorded_at;
    return e;
  }

  /// Newest first.
  std::vector<HistoryEntry> recent(std::size_t limit) const {
    std::lock_guard lock(mu_);
    return read_recent(opts_.dir, limit);
  }

  const std::filesystem::path& dir() const { return opts_.dir; }

  static std::filesystem::path active_path(const std::filesystem::path& dir) { return dir / "history.jsonl"; }

  /// Rotated files oldest first, then the active file.
  static std::vector<std::filesystem::path> files(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> rotated;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
      const auto name = entry.path().filename().string();
      if (name.size() == 20 && name.rfind("history-", 0) == 0 && name.substr(14) == ".jsonl")
        rotated.push_back(entry.path());
    }
    std::sort(rotated.begin(), rotated.end());
    if (std::filesystem::exists(active_path(dir))) rotated.push_back(active_path(dir));
    return rotated;
  }

  /// Every readable entry in append order. A torn last line (from a crash
  /// mid-write) is ignored; other unreadable lines are skipped with a warning.
  static std::vector<HistoryEntry> read_all(const std::filesystem::path& dir) {
    std::vector<HistoryEntry> out;
    for (const auto& path : files(dir)) {
      const std::string content = text::read_file(path);
      std::size_t pos = 0;
      std::size_t line_no = 0;
      while (pos < content.size()) {
        const auto nl = content.find('\n', pos);
        ++line_no;
        if (nl == std::string::npos) break;  // torn tail
        const std::string_view line(content.data() + pos, nl - pos);
        pos = nl + 1;
        if (text::trim(line).empty()) continue;
        HistoryEntry e;
        const Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded() || history_entry_from_json(j, e)) {
          log::warning("skipping unreadable history line " + std::to_string(line_no) + " in " + path.string());
          continue;
        }
        out.push_back(std::move(e));
      }
    }
    return out;
  }

  static std::vector<HistoryEntry> read_recent(const std::filesystem::path& dir, std::size_t limit) {
    auto all = read_all(dir);
    std::reverse(all.begin(), all.end());
    if (all.size() > limit) all.resize(limit);
    return all;
  }

 private:
  std::filesystem::path active_path() const { return active_path(opts_.dir); }

  // Drops a partial final line so later appends start on a line boundary.
  static void repair_tail(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return;
    const std::string content = text::read_file(path);
    if (content.empty() || content.back() == '\n') return;
    const auto keep = content.rfind('\n');
    std::filesystem::resize_file(path, keep == std::string::npos ? 0 : keep + 1, ec);
    if (ec) throw FileUnreadable("cannot repair " + path.string() + ": " + ec.message());
    log::warning("dropped torn final line of " + path.string());
  }

  void open_active() {
    fd_ = ::open(active_path().c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw FileUnreadable("cannot open " + active_path().string() + ": " + std::strerror(errno));
    struct stat st {};
    ::fstat(fd_, &st);
    size_ = static_cast<std::uintmax_t>(st.st_size);
    sync_dir();
  }

  void rotate() {
    ::close(fd_);
    fd_ = -1;
    std::size_t index = 1;
    const auto existing = files(opts_.dir);
    for (const auto& p : existing) {
      const auto name = p.filename().string();
      if (name.rfind("history-", 0) == 0)
        index = std::max(index, static_cast<std::size_t>(std::stoul(name.substr(8, 6))) + 1);
    }
    char name[32];
    std::snprintf(name, sizeof name, "history-%06zu.jsonl", index);
    std::filesystem::rename(active_path(), opts_.dir / name);
    open_active();
  }

  void sync_dir() const {
    if (!opts_.sync) return;
    const int dfd = ::open(opts_.dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
    if (dfd >= 0) {
      ::fsync(dfd);
      ::close(dfd);
    }
  }

  void write_all(const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
      const auto n = ::write(fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw FileUnreadable("history write failed: " + std::string(std::strerror(errno)));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  Options opts_;
  mutable std::mutex mu_;
  int fd_ = -1;
  std::uintmax_t size_ = 0;
  std::uint64_t next_seq_ = 1;
  Timestamp last_ts_{};
};

}  // namespace phishlens
