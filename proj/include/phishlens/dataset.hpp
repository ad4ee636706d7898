#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "phishlens/content.hpp"
#include "phishlens/csv.hpp"
#include "phishlens/evidence.hpp"
#include "phishlens/feature_schema.hpp"
#include "phishlens/lexical.hpp"
#include "phishlens/reputation.hpp"
#include "phishlens/url.hpp"

namespace phishlens {

struct LabeledUrl {
  std::string url;
  Label label = Label::legitimate;
  std::string source;

  bool operator==(const LabeledUrl&) const = default;
};

struct FeatureRow {
  std::string url;
  FeatureVector features;
  std::optional<Label> label;

  bool operator==(const FeatureRow&) const = default;
};

inline std::string_view label_name(Label label) { return label == Label::phishing ? "phishing" : "legitimate"; }

// ---------------------------------------------------------------------------
// Feed ingestion

namespace detail {

inline bool looks_like_url(std::string_view cell) {
  cell = text::trim(cell);
  if (cell.empty() || cell.find(' ') != std::string_view::npos) return false;
  if (cell.find("://") != std::string_view::npos) return true;
  if (cell.find('.') == std::string_view::npos) return false;
  if (text::parse_int(cell)) return false;
  try {
    parse_url(cell);
    return true;
  } catch (const Error&) {
    return false;
  }
}

// Identity used for de-duplication: host compared case-insensitively, the
// rest of the URL as written, bare hosts equal to their http:// form.
inline std::string dedupe_key(const ParsedUrl& p) {
  const std::string_view raw = text::trim(p.raw);
  const std::size_t offset = p.authority_offset - static_cast<std::size_t>(raw.data() - p.raw.data());
  std::string_view after = raw.substr(std::min(offset, raw.size()));
  const auto tail_start = after.find_first_of("/?#");
  const std::string_view tail = tail_start == std::string_view::npos ? std::string_view{} : after.substr(tail_start);
  std::string scheme = "http";
  if (!p.scheme_assumed) scheme = text::to_lower(raw.substr(0, raw.find("://")));
  std::string key = scheme + "://" + p.host;
  if (p.port) key += ":" + std::to_string(*p.port);
  key += tail == "/" ? std::string_view{} : tail;
  return key;
}

}  // namespace detail

/// Reads a URL feed: CSV with a url/domain column (found by header name or
/// by the first URL-shaped column), or plain text with one URL per line.
/// De-duplicates, keeps first-seen order, truncates to `limit`.
inline std::vector<LabeledUrl> ingest_feed(const std::filesystem::path& path, Label label,
                                           std::optional<std::size_t> limit = std::nullopt,
                                           std::string source = {}) {
  if (source.empty()) source = path.filename().string();
  const std::string content = text::read_file(path);

  std::vector<std::string> lines;
  {
    std::istringstream in(content);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (text::trim(line).empty() || text::trim(line).front() == '#') continue;
      lines.push_back(std::move(line));
    }
  }

  std::vector<std::string> candidates;
  const bool is_csv = !lines.empty() && lines.front().find(',') != std::string::npos;
  if (is_csv) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(lines.size());
    for (const auto& line : lines) rows.push_back(csv::parse_line(line));

    std::optional<std::size_t> column;
    std::size_t first_data = 0;
    for (std::string_view wanted : {"url", "domain", "site", "host"}) {
      for (std::size_t i = 0; i < rows[0].size() && !column; ++i)
        if (text::to_lower(text::trim(rows[0][i])) == wanted) column = i;
      if (column) break;
    }
    if (column) first_data = 1;
    for (std::size_t r = 0; r < std::min<std::size_t>(2, rows.size()) && !column; ++r) {
      for (std::size_t i = 0; i < rows[r].size(); ++i) {
        if (detail::looks_like_url(rows[r][i])) {
          column = i;
          first_data = r;
          break;
        }
      }
    }
    if (!column) throw NoUrlsFound("no URL column in " + path.string());
    for (std::size_t r = first_data; r < rows.size(); ++r)
      if (*column < rows[r].size()) candidates.emplace_back(text::trim(rows[r][*column]));
  } else {
    for (const auto& line : lines) candidates.emplace_back(text::trim(line));
  }

  std::vector<LabeledUrl> out;
  std::unordered_set<std::string> seen;
  for (const auto& candidate : candidates) {
    if (limit && out.size() >= *limit) break;
    if (candidate.empty()) continue;
    ParsedUrl parsed;
    try {
      parsed = parse_url(candidate);
    } catch (const Error& e) {
      log::warning(std::string("skipping feed entry: ") + e.what());
      continue;
    }
    if (!seen.insert(detail::dedupe_key(parsed)).second) continue;
    out.push_back(LabeledUrl{candidate, label, source});
  }
  if (out.empty()) throw NoUrlsFound("no URLs in " + path.string());
  return out;
}

/// Labeled URL list as written by `phishlens ingest`: url,label,source.
inline void write_labeled_urls(const std::filesystem::path& path, const std::vector<LabeledUrl>& items) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileUnreadable("cannot write " + path.string());
  out << "url,label,source\n";
  for (const auto& item : items)
    out << csv::join({item.url, std::to_string(static_cast<int>(item.label)), item.source}) << '\n';
}

inline std::vector<LabeledUrl> read_labeled_urls(const std::filesystem::path& path) {
  std::istringstream in(text::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw NoUrlsFound("empty URL list " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (csv::parse_line(line) != std::vector<std::string>{"url", "label", "source"})
    throw SchemaMismatch("URL list header must be url,label,source in " + path.string());
  std::vector<LabeledUrl> items;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    auto cells = csv::parse_line(line);
    if (cells.size() != 3 || (cells[1] != "0" && cells[1] != "1"))
      throw SchemaMismatch("bad URL list row in " + path.string() + ": " + line);
    items.push_back(LabeledUrl{cells[0], cells[1] == "1" ? Label::phishing : Label::legitimate, cells[2]});
  }
  return items;
}

// ---------------------------------------------------------------------------
// Feature matrix

inline std::vector<std::string> matrix_header() {
  std::vector<std::string> header{"url"};
  for (auto name : kFeatureNames) header.emplace_back(name);
  header.emplace_back("label");
  return header;
}

inline std::string serialize_matrix(const std::vector<FeatureRow>& rows) {
  std::ostringstream out;
  out << csv::join(matrix_header()) << '\n';
  for (const auto& row : rows) {
    out << csv::escape(row.url);
    for (auto v : row.features.values) out << ',' << v;
    out << ',';
    if (row.label) out << static_cast<int>(*row.label);
    out << '\n';
  }
  return out.str();
}

inline void save_matrix(const std::vector<FeatureRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileUnreadable("cannot write " + path.string());
  out << serialize_matrix(rows);
}

inline std::vector<FeatureRow> parse_matrix(std::string_view content) {
  std::istringstream in{std::string(content)};
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatch("empty matrix");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (csv::parse_line(line) != matrix_header()) throw SchemaMismatch("matrix header does not match the feature schema");

  std::vector<FeatureRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = csv::parse_line(line);
    if (cells.size() != kFeatureCount + 2)
      throw SchemaMismatch("line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) + " columns");
    FeatureRow row;
    row.url = cells[0];
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      auto v = text::parse_int(cells[i + 1]);
      if (!v) throw SchemaMismatch("non-integer feature on line " + std::to_string(line_no));
      row.features.values[i] = static_cast<FeatureValue>(*v);
    }
    validate(row.features);
    const std::string& label = cells.back();
    if (label == "1") {
      row.label = Label::phishing;
    } else if (label == "0") {
      row.label = Label::legitimate;
    } else if (!label.empty()) {
      throw SchemaMismatch("bad label on line " + std::to_string(line_no));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<FeatureRow> load_matrix(const std::filesystem::path& path) {
  return parse_matrix(text::read_file(path));
}

// ---------------------------------------------------------------------------
// Extraction

struct ExtractConfig {
  Evidence evidence;
  std::size_t parallelism = 1;
  LexicalConfig lexical;
  ReputationConfig reputation;
  const ShortenerList* shorteners = nullptr;     // builtin list when null
  const PublicSuffixList* suffixes = nullptr;    // bundled snapshot when null
};

/// What went wrong during a batch, per feature: how many rows took a
/// missing-evidence value.
struct ExtractReport {
  std::size_t rows = 0;
  std::size_t malformed_urls = 0;
  std::size_t fetch_failures = 0;
  std::size_t whois_not_found = 0;
  std::size_t unranked = 0;
  std::array<std::size_t, kFeatureCount> folded{};

  void merge(const ExtractReport& other) {
    rows += other.rows;
    malformed_urls += other.malformed_urls;
    fetch_failures += other.fetch_failures;
    whois_not_found += other.whois_not_found;
    unranked += other.unranked;
    for (std::size_t i = 0; i < kFeatureCount; ++i) folded[i] += other.folded[i];
  }
};

/// The full 23-feature vector for one URL plus what it cost to get it.
struct Extraction {
  FeatureRow row;
  PageSnapshot snapshot;
  WhoisRecord whois;
  RankRecord rank;
  ExtractReport report;
};

inline Extraction extract_url(const std::string& url, std::optional<Label> label, const ExtractConfig& cfg) {
  const PublicSuffixList& suffixes = cfg.suffixes ? *cfg.suffixes : default_suffix_list();
  const ShortenerList& shorteners = cfg.shorteners ? *cfg.shorteners : ShortenerList::builtin();
  Extraction x;
  x.row.url = url;
  x.row.label = label;
  x.report.rows = 1;

  ParsedUrl parsed;
  try {
    parsed = parse_url(url, suffixes);
  } catch (const Error& e) {
    // Nothing can be said about an unparseable URL; every rule takes its
    // phishing-direction value.
    log::warning(std::string("malformed URL in batch: ") + e.what());
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      const auto f = static_cast<Feature>(i);
      x.row.features.values[i] = domain_of(f) == FeatureDomain::Count ? 0 : kPhishing;
      x.report.folded[i] = 1;
    }
    x.report.malformed_urls = 1;
    x.snapshot = PageSnapshot::failure(url, FetchError::dns_failure);
    return x;
  }

  lexical_features(parsed, shorteners, cfg.lexical, x.row.features);

  x.snapshot = cfg.evidence.pages->get(url);
  content_features(parsed, x.snapshot, suffixes, x.row.features);
  if (x.snapshot.failed()) {
    x.report.fetch_failures = 1;
    for (auto f : {Feature::IFrame, Feature::MouseOver, Feature::RightClick, Feature::WebForwards, Feature::Email,
                   Feature::RequestUrl, Feature::UrlAnchor, Feature::Links})
      x.report.folded[index_of(f)] = 1;
  }
  if (parsed.scheme == Scheme::https && !x.snapshot.tls) x.report.folded[index_of(Feature::Ssl)] = 1;

  const std::string domain = parsed.is_ip_host ? parsed.host : parsed.registrable_domain;
  x.whois = lookup_whois(domain, *cfg.evidence.whois);
  x.rank = cfg.evidence.ranks->rank(domain);
  reputation_features(x.whois, x.rank, cfg.evidence.now, cfg.reputation, x.row.features);
  if (!x.whois.found) {
    x.report.whois_not_found = 1;
    x.report.folded[index_of(Feature::DnsRecord)] = 1;
  }
  if (!x.whois.creation_date) x.report.folded[index_of(Feature::DomainAge)] = 1;
  if (!x.whois.expiration_date) x.report.folded[index_of(Feature::DomainEnd)] = 1;
  if (!x.rank.rank) {
    x.report.unranked = 1;
    x.report.folded[index_of(Feature::WebTraffic)] = 1;
  }
  return x;
}

/// One row per input, in input order. Per-URL work fans out over
/// `cfg.parallelism` threads.
inline std::vector<FeatureRow> extract_all(const std::vector<LabeledUrl>& items, const ExtractConfig& cfg,
                                           ExtractReport* report = nullptr) {
  std::vector<FeatureRow> rows(items.size());
  std::vector<ExtractReport> reports(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < items.size(); i = next.fetch_add(1)) {
      Extraction x = extract_url(items[i].url, items[i].label, cfg);
      rows[i] = std::move(x.row);
      reports[i] = x.report;
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(cfg.parallelism, 1, std::max<std::size_t>(1, items.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ExtractReport total;
  for (const auto& r : reports) total.merge(r);
  if (!items.empty() && total.malformed_urls == items.size()) throw MalformedUrl("every URL in the batch is malformed");
  if (report) *report = total;
  return rows;
}

}  // namespace phishlens
