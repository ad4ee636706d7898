#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>

#include "phishlens/feature_schema.hpp"
#include "phishlens/url.hpp"

namespace phishlens {

struct LexicalConfig {
  // URLs at least this long are flagged.
  std::size_t url_length_threshold = 54;
};

/// Registrable domains of URL-shortening services.
class ShortenerList {
 public:
  ShortenerList() = default;

  explicit ShortenerList(std::set<std::string> domains) {
    for (const auto& d : domains) domains_.insert(text::to_lower(d));
    if (domains_.empty()) throw InvalidConfig("shortener list is empty");
  }

  /// One lowercase registrable domain per line, '#' comments.
  static ShortenerList load(const std::filesystem::path& path) {
    auto lines = text::read_list_file(path, "#");
    return ShortenerList(std::set<std::string>(lines.begin(), lines.end()));
  }

  static const ShortenerList& builtin() {
    static const ShortenerList list = load(data_dir() / "shorteners.txt");
    return list;
  }

  bool contains(std::string_view domain) const { return domains_.count(std::string(domain)) != 0; }
  std::size_t size() const { return domains_.size(); }

 private:
  std::set<std::string> domains_;
};

inline FeatureValue feat_have_at(const ParsedUrl& p) {
  return p.raw.find('@') != std::string::npos ? kPhishing : kLegitimate;
}

inline FeatureValue feat_url_length(const ParsedUrl& p, const LexicalConfig& cfg = {}) {
  return p.raw.size() >= cfg.url_length_threshold ? kPhishing : kLegitimate;
}

inline FeatureValue feat_url_depth(const ParsedUrl& p) {
  return static_cast<FeatureValue>(p.path_segments.size());
}

// "//" anywhere past the scheme separator.
inline FeatureValue feat_redirection(const ParsedUrl& p) {
  return p.raw.find("//", p.authority_offset) != std::string::npos ? kPhishing : kLegitimate;
}

inline FeatureValue feat_https_domain(const ParsedUrl& p) {
  return p.host.find("http") != std::string::npos ? kPhishing : kLegitimate;
}

inline FeatureValue feat_tinyurl(const ParsedUrl& p, const ShortenerList& shorteners = ShortenerList::builtin()) {
  return !p.is_ip_host && shorteners.contains(p.registrable_domain) ? kPhishing : kLegitimate;
}

inline FeatureValue feat_prefix_suffix(const ParsedUrl& p) {
  return !p.is_ip_host && p.registrable_domain.find('-') != std::string::npos ? kPhishing : kLegitimate;
}

inline FeatureValue feat_having_ip(const ParsedUrl& p) { return p.is_ip_host ? kPhishing : kLegitimate; }

inline FeatureValue feat_https_token(const ParsedUrl& p) {
  return p.subdomain.find("http") != std::string::npos ? kPhishing : kLegitimate;
}

// Dots left in the host once a leading "www" label is dropped:
// at most one is legitimate, two suspicious, three or more phishing.
inline FeatureValue feat_sub_domain(const ParsedUrl& p) {
  const std::string host = host_without_www(p);
  const auto dots = std::count(host.begin(), host.end(), '.');
  if (dots <= 1) return kLegitimate;
  if (dots == 2) return kSuspicious;
  return kPhishing;
}

/// Writes the ten URL-only features into `out`.
inline void lexical_features(const ParsedUrl& p, const ShortenerList& shorteners, const LexicalConfig& cfg,
                             FeatureVector& out) {
  out[Feature::HaveAt] = feat_have_at(p);
  out[Feature::UrlLength] = feat_url_length(p, cfg);
  out[Feature::UrlDepth] = feat_url_depth(p);
  out[Feature::Redirection] = feat_redirection(p);
  out[Feature::HttpsDomain] = feat_https_domain(p);
  out[Feature::TinyUrl] = feat_tinyurl(p, shorteners);
  out[Feature::PrefixSuffix] = feat_prefix_suffix(p);
  out[Feature::HavingIp] = feat_having_ip(p);
  out[Feature::HttpsToken] = feat_https_token(p);
  out[Feature::SubDomain] = feat_sub_domain(p);
}

}  // namespace phishlens
