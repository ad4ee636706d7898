#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "phishlens/dates.hpp"
#include "phishlens/feature_schema.hpp"
#include "phishlens/url.hpp"

namespace phishlens {

enum class FetchError { timeout, dns_failure, connection_refused, too_many_redirects, non_html };

constexpr std::string_view to_string(FetchError e) {
  switch (e) {
    case FetchError::timeout: return "timeout";
    case FetchError::dns_failure: return "dns_failure";
    case FetchError::connection_refused: return "connection_refused";
    case FetchError::too_many_redirects: return "too_many_redirects";
    case FetchError::non_html: return "non_html";
  }
  return "unknown";
}

inline std::optional<FetchError> fetch_error_from_string(std::string_view s) {
  for (auto e : {FetchError::timeout, FetchError::dns_failure, FetchError::connection_refused,
                 FetchError::too_many_redirects, FetchError::non_html}) {
    if (to_string(e) == s) return e;
  }
  return std::nullopt;
}

struct TlsFacts {
  std::string issuer_organization;
  bool issuer_trusted = false;
  Date not_before;
  Date not_after;
  long long certificate_age_days = 0;

  bool operator==(const TlsFacts&) const = default;
};

struct PageSnapshot {
  std::string requested_url;
  // URLs that answered with a redirect, in order; empty when none.
  std::vector<std::string> redirect_chain;
  std::string final_url;
  std::optional<int> status;
  std::optional<std::string> body;
  Timestamp fetched_at{};
  std::optional<TlsFacts> tls;
  std::optional<FetchError> fetch_error;

  bool failed() const { return fetch_error.has_value() || !body.has_value() || !status.has_value(); }

  bool operator==(const PageSnapshot&) const = default;

  /// Snapshot standing in for a page that could not be retrieved.
  static PageSnapshot failure(std::string url, FetchError error) {
    PageSnapshot s;
    s.requested_url = url;
    s.final_url = std::move(url);
    s.fetch_error = error;
    s.fetched_at = now_timestamp();
    return s;
  }
};

struct LinkCensus {
  std::size_t total_request_objects = 0;
  std::size_t external_request_objects = 0;
  std::size_t total_anchors = 0;
  std::size_t suspicious_anchors = 0;
  std::size_t total_msl_links = 0;
  std::size_t external_msl_links = 0;

  bool operator==(const LinkCensus&) const = default;
};

namespace html {

struct Tag {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;

  const std::string* attribute(std::string_view key) const {
    for (const auto& [k, v] : attributes)
      if (k == key) return &v;
    return nullptr;
  }
};

/// Walks start tags in `body` without validating structure. Comments,
/// end tags and declarations are skipped, as is the raw text inside
/// <script> and <style>.
inline void scan_tags(std::string_view body, const std::function<void(const Tag&)>& visit) {
  std::size_t i = 0;
  const std::size_t n = body.size();
  auto is_name_char = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == ':';
  };
  while (i < n) {
    const std::size_t lt = body.find('<', i);
    if (lt == std::string_view::npos) break;
    i = lt + 1;
    if (body.substr(lt, 4) == "<!--") {
      const auto end = body.find("-->", lt + 4);
      i = end == std::string_view::npos ? n : end + 3;
      continue;
    }
    if (i >= n || !std::isalpha(static_cast<unsigned char>(body[i]))) {
      const auto end = body.find('>', i);
      if (i < n && (body[i] == '/' || body[i] == '!' || body[i] == '?')) i = end == std::string_view::npos ? n : end + 1;
      continue;
    }

    Tag tag;
    while (i < n && is_name_char(body[i])) tag.name.push_back(text::lower(body[i++]));

    while (i < n) {
      while (i < n && (text::is_space(body[i]) || body[i] == '/')) ++i;
      if (i >= n || body[i] == '>') break;
      if (body[i] == '<') break;  // unterminated tag; let the outer loop resync
      std::string key;
      while (i < n && !text::is_space(body[i]) && body[i] != '=' && body[i] != '>' && body[i] != '/' && body[i] != '<')
        key.push_back(text::lower(body[i++]));
      while (i < n && text::is_space(body[i])) ++i;
      std::string value;
      if (i < n && body[i] == '=') {
        ++i;
        while (i < n && text::is_space(body[i])) ++i;
        if (i < n && (body[i] == '"' || body[i] == '\'')) {
          const char quote = body[i++];
          const auto close = body.find(quote, i);
          const std::size_t stop = close == std::string_view::npos ? n : close;
          value = std::string(body.substr(i, stop - i));
          i = close == std::string_view::npos ? n : close + 1;
        } else {
          while (i < n && !text::is_space(body[i]) && body[i] != '>') value.push_back(body[i++]);
        }
      }
      if (!key.empty()) tag.attributes.emplace_back(std::move(key), std::move(value));
      else if (i < n && body[i] != '>') ++i;
    }
    if (i < n && body[i] == '>') ++i;

    visit(tag);

    if (tag.name == "script" || tag.name == "style") {
      const auto close = text::ifind(body, "</" + tag.name, i);
      i = close == std::string_view::npos ? n : close;
    }
  }
}

}  // namespace html

namespace detail {

inline bool has_scheme_separator(std::string_view ref) {
  const auto sep = ref.find("://");
  return sep != std::string_view::npos && detail::is_scheme(ref.substr(0, sep));
}

// Relative references (and non-network schemes such as mailto:/data:) are
// internal; absolute ones are external when their registrable domain differs
// from the page's. Unparseable absolute references count as external.
inline bool is_external_ref(const ParsedUrl& page, std::string_view ref, const PublicSuffixList& suffixes) {
  ref = text::trim(ref);
  std::string absolute;
  if (ref.substr(0, 2) == "//") {
    absolute = "http:" + std::string(ref);
  } else if (has_scheme_separator(ref)) {
    absolute = std::string(ref);
  } else {
    return false;
  }
  try {
    const ParsedUrl target = parse_url(absolute, suffixes);
    if (target.is_ip_host || page.is_ip_host) return target.host != page.host;
    return target.registrable_domain != page.registrable_domain;
  } catch (const Error&) {
    return true;
  }
}

inline std::optional<std::string_view> meta_url(std::string_view content) {
  content = text::trim(content);
  if (auto pos = text::ifind(content, "url="); pos != std::string_view::npos) {
    content = text::trim(content.substr(pos + 4));
    if (!content.empty() && (content.front() == '\'' || content.front() == '"')) content.remove_prefix(1);
    if (!content.empty() && (content.back() == '\'' || content.back() == '"')) content.remove_suffix(1);
  }
  if (content.empty()) return std::nullopt;
  if (has_scheme_separator(content) || content.front() == '/') return content;
  return std::nullopt;
}

}  // namespace detail

/// Counts embedded objects, anchors and meta/script/link URLs in `body`.
inline LinkCensus census(const ParsedUrl& page, std::string_view body,
                         const PublicSuffixList& suffixes = default_suffix_list()) {
  LinkCensus c;
  html::scan_tags(body, [&](const html::Tag& tag) {
    const auto& name = tag.name;
    if (name == "img" || name == "video" || name == "audio" || name == "embed") {
      if (const auto* src = tag.attribute("src")) {
        ++c.total_request_objects;
        if (detail::is_external_ref(page, *src, suffixes)) ++c.external_request_objects;
      }
    } else if (name == "a") {
      if (const auto* href = tag.attribute("href")) {
        ++c.total_anchors;
        const std::string_view ref = text::trim(*href);
        if (ref.empty() || ref.front() == '#' || text::istarts_with(ref, "javascript:") ||
            detail::is_external_ref(page, ref, suffixes))
          ++c.suspicious_anchors;
      }
    } else if (name == "script" || name == "link") {
      if (const auto* ref = tag.attribute(name == "script" ? "src" : "href")) {
        ++c.total_msl_links;
        if (detail::is_external_ref(page, *ref, suffixes)) ++c.external_msl_links;
      }
    } else if (name == "meta") {
      if (const auto* content = tag.attribute("content")) {
        if (auto ref = detail::meta_url(*content)) {
          ++c.total_msl_links;
          if (detail::is_external_ref(page, *ref, suffixes)) ++c.external_msl_links;
        }
      }
    }
  });
  return c;
}

inline FeatureValue feat_iframe(const PageSnapshot& s) {
  if (s.failed()) return kPhishing;
  return text::icontains(*s.body, "<iframe") || text::icontains(*s.body, "frameborder") ? kPhishing : kLegitimate;
}

// An onmouseover handler that rewrites the status bar.
inline FeatureValue feat_mouse_over(const PageSnapshot& s) {
  if (s.failed()) return kPhishing;
  const std::string_view body = *s.body;
  for (auto pos = text::ifind(body, "onmouseover"); pos != std::string_view::npos;
       pos = text::ifind(body, "onmouseover", pos + 1)) {
    auto end = body.find('>', pos);
    const std::string_view handler = body.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    if (text::icontains(handler, "window.status") || text::icontains(handler, "status=")) return kPhishing;
  }
  return kLegitimate;
}

inline FeatureValue feat_right_click(const PageSnapshot& s) {
  if (s.failed()) return kPhishing;
  std::string compact;
  compact.reserve(s.body->size());
  for (char c : *s.body)
    if (!text::is_space(c)) compact.push_back(c);
  return text::icontains(compact, "event.button==2") || text::icontains(compact, "event.button===2") ? kPhishing
                                                                                                      : kLegitimate;
}

inline FeatureValue feat_web_forwards(const PageSnapshot& s) {
  if (s.failed()) return kPhishing;
  return s.redirect_chain.size() > 3 ? kPhishing : kLegitimate;
}

inline constexpr long long kTrustedCertificateMinAgeDays = 365;

inline FeatureValue feat_ssl(const ParsedUrl& p, const PageSnapshot& s) {
  if (p.scheme != Scheme::https || !s.tls) return kPhishing;
  if (!s.tls->issuer_trusted) return kSuspicious;
  return s.tls->certificate_age_days >= kTrustedCertificateMinAgeDays ? kLegitimate : kPhishing;
}

namespace detail {

// Percentage banding shared by the three census ratios. Bounds are
// inclusive on the suspicious band.
inline FeatureValue band(std::size_t part, std::size_t total, int low, int high) {
  if (total == 0) return kLegitimate;
  // Compare 100*part against low*total exactly instead of in floating point.
  const auto scaled = static_cast<unsigned long long>(part) * 100ULL;
  const auto lo = static_cast<unsigned long long>(low) * total;
  const auto hi = static_cast<unsigned long long>(high) * total;
  if (scaled < lo) return kLegitimate;
  if (scaled <= hi) return kSuspicious;
  return kPhishing;
}

}  // namespace detail

inline FeatureValue feat_request_url(const LinkCensus& c) {
  return detail::band(c.external_request_objects, c.total_request_objects, 22, 61);
}

inline FeatureValue feat_url_anchor(const LinkCensus& c) {
  return detail::band(c.suspicious_anchors, c.total_anchors, 31, 67);
}

inline FeatureValue feat_links(const LinkCensus& c) {
  return detail::band(c.external_msl_links, c.total_msl_links, 17, 81);
}

inline FeatureValue feat_email(const PageSnapshot& s) {
  if (s.failed()) return kPhishing;
  return text::icontains(*s.body, "mail(") || text::icontains(*s.body, "mailto:") ? kPhishing : kLegitimate;
}

/// Writes the nine page-evidence features into `out`. A failed fetch has
/// no body, so the census features see an empty page.
inline void content_features(const ParsedUrl& p, const PageSnapshot& s, const PublicSuffixList& suffixes,
                             FeatureVector& out) {
  const LinkCensus c = s.failed() ? LinkCensus{} : census(p, *s.body, suffixes);
  out[Feature::IFrame] = feat_iframe(s);
  out[Feature::MouseOver] = feat_mouse_over(s);
  out[Feature::RightClick] = feat_right_click(s);
  out[Feature::WebForwards] = feat_web_forwards(s);
  out[Feature::Ssl] = feat_ssl(p, s);
  out[Feature::RequestUrl] = feat_request_url(c);
  out[Feature::UrlAnchor] = feat_url_anchor(c);
  out[Feature::Links] = feat_links(c);
  out[Feature::Email] = feat_email(s);
}

// Snapshot files: "key: value" header lines, a blank line, then the body
// verbatim. The body section is present exactly when the fetch succeeded.

inline std::string serialize_snapshot(const PageSnapshot& s) {
  std::ostringstream out;
  out << "requested_url: " << s.requested_url << '\n';
  for (const auto& hop : s.redirect_chain) out << "redirect: " << hop << '\n';
  out << "final_url: " << s.final_url << '\n';
  if (s.status) out << "status: " << *s.status << '\n';
  out << "fetched_at: " << format_timestamp(s.fetched_at) << '\n';
  if (s.fetch_error) out << "fetch_error: " << to_string(*s.fetch_error) << '\n';
  if (s.tls) {
    out << "tls_issuer_organization: " << s.tls->issuer_organization << '\n';
    out << "tls_issuer_trusted: " << (s.tls->issuer_trusted ? "true" : "false") << '\n';
    out << "tls_not_before: " << format_date(s.tls->not_before) << '\n';
    out << "tls_not_after: " << format_date(s.tls->not_after) << '\n';
    out << "tls_certificate_age_days: " << s.tls->certificate_age_days << '\n';
  }
  if (s.body) out << '\n' << *s.body;
  return out.str();
}

inline PageSnapshot parse_snapshot(std::string_view content) {
  PageSnapshot s;
  bool saw_requested = false;
  TlsFacts tls;
  int tls_fields = 0;
  std::size_t pos = 0;
  bool has_body = false;
  while (pos < content.size()) {
    const auto eol = content.find('\n', pos);
    std::string_view line = content.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? content.size() : eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      has_body = true;
      break;
    }
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) throw SchemaMismatch("snapshot header line without key: " + std::string(line));
    const std::string key(text::trim(line.substr(0, colon)));
    const std::string_view value = text::trim(line.substr(colon + 1));
    auto need_date = [&](std::string_view v) {
      auto d = parse_iso_date(v);
      if (!d) throw SchemaMismatch("bad date in snapshot: " + std::string(v));
      return *d;
    };
    if (key == "requested_url") {
      s.requested_url = value;
      saw_requested = true;
    } else if (key == "redirect") {
      s.redirect_chain.emplace_back(value);
    } else if (key == "final_url") {
      s.final_url = value;
    } else if (key == "status") {
      auto v = text::parse_int(value);
      if (!v) throw SchemaMismatch("bad status in snapshot");
      s.status = static_cast<int>(*v);
    } else if (key == "fetched_at") {
      auto ts = parse_timestamp(value);
      if (!ts) throw SchemaMismatch("bad fetched_at in snapshot");
      s.fetched_at = *ts;
    } else if (key == "fetch_error") {
      s.fetch_error = fetch_error_from_string(value);
      if (!s.fetch_error) throw SchemaMismatch("unknown fetch_error " + std::string(value));
    } else if (key == "tls_issuer_organization") {
      tls.issuer_organization = value;
      ++tls_fields;
    } else if (key == "tls_issuer_trusted") {
      tls.issuer_trusted = value == "true";
      ++tls_fields;
    } else if (key == "tls_not_before") {
      tls.not_before = need_date(value);
      ++tls_fields;
    } else if (key == "tls_not_after") {
      tls.not_after = need_date(value);
      ++tls_fields;
    } else if (key == "tls_certificate_age_days") {
      auto v = text::parse_int(value);
      if (!v || *v < 0) throw SchemaMismatch("bad certificate age in snapshot");
      tls.certificate_age_days = *v;
      ++tls_fields;
    }
  }
  if (!saw_requested) throw SchemaMismatch("snapshot without requested_url");
  if (s.final_url.empty()) s.final_url = s.requested_url;
  if (tls_fields > 0) {
    if (tls_fields != 5) throw SchemaMismatch("incomplete TLS facts in snapshot of " + s.requested_url);
    s.tls = tls;
  }
  if (has_body && !s.fetch_error) s.body = std::string(content.substr(pos));
  if (!s.fetch_error && (!s.body || !s.status))
    throw SchemaMismatch("snapshot of " + s.requested_url + " has neither a body and status nor a fetch_error");
  return s;
}

inline PageSnapshot read_snapshot(const std::filesystem::path& path) { return parse_snapshot(text::read_file(path)); }

inline void write_snapshot(const std::filesystem::path& path, const PageSnapshot& s) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileUnreadable("cannot write " + path.string());
  out << serialize_snapshot(s);
}

}  // namespace phishlens
