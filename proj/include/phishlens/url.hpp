#pragma once

#include <arpa/inet.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "phishlens/error.hpp"
#include "phishlens/text.hpp"

namespace phishlens {

#ifndef PHISHLENS_DATA_DIR
#define PHISHLENS_DATA_DIR "data"
#endif

/// Directory holding the bundled data files (public-suffix snapshot,
/// shortener list). `PHISHLENS_DATA_DIR` in the environment overrides the
/// compiled-in location.
inline std::filesystem::path data_dir() {
  if (const char* env = std::getenv("PHISHLENS_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return PHISHLENS_DATA_DIR;
}

/// Public-suffix rule set in the canonical list format: one rule per line,
/// `//` comments, `*.` wildcards and `!` exceptions.
class PublicSuffixList {
 public:
  PublicSuffixList() = default;

  static PublicSuffixList from_rules(const std::vector<std::string>& rules) {
    PublicSuffixList list;
    for (const auto& raw : rules) {
      // Only the first whitespace-delimited token of a line is the rule.
      std::string_view rule = text::trim(raw);
      if (auto ws = rule.find_first_of(" \t"); ws != std::string_view::npos) rule = rule.substr(0, ws);
      if (rule.empty()) continue;
      std::string lowered = text::to_lower(rule);
      if (lowered.front() == '!') {
        list.exceptions_.insert(lowered.substr(1));
      } else if (lowered.rfind("*.", 0) == 0) {
        list.wildcards_.insert(lowered.substr(2));
      } else {
        list.rules_.insert(std::move(lowered));
      }
    }
    return list;
  }

  static PublicSuffixList load(const std::filesystem::path& path) {
    auto list = from_rules(text::read_list_file(path, "//"));
    if (list.size() == 0) throw FileUnreadable("no public-suffix rules in " + path.string());
    return list;
  }

  std::size_t size() const { return rules_.size() + wildcards_.size() + exceptions_.size(); }

  /// Number of trailing labels of `host` that form its public suffix.
  /// Unlisted TLDs fall back to the implicit `*` rule (one label).
  std::size_t suffix_label_count(std::string_view host) const {
    const auto labels = text::split(host, '.');
    const std::size_t n = labels.size();
    auto tail = [&](std::size_t from) { return host.substr(offset_of(labels, from)); };

    for (std::size_t i = 0; i < n; ++i) {
      if (exceptions_.count(std::string(tail(i))) != 0) return n - i - 1;
    }
    std::size_t best = 1;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string candidate(tail(i));
      if (rules_.count(candidate) != 0) best = std::max(best, n - i);
      if (i >= 1 && wildcards_.count(candidate) != 0) best = std::max(best, n - i + 1);
    }
    return std::min(best, n);
  }

  std::string public_suffix(std::string_view host) const {
    const auto labels = text::split(host, '.');
    const std::size_t count = suffix_label_count(host);
    return std::string(host.substr(offset_of(labels, labels.size() - count)));
  }

  bool contains_rule(std::string_view rule) const { return rules_.count(std::string(rule)) != 0; }

 private:
  static std::size_t offset_of(const std::vector<std::string_view>& labels, std::size_t index) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < index; ++i) offset += labels[i].size() + 1;
    return offset;
  }

  std::unordered_set<std::string> rules_;
  std::unordered_set<std::string> wildcards_;
  std::unordered_set<std::string> exceptions_;
};

/// Snapshot loaded once from `data_dir()/public_suffix_list.dat`.
inline const PublicSuffixList& default_suffix_list() {
  static const PublicSuffixList list = PublicSuffixList::load(data_dir() / "public_suffix_list.dat");
  return list;
}

enum class Scheme { http, https, other };

struct ParsedUrl {
  std::string raw;
  Scheme scheme = Scheme::http;
  bool scheme_assumed = false;
  // Offset in `raw` where the authority starts (just past "scheme://"),
  // 0 when no scheme was present.
  std::size_t authority_offset = 0;
  std::string host;
  bool is_ip_host = false;
  std::string subdomain;
  std::string registrable_domain;
  std::string public_suffix;
  std::vector<std::string> path_segments;
  std::string query;
  std::optional<int> port;

  bool operator==(const ParsedUrl&) const = default;
};

namespace detail {

inline bool is_scheme(std::string_view s) {
  if (s.empty() || !std::isalpha(static_cast<unsigned char>(s.front()))) return false;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.') return false;
  }
  return true;
}

inline bool is_ipv4(std::string_view host) {
  const auto parts = text::split(host, '.');
  if (parts.size() != 4) return false;
  for (auto part : parts) {
    if (part.empty() || part.size() > 3) return false;
    int value = 0;
    for (char c : part) {
      if (c < '0' || c > '9') return false;
      value = value * 10 + (c - '0');
    }
    if (value > 255) return false;
  }
  return true;
}

inline bool is_bracketed_ipv6(std::string_view host) {
  if (host.size() < 3 || host.front() != '[' || host.back() != ']') return false;
  const std::string inner(host.substr(1, host.size() - 2));
  in6_addr addr{};
  return inet_pton(AF_INET6, inner.c_str(), &addr) == 1;
}

// Empty port text ("host:") means no port.
inline std::optional<int> parse_port(std::string_view digits, const std::string& raw) {
  if (digits.empty()) return std::nullopt;
  if (digits.size() > 5 || digits.find_first_not_of("0123456789") != std::string_view::npos)
    throw MalformedUrl("bad port in " + raw);
  const int port = static_cast<int>(*text::parse_int(digits));
  if (port > 65535) throw MalformedUrl("bad port in " + raw);
  return port;
}

inline bool is_host_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '-' || c == '.' || c == '_' || u >= 0x80;
}

}  // namespace detail

/// Splits a raw URL into the parts the feature rules look at. Inputs
/// without a scheme are treated as http. Throws EmptyInput / MalformedUrl.
inline ParsedUrl parse_url(std::string_view raw, const PublicSuffixList& suffixes = default_suffix_list()) {
  ParsedUrl url;
  url.raw = std::string(raw);
  std::string_view rest = text::trim(raw);
  if (rest.empty()) throw EmptyInput("empty URL");
  const std::size_t leading = static_cast<std::size_t>(rest.data() - raw.data());

  if (auto sep = rest.find("://"); sep != std::string_view::npos && detail::is_scheme(rest.substr(0, sep))) {
    const std::string scheme = text::to_lower(rest.substr(0, sep));
    url.scheme = scheme == "http" ? Scheme::http : scheme == "https" ? Scheme::https : Scheme::other;
    url.authority_offset = leading + sep + 3;
    rest.remove_prefix(sep + 3);
  } else {
    url.scheme_assumed = true;
    url.authority_offset = leading;
  }

  const std::size_t authority_end = rest.find_first_of("/?#");
  std::string_view authority = rest.substr(0, authority_end);
  std::string_view tail = authority_end == std::string_view::npos ? std::string_view{} : rest.substr(authority_end);

  if (auto at = authority.rfind('@'); at != std::string_view::npos) authority.remove_prefix(at + 1);

  std::string_view host = authority;
  if (!authority.empty() && authority.front() == '[') {
    const auto close = authority.find(']');
    if (close == std::string_view::npos) throw MalformedUrl("unterminated IPv6 literal in " + url.raw);
    host = authority.substr(0, close + 1);
    std::string_view after = authority.substr(close + 1);
    if (!after.empty() && after.front() != ':') throw MalformedUrl("junk after IPv6 literal in " + url.raw);
    if (!after.empty()) url.port = detail::parse_port(after.substr(1), url.raw);
  } else if (auto colon = authority.find(':'); colon != std::string_view::npos) {
    host = authority.substr(0, colon);
    url.port = detail::parse_port(authority.substr(colon + 1), url.raw);
  }

  if (host.empty()) throw MalformedUrl("missing host in " + url.raw);
  url.host = text::to_lower(host);

  if (detail::is_bracketed_ipv6(url.host)) {
    url.is_ip_host = true;
  } else {
    if (url.host.back() == '.') url.host.pop_back();
    if (url.host.empty() || url.host.front() == '.' || url.host.find("..") != std::string::npos)
      throw MalformedUrl("empty label in host of " + url.raw);
    for (char c : url.host) {
      if (!detail::is_host_char(c)) throw MalformedUrl("illegal character in host of " + url.raw);
    }
    url.is_ip_host = detail::is_ipv4(url.host);
  }

  if (url.is_ip_host) {
    url.registrable_domain = url.host;
  } else {
    const auto labels = text::split(url.host, '.');
    std::size_t suffix_labels = suffixes.suffix_label_count(url.host);
    // A host that is itself a public suffix is treated as its own
    // registrable domain one label above a shorter suffix.
    if (suffix_labels >= labels.size()) suffix_labels = labels.size() - 1;
    const std::size_t registrable_labels = suffix_labels + 1;
    const std::size_t sub_labels = labels.size() - registrable_labels;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < sub_labels; ++i) offset += labels[i].size() + 1;
    url.subdomain = offset == 0 ? std::string{} : url.host.substr(0, offset - 1);
    url.registrable_domain = url.host.substr(offset);
    const std::size_t dot = url.registrable_domain.find('.');
    url.public_suffix = dot == std::string::npos ? std::string{} : url.registrable_domain.substr(dot + 1);
  }

  if (auto hash = tail.find('#'); hash != std::string_view::npos) tail = tail.substr(0, hash);
  std::string_view path = tail;
  if (auto q = tail.find('?'); q != std::string_view::npos) {
    path = tail.substr(0, q);
    url.query = std::string(tail.substr(q + 1));
  }
  for (auto segment : text::split(path, '/')) {
    if (!segment.empty()) url.path_segments.emplace_back(segment);
  }
  return url;
}

/// Removes leading "www" labels (exact label match) from the sub-domain.
/// Repeated labels ("www.www.") all go, so the operation is idempotent.
inline ParsedUrl strip_www(ParsedUrl url) {
  while (true) {
    if (url.subdomain == "www") {
      url.subdomain.clear();
    } else if (url.subdomain.rfind("www.", 0) == 0) {
      url.subdomain.erase(0, 4);
    } else {
      break;
    }
  }
  return url;
}

/// Host with the sub-domain's leading "www" label removed.
inline std::string host_without_www(const ParsedUrl& url) {
  if (url.is_ip_host) return url.host;
  const ParsedUrl stripped = strip_www(url);
  return stripped.subdomain.empty() ? stripped.registrable_domain
                                    : stripped.subdomain + "." + stripped.registrable_domain;
}

}  // namespace phishlens
