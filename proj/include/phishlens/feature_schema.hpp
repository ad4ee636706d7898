#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "phishlens/error.hpp"

namespace phishlens {

// Bump when the order, names or domains below change; model files and
// matrices carry it.
inline constexpr std::string_view kFeatureSchemaVersion = "phishlens-features-v1";

inline constexpr std::size_t kFeatureCount = 23;

enum class Feature : std::size_t {
  HaveAt,
  UrlLength,
  UrlDepth,
  Redirection,
  HttpsDomain,
  TinyUrl,
  PrefixSuffix,
  DnsRecord,
  WebTraffic,
  DomainAge,
  DomainEnd,
  IFrame,
  MouseOver,
  RightClick,
  WebForwards,
  HavingIp,
  Ssl,
  HttpsToken,
  SubDomain,
  RequestUrl,
  UrlAnchor,
  Links,
  Email,
};

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "Have_At",     "URL_Length",  "URL_Depth",    "Redirection", "https_Domain", "TinyURL",
    "Prefix/Suffix", "DNS_Record", "Web_Traffic", "Domain_Age",  "Domain_End",   "iFrame",
    "Mouse_Over",  "Right_Click", "Web_Forwards", "having_ip",   "SSL",          "https_token",
    "sub_domain",  "request_url", "url_anchor",   "links",       "email",
};

enum class FeatureDomain { Binary, Ternary, Count };

constexpr std::size_t index_of(Feature f) { return static_cast<std::size_t>(f); }

constexpr std::string_view name_of(Feature f) { return kFeatureNames[index_of(f)]; }

constexpr FeatureDomain domain_of(Feature f) {
  switch (f) {
    case Feature::UrlDepth:
      return FeatureDomain::Count;
    case Feature::Ssl:
    case Feature::SubDomain:
    case Feature::RequestUrl:
    case Feature::UrlAnchor:
    case Feature::Links:
      return FeatureDomain::Ternary;
    default:
      return FeatureDomain::Binary;
  }
}

constexpr bool in_domain(Feature f, int value) {
  switch (domain_of(f)) {
    case FeatureDomain::Binary: return value == 0 || value == 1;
    case FeatureDomain::Ternary: return value >= -1 && value <= 1;
    case FeatureDomain::Count: return value >= 0;
  }
  return false;
}

// 1 = phishing, 0 = legitimate, -1 = suspicious; URL_Depth is a count.
using FeatureValue = int;

inline constexpr FeatureValue kLegitimate = 0;
inline constexpr FeatureValue kPhishing = 1;
inline constexpr FeatureValue kSuspicious = -1;

enum class Label : int { legitimate = 0, phishing = 1 };

struct FeatureVector {
  std::array<FeatureValue, kFeatureCount> values{};

  FeatureValue& operator[](Feature f) { return values[index_of(f)]; }
  FeatureValue operator[](Feature f) const { return values[index_of(f)]; }

  bool operator==(const FeatureVector&) const = default;
};

inline std::optional<Feature> feature_by_name(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (kFeatureNames[i] == name) return static_cast<Feature>(i);
  }
  return std::nullopt;
}

/// Throws SchemaMismatch if any value lies outside its declared domain.
inline void validate(const FeatureVector& v) {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const auto f = static_cast<Feature>(i);
    if (!in_domain(f, v.values[i]))
      throw SchemaMismatch(std::string(name_of(f)) + " out of domain: " + std::to_string(v.values[i]));
  }
}

}  // namespace phishlens
