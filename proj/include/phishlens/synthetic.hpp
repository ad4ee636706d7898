#pragma once

// Synthetic labeled feature rows for desk-scale classifier comparison.
//
// Every row is drawn from a latent archetype: a per-class profile giving an
// independent categorical distribution for each feature, followed by the
// coherence rules the extractors themselves obey:
//
//   * an unreachable page yields the no-response fold (iFrame, Mouse_Over,
//     Right_Click, Web_Forwards, email = 1; request_url, url_anchor,
//     links = 0 because the census is empty);
//   * a WHOIS miss (DNS_Record = 1) also sets Domain_Age and Domain_End;
//   * an IP host has no WHOIS record, no rank, and one sub_domain dot
//     level (sub_domain = 1);
//   * a shortener URL is short with depth 1.
//
// Archetypes (share within class):
//
//   legitimate/established (0.45)  clean profile; long URLs have deep paths
//   legitimate/unreachable (0.35)  clean lexical profile, weaker reputation,
//                                  page fetch failed (fold applied)
//   legitimate/mixed       (0.20)  unranked but long-lived domain; long URLs
//                                  are deep, short URLs are shallow
//   phishing/kit           (0.40)  phishing-leaning profile on every feature
//   phishing/dead          (0.40)  taken-down page: fold applied, poor
//                                  reputation
//   phishing/mixed         (0.20)  same profile as legitimate/mixed, but long
//                                  URLs are shallow and short URLs are deep
//
// An unreachable page usually fails the TLS probe as well (SSL = 1). The
// fold makes up to nine features move together, and the mixed archetypes
// separate only through the joint value of URL_Length and URL_Depth.

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "phishlens/dataset.hpp"
#include "phishlens/ml/common.hpp"

namespace phishlens::synthetic {

/// Categorical distribution over a feature's values. For binary and ternary
/// features the weights are for {-1, 0, 1}; for URL_Depth they are for
/// depths 0..5.
struct Dist {
  std::array<double, 6> w{};

  static Dist binary(double p1) { return {{0, 1 - p1, p1}}; }
  static Dist ternary(double pm, double p0, double p1) { return {{pm, p0, p1}}; }
  static Dist depth(std::array<double, 6> w) { return {w}; }
};

struct Profile {
  std::array<Dist, kFeatureCount> dist;

  Dist& operator[](Feature f) { return dist[index_of(f)]; }
};

enum class LengthDepth { independent, long_deep, long_deep_short_shallow, long_shallow_short_deep };

struct Archetype {
  std::string_view name;
  Label label;
  double weight;  // share within its class
  Profile profile;
  bool unreachable = false;
  LengthDepth length_depth = LengthDepth::independent;
  // For unreachable archetypes: chance the TLS probe failed too (SSL = 1).
  double tls_failure = 0.7;
};

inline Profile clean_profile() {
  Profile p;
  using F = Feature;
  p[F::HaveAt] = Dist::binary(0.01);
  p[F::UrlLength] = Dist::binary(0.12);
  p[F::UrlDepth] = Dist::depth({0.25, 0.30, 0.20, 0.12, 0.08, 0.05});
  p[F::Redirection] = Dist::binary(0.01);
  p[F::HttpsDomain] = Dist::binary(0.01);
  p[F::TinyUrl] = Dist::binary(0.01);
  p[F::PrefixSuffix] = Dist::binary(0.08);
  p[F::DnsRecord] = Dist::binary(0.01);
  p[F::WebTraffic] = Dist::binary(0.08);
  p[F::DomainAge] = Dist::binary(0.05);
  p[F::DomainEnd] = Dist::binary(0.25);
  p[F::IFrame] = Dist::binary(0.08);
  p[F::MouseOver] = Dist::binary(0.02);
  p[F::RightClick] = Dist::binary(0.03);
  p[F::WebForwards] = Dist::binary(0.05);
  p[F::HavingIp] = Dist::binary(0.0);
  p[F::Ssl] = Dist::ternary(0.03, 0.85, 0.12);
  p[F::HttpsToken] = Dist::binary(0.01);
  p[F::SubDomain] = Dist::ternary(0.55, 0.35, 0.10);
  p[F::RequestUrl] = Dist::ternary(0.60, 0.30, 0.10);
  p[F::UrlAnchor] = Dist::ternary(0.55, 0.30, 0.15);
  p[F::Links] = Dist::ternary(0.55, 0.30, 0.15);
  p[F::Email] = Dist::binary(0.03);
  return p;
}

inline Profile phishing_profile() {
  Profile p;
  using F = Feature;
  p[F::HaveAt] = Dist::binary(0.20);
  p[F::UrlLength] = Dist::binary(0.65);
  p[F::UrlDepth] = Dist::depth({0.15, 0.25, 0.25, 0.15, 0.10, 0.10});
  p[F::Redirection] = Dist::binary(0.12);
  p[F::HttpsDomain] = Dist::binary(0.15);
  p[F::TinyUrl] = Dist::binary(0.10);
  p[F::PrefixSuffix] = Dist::binary(0.55);
  p[F::DnsRecord] = Dist::binary(0.35);
  p[F::WebTraffic] = Dist::binary(0.85);
  p[F::DomainAge] = Dist::binary(0.80);
  p[F::DomainEnd] = Dist::binary(0.75);
  p[F::IFrame] = Dist::binary(0.50);
  p[F::MouseOver] = Dist::binary(0.35);
  p[F::RightClick] = Dist::binary(0.35);
  p[F::WebForwards] = Dist::binary(0.30);
  p[F::HavingIp] = Dist::binary(0.10);
  p[F::Ssl] = Dist::ternary(0.25, 0.20, 0.55);
  p[F::HttpsToken] = Dist::binary(0.15);
  p[F::SubDomain] = Dist::ternary(0.15, 0.35, 0.50);
  p[F::RequestUrl] = Dist::ternary(0.10, 0.30, 0.60);
  p[F::UrlAnchor] = Dist::ternary(0.10, 0.25, 0.65);
  p[F::Links] = Dist::ternary(0.15, 0.35, 0.50);
  p[F::Email] = Dist::binary(0.45);
  return p;
}

/// Feature-wise mixture of two profiles.
inline Profile blend(const Profile& a, const Profile& b, double t) {
  Profile out;
  for (std::size_t j = 0; j < kFeatureCount; ++j)
    for (std::size_t v = 0; v < 6; ++v) out.dist[j].w[v] = (1 - t) * a.dist[j].w[v] + t * b.dist[j].w[v];
  return out;
}

inline std::vector<Archetype> default_archetypes() {
  using F = Feature;
  const Profile clean = clean_profile(), phish = phishing_profile();

  // Small, long-lived but unranked sites.
  Profile mixed = clean;
  mixed[F::WebTraffic] = Dist::binary(1.0);
  mixed[F::DomainAge] = Dist::binary(0.0);
  mixed[F::DnsRecord] = Dist::binary(0.0);
  mixed[F::DomainEnd] = Dist::binary(0.4);
  mixed[F::Ssl] = Dist::ternary(0.10, 0.60, 0.30);
  mixed[F::PrefixSuffix] = Dist::binary(0.25);
  mixed[F::SubDomain] = Dist::ternary(0.35, 0.40, 0.25);

  Profile unreachable = clean;
  unreachable[F::WebTraffic] = Dist::binary(0.45);
  unreachable[F::DomainAge] = Dist::binary(0.3);

  Profile dead = phish;
  dead[F::DnsRecord] = Dist::binary(0.45);
  dead[F::WebTraffic] = Dist::binary(0.9);
  dead[F::DomainAge] = Dist::binary(0.85);
  dead[F::DomainEnd] = Dist::binary(0.8);

  return {
      {"established", Label::legitimate, 0.45, clean, false, LengthDepth::long_deep},
      {"unreachable", Label::legitimate, 0.35, unreachable, true},
      {"mixed", Label::legitimate, 0.20, mixed, false, LengthDepth::long_deep_short_shallow},
      {"kit", Label::phishing, 0.40, phish},
      {"dead", Label::phishing, 0.40, dead, true},
      {"mixed", Label::phishing, 0.20, mixed, false, LengthDepth::long_shallow_short_deep},
  };
}

struct SyntheticConfig {
  std::size_t rows = 456;
  double phishing_fraction = 0.5;
  std::uint64_t seed = 7;
  std::vector<Archetype> archetypes = default_archetypes();
};

namespace detail {

inline std::size_t draw(ml::Rng& rng, const std::array<double, 6>& w) {
  double total = 0;
  for (double x : w) total += x;
  double u = rng.unit() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return i;
    u -= w[i];
  }
  for (std::size_t i = w.size(); i-- > 0;)
    if (w[i] > 0) return i;
  return 0;
}

inline const Archetype& pick(ml::Rng& rng, const std::vector<Archetype>& all, Label label) {
  std::array<double, 6> w{};
  std::vector<const Archetype*> of_class;
  for (const auto& a : all)
    if (a.label == label) {
      w[of_class.size()] = a.weight;
      of_class.push_back(&a);
    }
  return *of_class.at(draw(rng, w));
}

}  // namespace detail

inline FeatureVector sample_vector(ml::Rng& rng, const Archetype& a) {
  FeatureVector v;
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    const auto k = detail::draw(rng, a.profile.dist[j].w);
    v.values[j] = domain_of(static_cast<Feature>(j)) == FeatureDomain::Count ? static_cast<int>(k)
                                                                               : static_cast<int>(k) - 1;
  }
  using F = Feature;
  if (a.length_depth == LengthDepth::long_deep && v[F::UrlLength] == 1) {
    v[F::UrlDepth] = std::max(v[F::UrlDepth], 2);
  } else if (a.length_depth == LengthDepth::long_deep_short_shallow ||
             a.length_depth == LengthDepth::long_shallow_short_deep) {
    const bool long_url = rng.unit() < 0.5;
    const bool deep = (a.length_depth == LengthDepth::long_deep_short_shallow) == long_url;
    v[F::UrlLength] = long_url ? 1 : 0;
    v[F::UrlDepth] = deep ? 3 + static_cast<int>(rng.below(3)) : static_cast<int>(rng.below(2));
  }
  if (v[F::TinyUrl] == 1) {
    v[F::UrlLength] = 0;
    v[F::UrlDepth] = 1;
  }
  if (v[F::HavingIp] == 1) {
    v[F::DnsRecord] = 1;
    v[F::WebTraffic] = 1;
    v[F::SubDomain] = 1;
  }
  if (v[F::DnsRecord] == 1) {
    v[F::DomainAge] = 1;
    v[F::DomainEnd] = 1;
  }
  if (a.unreachable) {
    for (auto f : {F::IFrame, F::MouseOver, F::RightClick, F::WebForwards, F::Email}) v[f] = 1;
    for (auto f : {F::RequestUrl, F::UrlAnchor, F::Links}) v[f] = 0;
    if (rng.unit() < a.tls_failure) v[F::Ssl] = 1;
  }
  return v;
}

/// Rows with URLs of the form https://synthetic-<archetype>-<n>.invalid/.
inline std::vector<FeatureRow> synthesize(const SyntheticConfig& cfg) {
  ml::Rng rng(cfg.seed);
  const auto n_phish = static_cast<std::size_t>(static_cast<double>(cfg.rows) * cfg.phishing_fraction + 0.5);
  std::vector<FeatureRow> out;
  out.reserve(cfg.rows);
  for (std::size_t i = 0; i < cfg.rows; ++i) {
    const Label label = i < n_phish ? Label::phishing : Label::legitimate;
    const auto& a = detail::pick(rng, cfg.archetypes, label);
    FeatureRow row;
    row.url = "https://synthetic-" + std::string(label == Label::phishing ? "p-" : "l-") + std::string(a.name) + "-" +
              std::to_string(i) + ".invalid/";
    row.features = sample_vector(rng, a);
    row.label = label;
    out.push_back(std::move(row));
  }
  ml::Rng order(cfg.seed ^ 0x5eedULL);
  order.shuffle(out);
  return out;
}

/// `base` followed by synthetic rows up to `target_rows` in total.
inline std::vector<FeatureRow> expand(const std::vector<FeatureRow>& base, std::size_t target_rows,
                                      std::uint64_t seed) {
  std::vector<FeatureRow> out = base;
  if (target_rows <= base.size()) return out;
  SyntheticConfig cfg;
  cfg.rows = target_rows - base.size();
  cfg.seed = seed;
  auto extra = synthesize(cfg);
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

}  // namespace phishlens::synthetic
