#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "phishlens/synthetic.hpp"
#include "test_support.hpp"

using namespace phishlens;
using namespace phishlens::synthetic;

namespace {

std::string archetype_of(const FeatureRow& r) {
  // https://synthetic-<p|l>-<name>-<n>.invalid/
  const std::string prefix = "https://synthetic-";
  const auto rest = r.url.substr(prefix.size());
  return rest.substr(0, rest.rfind('-'));
}

}  // namespace

TEST(Synthetic, RowsAreValidAndBalanced) {
  SyntheticConfig cfg;
  cfg.rows = 301;
  const auto rows = synthesize(cfg);
  ASSERT_EQ(rows.size(), 301u);
  std::size_t phish = 0;
  for (const auto& r : rows) {
    ASSERT_TRUE(r.label.has_value());
    EXPECT_NO_THROW(validate(r.features));
    phish += *r.label == Label::phishing;
    EXPECT_EQ(archetype_of(r)[0], *r.label == Label::phishing ? 'p' : 'l');
  }
  EXPECT_EQ(phish, 151u);
}

TEST(Synthetic, CoherenceRulesHoldOnEveryRow) {
  SyntheticConfig cfg;
  cfg.rows = 5000;
  cfg.seed = 99;
  using F = Feature;
  for (const auto& r : synthesize(cfg)) {
    const auto& v = r.features;
    if (v[F::DnsRecord] == 1) {
      EXPECT_EQ(v[F::DomainAge], 1);
      EXPECT_EQ(v[F::DomainEnd], 1);
    }
    if (v[F::HavingIp] == 1) {
      EXPECT_EQ(v[F::DnsRecord], 1);
      EXPECT_EQ(v[F::WebTraffic], 1);
      EXPECT_EQ(v[F::SubDomain], 1);
    }
    if (v[F::TinyUrl] == 1) {
      EXPECT_EQ(v[F::UrlLength], 0);
      EXPECT_EQ(v[F::UrlDepth], 1);
    }
    const auto a = archetype_of(r);
    if (a == "l-unreachable" || a == "p-dead") {
      for (auto f : {F::IFrame, F::MouseOver, F::RightClick, F::WebForwards, F::Email}) EXPECT_EQ(v[f], 1);
      for (auto f : {F::RequestUrl, F::UrlAnchor, F::Links}) EXPECT_EQ(v[f], 0);
    }
    if (a == "l-established" && v[F::UrlLength] == 1) EXPECT_GE(v[F::UrlDepth], 2);
    if ((a == "l-mixed" || a == "p-mixed") && v[F::TinyUrl] == 0) {
      const bool deep = v[F::UrlDepth] >= 3;
      EXPECT_TRUE(deep || v[F::UrlDepth] <= 1);
      EXPECT_EQ(deep == (v[F::UrlLength] == 1), a == "l-mixed") << r.url;
    }
  }
}

TEST(Synthetic, SampledFrequenciesMatchProfiles) {
  ml::Rng rng(3);
  const auto archetypes = default_archetypes();
  const auto& kit = archetypes[3];
  ASSERT_EQ(kit.name, "kit");
  const int n = 20000;
  std::map<std::size_t, std::array<int, 3>> counts;
  for (int i = 0; i < n; ++i) {
    const auto v = sample_vector(rng, kit);
    for (auto f : {Feature::HaveAt, Feature::PrefixSuffix, Feature::Ssl, Feature::Links})
      ++counts[index_of(f)][static_cast<std::size_t>(v[f] + 1)];
  }
  // Features untouched by the coherence rules keep their declared distribution.
  for (auto f : {Feature::HaveAt, Feature::PrefixSuffix, Feature::Ssl, Feature::Links}) {
    const auto& w = kit.profile.dist[index_of(f)].w;
    for (std::size_t k = 0; k < 3; ++k) {
      const double p = w[k] / (w[0] + w[1] + w[2]);
      const double sigma = std::sqrt(p * (1 - p) / n);
      EXPECT_NEAR(counts[index_of(f)][k] / double(n), p, 4 * sigma + 1e-9) << name_of(f) << " value " << int(k) - 1;
    }
  }
}

TEST(Synthetic, DeterministicUnderSeed) {
  SyntheticConfig cfg;
  cfg.rows = 200;
  const auto a = synthesize(cfg), b = synthesize(cfg);
  EXPECT_EQ(a, b);
  cfg.seed = 8;
  EXPECT_NE(synthesize(cfg), a);
}

TEST(Synthetic, ExpandKeepsBaseFirst) {
  const auto base = load_matrix(phishlens::testing::fixture_dir() / "corpus" / "golden_matrix.csv");
  const auto rows = expand(base, 500, 7);
  ASSERT_EQ(rows.size(), 500u);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(rows[i], base[i]);
  EXPECT_EQ(expand(base, 10, 7), base);
}

TEST(Synthetic, CheckedInExpandedMatrixIsReproducible) {
  const auto base = load_matrix(phishlens::testing::fixture_dir() / "corpus" / "golden_matrix.csv");
  const auto expected = text::read_file(phishlens::testing::fixture_dir() / "expanded_matrix.csv");
  EXPECT_EQ(serialize_matrix(expand(base, 500, 7)), expected);
}
