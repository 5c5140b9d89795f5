#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

#include "meshsuggest/candidate_retrieval.hpp"
#include "meshsuggest/minmax.hpp"

namespace ms = meshsuggest;
using testsupport::cand;

namespace {

ms::Fragment topic_fragment(const std::string& topic, std::size_t index) {
  for (const auto& t : ms::ingest_topics(testsupport::fixture("topics.jsonl")))
    if (t.topic_id == topic) return ms::eligible_fragments(t, testsupport::fixture_resources()).at(index);
  throw std::runtime_error("no topic " + topic);
}

std::vector<std::string> headings(const std::vector<ms::MeshCandidate>& c) {
  std::vector<std::string> out;
  for (const auto& x : c) out.push_back(x.heading.heading);
  return out;
}

const ms::MeshCandidate* find(const std::vector<ms::MeshCandidate>& c, const std::string& h) {
  for (const auto& x : c)
    if (x.heading.key() == ms::canonical_heading(h)) return &x;
  return nullptr;
}

}  // namespace

TEST(MinMax, Examples) {
  const auto a = ms::minmax_normalize({4, 2, 1});
  EXPECT_DOUBLE_EQ(a[0], 1.0);
  EXPECT_DOUBLE_EQ(a[1], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(a[2], 0.0);
  EXPECT_EQ(ms::minmax_normalize({7}), std::vector<double>{1.0});
  EXPECT_EQ(ms::minmax_normalize({5, 5}), (std::vector<double>{1.0, 1.0}));
  EXPECT_THROW(ms::minmax_normalize({}), ms::EmptyInput);
}

TEST(Methods, Names) {
  for (auto m : {ms::Method::kAtm, ms::Method::kMetaMap, ms::Method::kUmls, ms::Method::kFusion})
    EXPECT_EQ(ms::method_from_name(ms::method_name(m)), m);
  EXPECT_THROW(ms::method_from_name("bm25"), ms::ConfigError);
}

TEST(Atm, Table3FragmentOne) {
  const auto& r = testsupport::fixture_resources();
  const auto c = ms::retrieve_atm(topic_fragment("T1", 0), *r.atm);
  EXPECT_EQ(headings(c), (std::vector<std::string>{"Transients and Migrants", "Elasticity Imaging Techniques"}));
  for (const auto& x : c) {
    EXPECT_EQ(x.method, ms::Method::kAtm);
    ASSERT_FALSE(x.sources.empty());
    EXPECT_EQ(x.sources[0].clause, "transient elastograph");
    EXPECT_EQ(x.sources[0].mark, "category:mesh");
  }
}

TEST(Atm, JournalOnlyMappingIsExcluded) {
  ms::ReplayMapperClient client;
  client.add("fibroscan", {{"Fibroscan Journal", 0, "journal", "", "fibroscan"}});
  const auto f = ms::make_fragment("T", 1, ms::parse_query("fibroscan"));
  EXPECT_TRUE(ms::retrieve_atm(f, client).empty());
}

TEST(Atm, UnmappedClauseIsSplitIntoTerms) {
  ms::ReplayMapperClient client;
  client.add("liver stiffness OR fibroscan", {{"Fibroscan Journal", 0, "journal", "", "fibroscan"}});
  client.add("liver", {{"Liver", 0, "mesh", "MSH", "liver"}});
  client.add("stiffness", {});
  client.add("fibroscan", {{"Fibroscan Journal", 0, "journal", "", "fibroscan"}});
  const auto f = ms::make_fragment("T", 1, ms::parse_query("\"liver stiffness\" OR fibroscan"));
  const auto c = ms::retrieve_atm(f, client);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].heading.heading, "Liver");
  EXPECT_EQ(c[0].sources[0].clause, "liver");
}

TEST(Atm, EmptyFragmentGivesNothing) {
  ms::ReplayMapperClient client(true);
  ms::Fragment f;
  f.fragment_id = "T.f1";
  EXPECT_TRUE(ms::retrieve_atm(f, client).empty());
}

TEST(Atm, StrictReplayMissIsUnavailable) {
  ms::ReplayMapperClient client(true);
  const auto f = ms::make_fragment("T", 1, ms::parse_query("unrecorded"));
  EXPECT_THROW(ms::retrieve_atm(f, client), ms::ClientUnavailable);
}

TEST(MetaMap, LiverBiopsFixtureScores) {
  const auto& r = testsupport::fixture_resources();
  const auto f = ms::make_fragment("T", 1, ms::parse_query("\"liver biops*\""));
  const auto c = ms::retrieve_metamap(f, *r.metamap);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].heading.heading, "Liver");
  EXPECT_DOUBLE_EQ(c[0].raw_score, 861);
  EXPECT_EQ(c[1].heading.heading, "Biopsy");
  EXPECT_DOUBLE_EQ(c[1].raw_score, 827);
  EXPECT_EQ(c[0].sources[0].mark, "source:MSH");
}

TEST(MetaMap, NonMeshSourcesAreDropped) {
  const auto& r = testsupport::fixture_resources();
  const auto f = ms::make_fragment("T", 1, ms::parse_query("\"transient elastograph*\""));
  EXPECT_TRUE(ms::retrieve_metamap(f, *r.metamap).empty());
}

TEST(MetaMap, TwoClausesMappingToOneHeadingShareACandidate) {
  const auto& r = testsupport::fixture_resources();
  const auto f = ms::make_fragment("T", 1, ms::parse_query("hepatic OR liver"));
  const auto c = ms::retrieve_metamap(f, *r.metamap);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].sources.size(), 2u);
  EXPECT_EQ(c[0].sources[0].clause, "hepatic");
  EXPECT_EQ(c[0].sources[1].clause, "liver");
}

TEST(Umls, HepaticReachesHepaticArteryAndLiver) {
  const auto& r = testsupport::fixture_resources();
  const auto f = ms::make_fragment("T", 1, ms::parse_query("hepatic"));
  const auto c = ms::retrieve_umls(f, *r.umls);
  EXPECT_TRUE(find(c, "Hepatic Artery"));
  EXPECT_TRUE(find(c, "Liver"));
  for (const auto& x : c)
    for (const auto& rec : r.umls->records())
      if (rec.synonym == x.heading.heading) EXPECT_EQ(rec.source, "MSH");
}

TEST(Umls, ScoreIsTheHitBm25) {
  const auto& r = testsupport::fixture_resources();
  const auto f = ms::make_fragment("T", 1, ms::parse_query("hepatic"));
  const auto hits = r.umls->search("hepatic");
  ASSERT_FALSE(hits.empty());
  const auto c = ms::retrieve_umls(f, *r.umls);
  for (const auto& x : c)
    for (const auto& s : x.sources) {
      const bool from_hit = std::any_of(hits.begin(), hits.end(), [&](const ms::ConceptHit& h) { return h.score == s.raw_score; });
      EXPECT_TRUE(from_hit);
    }
}

TEST(Umls, NothingMatches) {
  const auto& r = testsupport::fixture_resources();
  EXPECT_TRUE(ms::retrieve_umls(ms::make_fragment("T", 1, ms::parse_query("zzzz")), *r.umls).empty());
  EXPECT_THROW(ms::retrieve_umls(ms::make_fragment("T", 1, ms::parse_query("x")), ms::ConceptIndex{}), ms::IndexNotBuilt);
}

TEST(Umls, TopKLimitsHitsPerClause) {
  const auto& r = testsupport::fixture_resources();
  const auto f = ms::make_fragment("T", 1, ms::parse_query("liver"));
  const auto one = ms::retrieve_umls(f, *r.umls, 1);
  const auto all = ms::retrieve_umls(f, *r.umls, 10);
  EXPECT_LT(one.size(), all.size());
}

TEST(CombSum, AlreadyNormalizedSums) {
  auto liver = cand("Liver", 0);
  liver.sources = {{"a", 0.8, ""}, {"b", 0.5, ""}};
  auto biopsy = cand("Biopsy", 0);
  biopsy.sources = {{"a", 0.9, ""}};
  const auto out = ms::dedup_combsum({liver, biopsy}, true);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].heading.heading, "Liver");
  EXPECT_DOUBLE_EQ(out[0].raw_score, 1.3);
  EXPECT_DOUBLE_EQ(out[1].raw_score, 0.9);
  EXPECT_DOUBLE_EQ(out[0].norm_score, 1.0);
  EXPECT_DOUBLE_EQ(out[1].norm_score, 0.0);
}

TEST(CombSum, NormalizesOccurrencesFirst) {
  auto a = cand("A", 0);
  a.sources = {{"x", 10, ""}, {"y", 20, ""}};
  auto b = cand("B", 0);
  b.sources = {{"x", 30, ""}};
  const auto out = ms::dedup_combsum({a, b});
  // occurrences 10, 20, 30 -> 0, 0.5, 1; A = 0.5, B = 1
  EXPECT_EQ(out[0].heading.heading, "B");
  EXPECT_DOUBLE_EQ(out[0].raw_score, 1.0);
  EXPECT_DOUBLE_EQ(out[1].raw_score, 0.5);
}

TEST(CombSum, SingleCandidateNormIsOne) {
  auto a = cand("A", 0);
  a.sources = {{"x", 3, ""}};
  const auto out = ms::dedup_combsum({a});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].norm_score, 1.0);
  EXPECT_TRUE(ms::dedup_combsum({}).empty());
}

TEST(CombSum, DuplicateFreeInputFollowsRawOrder) {
  std::vector<ms::MeshCandidate> in;
  for (double s : {2.0, 9.0, 4.0, 7.0}) {
    auto c = cand("h" + std::to_string(static_cast<int>(s)), 0);
    c.sources = {{"x", s, ""}};
    in.push_back(c);
  }
  EXPECT_EQ(headings(ms::dedup_combsum(in)), (std::vector<std::string>{"h9", "h7", "h4", "h2"}));
}

TEST(CandidateJson, RoundTrip) {
  auto c = cand("Biopsy, Needle", 0.25, ms::Method::kFusion);
  c.raw_score = 1.75;
  c.sources = {{"liver biops", 0.5, "source:MSH"}};
  c.method_scores = {{ms::Method::kAtm, 1.0}, {ms::Method::kUmls, 0.75}};
  const auto back = ms::candidate_from_json(ms::candidate_to_json(c));
  EXPECT_EQ(back.heading.heading, c.heading.heading);
  EXPECT_EQ(back.method, c.method);
  EXPECT_EQ(back.raw_score, c.raw_score);
  EXPECT_EQ(back.norm_score, c.norm_score);
  ASSERT_EQ(back.sources.size(), 1u);
  EXPECT_EQ(back.sources[0].mark, "source:MSH");
  EXPECT_EQ(back.method_scores, c.method_scores);
}
