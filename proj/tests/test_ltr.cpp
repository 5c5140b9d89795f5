#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "support.hpp"

#include "meshsuggest/evaluation.hpp"
#include "meshsuggest/ltr_ranker.hpp"

namespace ms = meshsuggest;
using testsupport::cand;

namespace {

std::vector<ms::MeshDescription> three() {
  return {ms::make_description("A", "liver biopsy liver"), ms::make_description("B", "needle biopsy"),
          ms::make_description("C", "cirrhosis of the liver")};
}

ms::Fragment frag(const std::string& q) { return ms::make_fragment("T", 1, ms::parse_query(q)); }

// Independent feature computation straight from the description file.
struct NaiveFeatures {
  std::map<std::string, std::vector<std::string>> docs;
  double total = 0;
  std::set<std::string> vocab;

  explicit NaiveFeatures(const std::string& path) {
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      auto w = testsupport::words(j["description"]);
      total += static_cast<double>(w.size());
      vocab.insert(w.begin(), w.end());
      docs[testsupport::key(j["heading"])] = w;
    }
  }

  static double count(const std::vector<std::string>& d, const std::string& t) {
    return static_cast<double>(std::count(d.begin(), d.end(), t));
  }

  double ef(const std::string& t) const {
    double n = 0;
    for (const auto& [_, d] : docs) n += count(d, t) > 0;
    return n;
  }

  double cf(const std::string& t) const {
    double n = 0;
    for (const auto& [_, d] : docs) n += count(d, t);
    return n;
  }

  double lm(const std::vector<std::string>& q, const std::vector<std::string>& d) const {
    double s = 0;
    for (const auto& t : q) {
      const double p = (cf(t) + 1) / (total + static_cast<double>(vocab.size()));
      s += std::log((count(d, t) + 2000 * p) / (static_cast<double>(d.size()) + 2000));
    }
    return s;
  }

  std::array<double, 11> features(const std::vector<std::string>& q, const std::string& heading) const {
    const auto& d = docs.at(testsupport::key(heading));
    const double n = static_cast<double>(docs.size());
    const double avg = total / n;
    double ief = 0, tf = 0, tfief = 0, bm25 = 0;
    for (const auto& t : q) {
      const double i = std::log(n / (1 + ef(t))) + 1;
      const double c = count(d, t);
      ief += i;
      tf += c;
      tfief += c * i;
      if (c > 0) {
        const double idf = std::log(1 + (n - ef(t) + 0.5) / (ef(t) + 0.5));
        bm25 += idf * c * 2.2 / (c + 1.2 * (0.25 + 0.75 * static_cast<double>(d.size()) / avg));
      }
    }
    const auto h = testsupport::words(heading);
    const bool qce = std::search(q.begin(), q.end(), h.begin(), h.end()) != q.end();
    const bool contains = std::any_of(q.begin(), q.end(), [&](const auto& t) { return std::count(h.begin(), h.end(), t); });
    const bool equals = q == h;
    return {static_cast<double>(q.size()), static_cast<double>(d.size()), ief, tf, tfief, lm(q, d), bm25,
            0.85 * lm(q, d), qce ? 1.0 : 0.0, contains ? 1.0 : 0.0, equals ? 1.0 : 0.0};
  }
};

// Groups whose only informative feature is f9 (qce).
std::vector<ms::TrainingGroup> separable(std::size_t groups, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ms::TrainingGroup> out;
  for (std::size_t g = 0; g < groups; ++g) {
    ms::TrainingGroup tg;
    tg.id = "g" + std::to_string(g);
    for (int i = 0; i < 6; ++i) {
      ms::LabeledInstance inst;
      for (auto& x : inst.features) x = u(rng);
      inst.label = i < 2 ? 1 : 0;
      inst.features[8] = inst.label ? 1.0 : 0.0;
      tg.instances.push_back(inst);
    }
    std::shuffle(tg.instances.begin(), tg.instances.end(), rng);
    out.push_back(std::move(tg));
  }
  return out;
}

}  // namespace

TEST(DescStats, IefExamples) {
  const auto s = ms::DescStats::build(three());
  EXPECT_DOUBLE_EQ(s.ief("liver"), 1.0);
  EXPECT_DOUBLE_EQ(s.ief("needle"), std::log(1.5) + 1.0);
  EXPECT_DOUBLE_EQ(s.ief("zzz"), std::log(3.0) + 1.0);
  EXPECT_EQ(s.total_tokens(), 9u);
  EXPECT_EQ(s.vocabulary_size(), 6u);
  EXPECT_THROW(ms::DescStats::build({}), ms::DataError);
}

TEST(Scores, LmHandValue) {
  const auto s = ms::DescStats::build(three());
  const std::vector<std::string> d = {"liver", "biopsy", "liver"};
  EXPECT_NEAR(ms::score_lm({"liver"}, d, s), std::log((2.0 + 2000.0 * 4.0 / 15.0) / 2003.0), 1e-12);
  // unseen term keeps a finite score
  EXPECT_TRUE(std::isfinite(ms::score_lm({"zzz"}, d, s)));
}

TEST(Scores, LmLimits) {
  const auto s = ms::DescStats::build(three());
  const std::vector<std::string> d = {"liver", "biopsy", "liver"};
  EXPECT_NEAR(ms::score_lm({"liver"}, d, s, {1e12}), std::log(4.0 / 15.0), 1e-6);
  EXPECT_NEAR(ms::score_lm({"liver"}, d, s, {1e-12}), std::log(2.0 / 3.0), 1e-6);
}

TEST(Scores, Bm25OneDescription) {
  const auto s = ms::DescStats::build(three());
  const std::vector<std::string> d = {"liver", "biopsy", "liver"};
  EXPECT_NEAR(ms::score_bm25({"liver"}, d, s), std::log(1.6) * 1.375, 1e-12);
  EXPECT_DOUBLE_EQ(ms::score_bm25({"zzz"}, d, s), 0.0);
}

TEST(Scores, SdmWithoutBigramsIsWeightedUnigram) {
  const auto s = ms::DescStats::build(three());
  const std::vector<std::string> d = {"cirrhosis", "of", "the", "liver"};
  EXPECT_DOUBLE_EQ(ms::score_sdm({{"liver"}}, d, s), 0.85 * ms::score_lm({"liver"}, d, s));
}

TEST(Scores, SdmRewardsTheOrderedPair) {
  const auto s = ms::DescStats::build(three());
  const std::vector<std::string> in_order = {"liver", "biopsy"};
  const std::vector<std::string> reversed = {"biopsy", "liver"};
  EXPECT_GT(ms::score_sdm({{"liver", "biopsy"}}, in_order, s), ms::score_sdm({{"liver", "biopsy"}}, reversed, s));
  EXPECT_EQ(ms::DescStats::window_count({"a", "x", "b"}, "a", "b", 8), 1u);
  EXPECT_EQ(ms::DescStats::window_count({"b", "x", "a"}, "a", "b", 8), 1u);
  EXPECT_EQ(ms::DescStats::window_count({"a", "x", "x", "b"}, "a", "b", 3), 0u);
}

TEST(Features, ExactMatchFlagsOnLiverBiops) {
  const auto& r = testsupport::fixture_resources();
  const auto x = ms::extract_features(frag("\"liver biops*\""), cand("Liver", 0), *r.descriptions);
  EXPECT_DOUBLE_EQ(x[8], 1.0);
  EXPECT_DOUBLE_EQ(x[9], 1.0);
  EXPECT_DOUBLE_EQ(x[10], 0.0);
  const auto y = ms::extract_features(frag("liver OR biopsy"), cand("Liver", 0), *r.descriptions);
  EXPECT_DOUBLE_EQ(y[10], 1.0);
  const auto z = ms::extract_features(frag("\"liver biops*\""), cand("Child", 0), *r.descriptions);
  EXPECT_DOUBLE_EQ(z[8] + z[9] + z[10], 0.0);
}

TEST(Features, MatchIndependentComputation) {
  const auto& r = testsupport::fixture_resources();
  const NaiveFeatures naive(testsupport::fixture("descriptions.jsonl"));
  for (const auto& heading : {"Liver", "Biopsy", "Biopsy, Needle", "Liver Cirrhosis", "Child"}) {
    const auto x = ms::extract_features(frag("fibrosis OR stage"), cand(heading, 0), *r.descriptions);
    const auto want = naive.features({"fibrosis", "stage"}, heading);
    for (std::size_t i = 0; i < ms::kNumFeatures; ++i) EXPECT_NEAR(x[i], want[i], 1e-9) << heading << " f" << i + 1;
  }
}

TEST(Features, Names) {
  EXPECT_EQ(ms::feature_names().size(), 11u);
  EXPECT_EQ(ms::feature_csv_header().substr(0, 25), "group,heading,label,q_len");
}

TEST(Labels, GoldHeadingsArePositive) {
  const auto& r = testsupport::fixture_resources();
  const auto f = frag("Liver[Mesh] OR \"liver biops*\"");
  const auto inst = ms::label_instances(f, {cand("liver", 0), cand("Biopsy", 0)}, *r.descriptions);
  ASSERT_EQ(inst.size(), 2u);
  EXPECT_EQ(inst[0].label, 1);
  EXPECT_EQ(inst[1].label, 0);
}

TEST(Training, SeparableGroupsRankPerfectly) {
  const auto model = ms::train_ranker(separable(20, 1));
  EXPECT_EQ(model.trees.size(), 100u);
  for (const auto& g : separable(10, 99)) {
    std::vector<std::pair<double, std::size_t>> s;
    for (std::size_t i = 0; i < g.instances.size(); ++i) s.emplace_back(-model.score(g.instances[i].features), i);
    std::stable_sort(s.begin(), s.end());
    std::vector<std::string> ranked;
    ms::HeadingSet gold;
    for (const auto& [_, i] : s) {
      ranked.push_back("i" + std::to_string(i));
      if (g.instances[i].label) gold.insert("i" + std::to_string(i));
    }
    EXPECT_DOUBLE_EQ(ms::ndcg_at_k(ranked, gold, 5), 1.0) << g.id;
  }
}

TEST(Training, DegenerateGroupsAreRejected) {
  auto groups = separable(3, 1);
  for (auto& g : groups)
    for (auto& i : g.instances) i.label = 0;
  EXPECT_THROW(ms::train_ranker(groups), ms::DegenerateTraining);
  EXPECT_THROW(ms::train_ranker({}), ms::DegenerateTraining);
  ms::TrainConfig bad;
  bad.trees = 0;
  EXPECT_THROW(ms::train_ranker(separable(3, 1), bad), ms::ConfigError);
}

TEST(Training, IsDeterministic) {
  const auto a = ms::model_to_json(ms::train_ranker(separable(8, 5)));
  const auto b = ms::model_to_json(ms::train_ranker(separable(8, 5)));
  EXPECT_EQ(a.dump(), b.dump());
}

TEST(Model, FileRoundTrip) {
  auto model = ms::train_ranker(separable(5, 2), {}, "atm");
  const auto path = (std::filesystem::temp_directory_path() / "meshsuggest_model.json").string();
  ms::save_model(model, path);
  const auto back = ms::load_model(path);
  EXPECT_EQ(ms::model_to_json(back), ms::model_to_json(model));
  for (const auto& g : separable(3, 8))
    for (const auto& i : g.instances) EXPECT_DOUBLE_EQ(back.score(i.features), model.score(i.features));
  EXPECT_THROW(ms::model_from_json({{"format", "other"}}), ms::DataError);
}

TEST(Model, FeatureOrderMismatchIsRejected) {
  const auto& r = testsupport::fixture_resources();
  auto model = ms::train_ranker(separable(3, 2));
  std::swap(model.feature_order[0], model.feature_order[1]);
  EXPECT_THROW(ms::rank(model, frag("liver"), {cand("Liver", 0)}, *r.descriptions), ms::FeatureOrderMismatch);
}

TEST(Rank, EqualScoresKeepInputOrder) {
  const auto& r = testsupport::fixture_resources();
  ms::RankerModel flat;
  flat.feature_order.assign(ms::feature_names().begin(), ms::feature_names().end());
  flat.trees.push_back({{ms::TreeNode{}}});
  const auto out = ms::rank(flat, frag("liver"), {cand("Liver", 0), cand("Biopsy", 0), cand("Child", 0)}, *r.descriptions);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].heading.heading, "Liver");
  EXPECT_EQ(out[2].heading.heading, "Child");
  for (const auto& c : out) EXPECT_DOUBLE_EQ(c.norm_score, 1.0);
  EXPECT_TRUE(ms::rank(flat, frag("liver"), {}, *r.descriptions).empty());
}
