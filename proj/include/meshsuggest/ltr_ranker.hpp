#pragma once

// Learning to rank MeSH candidates: the eleven query/description features, a
// LambdaMART trainer over regression trees, and model files.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "meshsuggest/bm25.hpp"
#include "meshsuggest/candidate_retrieval.hpp"
#include "meshsuggest/common.hpp"
#include "meshsuggest/fragmenter.hpp"
#include "meshsuggest/minmax.hpp"

namespace meshsuggest {

struct MeshDescription {
  MeshTerm heading;
  std::string description;
  std::size_t length = 0;
};

inline MeshDescription make_description(const std::string& heading, const std::string& text) {
  return {MeshTerm{squeeze_spaces(heading), {}}, text, tokenize(text).size()};
}

/// Line-delimited JSON {"heading", "description"}.
inline std::vector<MeshDescription> load_descriptions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open description corpus " + path);
  std::vector<MeshDescription> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_view(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back(make_description(j.at("heading").get<std::string>(), j.at("description").get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

struct DirichletParams {
  double mu = 2000.0;
};

struct SdmWeights {
  double unigram = 0.85;
  double ordered = 0.10;
  double unordered = 0.05;
  std::size_t window = 8;
};

/// Statistics of the description corpus: entity frequencies for IEF, BM25
/// document frequencies and collection counts for language-model smoothing.
class DescStats {
 public:
  static DescStats build(const std::vector<MeshDescription>& descriptions) {
    if (descriptions.empty()) throw DataError("description corpus is empty");
    DescStats s;
    for (const auto& d : descriptions) {
      auto tokens = tokenize(d.description);
      std::unordered_set<std::string> seen;
      for (const auto& t : tokens) {
        ++s.cf_[t];
        if (seen.insert(t).second) ++s.ef_[t];
      }
      for (std::size_t i = 0; i + 1 < tokens.size(); ++i) ++s.bigram_cf_[tokens[i] + ' ' + tokens[i + 1]];
      s.total_tokens_ += tokens.size();
      s.docs_.push_back(std::move(tokens));
    }
    return s;
  }

  std::size_t num_descriptions() const { return docs_.size(); }
  std::size_t total_tokens() const { return total_tokens_; }
  std::size_t vocabulary_size() const { return cf_.size(); }
  double avg_length() const {
    return docs_.empty() ? 0.0 : static_cast<double>(total_tokens_) / static_cast<double>(docs_.size());
  }
  std::size_t ef(const std::string& t) const { return count(ef_, t); }
  std::size_t cf(const std::string& t) const { return count(cf_, t); }
  std::size_t ordered_cf(const std::string& a, const std::string& b) const { return count(bigram_cf_, a + ' ' + b); }

  /// Occurrences of the pair (a, b) in either order within `window` positions,
  /// summed over the corpus.
  std::size_t unordered_cf(const std::string& a, const std::string& b, std::size_t window) const {
    const std::string key = a + ' ' + b + ' ' + std::to_string(window);
    {
      std::lock_guard lock(cache_->mutex);
      if (const auto it = cache_->counts.find(key); it != cache_->counts.end()) return it->second;
    }
    std::size_t total = 0;
    for (const auto& d : docs_) total += window_count(d, a, b, window);
    std::lock_guard lock(cache_->mutex);
    cache_->counts.emplace(key, total);
    return total;
  }

  /// IEF(t) = ln(N / (1 + ef(t))) + 1
  double ief(const std::string& t) const {
    return std::log(static_cast<double>(docs_.size()) / (1.0 + static_cast<double>(ef(t)))) + 1.0;
  }

  /// Background probability p(t|C) = (cf + 1) / (|C| + |V|), add-one so that
  /// unseen terms keep a finite log-likelihood.
  double background(std::size_t collection_count) const {
    const double denom = static_cast<double>(total_tokens_ + cf_.size());
    return (static_cast<double>(collection_count) + 1.0) / (denom > 0.0 ? denom : 1.0);
  }

  static std::size_t window_count(const std::vector<std::string>& d, const std::string& a, const std::string& b,
                                  std::size_t window) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d[i] != a) continue;
      const std::size_t lo = i >= window - 1 ? i - (window - 1) : 0;
      const std::size_t hi = std::min(d.size(), i + window);
      for (std::size_t j = lo; j < hi; ++j)
        if (j != i && d[j] == b) ++n;
    }
    return n;
  }

 private:
  static std::size_t count(const std::unordered_map<std::string, std::size_t>& m, const std::string& k) {
    const auto it = m.find(k);
    return it == m.end() ? 0 : it->second;
  }

  std::vector<std::vector<std::string>> docs_;
  std::unordered_map<std::string, std::size_t> ef_;
  std::unordered_map<std::string, std::size_t> cf_;
  std::unordered_map<std::string, std::size_t> bigram_cf_;
  std::size_t total_tokens_ = 0;
  struct WindowCache {
    std::mutex mutex;
    std::unordered_map<std::string, std::size_t> counts;
  };
  std::shared_ptr<WindowCache> cache_ = std::make_shared<WindowCache>();
};

inline DescStats build_description_stats(const std::vector<MeshDescription>& descriptions) {
  return DescStats::build(descriptions);
}

// ---------------------------------------------------------------------------
// Retrieval scores of free-text terms against one description

namespace detail {

inline std::size_t term_count(const std::vector<std::string>& d, const std::string& t) {
  return static_cast<std::size_t>(std::count(d.begin(), d.end(), t));
}

inline std::size_t ordered_count(const std::vector<std::string>& d, const std::string& a, const std::string& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < d.size(); ++i)
    if (d[i] == a && d[i + 1] == b) ++n;
  return n;
}

inline double dirichlet(double tf, double doc_len, double p_background, double mu) {
  return std::log((tf + mu * p_background) / (doc_len + mu));
}

inline std::vector<std::string> distinct(const std::vector<std::string>& q) {
  std::vector<std::string> out;
  for (const auto& t : q)
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  return out;
}

}  // namespace detail

/// Okapi BM25 of the distinct query terms against description tokens.
inline double score_bm25(const std::vector<std::string>& q, const std::vector<std::string>& d,
                         const DescStats& stats, const Bm25Params& p = {}) {
  double score = 0.0;
  for (const auto& t : detail::distinct(q)) {
    const auto tf = detail::term_count(d, t);
    if (tf == 0) continue;
    score += bm25_term_score(static_cast<double>(tf), static_cast<double>(d.size()), stats.avg_length(),
                             bm25_idf(stats.num_descriptions(), stats.ef(t)), p);
  }
  return score;
}

/// Dirichlet-smoothed query log-likelihood.
inline double score_lm(const std::vector<std::string>& q, const std::vector<std::string>& d, const DescStats& stats,
                       const DirichletParams& p = {}) {
  double score = 0.0;
  for (const auto& t : detail::distinct(q))
    score += detail::dirichlet(static_cast<double>(detail::term_count(d, t)), static_cast<double>(d.size()),
                               stats.background(stats.cf(t)), p.mu);
  return score;
}

/// Adjacent term pairs of each clause, first occurrence order, no duplicates.
inline std::vector<std::pair<std::string, std::string>> query_bigrams(
    const std::vector<std::vector<std::string>>& clauses) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& c : clauses)
    for (std::size_t i = 0; i + 1 < c.size(); ++i) {
      std::pair<std::string, std::string> b{c[i], c[i + 1]};
      if (std::find(out.begin(), out.end(), b) == out.end()) out.push_back(std::move(b));
    }
  return out;
}

/// Sequential dependence: weighted unigram, ordered-bigram and unordered-window
/// log-likelihoods, each Dirichlet-smoothed. Without bigrams only the unigram
/// component contributes.
inline double score_sdm(const std::vector<std::vector<std::string>>& clauses, const std::vector<std::string>& d,
                        const DescStats& stats, const SdmWeights& w = {}, const DirichletParams& p = {}) {
  std::vector<std::string> q;
  for (const auto& c : clauses) q.insert(q.end(), c.begin(), c.end());
  const double len = static_cast<double>(d.size());
  double ordered = 0.0;
  double unordered = 0.0;
  for (const auto& [a, b] : query_bigrams(clauses)) {
    ordered += detail::dirichlet(static_cast<double>(detail::ordered_count(d, a, b)), len,
                                 stats.background(stats.ordered_cf(a, b)), p.mu);
    unordered += detail::dirichlet(static_cast<double>(DescStats::window_count(d, a, b, w.window)), len,
                                   stats.background(stats.unordered_cf(a, b, w.window)), p.mu);
  }
  return w.unigram * score_lm(q, d, stats, p) + w.ordered * ordered + w.unordered * unordered;
}

// ---------------------------------------------------------------------------
// Features

inline constexpr std::size_t kNumFeatures = 11;

inline const std::array<std::string, kNumFeatures>& feature_names() {
  static const std::array<std::string, kNumFeatures> names = {
      "q_len", "desc_len", "sum_ief", "sum_tf", "sum_tf_ief", "lm", "bm25", "sdm", "qce", "ecq_contains",
      "ecq_equals"};
  return names;
}

using FeatureVector = std::array<double, kNumFeatures>;

/// Descriptions keyed by canonical heading.
class DescriptionCorpus {
 public:
  DescriptionCorpus() = default;
  explicit DescriptionCorpus(std::vector<MeshDescription> descriptions)
      : stats_(DescStats::build(descriptions)) {
    for (auto& d : descriptions) {
      auto key = d.heading.key();
      tokens_.emplace(key, tokenize(d.description));
      by_key_.emplace(std::move(key), std::move(d));
    }
  }

  static DescriptionCorpus load(const std::string& path) { return DescriptionCorpus(load_descriptions(path)); }

  const DescStats& stats() const { return stats_; }
  std::size_t size() const { return by_key_.size(); }

  /// Description tokens of a heading; empty when the heading has none.
  const std::vector<std::string>& tokens(const MeshTerm& heading) const {
    static const std::vector<std::string> kEmpty;
    const auto it = tokens_.find(heading.key());
    return it == tokens_.end() ? kEmpty : it->second;
  }

 private:
  DescStats stats_;
  std::unordered_map<std::string, MeshDescription> by_key_;
  std::unordered_map<std::string, std::vector<std::string>> tokens_;
};

namespace detail {

inline bool contains_sequence(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace detail

inline FeatureVector extract_features(const Fragment& f, const MeshCandidate& c, const DescriptionCorpus& corpus) {
  const auto& stats = corpus.stats();
  const auto q = f.terms();
  const auto clauses = f.clause_tokens();
  const auto& d = corpus.tokens(c.heading);
  const auto heading = tokenize(c.heading.heading);

  double sum_ief = 0.0, sum_tf = 0.0, sum_tf_ief = 0.0;
  for (const auto& t : q) {
    const double ief = stats.ief(t);
    const double tf = static_cast<double>(detail::term_count(d, t));
    sum_ief += ief;
    sum_tf += tf;
    sum_tf_ief += tf * ief;
  }

  std::vector<std::string> concatenated;
  for (const auto& cl : clauses) concatenated.insert(concatenated.end(), cl.begin(), cl.end());
  const bool qce = detail::contains_sequence(concatenated, heading);
  const bool contains = std::any_of(q.begin(), q.end(), [&](const std::string& t) {
    return std::find(heading.begin(), heading.end(), t) != heading.end();
  });
  const bool equals = !heading.empty() && std::find(clauses.begin(), clauses.end(), heading) != clauses.end();

  return {static_cast<double>(q.size()),
          static_cast<double>(d.size()),
          sum_ief,
          sum_tf,
          sum_tf_ief,
          score_lm(q, d, stats),
          score_bm25(q, d, stats),
          score_sdm(clauses, d, stats),
          qce ? 1.0 : 0.0,
          contains ? 1.0 : 0.0,
          equals ? 1.0 : 0.0};
}

struct LabeledInstance {
  FeatureVector features{};
  int label = 0;
};

/// Label 1 iff the candidate heading is one of the fragment's gold headings.
inline std::vector<LabeledInstance> label_instances(const Fragment& f, const std::vector<MeshCandidate>& candidates,
                                                    const DescriptionCorpus& corpus) {
  const auto gold = f.gold_headings();
  std::vector<LabeledInstance> out;
  for (const auto& c : candidates) out.push_back({extract_features(f, c, corpus), gold.count(c.heading.key()) ? 1 : 0});
  return out;
}

inline std::string feature_csv_header() {
  std::string h = "group,heading,label";
  for (const auto& n : feature_names()) h += "," + n;
  return h;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_feature_row(std::ostream& out, const std::string& group, const std::string& heading,
                              const LabeledInstance& inst) {
  out << csv_field(group) << ',' << csv_field(heading) << ',' << inst.label;
  for (double v : inst.features) out << ',' << format_double(v);
  out << '\n';
}

// ---------------------------------------------------------------------------
// LambdaMART

class DegenerateTraining : public Error {
 public:
  using Error::Error;
};

class FeatureOrderMismatch : public Error {
 public:
  using Error::Error;
};

struct TrainingGroup {
  std::string id;
  std::vector<LabeledInstance> instances;
};

struct TrainConfig {
  std::size_t trees = 100;
  std::size_t depth = 4;
  double learning_rate = 0.1;
  std::uint64_t seed = 42;
  std::size_t min_leaf = 1;
  std::size_t ndcg_cutoff = 10;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(const FeatureVector& x) const {
    std::size_t n = 0;
    while (nodes[n].feature >= 0)
      n = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[n].feature)] <= nodes[n].threshold ? nodes[n].left
                                                                                                        : nodes[n].right);
    return nodes[n].value;
  }
};

struct RankerModel {
  std::string method;
  std::vector<std::string> feature_order;
  TrainConfig config;
  std::vector<RegressionTree> trees;

  double score(const FeatureVector& x) const {
    double s = 0.0;
    for (const auto& t : trees) s += config.learning_rate * t.predict(x);
    return s;
  }
};

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline double dcg_gain(int label) { return std::pow(2.0, label) - 1.0; }
inline double dcg_discount(std::size_t rank0) { return 1.0 / std::log2(static_cast<double>(rank0) + 2.0); }

struct LambdaResult {
  std::vector<double> lambda;
  std::vector<double> weight;
};

/// LambdaRank gradients of one group: for each pair with differing labels the
/// pairwise logistic gradient scaled by |delta nDCG@k| of swapping the pair in
/// the current ranking.
inline void group_lambdas(const std::vector<int>& labels, const std::vector<double>& scores, std::size_t cutoff,
                          double* lambda, double* weight) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;

  std::vector<int> ideal = labels;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(cutoff, n); ++r) idcg += dcg_gain(ideal[r]) * dcg_discount(r);
  if (idcg <= 0.0) return;

  const auto disc = [&](std::size_t r) { return r < cutoff ? dcg_discount(r) : 0.0; };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (labels[i] <= labels[j]) continue;
      const double delta = std::abs((dcg_gain(labels[i]) - dcg_gain(labels[j])) *
                                    (disc(rank[i]) - disc(rank[j]))) / idcg;
      const double rho = 1.0 / (1.0 + std::exp(scores[i] - scores[j]));
      lambda[i] += delta * rho;
      lambda[j] -= delta * rho;
      const double w = delta * rho * (1.0 - rho);
      weight[i] += w;
      weight[j] += w;
    }
}

struct Sample {
  const FeatureVector* x;
  double target;
  double weight;
};

class TreeBuilder {
 public:
  TreeBuilder(std::vector<Sample> samples, std::size_t depth, std::size_t min_leaf)
      : samples_(std::move(samples)), depth_(depth), min_leaf_(min_leaf) {}

  RegressionTree build() {
    RegressionTree t;
    std::vector<std::size_t> idx(samples_.size());
    std::iota(idx.begin(), idx.end(), 0);
    grow(t, idx, 0);
    return t;
  }

 private:
  int grow(RegressionTree& t, const std::vector<std::size_t>& idx, std::size_t level) {
    const int id = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    double sum = 0.0, wsum = 0.0;
    for (auto i : idx) {
      sum += samples_[i].target;
      wsum += samples_[i].weight;
    }
    t.nodes[static_cast<std::size_t>(id)].value = wsum > 0.0 ? sum / wsum : 0.0;
    if (level >= depth_ || idx.size() < 2 * min_leaf_) return id;

    const double total = sum;
    const double n = static_cast<double>(idx.size());
    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> sorted = idx;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      std::stable_sort(sorted.begin(), sorted.end(),
                       [&](std::size_t a, std::size_t b) { return (*samples_[a].x)[f] < (*samples_[b].x)[f]; });
      double left = 0.0;
      for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
        left += samples_[sorted[k]].target;
        const double v = (*samples_[sorted[k]].x)[f];
        const double next = (*samples_[sorted[k + 1]].x)[f];
        if (v == next) continue;
        const std::size_t nl = k + 1, nr = sorted.size() - nl;
        if (nl < min_leaf_ || nr < min_leaf_) continue;
        const double right = total - left;
        const double gain = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr) -
                            total * total / n;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = v + (next - v) / 2.0;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> l, r;
    for (auto i : idx) ((*samples_[i].x)[static_cast<std::size_t>(best_feature)] <= best_threshold ? l : r).push_back(i);
    const int left_id = grow(t, l, level + 1);
    const int right_id = grow(t, r, level + 1);
    auto& node = t.nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left_id;
    node.right = right_id;
    return id;
  }

  std::vector<Sample> samples_;
  std::size_t depth_;
  std::size_t min_leaf_;
};

}  // namespace detail

/// Gradient-boosted regression trees fitted to LambdaRank gradients (Newton
/// leaf values). Training is fully deterministic; the seed is recorded in the
/// model metadata.
inline RankerModel train_ranker(const std::vector<TrainingGroup>& groups, const TrainConfig& cfg = {},
                                const std::string& method = "") {
  if (cfg.trees == 0 || cfg.depth == 0 || cfg.learning_rate <= 0.0)
    throw ConfigError("trees, depth and learning_rate must be positive");
  const bool usable = std::any_of(groups.begin(), groups.end(), [](const TrainingGroup& g) {
    const bool pos = std::any_of(g.instances.begin(), g.instances.end(), [](const auto& i) { return i.label > 0; });
    const bool neg = std::any_of(g.instances.begin(), g.instances.end(), [](const auto& i) { return i.label <= 0; });
    return pos && neg;
  });
  if (!usable) throw DegenerateTraining("no training group has both a positive and a negative instance");

  RankerModel model;
  model.method = method;
  model.feature_order.assign(feature_names().begin(), feature_names().end());
  model.config = cfg;

  std::vector<const FeatureVector*> xs;
  std::vector<int> labels;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& g : groups) {
    spans.emplace_back(xs.size(), g.instances.size());
    for (const auto& inst : g.instances) {
      xs.push_back(&inst.features);
      labels.push_back(inst.label);
    }
  }
  std::vector<double> scores(xs.size(), 0.0);
  for (std::size_t m = 0; m < cfg.trees; ++m) {
    std::vector<double> lambda(xs.size(), 0.0), weight(xs.size(), 0.0);
    for (const auto& [start, len] : spans) {
      std::vector<int> gl(labels.begin() + static_cast<std::ptrdiff_t>(start),
                          labels.begin() + static_cast<std::ptrdiff_t>(start + len));
      std::vector<double> gs(scores.begin() + static_cast<std::ptrdiff_t>(start),
                             scores.begin() + static_cast<std::ptrdiff_t>(start + len));
      detail::group_lambdas(gl, gs, cfg.ndcg_cutoff, lambda.data() + start, weight.data() + start);
    }
    std::vector<detail::Sample> samples;
    for (std::size_t i = 0; i < xs.size(); ++i) samples.push_back({xs[i], lambda[i], weight[i]});
    auto tree = detail::TreeBuilder(std::move(samples), cfg.depth, cfg.min_leaf).build();
    for (std::size_t i = 0; i < xs.size(); ++i) scores[i] += cfg.learning_rate * tree.predict(*xs[i]);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

inline nlohmann::json model_to_json(const RankerModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.feature < 0)
        nodes.push_back({{"leaf", n.value}});
      else
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
    }
    trees.push_back(nodes);
  }
  return {{"format", "lambdamart"},
          {"version", kModelFormatVersion},
          {"method", m.method},
          {"feature_order", m.feature_order},
          {"config",
           {{"trees", m.config.trees},
            {"depth", m.config.depth},
            {"learning_rate", m.config.learning_rate},
            {"seed", m.config.seed},
            {"min_leaf", m.config.min_leaf},
            {"ndcg_cutoff", m.config.ndcg_cutoff}}},
          {"trees", trees}};
}

inline RankerModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "lambdamart") throw DataError("not a LambdaMART model file");
  if (j.value("version", 0) != kModelFormatVersion)
    throw DataError("unsupported model version " + std::to_string(j.value("version", 0)));
  RankerModel m;
  m.method = j.value("method", "");
  m.feature_order = j.at("feature_order").get<std::vector<std::string>>();
  const auto& c = j.at("config");
  m.config.trees = c.at("trees").get<std::size_t>();
  m.config.depth = c.at("depth").get<std::size_t>();
  m.config.learning_rate = c.at("learning_rate").get<double>();
  m.config.seed = c.at("seed").get<std::uint64_t>();
  m.config.min_leaf = c.value("min_leaf", std::size_t{1});
  m.config.ndcg_cutoff = c.value("ndcg_cutoff", std::size_t{10});
  for (const auto& t : j.at("trees")) {
    RegressionTree tree;
    for (const auto& n : t) {
      TreeNode node;
      if (n.contains("leaf")) {
        node.value = n.at("leaf").get<double>();
      } else {
        node.feature = n.at("feature").get<int>();
        node.threshold = n.at("threshold").get<double>();
        node.left = n.at("left").get<int>();
        node.right = n.at("right").get<int>();
        if (node.feature < 0 || node.feature >= static_cast<int>(kNumFeatures))
          throw DataError("model feature index out of range");
      }
      tree.nodes.push_back(node);
    }
    if (tree.nodes.empty()) throw DataError("model contains an empty tree");
    m.trees.push_back(std::move(tree));
  }
  return m;
}

inline void save_model(const RankerModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write model file " + path);
  out << model_to_json(m).dump(1) << '\n';
}

inline RankerModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file " + path);
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void check_feature_order(const RankerModel& model) {
  if (!std::equal(model.feature_order.begin(), model.feature_order.end(), feature_names().begin(),
                  feature_names().end()))
    throw FeatureOrderMismatch("model feature order does not match the extractor");
}

/// Ranks candidates by model score, best first; equal scores keep their input
/// order. norm_score becomes the min-max of the model scores.
inline std::vector<MeshCandidate> rank(const RankerModel& model, const Fragment& f,
                                       const std::vector<MeshCandidate>& candidates,
                                       const DescriptionCorpus& corpus) {
  check_feature_order(model);
  if (candidates.empty()) return {};
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    scored.emplace_back(model.score(extract_features(f, candidates[i], corpus)), i);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> s;
  for (const auto& p : scored) s.push_back(p.first);
  const auto norm = minmax_normalize(s);
  std::vector<MeshCandidate> out;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    out.push_back(candidates[scored[i].second]);
    out.back().norm_score = norm[i];
  }
  return out;
}

}  // namespace meshsuggest
