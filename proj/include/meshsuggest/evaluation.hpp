#pragma once

// Suggestion metrics, search metrics with residual treatments, F-beta and the
// paired t-test.

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "meshsuggest/common.hpp"
#include "meshsuggest/corpus_store.hpp"
#include "meshsuggest/fragmenter.hpp"

namespace meshsuggest {

class EvaluationError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Suggestion metrics

struct SuggestionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double rr = 0.0;
  double recall_at_5 = 0.0;
  double recall_at_10 = 0.0;
  double ndcg_at_5 = 0.0;
  double ndcg_at_10 = 0.0;
};

inline std::pair<double, double> set_precision_recall(const HeadingSet& suggested, const HeadingSet& gold) {
  if (gold.empty()) throw EvaluationError("gold set is empty");
  std::size_t hit = 0;
  for (const auto& s : suggested) hit += gold.count(s);
  const double p = suggested.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(suggested.size());
  return {p, static_cast<double>(hit) / static_cast<double>(gold.size())};
}

namespace detail {

inline void check_gold(const HeadingSet& gold) {
  if (gold.empty()) throw EvaluationError("gold set is empty");
}

inline void check_k(long k) {
  if (k <= 0) throw EvaluationError("cutoff k must be positive");
}

/// Relevance of each rank; a gold heading counts only at its first rank.
inline std::vector<int> relevance(const std::vector<std::string>& ranked, const HeadingSet& gold) {
  std::vector<int> rel;
  std::set<std::string> seen;
  for (const auto& h : ranked) rel.push_back(gold.count(h) && seen.insert(h).second ? 1 : 0);
  return rel;
}

}  // namespace detail

inline double reciprocal_rank(const std::vector<std::string>& ranked, const HeadingSet& gold) {
  detail::check_gold(gold);
  for (std::size_t i = 0; i < ranked.size(); ++i)
    if (gold.count(ranked[i])) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

inline double recall_at_k(const std::vector<std::string>& ranked, const HeadingSet& gold, long k) {
  detail::check_gold(gold);
  detail::check_k(k);
  const auto rel = detail::relevance(ranked, gold);
  const auto n = std::min(rel.size(), static_cast<std::size_t>(k));
  const auto hit = std::accumulate(rel.begin(), rel.begin() + static_cast<std::ptrdiff_t>(n), 0);
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

/// Binary-gain nDCG@k with discount 1/log2(i+1); the ideal ranking places
/// min(k, |gold|) relevant items first.
inline double ndcg_at_k(const std::vector<std::string>& ranked, const HeadingSet& gold, long k) {
  detail::check_gold(gold);
  detail::check_k(k);
  const auto rel = detail::relevance(ranked, gold);
  const auto kk = static_cast<std::size_t>(k);
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(kk, rel.size()); ++i)
    if (rel[i]) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(kk, gold.size()); ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

/// All metrics over a final suggestion ranking.
inline SuggestionMetrics suggestion_metrics(const std::vector<std::string>& ranked, const HeadingSet& gold) {
  SuggestionMetrics m;
  const auto [p, r] = set_precision_recall(HeadingSet(ranked.begin(), ranked.end()), gold);
  m.precision = p;
  m.recall = r;
  m.rr = reciprocal_rank(ranked, gold);
  m.recall_at_5 = recall_at_k(ranked, gold, 5);
  m.recall_at_10 = recall_at_k(ranked, gold, 10);
  m.ndcg_at_5 = ndcg_at_k(ranked, gold, 5);
  m.ndcg_at_10 = ndcg_at_k(ranked, gold, 10);
  return m;
}

// ---------------------------------------------------------------------------
// Search metrics

inline double f_beta(double p, double r, double beta) {
  if (!(beta > 0.0)) throw EvaluationError("beta must be positive");
  const double b2 = beta * beta;
  const double denom = b2 * p + r;
  return denom == 0.0 ? 0.0 : (1.0 + b2) * p * r / denom;
}

enum class ResidualMode { kLower, kMle, kOptimistic };

inline constexpr ResidualMode kResidualModes[] = {ResidualMode::kLower, ResidualMode::kMle,
                                                  ResidualMode::kOptimistic};

inline std::string residual_name(ResidualMode m) {
  switch (m) {
    case ResidualMode::kLower: return "lower";
    case ResidualMode::kMle: return "mle";
    case ResidualMode::kOptimistic: return "optimistic";
  }
  return "lower";
}

struct SearchCounts {
  std::size_t retrieved = 0;
  std::size_t judged_relevant_retrieved = 0;
  std::size_t judged_retrieved = 0;
  std::size_t unjudged_retrieved = 0;
  std::size_t total_relevant = 0;
};

struct ModeMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f_half = 0.0;
  double f1 = 0.0;
  double f3 = 0.0;
  bool fallback = false;  // mle without judged retrieved documents, computed as lower
};

struct SearchMetrics {
  SearchCounts counts;
  std::map<ResidualMode, ModeMetrics> modes;
};

inline SearchCounts search_counts(const std::set<std::string>& retrieved, const std::string& topic_id,
                                  const Judgments& judgments) {
  const auto it = judgments.find(topic_id);
  if (it == judgments.end()) throw EvaluationError("no judgments for topic " + topic_id);
  SearchCounts c;
  c.retrieved = retrieved.size();
  for (const auto& [doc, rel] : it->second) c.total_relevant += rel > 0 ? 1 : 0;
  for (const auto& doc : retrieved) {
    const auto j = it->second.find(doc);
    if (j == it->second.end()) {
      ++c.unjudged_retrieved;
      continue;
    }
    ++c.judged_retrieved;
    if (j->second > 0) ++c.judged_relevant_retrieved;
  }
  return c;
}

/// P and R with `extra` unjudged retrieved documents counted as relevant; the
/// extra documents also join the relevant pool of the recall denominator.
inline ModeMetrics metrics_with_residual(const SearchCounts& c, double extra) {
  ModeMetrics m;
  const double rel_ret = static_cast<double>(c.judged_relevant_retrieved) + extra;
  const double pool = static_cast<double>(c.total_relevant) + extra;
  m.precision = c.retrieved == 0 ? 0.0 : rel_ret / static_cast<double>(c.retrieved);
  m.recall = pool == 0.0 ? 0.0 : rel_ret / pool;
  m.f_half = f_beta(m.precision, m.recall, 0.5);
  m.f1 = f_beta(m.precision, m.recall, 1.0);
  m.f3 = f_beta(m.precision, m.recall, 3.0);
  return m;
}

/// rho = judged relevant retrieved / judged retrieved.
inline double mle_ratio(const SearchCounts& c) {
  return c.judged_retrieved == 0
             ? 0.0
             : static_cast<double>(c.judged_relevant_retrieved) / static_cast<double>(c.judged_retrieved);
}

inline ModeMetrics mode_metrics(const SearchCounts& c, ResidualMode mode) {
  const double u = static_cast<double>(c.unjudged_retrieved);
  switch (mode) {
    case ResidualMode::kLower: return metrics_with_residual(c, 0.0);
    case ResidualMode::kOptimistic: return metrics_with_residual(c, u);
    case ResidualMode::kMle: {
      if (c.judged_retrieved == 0) {
        auto m = metrics_with_residual(c, 0.0);
        m.fallback = c.unjudged_retrieved > 0;
        return m;
      }
      return metrics_with_residual(c, mle_ratio(c) * u);
    }
  }
  return {};
}

/// One draw of the sampled MLE treatment: each unjudged retrieved document is
/// relevant with probability rho.
template <typename Rng>
ModeMetrics sample_mle(const SearchCounts& c, Rng& rng) {
  if (c.judged_retrieved == 0) {
    auto m = metrics_with_residual(c, 0.0);
    m.fallback = c.unjudged_retrieved > 0;
    return m;
  }
  std::bernoulli_distribution draw(mle_ratio(c));
  std::size_t extra = 0;
  for (std::size_t i = 0; i < c.unjudged_retrieved; ++i) extra += draw(rng) ? 1 : 0;
  return metrics_with_residual(c, static_cast<double>(extra));
}

struct SearchEvalOptions {
  bool sample_mle = false;
  std::uint64_t seed = 42;
};

inline SearchMetrics search_eval(const std::set<std::string>& retrieved, const std::string& topic_id,
                                 const Judgments& judgments, const SearchEvalOptions& opt = {}) {
  SearchMetrics out;
  out.counts = search_counts(retrieved, topic_id, judgments);
  for (auto mode : kResidualModes) out.modes[mode] = mode_metrics(out.counts, mode);
  if (opt.sample_mle) {
    std::mt19937_64 rng(opt.seed);
    out.modes[ResidualMode::kMle] = sample_mle(out.counts, rng);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Significance

struct SignificanceResult {
  std::size_t n = 0;
  double t = 0.0;
  double p = 1.0;
  double corrected_p = 1.0;
  bool significant = false;
  bool degenerate = false;  // zero variance of the differences
};

inline constexpr double kAlpha = 0.05;

/// Two-tailed paired t-test with Bonferroni correction over `comparisons`.
inline SignificanceResult significance(const std::vector<double>& a, const std::vector<double>& b,
                                       std::size_t comparisons = 1) {
  if (a.size() != b.size()) throw EvaluationError("paired samples differ in length");
  if (a.size() < 2) throw EvaluationError("paired t-test needs at least two pairs");
  if (comparisons == 0) throw EvaluationError("comparison count must be positive");
  SignificanceResult r;
  r.n = a.size();
  const double n = static_cast<double>(a.size());
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) {
    r.degenerate = true;
    r.t = 0.0;
    r.p = 1.0;
    r.corrected_p = 1.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(n));
  const boost::math::students_t dist(n - 1.0);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  r.corrected_p = std::min(1.0, r.p * static_cast<double>(comparisons));
  r.significant = r.corrected_p < kAlpha;
  return r;
}

// ---------------------------------------------------------------------------
// Aggregation

/// Named metric values of one topic (or one row).
using MetricRow = std::map<std::string, double>;

/// Arithmetic mean per metric over rows; metrics missing from a row are
/// averaged over the rows that have them.
inline MetricRow aggregate(const std::vector<MetricRow>& rows) {
  if (rows.empty()) throw EvaluationError("nothing to aggregate");
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : rows)
    for (const auto& [k, v] : r) {
      acc[k].first += v;
      ++acc[k].second;
    }
  MetricRow out;
  for (const auto& [k, s] : acc) out[k] = s.first / static_cast<double>(s.second);
  return out;
}

inline MetricRow to_row(const SuggestionMetrics& m) {
  return {{"precision", m.precision},      {"recall", m.recall},         {"rr", m.rr},
          {"recall_at_5", m.recall_at_5},  {"recall_at_10", m.recall_at_10},
          {"ndcg_at_5", m.ndcg_at_5},      {"ndcg_at_10", m.ndcg_at_10}};
}

inline MetricRow to_row(const SearchMetrics& m) {
  MetricRow r;
  for (const auto& [mode, v] : m.modes) {
    const std::string s = residual_name(mode);
    r["precision_" + s] = v.precision;
    r["recall_" + s] = v.recall;
    r["f_half_" + s] = v.f_half;
    r["f1_" + s] = v.f1;
    r["f3_" + s] = v.f3;
  }
  r["retrieved"] = static_cast<double>(m.counts.retrieved);
  r["unjudged_retrieved"] = static_cast<double>(m.counts.unjudged_retrieved);
  return r;
}

}  // namespace meshsuggest
