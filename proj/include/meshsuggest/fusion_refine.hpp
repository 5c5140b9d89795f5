#pragma once

// Fusion of per-method rankings and the kappa cumulative-gain cutoff.

#include <algorithm>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "meshsuggest/candidate_retrieval.hpp"
#include "meshsuggest/common.hpp"
#include "meshsuggest/fragmenter.hpp"
#include "meshsuggest/minmax.hpp"

namespace meshsuggest {

/// CombSUM of normalized scores across methods. Output is sorted by fused
/// score descending, ties by heading; norm_score is re-normalized and
/// method_scores records each method's contribution.
inline std::vector<MeshCandidate> fuse_methods(const std::map<Method, std::vector<MeshCandidate>>& ranked) {
  std::vector<MeshCandidate> out;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& [method, list] : ranked)
    for (const auto& c : list) {
      auto [it, inserted] = slot.emplace(c.heading.key(), out.size());
      if (inserted) {
        MeshCandidate f;
        f.heading = c.heading;
        f.method = Method::kFusion;
        out.push_back(std::move(f));
      }
      auto& f = out[it->second];
      f.raw_score += c.norm_score;
      f.method_scores[method] += c.norm_score;
      f.sources.insert(f.sources.end(), c.sources.begin(), c.sources.end());
    }
  if (out.empty()) return out;
  std::stable_sort(out.begin(), out.end(), [](const MeshCandidate& a, const MeshCandidate& b) {
    if (a.raw_score != b.raw_score) return a.raw_score > b.raw_score;
    return heading_less(a, b);
  });
  std::vector<double> s;
  for (const auto& c : out) s.push_back(c.raw_score);
  const auto norm = minmax_normalize(s);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].norm_score = norm[i];
  return out;
}

struct GainPoint {
  std::size_t rank = 0;  // 1-based
  double score = 0.0;
  double gain = 0.0;
  double cumulative = 0.0;
};

struct GainSeries {
  std::vector<GainPoint> points;
  double total = 0.0;
};

/// gain_p = 1 - norm_score_p, CG_p = sum of gains up to p.
inline GainSeries gain_series(const std::vector<MeshCandidate>& ranked) {
  GainSeries g;
  double cg = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const double gain = 1.0 - ranked[i].norm_score;
    cg += gain;
    g.points.push_back({i + 1, ranked[i].norm_score, gain, cg});
  }
  g.total = cg;
  return g;
}

inline constexpr int kKappaMin = 5;
inline constexpr int kKappaMax = 95;
inline constexpr int kKappaStep = 5;

inline std::vector<int> kappa_grid() {
  std::vector<int> out;
  for (int k = kKappaMin; k <= kKappaMax; k += kKappaStep) out.push_back(k);
  return out;
}

struct RefinementConfig {
  int kappa = 50;

  void check() const {
    if (kappa < kKappaMin || kappa > kKappaMax || kappa % kKappaStep != 0)
      throw ConfigError("kappa must be one of 5, 10, ..., 95 (got " + std::to_string(kappa) + ")");
  }
};

/// Cuts a ranking once the cumulative gain would exceed kappa% of the total.
/// Consecutive equal scores form a tie block that is kept or dropped as a
/// whole; the first block is always kept.
inline std::vector<MeshCandidate> refine_cutoff(const std::vector<MeshCandidate>& ranked, const RefinementConfig& cfg) {
  cfg.check();
  if (ranked.empty()) throw EmptyInput("refine_cutoff: empty ranking");
  const auto series = gain_series(ranked);
  const double threshold = static_cast<double>(cfg.kappa) / 100.0 * series.total + 1e-9 * (1.0 + series.total);
  std::size_t keep = 0;
  double cg = 0.0;
  while (keep < ranked.size()) {
    std::size_t end = keep + 1;
    while (end < ranked.size() && ranked[end].norm_score == ranked[keep].norm_score) ++end;
    double block = 0.0;
    for (std::size_t i = keep; i < end; ++i) block += series.points[i].gain;
    if (keep > 0 && cg + block > threshold) break;
    cg += block;
    keep = end;
  }
  return {ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep)};
}

/// The top k candidates, for debugging cutoffs against a fixed depth.
inline std::vector<MeshCandidate> fixed_cutoff(const std::vector<MeshCandidate>& ranked, std::size_t k) {
  return {ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranked.size()))};
}

inline double set_f1(const std::vector<MeshCandidate>& suggested, const HeadingSet& gold) {
  HeadingSet s;
  for (const auto& c : suggested) s.insert(c.heading.key());
  std::size_t hit = 0;
  for (const auto& h : s) hit += gold.count(h);
  if (hit == 0) return 0.0;
  const double p = static_cast<double>(hit) / static_cast<double>(s.size());
  const double r = static_cast<double>(hit) / static_cast<double>(gold.size());
  return 2.0 * p * r / (p + r);
}

struct TuningInstance {
  std::vector<MeshCandidate> ranking;
  HeadingSet gold;
};

struct KappaCurve {
  int best_kappa = kKappaMin;
  std::vector<std::pair<int, double>> points;  // (kappa, mean F1)
};

/// Mean set-F1 of the refined rankings at every grid kappa; the best kappa is
/// the argmax, ties resolved to the smallest kappa. Empty rankings count as
/// F1 = 0.
inline KappaCurve tune_kappa(const std::vector<TuningInstance>& train) {
  KappaCurve curve;
  double best = -1.0;
  for (int k : kappa_grid()) {
    double sum = 0.0;
    for (const auto& inst : train)
      if (!inst.ranking.empty()) sum += set_f1(refine_cutoff(inst.ranking, {k}), inst.gold);
    const double mean = train.empty() ? 0.0 : sum / static_cast<double>(train.size());
    curve.points.emplace_back(k, mean);
    if (mean > best) {
      best = mean;
      curve.best_kappa = k;
    }
  }
  return curve;
}

inline void write_kappa_curve(std::ostream& out, const KappaCurve& curve) {
  out << "kappa,mean_f1\n";
  for (const auto& [k, f] : curve.points) out << k << ',' << fixed_decimal(f, 6) << '\n';
}

}  // namespace meshsuggest
