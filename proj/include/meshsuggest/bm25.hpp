#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "meshsuggest/common.hpp"

namespace meshsuggest {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// idf = ln(1 + (N - df + 0.5) / (df + 0.5))
inline double bm25_idf(std::size_t num_docs, std::size_t df) {
  const double n = static_cast<double>(num_docs);
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

inline double bm25_term_score(double tf, double doc_len, double avg_len, double idf,
                              const Bm25Params& p = {}) {
  if (tf <= 0.0) return 0.0;
  const double norm = avg_len > 0.0 ? doc_len / avg_len : 0.0;
  return idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * norm));
}

/// In-memory BM25 over pre-tokenized documents. Query terms are scored once
/// each (duplicates in the query are ignored).
class Bm25Index {
 public:
  explicit Bm25Index(Bm25Params params = {}) : params_(params) {}

  std::uint32_t add(const std::vector<std::string>& tokens) {
    const auto id = static_cast<std::uint32_t>(lengths_.size());
    lengths_.push_back(tokens.size());
    total_len_ += tokens.size();
    std::unordered_map<std::string, std::uint32_t> tf;
    for (const auto& t : tokens) ++tf[t];
    for (const auto& [term, count] : tf) postings_[term].emplace_back(id, count);
    return id;
  }

  std::size_t size() const { return lengths_.size(); }
  double avg_length() const {
    return lengths_.empty() ? 0.0 : static_cast<double>(total_len_) / static_cast<double>(lengths_.size());
  }
  std::size_t doc_freq(const std::string& term) const {
    const auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
  }
  const Bm25Params& params() const { return params_; }

  /// All documents with a positive score, best first; ties by document id.
  std::vector<std::pair<std::uint32_t, double>> search(const std::vector<std::string>& query) const {
    std::unordered_map<std::uint32_t, double> acc;
    const double avg = avg_length();
    for (const auto& term : distinct(query)) {
      const auto it = postings_.find(term);
      if (it == postings_.end()) continue;
      const double idf = bm25_idf(size(), it->second.size());
      for (const auto& [doc, tf] : it->second)
        acc[doc] += bm25_term_score(tf, static_cast<double>(lengths_[doc]), avg, idf, params_);
    }
    std::vector<std::pair<std::uint32_t, double>> out(acc.begin(), acc.end());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    return out;
  }

 private:
  static std::vector<std::string> distinct(const std::vector<std::string>& q) {
    std::vector<std::string> out;
    for (const auto& t : q)
      if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    return out;
  }

  Bm25Params params_;
  std::vector<std::size_t> lengths_;
  std::size_t total_len_ = 0;
  std::unordered_map<std::string, std::vector<std::pair<std::uint32_t, std::uint32_t>>> postings_;
};

}  // namespace meshsuggest
