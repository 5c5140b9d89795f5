#pragma once

// MeSH candidate retrieval for a fragment by three methods: ATM-style and
// MetaMap-style mapping through a MapperClient, and BM25 search over the local
// UMLS synonym index. Repeated retrievals of one heading are merged with
// CombSUM.

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "meshsuggest/common.hpp"
#include "meshsuggest/corpus_store.hpp"
#include "meshsuggest/fragmenter.hpp"
#include "meshsuggest/minmax.hpp"

namespace meshsuggest {

enum class Method { kAtm, kMetaMap, kUmls, kFusion };

inline constexpr Method kBaseMethods[] = {Method::kAtm, Method::kMetaMap, Method::kUmls};

inline std::string method_name(Method m) {
  switch (m) {
    case Method::kAtm: return "atm";
    case Method::kMetaMap: return "metamap";
    case Method::kUmls: return "umls";
    case Method::kFusion: return "fusion";
  }
  return "atm";
}

inline Method method_from_name(std::string_view name) {
  const std::string n = to_lower(trim_view(name));
  if (n == "atm") return Method::kAtm;
  if (n == "metamap") return Method::kMetaMap;
  if (n == "umls") return Method::kUmls;
  if (n == "fusion") return Method::kFusion;
  throw ConfigError("unknown method '" + std::string(name) + "' (expected atm, metamap, umls or fusion)");
}

/// One retrieval of a heading: the clause that produced it, the method-native
/// score and the filter that admitted it ("category:mesh", "source:MSH").
struct SourceOccurrence {
  std::string clause;
  double raw_score = 0.0;
  std::string mark;
};

struct MeshCandidate {
  MeshTerm heading;
  Method method = Method::kAtm;
  double raw_score = 0.0;
  double norm_score = 0.0;
  std::vector<SourceOccurrence> sources;
  std::map<Method, double> method_scores;  // fusion provenance: per-method norm score
};

// ---------------------------------------------------------------------------
// Mapper clients

/// One mapping returned by a remote mapper. `from` names the clause or term a
/// mapping was derived from when the service reports it.
struct Mapping {
  std::string heading;
  double score = 0.0;
  std::string category;  // ATM index table: mesh | journal | author
  std::string source;    // vocabulary source, e.g. MSH
  std::string from;
};

class ClientUnavailable : public Error {
 public:
  using Error::Error;
};

class MapperClient {
 public:
  virtual ~MapperClient() = default;
  virtual std::vector<Mapping> map(const std::string& text) const = 0;
  /// Whether map() may be called from several threads at once.
  virtual bool concurrent() const = 0;
};

/// Replays recorded responses from a JSONL file of
///   {"input": str, "mappings": [{"heading", "score", "category", "source", "from"}]}
/// Lookup is case- and whitespace-insensitive. Unknown inputs return no
/// mappings, or raise ClientUnavailable in strict mode.
class ReplayMapperClient final : public MapperClient {
 public:
  explicit ReplayMapperClient(bool strict = false) : strict_(strict) {}

  static std::shared_ptr<ReplayMapperClient> load(const std::string& path, bool strict = false) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open replay fixture " + path);
    auto client = std::make_shared<ReplayMapperClient>(strict);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim_view(line).empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        std::vector<Mapping> mappings;
        for (const auto& m : j.at("mappings"))
          mappings.push_back({m.at("heading").get<std::string>(), m.value("score", 0.0),
                              m.value("category", ""), m.value("source", ""), m.value("from", "")});
        client->add(j.at("input").get<std::string>(), std::move(mappings));
      } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    return client;
  }

  void add(const std::string& input, std::vector<Mapping> mappings) {
    responses_[key(input)] = std::move(mappings);
  }

  std::vector<Mapping> map(const std::string& text) const override {
    const auto it = responses_.find(key(text));
    if (it != responses_.end()) return it->second;
    if (strict_) throw ClientUnavailable("no recorded response for '" + text + "'");
    return {};
  }

  bool concurrent() const override { return true; }

 private:
  static std::string key(const std::string& text) { return squeeze_spaces(to_lower(text)); }

  bool strict_;
  std::unordered_map<std::string, std::vector<Mapping>> responses_;
};

// ---------------------------------------------------------------------------
// Retrieval

namespace detail {

struct Occurrence {
  std::string heading;
  double score;
  std::string clause;
  std::string mark;
};

/// Groups occurrences by canonical heading in first-seen order.
inline std::vector<MeshCandidate> group_occurrences(const std::vector<Occurrence>& occ, Method method) {
  std::vector<MeshCandidate> out;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& o : occ) {
    const std::string k = canonical_heading(o.heading);
    auto [it, inserted] = slot.emplace(k, out.size());
    if (inserted) {
      MeshCandidate c;
      c.heading = MeshTerm{squeeze_spaces(o.heading), {}};
      c.method = method;
      c.raw_score = o.score;
      out.push_back(std::move(c));
    }
    auto& c = out[it->second];
    c.raw_score = std::max(c.raw_score, o.score);
    c.sources.push_back({o.clause, o.score, o.mark});
  }
  if (!out.empty()) {
    std::vector<double> raw;
    for (const auto& c : out) raw.push_back(c.raw_score);
    const auto norm = minmax_normalize(raw);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].norm_score = norm[i];
  }
  return out;
}

inline std::vector<std::string> clause_texts(const Fragment& f) {
  std::vector<std::string> out;
  for (const auto& a : f.free_text_clauses) out.push_back(a.text);
  return out;
}

inline std::vector<Mapping> call_client(const MapperClient& client, const std::string& text,
                                        const Fragment& f) {
  try {
    return client.map(text);
  } catch (const ClientUnavailable& e) {
    throw ClientUnavailable("fragment " + f.fragment_id + ": " + e.what());
  }
}

}  // namespace detail

/// ATM-style retrieval. The whole free-text fragment ("c1 OR c2 ...") is
/// submitted first. A clause is mapped when a MeSH mapping of that response is
/// attributed to it (`from`), or when it is the only clause. Every unmapped
/// clause is split into its terms and each term is submitted alone. Only
/// MeSH-category mappings are kept; ATM reports no scores, so each mapping
/// scores 1/rank among the MeSH mappings of its response.
inline std::vector<MeshCandidate> retrieve_atm(const Fragment& f, const MapperClient& client) {
  const auto clauses = detail::clause_texts(f);
  if (clauses.empty()) return {};
  std::vector<detail::Occurrence> occ;
  const auto take = [&](const std::vector<Mapping>& resp, const std::string& clause) {
    std::set<std::string> attributed;
    std::size_t rank = 0;
    for (const auto& m : resp) {
      if (to_lower(trim_view(m.category)) != "mesh") continue;
      ++rank;
      const std::string from = m.from.empty() ? clause : m.from;
      occ.push_back({m.heading, 1.0 / static_cast<double>(rank), from, "category:mesh"});
      if (!m.from.empty()) attributed.insert(canonical_heading(m.from));
      else attributed.insert("");
    }
    return attributed;
  };

  const std::string whole = join(clauses, " OR ");
  const auto mapped = take(detail::call_client(client, whole, f), whole);
  for (const auto& clause : clauses) {
    if (mapped.count(canonical_heading(clause))) continue;
    if (clauses.size() == 1 && !mapped.empty()) continue;
    const auto terms = split(squeeze_spaces(clause), ' ');
    if (clauses.size() == 1 && terms.size() == 1) continue;  // identical to the whole submission
    for (const auto& term : terms)
      if (!term.empty()) take(detail::call_client(client, term, f), clause);
  }
  return detail::group_occurrences(occ, Method::kAtm);
}

/// MetaMap-style retrieval: every clause is submitted separately and only
/// MSH-source entities are kept, with the mapper's score per occurrence.
inline std::vector<MeshCandidate> retrieve_metamap(const Fragment& f, const MapperClient& client) {
  std::vector<detail::Occurrence> occ;
  for (const auto& clause : detail::clause_texts(f)) {
    for (const auto& m : detail::call_client(client, clause, f)) {
      if (to_lower(trim_view(m.source)) != "msh") continue;
      occ.push_back({m.heading, m.score, clause, "source:MSH"});
    }
  }
  return detail::group_occurrences(occ, Method::kMetaMap);
}

class IndexNotBuilt : public Error {
 public:
  using Error::Error;
};

/// UMLS retrieval: each clause is BM25-searched against all synonym strings;
/// hits whose concept has MSH-source synonyms are kept (best `top_k` per
/// clause) and every MSH synonym of the hit concept becomes a candidate
/// carrying the hit's BM25 score.
inline std::vector<MeshCandidate> retrieve_umls(const Fragment& f, const ConceptIndex& index,
                                                std::size_t top_k = 10) {
  if (index.size() == 0) throw IndexNotBuilt("UMLS concept index is empty");
  std::vector<detail::Occurrence> occ;
  for (const auto& clause : detail::clause_texts(f)) {
    std::size_t kept = 0;
    for (const auto& hit : index.search(clause)) {
      if (kept >= top_k) break;
      const auto msh = index.synonyms(index.record(hit.record).cui, "MSH");
      if (msh.empty()) continue;
      ++kept;
      for (auto n : msh) occ.push_back({index.record(n).synonym, hit.score, clause, "source:MSH"});
    }
  }
  return detail::group_occurrences(occ, Method::kUmls);
}

inline bool heading_less(const MeshCandidate& a, const MeshCandidate& b) {
  return a.heading.key() < b.heading.key();
}

/// Merges repeated retrievals of a heading by CombSUM. Occurrence scores are
/// min-max normalized over all occurrences of the method first, unless the
/// caller states they already are. Output is sorted by CombSUM descending,
/// ties by heading; raw_score holds the CombSUM and norm_score its min-max.
inline std::vector<MeshCandidate> dedup_combsum(const std::vector<MeshCandidate>& candidates,
                                                bool already_normalized = false) {
  if (candidates.empty()) return {};
  std::vector<const MeshCandidate*> owners;
  std::vector<const SourceOccurrence*> occ;
  for (const auto& c : candidates)
    for (const auto& s : c.sources) {
      owners.push_back(&c);
      occ.push_back(&s);
    }
  std::vector<double> scores;
  for (const auto* s : occ) scores.push_back(s->raw_score);
  if (!already_normalized && !scores.empty()) scores = minmax_normalize(scores);

  std::vector<MeshCandidate> out;
  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < occ.size(); ++i) {
    const auto& owner = *owners[i];
    auto [it, inserted] = slot.emplace(owner.heading.key(), out.size());
    if (inserted) {
      MeshCandidate c;
      c.heading = owner.heading;
      c.method = owner.method;
      out.push_back(std::move(c));
    }
    auto& c = out[it->second];
    c.raw_score += scores[i];
    c.sources.push_back(*occ[i]);
  }
  std::stable_sort(out.begin(), out.end(), [](const MeshCandidate& a, const MeshCandidate& b) {
    if (a.raw_score != b.raw_score) return a.raw_score > b.raw_score;
    return heading_less(a, b);
  });
  std::vector<double> sums;
  for (const auto& c : out) sums.push_back(c.raw_score);
  const auto norm = minmax_normalize(sums);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].norm_score = norm[i];
  return out;
}

inline nlohmann::json candidate_to_json(const MeshCandidate& c) {
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& s : c.sources)
    sources.push_back({{"clause", s.clause}, {"raw_score", s.raw_score}, {"mark", s.mark}});
  nlohmann::json methods = nlohmann::json::object();
  for (const auto& [m, v] : c.method_scores) methods[method_name(m)] = v;
  return {{"heading", c.heading.heading}, {"method", method_name(c.method)}, {"raw_score", c.raw_score},
          {"norm_score", c.norm_score},   {"sources", sources},              {"method_scores", methods}};
}

inline MeshCandidate candidate_from_json(const nlohmann::json& j) {
  MeshCandidate c;
  c.heading = MeshTerm{j.at("heading").get<std::string>(), {}};
  c.method = method_from_name(j.at("method").get<std::string>());
  c.raw_score = j.value("raw_score", 0.0);
  c.norm_score = j.value("norm_score", 0.0);
  for (const auto& s : j.value("sources", nlohmann::json::array()))
    c.sources.push_back({s.value("clause", ""), s.value("raw_score", 0.0), s.value("mark", "")});
  const auto methods = j.value("method_scores", nlohmann::json::object());
  for (const auto& [k, v] : methods.items()) c.method_scores[method_from_name(k)] = v.get<double>();
  return c;
}

}  // namespace meshsuggest
