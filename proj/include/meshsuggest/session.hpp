#pragma once

// Review sessions: per-fragment suggestions with accept/reject decisions and
// the query rebuilt from the accepted headings.

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "meshsuggest/candidate_retrieval.hpp"
#include "meshsuggest/common.hpp"
#include "meshsuggest/evaluation.hpp"
#include "meshsuggest/fragmenter.hpp"
#include "meshsuggest/pipeline.hpp"

namespace meshsuggest {

class SessionError : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

enum class Decision { kAccept, kReject, kReset };

inline Decision decision_from_name(std::string_view name) {
  const auto n = to_lower(trim_view(name));
  if (n == "accept") return Decision::kAccept;
  if (n == "reject") return Decision::kReject;
  if (n == "reset") return Decision::kReset;
  throw SessionError("unknown action '" + std::string(name) + "' (expected accept, reject or reset)");
}

struct FragmentState {
  Fragment fragment;  // original fragment, gold MeSH included
  std::vector<MeshCandidate> suggestions;
  std::size_t cutoff = 0;  // suggestions[0, cutoff) survive refinement
  std::vector<std::string> accepted;  // headings in acceptance order
  std::set<std::string> rejected;     // canonical keys
  std::set<std::string> manual;       // accepted keys that were never suggested
};

struct ReviewSession {
  std::string session_id;
  std::string topic_id;
  std::string query;  // serialized original query
  Method method = Method::kFusion;
  std::optional<int> kappa;
  std::vector<FragmentState> fragments;
  std::optional<nlohmann::json> last_retrieval;

  FragmentState& fragment_state(const std::string& fid) {
    for (auto& f : fragments)
      if (f.fragment.fragment_id == fid) return f;
    throw NotFound("unknown fragment " + fid);
  }

  SuggestionMap accepted_map() const {
    SuggestionMap out;
    for (const auto& f : fragments)
      for (const auto& h : f.accepted) out[f.fragment.fragment_id].push_back(MeshTerm{h, {}});
    return out;
  }

  QueryNode current_query() const {
    const auto accepted = accepted_map();
    static const std::vector<MeshTerm> kNone;
    std::vector<QueryNode> parts;
    for (const auto& f : fragments) {
      const auto it = accepted.find(f.fragment.fragment_id);
      parts.push_back(defragment_fragment(f.fragment, it == accepted.end() ? kNone : it->second));
    }
    if (parts.size() == 1) return std::move(parts.front());
    return QueryNode::all_of(std::move(parts));
  }

  void decide(const std::string& fid, const std::string& heading, Decision d) {
    auto& f = fragment_state(fid);
    const std::string h = squeeze_spaces(heading);
    if (h.empty()) throw SessionError("heading is empty");
    const std::string key = canonical_heading(h);
    const auto in_accepted = std::find_if(f.accepted.begin(), f.accepted.end(),
                                          [&](const std::string& a) { return canonical_heading(a) == key; });
    if (in_accepted != f.accepted.end()) f.accepted.erase(in_accepted);
    f.rejected.erase(key);
    f.manual.erase(key);
    if (d == Decision::kAccept) {
      const bool suggested = std::any_of(f.suggestions.begin(), f.suggestions.end(),
                                         [&](const MeshCandidate& c) { return c.heading.key() == key; });
      f.accepted.push_back(h);
      if (!suggested) f.manual.insert(key);
    } else if (d == Decision::kReject) {
      f.rejected.insert(key);
    }
  }
};

inline nlohmann::json session_to_json(const ReviewSession& s) {
  nlohmann::json frags = nlohmann::json::array();
  for (const auto& f : s.fragments) {
    nlohmann::json sugg = nlohmann::json::array();
    for (const auto& c : f.suggestions) sugg.push_back(candidate_to_json(c));
    nlohmann::json gold = nlohmann::json::array();
    for (const auto& g : f.fragment.gold_mesh) gold.push_back(g.heading);
    frags.push_back({{"fragment_id", f.fragment.fragment_id},
                     {"query", serialize_query(f.fragment.node)},
                     {"pass_through", f.fragment.pass_through},
                     {"gold", gold},
                     {"suggestions", sugg},
                     {"cutoff", f.cutoff},
                     {"accepted", f.accepted},
                     {"rejected", f.rejected},
                     {"manual", f.manual}});
  }
  nlohmann::json j = {{"schema_version", kSchemaVersion},
                      {"session_id", s.session_id},
                      {"topic_id", s.topic_id},
                      {"query", s.query},
                      {"method", method_name(s.method)},
                      {"kappa", s.kappa ? nlohmann::json(*s.kappa) : nlohmann::json(nullptr)},
                      {"fragments", frags},
                      {"current_query", serialize_query(s.current_query())}};
  j["last_retrieval"] = s.last_retrieval ? *s.last_retrieval : nlohmann::json(nullptr);
  return j;
}

inline ReviewSession session_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion) throw SessionError("unsupported session schema version");
  ReviewSession s;
  s.session_id = j.value("session_id", "");
  s.topic_id = j.at("topic_id").get<std::string>();
  s.query = j.at("query").get<std::string>();
  s.method = method_from_name(j.value("method", "fusion"));
  if (j.contains("kappa") && !j.at("kappa").is_null()) s.kappa = j.at("kappa").get<int>();
  std::size_t ordinal = 0;
  for (const auto& fj : j.at("fragments")) {
    FragmentState f;
    f.fragment = make_fragment(s.topic_id, ++ordinal, normalize(parse_query(fj.at("query").get<std::string>())));
    f.fragment.fragment_id = fj.at("fragment_id").get<std::string>();
    for (const auto& c : fj.value("suggestions", nlohmann::json::array())) f.suggestions.push_back(candidate_from_json(c));
    f.cutoff = std::min(fj.value("cutoff", f.suggestions.size()), f.suggestions.size());
    f.accepted = fj.value("accepted", std::vector<std::string>{});
    for (const auto& r : fj.value("rejected", std::vector<std::string>{})) f.rejected.insert(canonical_heading(r));
    for (const auto& m : fj.value("manual", std::vector<std::string>{})) f.manual.insert(canonical_heading(m));
    s.fragments.push_back(std::move(f));
  }
  if (j.contains("last_retrieval") && !j.at("last_retrieval").is_null()) s.last_retrieval = j.at("last_retrieval");
  return s;
}

/// Builds a session: every fragment is stripped of MeSH and given the ranked
/// suggestions of `method`; with a kappa the cutoff position is recorded but
/// every suggestion stays selectable.
inline ReviewSession create_session(const std::string& topic_id, const std::string& query_text, const Resources& r,
                                    Method method, std::optional<int> kappa) {
  ReviewSession s;
  s.topic_id = topic_id;
  s.method = method;
  s.kappa = kappa;
  const Topic topic{topic_id, query_text};
  const auto frags = topic_fragments(topic, r);
  s.query = serialize_query(normalize(parse_query(query_text)));
  const Suggester suggester(r);
  for (const auto& f : frags) {
    FragmentState st;
    st.fragment = f;
    const Fragment stripped = f.pass_through ? f : stripped_fragment(f);
    st.suggestions = suggester.ranked(stripped, method);
    st.cutoff = st.suggestions.size();
    if (kappa && !st.suggestions.empty()) st.cutoff = refine_cutoff(st.suggestions, {*kappa}).size();
    s.fragments.push_back(std::move(st));
  }
  return s;
}

/// Retrieval stats of the session's current query. Metrics need judgments for
/// the session topic; without them only counts are returned.
inline nlohmann::json session_retrieval(const ReviewSession& s, const Resources& r, const std::optional<Date>& date_max,
                                        bool* has_metrics) {
  const auto docs = execute_boolean(s.current_query(), r.documents, r.tree, date_max);
  nlohmann::json out = {{"schema_version", kSchemaVersion}, {"retrieved", docs.size()}};
  *has_metrics = r.qrels && r.qrels->count(s.topic_id);
  if (!*has_metrics) return out;
  const auto m = search_eval(docs, s.topic_id, *r.qrels);
  out["counts"] = {{"retrieved", m.counts.retrieved},
                   {"judged_relevant_retrieved", m.counts.judged_relevant_retrieved},
                   {"judged_retrieved", m.counts.judged_retrieved},
                   {"unjudged_retrieved", m.counts.unjudged_retrieved},
                   {"total_relevant", m.counts.total_relevant}};
  nlohmann::json modes = nlohmann::json::object();
  for (const auto& [mode, v] : m.modes)
    modes[residual_name(mode)] = {{"precision", v.precision}, {"recall", v.recall}, {"f_half", v.f_half},
                                  {"f1", v.f1},               {"f3", v.f3},         {"fallback", v.fallback}};
  out["metrics"] = modes;
  return out;
}

/// Sessions with per-session serialization: each session has its own mutex,
/// and the store lock is held only to look sessions up.
class SessionStore {
 public:
  struct Entry {
    std::mutex mutex;
    ReviewSession session;
  };

  std::string add(ReviewSession s) {
    std::lock_guard lock(mutex_);
    if (s.session_id.empty() || sessions_.count(s.session_id)) s.session_id = "s" + std::to_string(++counter_);
    auto id = s.session_id;
    auto e = std::make_shared<Entry>();
    e->session = std::move(s);
    sessions_.emplace(id, std::move(e));
    return id;
  }

  std::shared_ptr<Entry> get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("unknown session " + id);
    return it->second;
  }

  template <typename Fn>
  auto with(const std::string& id, Fn&& fn) {
    auto e = get(id);
    std::lock_guard lock(e->mutex);
    return fn(e->session);
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::size_t counter_ = 0;
};

}  // namespace meshsuggest
