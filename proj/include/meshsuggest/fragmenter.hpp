#pragma once

// Query fragments: the operands of a query's outermost AND. Each fragment
// carries its free-text clauses and the MeSH headings it used (the gold
// standard for suggestion). Defragmentation injects suggested headings back
// into the query.

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "meshsuggest/common.hpp"
#include "meshsuggest/query_ast.hpp"

namespace meshsuggest {

/// Case- and whitespace-insensitive key for MeSH heading comparison.
inline std::string canonical_heading(std::string_view heading) {
  return squeeze_spaces(to_lower(heading));
}

struct MeshTerm {
  std::string heading;
  std::vector<std::string> tree_numbers;

  std::string key() const { return canonical_heading(heading); }

  friend bool operator==(const MeshTerm& a, const MeshTerm& b) { return a.key() == b.key(); }
  friend bool operator<(const MeshTerm& a, const MeshTerm& b) { return a.key() < b.key(); }
};

/// Set of canonical heading keys.
using HeadingSet = std::set<std::string>;

class EmptyFragment : public Error {
 public:
  explicit EmptyFragment(const std::string& fragment_id)
      : Error("fragment " + fragment_id + " contains only MeSH terms"), fragment_id_(fragment_id) {}
  const std::string& fragment_id() const { return fragment_id_; }

 private:
  std::string fragment_id_;
};

class UnknownFragmentId : public Error {
 public:
  explicit UnknownFragmentId(const std::string& fragment_id)
      : Error("unknown fragment id " + fragment_id) {}
};

struct Fragment {
  std::string fragment_id;  // "<topic_id>.f<ordinal>", ordinal 1-based
  std::string topic_id;
  std::size_t ordinal = 0;
  QueryNode node;
  std::vector<Atom> free_text_clauses;  // text-field atoms, duplicates removed
  std::vector<MeshTerm> gold_mesh;      // first-appearance order, no duplicates
  bool pass_through = false;            // no MeSH atoms: kept verbatim, not evaluated

  HeadingSet gold_headings() const {
    HeadingSet out;
    for (const auto& m : gold_mesh) out.insert(m.key());
    return out;
  }

  /// Token sequence of each free-text clause.
  std::vector<std::vector<std::string>> clause_tokens() const {
    std::vector<std::vector<std::string>> out;
    for (const auto& a : free_text_clauses) out.push_back(tokenize(a.text));
    return out;
  }

  /// q: distinct free-text terms in first-appearance order.
  std::vector<std::string> terms() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& a : free_text_clauses)
      for (auto& t : tokenize(a.text))
        if (seen.insert(t).second) out.push_back(std::move(t));
    return out;
  }
};

inline std::string make_fragment_id(const std::string& topic_id, std::size_t ordinal) {
  return topic_id + ".f" + std::to_string(ordinal);
}

/// Exactly the MeSH-field atoms of a tree, canonical-deduplicated.
inline std::vector<MeshTerm> collect_mesh(const QueryNode& node) {
  std::vector<MeshTerm> out;
  std::set<std::string> seen;
  for_each_atom(node, [&](const Atom& a) {
    if (!is_mesh_field(a.field)) return;
    MeshTerm m{squeeze_spaces(a.text), {}};
    if (seen.insert(m.key()).second) out.push_back(std::move(m));
  });
  return out;
}

inline Fragment make_fragment(const std::string& topic_id, std::size_t ordinal, QueryNode node) {
  Fragment f;
  f.topic_id = topic_id;
  f.ordinal = ordinal;
  f.fragment_id = make_fragment_id(topic_id, ordinal);
  f.gold_mesh = collect_mesh(node);
  std::set<std::pair<std::string, bool>> seen;
  for_each_atom(node, [&](const Atom& a) {
    if (!is_text_field(a.field)) return;
    if (seen.emplace(canonical_heading(a.text), a.truncated).second) f.free_text_clauses.push_back(a);
  });
  f.pass_through = f.gold_mesh.empty();
  f.node = std::move(node);
  return f;
}

/// Fragments are the immediate operands of the outermost AND; any other root
/// makes the whole query a single fragment.
inline std::vector<Fragment> fragment(const QueryNode& query, const std::string& topic_id) {
  QueryNode root = normalize(query);
  std::vector<Fragment> out;
  if (root.kind == NodeKind::kAnd) {
    std::size_t ordinal = 0;
    for (auto& child : root.children) out.push_back(make_fragment(topic_id, ++ordinal, std::move(child)));
  } else {
    out.push_back(make_fragment(topic_id, 1, std::move(root)));
  }
  return out;
}

/// Manual fragment boundaries: each entry is parsed as one fragment.
inline std::vector<Fragment> fragment_with_boundaries(const std::vector<std::string>& fragment_queries,
                                                      const std::string& topic_id) {
  std::vector<Fragment> out;
  std::size_t ordinal = 0;
  for (const auto& q : fragment_queries)
    out.push_back(make_fragment(topic_id, ++ordinal, normalize(parse_query(q))));
  return out;
}

namespace detail {

inline std::optional<QueryNode> strip_mesh_node(const QueryNode& node) {
  if (node.is_atom()) {
    if (is_mesh_field(node.atom.field)) return std::nullopt;
    return node;
  }
  if (node.kind == NodeKind::kNot) {
    auto left = strip_mesh_node(node.children.at(0));
    if (!left) return std::nullopt;
    auto right = strip_mesh_node(node.children.at(1));
    if (!right) return left;
    return QueryNode::minus(std::move(*left), std::move(*right));
  }
  std::vector<QueryNode> kept;
  for (const auto& c : node.children)
    if (auto s = strip_mesh_node(c)) kept.push_back(std::move(*s));
  if (kept.empty()) return std::nullopt;
  if (kept.size() == 1) return std::move(kept.front());
  return QueryNode::op(node.kind, std::move(kept));
}

}  // namespace detail

/// The fragment tree with every MeSH atom removed. NOT drops its right side
/// when that side empties and disappears when its left side empties.
inline QueryNode strip_mesh(const Fragment& f) {
  auto stripped = detail::strip_mesh_node(f.node);
  if (!stripped) throw EmptyFragment(f.fragment_id);
  return normalize(*stripped);
}

inline HeadingSet extract_gold_mesh(const Fragment& f) { return f.gold_headings(); }

/// A fragment with its MeSH removed, ready for the suggestion task.
inline Fragment stripped_fragment(const Fragment& f) {
  Fragment out = make_fragment(f.topic_id, f.ordinal, strip_mesh(f));
  out.gold_mesh = f.gold_mesh;
  out.pass_through = f.pass_through;
  return out;
}

using SuggestionMap = std::map<std::string, std::vector<MeshTerm>>;

/// Rebuilds one fragment as OR(suggested headings..., stripped fragment).
inline QueryNode defragment_fragment(const Fragment& f, const std::vector<MeshTerm>& suggestions) {
  if (f.pass_through && suggestions.empty()) return f.node;
  std::vector<QueryNode> children;
  std::set<std::string> seen;
  for (const auto& s : suggestions)
    if (seen.insert(s.key()).second)
      children.push_back(QueryNode::leaf(squeeze_spaces(s.heading), Field::kMeshExploded));
  auto stripped = detail::strip_mesh_node(f.node);
  if (stripped) children.push_back(normalize(*stripped));
  if (children.empty()) throw EmptyFragment(f.fragment_id);
  if (children.size() == 1) return std::move(children.front());
  return normalize(QueryNode::any_of(std::move(children)));
}

/// Replaces each fragment of the query with its suggestions injected as
/// exploded MeSH atoms; fragment order and the outer AND are preserved.
/// Fragments absent from the map receive no suggestions.
inline QueryNode defragment(const QueryNode& query, const std::string& topic_id,
                            const SuggestionMap& suggestions) {
  const auto frags = fragment(query, topic_id);
  std::set<std::string> ids;
  for (const auto& f : frags) ids.insert(f.fragment_id);
  for (const auto& [id, _] : suggestions)
    if (!ids.count(id)) throw UnknownFragmentId(id);
  static const std::vector<MeshTerm> kNone;
  std::vector<QueryNode> parts;
  for (const auto& f : frags) {
    const auto it = suggestions.find(f.fragment_id);
    parts.push_back(defragment_fragment(f, it == suggestions.end() ? kNone : it->second));
  }
  if (parts.size() == 1) return std::move(parts.front());
  return QueryNode::all_of(std::move(parts));
}

// Fragment dump record (one JSON object per line):
//   {"fragment_id", "topic_id", "ordinal", "query", "free_text_clauses": [str],
//    "gold": [heading], "pass_through": bool}
inline nlohmann::json fragment_to_json(const Fragment& f) {
  nlohmann::json clauses = nlohmann::json::array();
  for (const auto& a : f.free_text_clauses) clauses.push_back(serialize_atom(a));
  nlohmann::json gold = nlohmann::json::array();
  for (const auto& m : f.gold_mesh) gold.push_back(m.heading);
  return {{"fragment_id", f.fragment_id}, {"topic_id", f.topic_id},
          {"ordinal", f.ordinal},         {"query", serialize_query(f.node)},
          {"free_text_clauses", clauses}, {"gold", gold},
          {"pass_through", f.pass_through}};
}

inline Fragment fragment_from_json(const nlohmann::json& j) {
  Fragment f = make_fragment(j.at("topic_id").get<std::string>(), j.at("ordinal").get<std::size_t>(),
                             normalize(parse_query(j.at("query").get<std::string>())));
  if (j.contains("gold")) {
    std::vector<MeshTerm> gold;
    std::set<std::string> seen;
    for (const auto& h : j.at("gold")) {
      MeshTerm m{h.get<std::string>(), {}};
      if (seen.insert(m.key()).second) gold.push_back(std::move(m));
    }
    f.gold_mesh = std::move(gold);
  }
  f.pass_through = j.value("pass_through", f.gold_mesh.empty());
  if (j.contains("fragment_id")) f.fragment_id = j.at("fragment_id").get<std::string>();
  return f;
}

inline void write_fragments(std::ostream& out, const std::vector<Fragment>& frags) {
  for (const auto& f : frags) out << fragment_to_json(f).dump() << '\n';
}

inline std::vector<Fragment> read_fragments(std::istream& in) {
  std::vector<Fragment> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_view(line).empty()) continue;
    try {
      out.push_back(fragment_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("fragment dump line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

/// Manual boundary file: lines of {"topic_id": str, "fragments": [query, ...]}.
inline std::map<std::string, std::vector<std::string>> read_boundaries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open fragment boundary file " + path);
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_view(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out[j.at("topic_id").get<std::string>()] = j.at("fragments").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace meshsuggest
