#pragma once

// Local substrate for retrieval: a positional index over documents, the MeSH
// tree, UMLS-style concept tables, topics and relevance judgments, plus a
// Boolean executor with MeSH explosion and a publication-date cutoff.
//
// File formats
//   documents   JSONL {doc_id, title, abstract, mesh_headings: [str], pub_date: "YYYY-MM-DD",
//                      publication_types: [str] (optional)}
//   mesh tree   "heading<TAB>tree_number" per line; parent of A.B.C is A.B
//   MRCONSO     CUI|SAB|STR      MRDEF  CUI|DEF
//   MRSTY       CUI|STY          MRREL  CUI1|REL|CUI2
//   topics      JSONL {topic_id, query}
//   qrels       "topic_id 0 doc_id rel"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "meshsuggest/bm25.hpp"
#include "meshsuggest/common.hpp"
#include "meshsuggest/fragmenter.hpp"
#include "meshsuggest/query_ast.hpp"

namespace meshsuggest {

namespace detail {

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Documents

struct Document {
  std::string doc_id;
  std::string title;
  std::string abstract;
  std::vector<std::string> mesh_headings;
  Date pub_date;
  std::vector<std::string> publication_types;
};

inline Document document_from_json(const nlohmann::json& j) {
  Document d;
  d.doc_id = j.at("doc_id").get<std::string>();
  if (trim_view(d.doc_id).empty()) throw DataError("empty doc_id");
  d.title = j.value("title", "");
  d.abstract = j.value("abstract", "");
  d.mesh_headings = j.value("mesh_headings", std::vector<std::string>{});
  d.pub_date = Date::parse(j.at("pub_date").get<std::string>());
  d.publication_types = j.value("publication_types", std::vector<std::string>{});
  return d;
}

using DocSet = std::vector<std::uint32_t>;  // sorted internal document numbers

/// Immutable after construction; safe for concurrent reads.
class DocumentIndex {
 public:
  enum class TextField { kTitle, kAbstract };

  static DocumentIndex build(std::vector<Document> docs) {
    DocumentIndex idx;
    for (auto& d : docs) {
      if (idx.by_id_.count(d.doc_id)) throw DataError("duplicate doc_id " + d.doc_id);
      const auto n = static_cast<std::uint32_t>(idx.docs_.size());
      idx.by_id_.emplace(d.doc_id, n);
      idx.title_.add(n, tokenize(d.title));
      idx.abstract_.add(n, tokenize(d.abstract));
      for (const auto& h : d.mesh_headings) add_unique(idx.mesh_[canonical_heading(h)], n);
      for (const auto& p : d.publication_types) add_unique(idx.pub_types_[canonical_heading(p)], n);
      idx.docs_.push_back(std::move(d));
    }
    return idx;
  }

  /// Reads line-delimited JSON; aborts on the first malformed record.
  static DocumentIndex load(const std::string& path) {
    auto in = detail::open_input(path);
    std::vector<Document> docs;
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim_view(line).empty()) continue;
      try {
        docs.push_back(document_from_json(nlohmann::json::parse(line)));
      } catch (const std::exception& e) {
        throw DataError(path + ":" + std::to_string(line_no) + ": malformed document: " + e.what());
      }
      if (!ids.insert(docs.back().doc_id).second)
        throw DataError(path + ":" + std::to_string(line_no) + ": duplicate doc_id " + docs.back().doc_id);
    }
    return build(std::move(docs));
  }

  std::size_t size() const { return docs_.size(); }
  const Document& document(std::uint32_t n) const { return docs_.at(n); }
  const std::vector<Document>& documents() const { return docs_; }

  std::optional<std::uint32_t> find(const std::string& doc_id) const {
    const auto it = by_id_.find(doc_id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
  }

  /// Documents where the token sequence occurs contiguously in one field. With
  /// `prefix_last`, the final token matches any indexed token it prefixes.
  DocSet phrase(TextField field, const std::vector<std::string>& tokens, bool prefix_last) const {
    return (field == TextField::kTitle ? title_ : abstract_).phrase(tokens, prefix_last);
  }

  DocSet with_heading(const std::string& heading_key) const { return lookup(mesh_, heading_key); }
  DocSet with_publication_type(const std::string& key) const { return lookup(pub_types_, key); }

  DocSet all() const {
    DocSet out(docs_.size());
    for (std::uint32_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
  }

 private:
  static void add_unique(DocSet& v, std::uint32_t n) {
    if (v.empty() || v.back() != n) v.push_back(n);
  }

  static DocSet lookup(const std::unordered_map<std::string, DocSet>& m, const std::string& key) {
    const auto it = m.find(key);
    return it == m.end() ? DocSet{} : it->second;
  }

  struct FieldIndex {
    std::vector<std::vector<std::string>> tokens_by_doc;
    std::map<std::string, DocSet> postings;  // ordered for prefix scans

    void add(std::uint32_t n, std::vector<std::string> tokens) {
      for (const auto& t : tokens) add_unique(postings[t], n);
      tokens_by_doc.push_back(std::move(tokens));
    }

    DocSet candidates(const std::string& token, bool prefix) const {
      if (!prefix) {
        const auto it = postings.find(token);
        return it == postings.end() ? DocSet{} : it->second;
      }
      std::set<std::uint32_t> acc;
      for (auto it = postings.lower_bound(token); it != postings.end() && starts_with(it->first, token); ++it)
        acc.insert(it->second.begin(), it->second.end());
      return DocSet(acc.begin(), acc.end());
    }

    DocSet phrase(const std::vector<std::string>& q, bool prefix_last) const {
      if (q.empty()) return {};
      // Candidate generation from the first exact token (or the prefix when it
      // is the only token), then positional verification.
      const bool only_prefix = q.size() == 1 && prefix_last;
      DocSet out;
      for (std::uint32_t n : candidates(q.front(), only_prefix))
        if (matches(tokens_by_doc[n], q, prefix_last)) out.push_back(n);
      return out;
    }

    static bool matches(const std::vector<std::string>& doc, const std::vector<std::string>& q,
                        bool prefix_last) {
      if (doc.size() < q.size()) return false;
      for (std::size_t start = 0; start + q.size() <= doc.size(); ++start) {
        bool ok = true;
        for (std::size_t i = 0; i < q.size() && ok; ++i) {
          const bool last = i + 1 == q.size();
          ok = (last && prefix_last) ? starts_with(doc[start + i], q[i]) : doc[start + i] == q[i];
        }
        if (ok) return true;
      }
      return false;
    }
  };

  std::vector<Document> docs_;
  std::unordered_map<std::string, std::uint32_t> by_id_;
  FieldIndex title_;
  FieldIndex abstract_;
  std::unordered_map<std::string, DocSet> mesh_;
  std::unordered_map<std::string, DocSet> pub_types_;
};

inline DocumentIndex ingest_documents(const std::string& path) { return DocumentIndex::load(path); }

// ---------------------------------------------------------------------------
// MeSH tree

class MeshTree {
 public:
  /// Adds one heading/tree-number pair. A tree number may belong to one
  /// heading only.
  void add(const std::string& heading, const std::string& tree_number) {
    const std::string h = squeeze_spaces(heading);
    const std::string tn = trim(tree_number);
    if (h.empty() || tn.empty()) throw DataError("empty heading or tree number");
    const auto [it, inserted] = heading_by_number_.emplace(tn, canonical_heading(h));
    if (!inserted && it->second != canonical_heading(h))
      throw DataError("tree number " + tn + " assigned to both '" + it->second + "' and '" + h + "'");
    auto& term = terms_[canonical_heading(h)];
    if (term.heading.empty()) term.heading = h;
    if (std::find(term.tree_numbers.begin(), term.tree_numbers.end(), tn) == term.tree_numbers.end())
      term.tree_numbers.push_back(tn);
  }

  static std::string parent_number(const std::string& tn) {
    const auto dot = tn.rfind('.');
    return dot == std::string::npos ? std::string() : tn.substr(0, dot);
  }

  /// Throws DataError on an orphan tree number or a cycle in the heading graph.
  void validate() const {
    for (const auto& [tn, _] : heading_by_number_) {
      const auto parent = parent_number(tn);
      if (!parent.empty() && !heading_by_number_.count(parent))
        throw DataError("orphan tree number " + tn + " (parent " + parent + " missing)");
    }
    std::map<std::string, std::set<std::string>> edges;
    for (const auto& [tn, heading] : heading_by_number_) {
      const auto parent = parent_number(tn);
      if (!parent.empty()) edges[heading_by_number_.at(parent)].insert(heading);
    }
    std::map<std::string, int> state;  // 0 unvisited, 1 on stack, 2 done
    std::vector<std::pair<std::string, bool>> stack;
    for (const auto& [root, _] : terms_) {
      if (state[root]) continue;
      stack.emplace_back(root, false);
      while (!stack.empty()) {
        auto [node, leaving] = stack.back();
        stack.pop_back();
        if (leaving) {
          state[node] = 2;
          continue;
        }
        if (state[node] == 2) continue;
        state[node] = 1;
        stack.emplace_back(node, true);
        for (const auto& child : edges[node]) {
          if (state[child] == 1) throw DataError("cycle in MeSH tree through '" + child + "'");
          if (state[child] == 0) stack.emplace_back(child, false);
        }
      }
    }
  }

  bool contains(const std::string& heading) const { return terms_.count(canonical_heading(heading)) > 0; }
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }

  std::optional<MeshTerm> find(const std::string& heading) const {
    const auto it = terms_.find(canonical_heading(heading));
    if (it == terms_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<std::string, MeshTerm>& terms() const { return terms_; }

  /// Headings whose tree numbers extend `tree_number` (strict descendants).
  std::vector<std::string> descendants_of_number(const std::string& tree_number) const {
    std::vector<std::string> out;
    const std::string prefix = tree_number + ".";
    for (auto it = heading_by_number_.lower_bound(prefix);
         it != heading_by_number_.end() && starts_with(it->first, prefix); ++it)
      out.push_back(it->second);
    return out;
  }

 private:
  std::map<std::string, MeshTerm> terms_;                  // canonical heading -> term
  std::map<std::string, std::string> heading_by_number_;   // tree number -> canonical heading
};

inline MeshTree ingest_mesh_tree(const std::string& path) {
  auto in = detail::open_input(path);
  MeshTree tree;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_view(line).empty() || line[0] == '#') continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 2)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected heading<TAB>tree_number");
    try {
      tree.add(cols[0], cols[1]);
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  tree.validate();
  return tree;
}

/// The term plus every heading below any of its tree positions, closed
/// transitively over headings with several tree numbers. Unknown terms
/// explode to themselves and append a warning.
inline std::set<MeshTerm> explode(const MeshTerm& term, const MeshTree& tree,
                                  std::vector<std::string>* warnings = nullptr) {
  std::set<MeshTerm> out;
  const auto root = tree.find(term.heading);
  if (!root) {
    if (warnings) warnings->push_back("heading '" + term.heading + "' not in MeSH tree; not exploded");
    out.insert(MeshTerm{term.heading, {}});
    return out;
  }
  std::vector<MeshTerm> queue{*root};
  out.insert(*root);
  while (!queue.empty()) {
    const MeshTerm current = std::move(queue.back());
    queue.pop_back();
    for (const auto& tn : current.tree_numbers) {
      for (const auto& key : tree.descendants_of_number(tn)) {
        const MeshTerm child = *tree.find(key);
        if (out.insert(child).second) queue.push_back(child);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// UMLS-style concept tables

struct ConceptRecord {
  std::string cui;
  std::string synonym;
  std::string source;
  std::optional<std::string> definition;
  std::optional<std::string> semantic_type;
};

struct ConceptHit {
  std::uint32_t record;
  double score;
};

/// BM25-searchable synonym index over MRCONSO rows.
class ConceptIndex {
 public:
  static ConceptIndex build(std::vector<ConceptRecord> records,
                            std::vector<std::tuple<std::string, std::string, std::string>> relations = {}) {
    ConceptIndex idx;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (auto& r : records) {
      if (!seen.emplace(r.cui, r.synonym, r.source).second)
        throw DataError("duplicate concept record " + r.cui + "|" + r.source + "|" + r.synonym);
      const auto n = idx.bm25_.add(tokenize(r.synonym));
      idx.by_cui_[r.cui].push_back(n);
      idx.records_.push_back(std::move(r));
    }
    idx.relations_ = std::move(relations);
    return idx;
  }

  std::size_t size() const { return records_.size(); }
  const ConceptRecord& record(std::uint32_t n) const { return records_.at(n); }
  const std::vector<ConceptRecord>& records() const { return records_; }
  const Bm25Index& bm25() const { return bm25_; }
  const std::vector<std::tuple<std::string, std::string, std::string>>& relations() const {
    return relations_;
  }

  /// Synonym records of a concept restricted to one source vocabulary.
  std::vector<std::uint32_t> synonyms(const std::string& cui, const std::string& source) const {
    std::vector<std::uint32_t> out;
    const auto it = by_cui_.find(cui);
    if (it == by_cui_.end()) return out;
    for (auto n : it->second)
      if (records_[n].source == source) out.push_back(n);
    return out;
  }

  /// BM25 over synonym strings, best first.
  std::vector<ConceptHit> search(const std::string& text) const {
    std::vector<ConceptHit> out;
    for (const auto& [doc, score] : bm25_.search(tokenize(text))) out.push_back({doc, score});
    return out;
  }

 private:
  std::vector<ConceptRecord> records_;
  std::unordered_map<std::string, std::vector<std::uint32_t>> by_cui_;
  Bm25Index bm25_;
  std::vector<std::tuple<std::string, std::string, std::string>> relations_;
};

namespace detail {

template <typename Fn>
void read_pipe_table(const std::string& path, std::size_t columns, Fn&& fn) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim_view(line).empty()) continue;
    auto cols = split(line, '|');
    // A trailing '|' (as in real UMLS dumps) yields one empty extra column.
    if (cols.size() == columns + 1 && cols.back().empty()) cols.pop_back();
    if (cols.size() != columns)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                      " columns, found " + std::to_string(cols.size()));
    fn(cols);
  }
}

}  // namespace detail

inline ConceptIndex ingest_umls_tables(const std::string& conso_path, const std::string& def_path,
                                       const std::string& sty_path, const std::string& rel_path) {
  std::map<std::string, std::string> defs;
  std::map<std::string, std::string> types;
  if (!def_path.empty())
    detail::read_pipe_table(def_path, 2, [&](const auto& c) { defs.emplace(c[0], c[1]); });
  if (!sty_path.empty())
    detail::read_pipe_table(sty_path, 2, [&](const auto& c) { types.emplace(c[0], c[1]); });
  std::vector<std::tuple<std::string, std::string, std::string>> rels;
  if (!rel_path.empty())
    detail::read_pipe_table(rel_path, 3, [&](const auto& c) { rels.emplace_back(c[0], c[1], c[2]); });
  std::vector<ConceptRecord> records;
  detail::read_pipe_table(conso_path, 3, [&](const auto& c) {
    ConceptRecord r{c[0], c[2], c[1], std::nullopt, std::nullopt};
    if (auto it = defs.find(r.cui); it != defs.end()) r.definition = it->second;
    if (auto it = types.find(r.cui); it != types.end()) r.semantic_type = it->second;
    records.push_back(std::move(r));
  });
  return ConceptIndex::build(std::move(records), std::move(rels));
}

// ---------------------------------------------------------------------------
// Topics and judgments

struct Topic {
  std::string topic_id;
  std::string query;
};

inline std::vector<Topic> ingest_topics(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<Topic> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_view(line).empty()) continue;
    Topic t;
    try {
      const auto j = nlohmann::json::parse(line);
      t.topic_id = j.at("topic_id").get<std::string>();
      t.query = j.at("query").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!ids.insert(t.topic_id).second)
      throw DataError(path + ":" + std::to_string(line_no) + ": duplicate topic_id " + t.topic_id);
    out.push_back(std::move(t));
  }
  return out;
}

/// topic_id -> doc_id -> relevance in {0, 1}
using Judgments = std::map<std::string, std::map<std::string, int>>;

enum class QrelsMode {
  kStrict,    // labels other than 0/1 are an error
  kBinarize,  // label > 0 becomes 1
};

inline Judgments ingest_qrels(const std::string& path, QrelsMode mode = QrelsMode::kStrict) {
  auto in = detail::open_input(path);
  Judgments out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_view(line).empty()) continue;
    std::istringstream ss(line);
    std::string topic, iter, doc, rel_text, extra;
    if (!(ss >> topic >> iter >> doc >> rel_text) || (ss >> extra))
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 'topic_id 0 doc_id rel'");
    int rel = 0;
    try {
      std::size_t used = 0;
      rel = std::stoi(rel_text, &used);
      if (used != rel_text.size()) throw std::invalid_argument(rel_text);
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": relevance '" + rel_text + "' is not an integer");
    }
    if (rel != 0 && rel != 1) {
      if (mode == QrelsMode::kStrict || rel < 0)
        throw DataError(path + ":" + std::to_string(line_no) + ": relevance must be 0 or 1, found " + rel_text);
      rel = 1;
    }
    out[topic][doc] = rel;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Boolean execution

class QueryExecutionError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline DocSet set_union(const DocSet& a, const DocSet& b) {
  DocSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}
inline DocSet set_intersection(const DocSet& a, const DocSet& b) {
  DocSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}
inline DocSet set_difference(const DocSet& a, const DocSet& b) {
  DocSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline DocSet match_atom(const Atom& a, const DocumentIndex& index, const MeshTree& tree) {
  using TF = DocumentIndex::TextField;
  switch (a.field) {
    case Field::kTitleAbstract:
    case Field::kTitle:
    case Field::kAbstract: {
      const auto tokens = tokenize(a.text);
      if (tokens.empty()) return {};
      DocSet out;
      if (a.field != Field::kAbstract) out = index.phrase(TF::kTitle, tokens, a.truncated);
      if (a.field != Field::kTitle) out = set_union(out, index.phrase(TF::kAbstract, tokens, a.truncated));
      return out;
    }
    case Field::kMeshExploded: {
      DocSet out;
      for (const auto& m : explode(MeshTerm{a.text, {}}, tree)) out = set_union(out, index.with_heading(m.key()));
      return out;
    }
    case Field::kMeshNoExp:
      return index.with_heading(canonical_heading(a.text));
    case Field::kPublicationType:
      return index.with_publication_type(canonical_heading(a.text));
  }
  throw QueryExecutionError("unsupported field reached execution");
}

inline DocSet execute_node(const QueryNode& n, const DocumentIndex& index, const MeshTree& tree) {
  switch (n.kind) {
    case NodeKind::kAtom:
      return match_atom(n.atom, index, tree);
    case NodeKind::kOr: {
      DocSet acc;
      for (const auto& c : n.children) acc = set_union(acc, execute_node(c, index, tree));
      return acc;
    }
    case NodeKind::kAnd: {
      DocSet acc = execute_node(n.children.at(0), index, tree);
      for (std::size_t i = 1; i < n.children.size() && !acc.empty(); ++i)
        acc = set_intersection(acc, execute_node(n.children[i], index, tree));
      return acc;
    }
    case NodeKind::kNot:
      return set_difference(execute_node(n.children.at(0), index, tree),
                            execute_node(n.children.at(1), index, tree));
  }
  throw QueryExecutionError("unknown node kind");
}

}  // namespace detail

/// Internal document numbers matching the query, restricted to documents
/// published on or before `date_max` when given.
inline DocSet execute_boolean_docs(const QueryNode& q, const DocumentIndex& index, const MeshTree& tree,
                                   const std::optional<Date>& date_max = std::nullopt) {
  if (const auto v = validate(q); !v.empty())
    throw QueryExecutionError("invalid query at " + v.front().path + ": " + v.front().message);
  DocSet hits = detail::execute_node(q, index, tree);
  if (date_max) {
    DocSet kept;
    for (auto n : hits)
      if (index.document(n).pub_date <= *date_max) kept.push_back(n);
    hits = std::move(kept);
  }
  return hits;
}

inline std::set<std::string> execute_boolean(const QueryNode& q, const DocumentIndex& index,
                                             const MeshTree& tree,
                                             const std::optional<Date>& date_max = std::nullopt) {
  std::set<std::string> out;
  for (auto n : execute_boolean_docs(q, index, tree, date_max)) out.insert(index.document(n).doc_id);
  return out;
}

}  // namespace meshsuggest
