#pragma once

// Shared test helpers: fixture paths, resource loading, an independent naive
// Boolean evaluator and a random query generator.

#include <cctype>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "meshsuggest/pipeline.hpp"

namespace meshsuggest {

inline void PrintTo(const QueryNode& n, std::ostream* os) { *os << serialize_query(n); }

}  // namespace meshsuggest

namespace testsupport {

namespace ms = meshsuggest;

inline std::string fixture(const std::string& name) { return std::string(MESHSUGGEST_FIXTURES) + "/" + name; }
inline std::string golden(const std::string& name) { return std::string(MESHSUGGEST_GOLDEN) + "/" + name; }

inline ms::ResourcePaths fixture_paths() {
  ms::ResourcePaths p;
  p.documents = fixture("documents.jsonl");
  p.mesh_tree = fixture("mesh_tree.tsv");
  p.conso = fixture("umls/MRCONSO.RRF");
  p.def = fixture("umls/MRDEF.RRF");
  p.sty = fixture("umls/MRSTY.RRF");
  p.rel = fixture("umls/MRREL.RRF");
  p.descriptions = fixture("descriptions.jsonl");
  p.topics = fixture("topics.jsonl");
  p.train_topics = fixture("train_topics.jsonl");
  p.qrels = fixture("qrels.txt");
  p.atm_fixture = fixture("atm_replay.jsonl");
  p.metamap_fixture = fixture("metamap_replay.jsonl");
  return p;
}

inline const ms::Resources& fixture_resources() {
  static const ms::Resources r = ms::Resources::load(fixture_paths());
  return r;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Naive oracle: each document is tested against the AST directly, with
// explosion recomputed from the raw tree file.

struct NaiveDoc {
  std::string id;
  std::vector<std::string> title, abstract;
  std::set<std::string> mesh, pub_types;
  std::string date;
};

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::string key(const std::string& s) {
  std::istringstream in(lower(s));
  std::string w, out;
  while (in >> w) out += (out.empty() ? "" : " ") + w;
  return out;
}

inline std::vector<std::string> words(const std::string& s) {
  std::string t;
  for (char c : s) t.push_back(std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : ' ');
  std::istringstream in(t);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

class NaiveEngine {
 public:
  NaiveEngine(const std::string& docs_path, const std::string& tree_path) {
    std::ifstream in(docs_path);
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      NaiveDoc d;
      d.id = j["doc_id"];
      d.title = words(j["title"]);
      d.abstract = words(j["abstract"]);
      for (const auto& h : j["mesh_headings"]) d.mesh.insert(key(h));
      if (j.contains("publication_types"))
        for (const auto& p : j["publication_types"]) d.pub_types.insert(key(p));
      d.date = j["pub_date"];
      docs_.push_back(d);
    }
    std::ifstream t(tree_path);
    for (std::string line; std::getline(t, line);) {
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      rows_.emplace_back(key(line.substr(0, tab)), line.substr(tab + 1));
    }
  }

  /// Headings reachable from `h` by repeatedly taking every heading with a
  /// tree number strictly below a tree number of a reached heading.
  std::set<std::string> closure(const std::string& h) const {
    std::set<std::string> reached{key(h)};
    for (bool grew = true; grew;) {
      grew = false;
      for (const auto& [head, tn] : rows_) {
        if (reached.count(head)) continue;
        for (const auto& [r, rtn] : rows_)
          if (reached.count(r) && tn.size() > rtn.size() && tn.compare(0, rtn.size() + 1, rtn + ".") == 0) {
            reached.insert(head);
            grew = true;
            break;
          }
      }
    }
    return reached;
  }

  static bool phrase_in(const std::vector<std::string>& doc, const std::vector<std::string>& q, bool trunc) {
    if (q.empty()) return false;
    for (std::size_t s = 0; s + q.size() <= doc.size(); ++s) {
      std::size_t i = 0;
      for (; i < q.size(); ++i) {
        const auto& w = doc[s + i];
        const bool last = i + 1 == q.size();
        const bool ok = last && trunc ? w.rfind(q[i], 0) == 0 : w == q[i];
        if (!ok) break;
      }
      if (i == q.size()) return true;
    }
    return false;
  }

  bool matches(const ms::QueryNode& n, const NaiveDoc& d) const {
    using ms::NodeKind;
    switch (n.kind) {
      case NodeKind::kAnd:
        for (const auto& c : n.children)
          if (!matches(c, d)) return false;
        return true;
      case NodeKind::kOr:
        for (const auto& c : n.children)
          if (matches(c, d)) return true;
        return false;
      case NodeKind::kNot:
        return matches(n.children[0], d) && !matches(n.children[1], d);
      case NodeKind::kAtom: break;
    }
    const auto& a = n.atom;
    const auto q = words(a.text);
    switch (a.field) {
      case ms::Field::kTitleAbstract: return phrase_in(d.title, q, a.truncated) || phrase_in(d.abstract, q, a.truncated);
      case ms::Field::kTitle: return phrase_in(d.title, q, a.truncated);
      case ms::Field::kAbstract: return phrase_in(d.abstract, q, a.truncated);
      case ms::Field::kMeshNoExp: return d.mesh.count(key(a.text)) > 0;
      case ms::Field::kPublicationType: return d.pub_types.count(key(a.text)) > 0;
      case ms::Field::kMeshExploded:
        for (const auto& h : closure(a.text))
          if (d.mesh.count(h)) return true;
        return false;
    }
    return false;
  }

  std::set<std::string> run(const ms::QueryNode& q, const std::string& date_max = "") const {
    std::set<std::string> out;
    for (const auto& d : docs_)
      if ((date_max.empty() || d.date <= date_max) && matches(q, d)) out.insert(d.id);
    return out;
  }

  std::vector<std::string> headings() const {
    std::set<std::string> s;
    for (const auto& [h, _] : rows_) s.insert(h);
    return {s.begin(), s.end()};
  }

  const std::vector<NaiveDoc>& docs() const { return docs_; }

 private:
  std::vector<NaiveDoc> docs_;
  std::vector<std::pair<std::string, std::string>> rows_;
};

inline const NaiveEngine& naive_engine() {
  static const NaiveEngine e(fixture("documents.jsonl"), fixture("mesh_tree.tsv"));
  return e;
}

// ---------------------------------------------------------------------------
// Random query trees over the fixture vocabulary

class RandomQueries {
 public:
  explicit RandomQueries(std::uint64_t seed) : rng_(seed) {
    const auto& e = naive_engine();
    headings_ = e.headings();
    std::set<std::string> vocab;
    for (const auto& d : e.docs()) {
      vocab.insert(d.title.begin(), d.title.end());
      for (std::size_t i = 0; i + 1 < d.abstract.size(); ++i) phrases_.push_back(d.abstract[i] + " " + d.abstract[i + 1]);
    }
    words_.assign(vocab.begin(), vocab.end());
    words_.push_back("zzzunmatched");
  }

  ms::QueryNode atom() {
    using ms::Field;
    switch (pick(7)) {
      case 0: return ms::QueryNode::leaf(one(headings_), Field::kMeshExploded);
      case 1: return ms::QueryNode::leaf(one(headings_), Field::kMeshNoExp);
      case 2: return ms::QueryNode::leaf(one(phrases_), pick(2) ? Field::kTitleAbstract : Field::kAbstract);
      case 3: {
        auto w = one(words_);
        if (w.size() > 4) w.resize(3 + pick(w.size() - 3));
        return ms::QueryNode::leaf(w, Field::kTitleAbstract, true);
      }
      case 4: return ms::QueryNode::leaf(one(words_), Field::kTitle);
      case 5: return ms::QueryNode::leaf(pick(2) ? "journal article" : "meta-analysis", Field::kPublicationType);
      default: return ms::QueryNode::leaf(one(words_), Field::kTitleAbstract);
    }
  }

  /// Tree of the given depth; operator nodes have 2 or 3 children, NOT has 2.
  ms::QueryNode tree(int depth) {
    if (depth == 0 || pick(5) == 0) return atom();
    const int k = static_cast<int>(pick(3));
    if (k == 2) return ms::QueryNode::minus(tree(depth - 1), tree(depth - 1));
    std::vector<ms::QueryNode> c;
    const std::size_t n = 2 + pick(2);
    for (std::size_t i = 0; i < n; ++i) c.push_back(tree(depth - 1));
    return ms::QueryNode::op(k == 0 ? ms::NodeKind::kAnd : ms::NodeKind::kOr, std::move(c));
  }

  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

 private:
  const std::string& one(const std::vector<std::string>& v) { return v[pick(v.size())]; }

  std::mt19937_64 rng_;
  std::vector<std::string> headings_, words_, phrases_;
};

inline ms::MeshCandidate cand(const std::string& heading, double norm, ms::Method m = ms::Method::kAtm) {
  ms::MeshCandidate c;
  c.heading = ms::MeshTerm{heading, {}};
  c.method = m;
  c.raw_score = norm;
  c.norm_score = norm;
  return c;
}

inline std::vector<ms::MeshCandidate> ranking(const std::vector<double>& norms) {
  std::vector<ms::MeshCandidate> out;
  for (std::size_t i = 0; i < norms.size(); ++i) out.push_back(cand("h" + std::to_string(i), norms[i]));
  return out;
}

}  // namespace testsupport
