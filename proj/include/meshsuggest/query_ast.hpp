#pragma once

// PubMed-dialect Boolean query AST: parsing, normalization, validation and
// serialization. Every other module consumes QueryNode.
//
// Supported field tags (case-insensitive):
//   [tiab] [title/abstract]            -> TitleAbstract (also the default)
//   [ti] [title]                       -> Title
//   [ab] [abstract]                    -> Abstract
//   [mh] [mesh] [mesh terms]           -> MeshExploded
//   [mh:noexp] [mesh:noexp] ...        -> MeshNoExp
//   [pt] [publication type]            -> PublicationType
// New tags are added in field_from_tag() and field_tag(); anything else is a
// ParseError.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "meshsuggest/common.hpp"

namespace meshsuggest {

enum class Field { kTitleAbstract, kTitle, kAbstract, kMeshExploded, kMeshNoExp, kPublicationType };

inline bool is_mesh_field(Field f) { return f == Field::kMeshExploded || f == Field::kMeshNoExp; }

inline bool is_text_field(Field f) {
  return f == Field::kTitleAbstract || f == Field::kTitle || f == Field::kAbstract;
}

inline std::string_view field_name(Field f) {
  switch (f) {
    case Field::kTitleAbstract: return "TitleAbstract";
    case Field::kTitle: return "Title";
    case Field::kAbstract: return "Abstract";
    case Field::kMeshExploded: return "MeshExploded";
    case Field::kMeshNoExp: return "MeshNoExp";
    case Field::kPublicationType: return "PublicationType";
  }
  return "TitleAbstract";
}

inline std::optional<Field> field_from_name(std::string_view name) {
  for (Field f : {Field::kTitleAbstract, Field::kTitle, Field::kAbstract, Field::kMeshExploded,
                  Field::kMeshNoExp, Field::kPublicationType})
    if (field_name(f) == name) return f;
  return std::nullopt;
}

inline std::optional<Field> field_from_tag(std::string_view tag) {
  const std::string t = squeeze_spaces(to_lower(tag));
  if (t == "tiab" || t == "title/abstract") return Field::kTitleAbstract;
  if (t == "ti" || t == "title") return Field::kTitle;
  if (t == "ab" || t == "abstract") return Field::kAbstract;
  if (t == "mh" || t == "mesh" || t == "mesh terms") return Field::kMeshExploded;
  if (t == "mh:noexp" || t == "mesh:noexp" || t == "mesh terms:noexp") return Field::kMeshNoExp;
  if (t == "pt" || t == "publication type") return Field::kPublicationType;
  return std::nullopt;
}

inline std::string_view field_tag(Field f) {
  switch (f) {
    case Field::kTitleAbstract: return "tiab";
    case Field::kTitle: return "ti";
    case Field::kAbstract: return "ab";
    case Field::kMeshExploded: return "Mesh";
    case Field::kMeshNoExp: return "Mesh:NoExp";
    case Field::kPublicationType: return "pt";
  }
  return "tiab";
}

struct Atom {
  std::string text;        // phrase when it contains spaces; never holds the '*'
  bool truncated = false;  // trailing wildcard on the last token
  Field field = Field::kTitleAbstract;

  friend bool operator==(const Atom&, const Atom&) = default;
};

enum class NodeKind { kAtom, kAnd, kOr, kNot };

inline std::string_view kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::kAtom: return "ATOM";
    case NodeKind::kAnd: return "AND";
    case NodeKind::kOr: return "OR";
    case NodeKind::kNot: return "NOT";
  }
  return "ATOM";
}

/// Either an Atom leaf or an operator over ordered children. NOT is binary
/// set difference: children[0] minus children[1].
struct QueryNode {
  NodeKind kind = NodeKind::kAtom;
  Atom atom;
  std::vector<QueryNode> children;

  static QueryNode leaf(Atom a) {
    QueryNode n;
    n.atom = std::move(a);
    return n;
  }
  static QueryNode leaf(std::string text, Field field = Field::kTitleAbstract,
                        bool truncated = false) {
    return leaf(Atom{std::move(text), truncated, field});
  }
  static QueryNode op(NodeKind kind, std::vector<QueryNode> children) {
    QueryNode n;
    n.kind = kind;
    n.children = std::move(children);
    return n;
  }
  static QueryNode all_of(std::vector<QueryNode> c) { return op(NodeKind::kAnd, std::move(c)); }
  static QueryNode any_of(std::vector<QueryNode> c) { return op(NodeKind::kOr, std::move(c)); }
  static QueryNode minus(QueryNode left, QueryNode right) {
    std::vector<QueryNode> c;
    c.push_back(std::move(left));
    c.push_back(std::move(right));
    return op(NodeKind::kNot, std::move(c));
  }

  bool is_atom() const { return kind == NodeKind::kAtom; }

  friend bool operator==(const QueryNode& a, const QueryNode& b) {
    if (a.kind != b.kind) return false;
    if (a.is_atom()) return a.atom == b.atom;
    return a.children == b.children;
  }
};

class ParseError : public Error {
 public:
  ParseError(std::size_t position, std::string message, std::string snippet)
      : Error(message + " at offset " + std::to_string(position) + ": '" + snippet + "'"),
        position_(position),
        message_(std::move(message)),
        snippet_(std::move(snippet)) {}

  std::size_t position() const { return position_; }
  const std::string& message() const { return message_; }
  const std::string& snippet() const { return snippet_; }

 private:
  std::size_t position_;
  std::string message_;
  std::string snippet_;
};

enum class Dialect { kPubMed };

namespace detail {

enum class TokenType { kLParen, kRParen, kWord, kQuoted, kTag, kAnd, kOr, kNot, kEnd };

struct Token {
  TokenType type;
  std::string text;
  std::size_t pos;
};

inline std::string snippet_at(std::string_view text, std::size_t pos) {
  const std::size_t begin = pos > 15 ? pos - 15 : 0;
  return std::string(text.substr(begin, 30));
}

[[noreturn]] inline void fail(std::string_view text, std::size_t pos, std::string message) {
  if (pos > text.size()) pos = text.size();
  throw ParseError(pos, std::move(message), snippet_at(text, pos));
}

inline std::vector<Token> lex(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  const auto special = [](char c) {
    return c == '(' || c == ')' || c == '"' || c == '[' || c == ']' ||
           std::isspace(static_cast<unsigned char>(c));
  };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '(') {
      out.push_back({TokenType::kLParen, "(", i++});
    } else if (c == ')') {
      out.push_back({TokenType::kRParen, ")", i++});
    } else if (c == '"') {
      const auto close = text.find('"', i + 1);
      if (close == std::string_view::npos) fail(text, i, "unterminated quoted phrase");
      out.push_back({TokenType::kQuoted, std::string(text.substr(i + 1, close - i - 1)), i});
      i = close + 1;
    } else if (c == '[') {
      const auto close = text.find(']', i + 1);
      if (close == std::string_view::npos) fail(text, i, "unterminated field tag");
      out.push_back({TokenType::kTag, std::string(text.substr(i + 1, close - i - 1)), i});
      i = close + 1;
    } else if (c == ']') {
      fail(text, i, "unexpected ']'");
    } else {
      const std::size_t start = i;
      while (i < text.size() && !special(text[i])) ++i;
      std::string word(text.substr(start, i - start));
      TokenType type = TokenType::kWord;
      if (word == "AND") type = TokenType::kAnd;
      else if (word == "OR") type = TokenType::kOr;
      else if (word == "NOT") type = TokenType::kNot;
      out.push_back({type, std::move(word), start});
    }
  }
  out.push_back({TokenType::kEnd, "", text.size()});
  return out;
}

class Parser {
 public:
  Parser(std::string_view text, std::vector<Token> tokens)
      : text_(text), tokens_(std::move(tokens)) {}

  QueryNode parse() {
    QueryNode root = parse_or();
    const Token& t = peek();
    if (t.type == TokenType::kRParen) fail(text_, t.pos, "unbalanced parentheses: unexpected ')'");
    if (t.type != TokenType::kEnd) fail(text_, t.pos, "expected an operator before '" + t.text + "'");
    return root;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_++]; }

  static bool is_operator(TokenType t) {
    return t == TokenType::kAnd || t == TokenType::kOr || t == TokenType::kNot;
  }

  QueryNode parse_binary(NodeKind kind, TokenType sep, QueryNode (Parser::*sub)()) {
    std::vector<QueryNode> parts;
    parts.push_back((this->*sub)());
    while (peek().type == sep) {
      next();
      parts.push_back((this->*sub)());
    }
    if (parts.size() == 1) return std::move(parts.front());
    return QueryNode::op(kind, std::move(parts));
  }

  QueryNode parse_or() { return parse_binary(NodeKind::kOr, TokenType::kOr, &Parser::parse_and); }
  QueryNode parse_and() { return parse_binary(NodeKind::kAnd, TokenType::kAnd, &Parser::parse_not); }

  QueryNode parse_not() {
    QueryNode left = parse_primary();
    while (peek().type == TokenType::kNot) {
      next();
      QueryNode right = parse_primary();
      left = QueryNode::minus(std::move(left), std::move(right));
    }
    return left;
  }

  QueryNode parse_primary() {
    const Token& t = peek();
    switch (t.type) {
      case TokenType::kLParen: {
        const std::size_t open = t.pos;
        next();
        if (peek().type == TokenType::kRParen) fail(text_, peek().pos, "empty parentheses");
        if (peek().type == TokenType::kEnd) fail(text_, open, "unbalanced parentheses: missing ')'");
        QueryNode inner = parse_or();
        if (peek().type != TokenType::kRParen) {
          if (peek().type == TokenType::kEnd) fail(text_, open, "unbalanced parentheses: missing ')'");
          fail(text_, peek().pos, "expected an operator before '" + peek().text + "'");
        }
        next();
        const TokenType after = peek().type;
        if (after == TokenType::kWord || after == TokenType::kQuoted ||
            after == TokenType::kLParen)
          fail(text_, peek().pos, "missing operator between clauses");
        if (after == TokenType::kTag) fail(text_, peek().pos, "field tag after a parenthesized group");
        return inner;
      }
      case TokenType::kWord:
      case TokenType::kQuoted:
        return parse_atom();
      case TokenType::kRParen:
        fail(text_, t.pos, "unbalanced parentheses: unexpected ')'");
      case TokenType::kEnd:
        fail(text_, t.pos, "dangling operator: expected a term");
      case TokenType::kTag:
        fail(text_, t.pos, "field tag without a term");
      default:
        fail(text_, t.pos, "dangling operator '" + t.text + "'");
    }
  }

  QueryNode parse_atom() {
    const std::size_t start = peek().pos;
    std::vector<std::string> pieces;
    std::size_t last_pos = start;
    while (peek().type == TokenType::kWord || peek().type == TokenType::kQuoted) {
      last_pos = peek().pos;
      pieces.push_back(squeeze_spaces(next().text));
    }
    std::string text = squeeze_spaces(join(pieces, " "));
    Atom atom;
    const auto star = text.find('*');
    if (star != std::string::npos) {
      if (star != text.size() - 1) fail(text_, last_pos, "wildcard '*' is only allowed at the end of a term");
      text.pop_back();
      if (text.empty() || text.back() == ' ')
        fail(text_, last_pos, "wildcard '*' needs a non-empty term before it");
      atom.truncated = true;
    }
    if (text.empty()) fail(text_, start, "empty term");
    atom.text = std::move(text);
    if (peek().type == TokenType::kTag) {
      const Token& tag = next();
      const auto field = field_from_tag(tag.text);
      if (!field) fail(text_, tag.pos, "unknown field tag [" + tag.text + "]");
      atom.field = *field;
    }
    const TokenType after = peek().type;
    if (after == TokenType::kWord || after == TokenType::kQuoted || after == TokenType::kLParen)
      fail(text_, peek().pos, "missing operator between clauses");
    if (after == TokenType::kTag) fail(text_, peek().pos, "more than one field tag on a term");
    return QueryNode::leaf(std::move(atom));
  }

  std::string_view text_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Flattens nested same-operator AND/OR nodes and collapses single-child
/// operators. Child order is preserved.
inline QueryNode normalize(const QueryNode& node) {
  if (node.is_atom()) return node;
  std::vector<QueryNode> children;
  children.reserve(node.children.size());
  for (const auto& child : node.children) {
    QueryNode c = normalize(child);
    if (!c.is_atom() && c.children.empty()) continue;
    const bool flattenable = node.kind != NodeKind::kNot && c.kind == node.kind;
    if (flattenable) {
      for (auto& g : c.children) children.push_back(std::move(g));
    } else {
      children.push_back(std::move(c));
    }
  }
  if (children.size() == 1) return std::move(children.front());
  return QueryNode::op(node.kind, std::move(children));
}

/// Parses a PubMed-dialect query into a normalized tree. Operator precedence
/// is NOT > AND > OR; operators are the uppercase words AND, OR, NOT; adjacent
/// words form one phrase atom.
inline QueryNode parse_query(std::string_view text, Dialect = Dialect::kPubMed) {
  if (trim_view(text).empty()) throw ParseError(0, "empty query", "");
  detail::Parser parser(text, detail::lex(text));
  return normalize(parser.parse());
}

struct Violation {
  std::string path;  // "/" for the root, "/0/2" for nested children
  std::string kind;  // arity | empty-atom | truncation | quote-in-atom
  std::string message;
};

namespace detail {

inline void validate_into(const QueryNode& n, const std::string& path, std::vector<Violation>& out) {
  if (n.is_atom()) {
    const std::string text = trim(n.atom.text);
    if (text.empty()) {
      out.push_back({path, "empty-atom", "atom text is empty"});
      return;
    }
    if (n.atom.truncated && (n.atom.text.back() == ' ' || n.atom.text.back() == '*'))
      out.push_back({path, "truncation", "truncated atom has an empty last token"});
    if (n.atom.text.find('"') != std::string::npos)
      out.push_back({path, "quote-in-atom", "atom text contains a double quote"});
    return;
  }
  const std::size_t arity = n.children.size();
  if (n.kind == NodeKind::kNot && arity != 2)
    out.push_back({path, "arity", "NOT needs exactly 2 children, has " + std::to_string(arity)});
  if ((n.kind == NodeKind::kAnd || n.kind == NodeKind::kOr) && arity < 2)
    out.push_back({path, "arity", std::string(kind_name(n.kind)) + " needs at least 2 children, has " +
                                      std::to_string(arity)});
  for (std::size_t i = 0; i < n.children.size(); ++i)
    validate_into(n.children[i], (path == "/" ? "" : path) + "/" + std::to_string(i), out);
}

inline bool needs_quotes(std::string_view text) {
  if (text == "AND" || text == "OR" || text == "NOT") return true;
  for (unsigned char c : text)
    if (!std::isalnum(c) && c != '-' && c != '\'') return true;
  return false;
}

}  // namespace detail

/// Returns every invariant violation in the tree; empty iff the tree is valid.
inline std::vector<Violation> validate(const QueryNode& node) {
  std::vector<Violation> out;
  detail::validate_into(node, "/", out);
  return out;
}

struct SerializeOptions {
  bool explicit_default_field = false;  // emit [tiab] on untagged atoms
};

inline std::string serialize_atom(const Atom& a, const SerializeOptions& opts = {}) {
  std::string body = a.text;
  if (a.truncated) body.push_back('*');
  std::string out = detail::needs_quotes(a.text) ? "\"" + body + "\"" : body;
  if (a.field != Field::kTitleAbstract || opts.explicit_default_field) {
    out += "[";
    out += field_tag(a.field);
    out += "]";
  }
  return out;
}

/// Deterministic text form; every operator node is parenthesized, so
/// parse_query(serialize_query(n)) == normalize(n).
inline std::string serialize_query(const QueryNode& node, const SerializeOptions& opts = {}) {
  if (node.is_atom()) return serialize_atom(node.atom, opts);
  std::string out = "(";
  const std::string sep = " " + std::string(kind_name(node.kind)) + " ";
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    if (i) out += sep;
    out += serialize_query(node.children[i], opts);
  }
  out += ")";
  return out;
}

/// Visits every atom in document order.
template <typename Fn>
void for_each_atom(const QueryNode& node, Fn&& fn) {
  if (node.is_atom()) {
    fn(node.atom);
    return;
  }
  for (const auto& c : node.children) for_each_atom(c, fn);
}

// AST JSON schema:
//   atom:     {"atom": {"text": str, "truncated": bool, "field": FieldName}}
//   operator: {"op": "AND"|"OR"|"NOT", "children": [node, ...]}
inline nlohmann::json to_json(const QueryNode& node) {
  if (node.is_atom()) {
    return {{"atom",
             {{"text", node.atom.text},
              {"truncated", node.atom.truncated},
              {"field", std::string(field_name(node.atom.field))}}}};
  }
  nlohmann::json children = nlohmann::json::array();
  for (const auto& c : node.children) children.push_back(to_json(c));
  return {{"op", std::string(kind_name(node.kind))}, {"children", std::move(children)}};
}

inline QueryNode query_from_json(const nlohmann::json& j) {
  if (j.contains("atom")) {
    const auto& a = j.at("atom");
    const auto field = field_from_name(a.value("field", "TitleAbstract"));
    if (!field) throw DataError("unknown field in AST JSON: " + a.value("field", ""));
    return QueryNode::leaf(Atom{a.at("text").get<std::string>(), a.value("truncated", false), *field});
  }
  const std::string op = j.at("op").get<std::string>();
  NodeKind kind;
  if (op == "AND") kind = NodeKind::kAnd;
  else if (op == "OR") kind = NodeKind::kOr;
  else if (op == "NOT") kind = NodeKind::kNot;
  else throw DataError("unknown operator in AST JSON: " + op);
  std::vector<QueryNode> children;
  for (const auto& c : j.at("children")) children.push_back(query_from_json(c));
  return QueryNode::op(kind, std::move(children));
}

}  // namespace meshsuggest
