#include "lsplit/sql.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

#include <json.hpp>

#include "lsplit/error.hpp"

namespace lsplit {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Lexer

namespace {

const std::set<std::string>& sql_keywords() {
  static const std::set<std::string> kw = {
      "SELECT", "FROM",  "WHERE", "GROUP",  "BY",    "ORDER",     "HAVING", "LIMIT",  "OFFSET", "JOIN",  "INNER",
      "LEFT",   "RIGHT", "OUTER", "FULL",   "CROSS", "NATURAL",   "ON",     "USING",  "AS",     "AND",   "OR",
      "NOT",    "IN",    "LIKE",  "BETWEEN", "IS",   "NULL",      "DISTINCT", "ALL",  "ANY",    "EXISTS", "UNION",
      "INTERSECT", "EXCEPT", "ASC", "DESC", "CASE", "WHEN", "THEN", "ELSE", "END"};
  return kw;
}

const std::set<std::string>& aggregate_functions() {
  static const std::set<std::string> agg = {"count", "sum", "avg", "min", "max"};
  return agg;
}

bool is_word_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

[[noreturn]] void lex_error(std::size_t pos, const std::string& what) {
  throw Error(ErrorCode::LexError, "position " + std::to_string(pos) + ": " + what);
}

bool is_punct(const SqlToken& t, std::string_view p) { return t.kind == SqlTokenKind::Punctuation && t.text == p; }
bool is_kw(const SqlToken& t, std::string_view k) { return t.kind == SqlTokenKind::Keyword && t.value == k; }

}  // namespace

ProgramTokenization tokenize_sql(std::string_view src) {
  ProgramTokenization out;
  out.source = std::string(src);
  const std::size_t n = src.size();
  std::size_t i = 0;
  while (i < n) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (c == '\'' || c == '"') {
      std::size_t j = i + 1;
      for (;;) {
        if (j >= n) lex_error(start, "unterminated string literal");
        if (src[j] == c) {
          if (j + 1 < n && src[j + 1] == c) {
            j += 2;
            continue;
          }
          break;
        }
        ++j;
      }
      const std::string text(src.substr(start, j + 1 - start));
      out.tokens.push_back({SqlTokenKind::Literal, text, text, LiteralKind::String, start});
      i = j + 1;
      continue;
    }
    if (c == '`') {
      const std::size_t close = src.find('`', i + 1);
      if (close == std::string_view::npos) lex_error(start, "unterminated quoted identifier");
      const std::string text(src.substr(i + 1, close - i - 1));
      out.tokens.push_back({SqlTokenKind::Identifier, text, text, LiteralKind::None, start});
      i = close + 1;
      continue;
    }
    if (is_digit(c) || (c == '.' && i + 1 < n && is_digit(src[i + 1]))) {
      std::size_t j = i;
      while (j < n && is_digit(src[j])) ++j;
      if (j < n && src[j] == '.' && j + 1 < n && is_digit(src[j + 1])) {
        ++j;
        while (j < n && is_digit(src[j])) ++j;
      } else if (j < n && src[j] == '.' && j == i) {
        ++j;
        while (j < n && is_digit(src[j])) ++j;
      }
      if (j < n && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < n && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < n && is_digit(src[k])) {
          while (k < n && is_digit(src[k])) ++k;
          j = k;
        }
      }
      const std::string text(src.substr(i, j - i));
      out.tokens.push_back({SqlTokenKind::Literal, text, text, LiteralKind::Number, start});
      i = j;
      continue;
    }
    if (is_word_start(c)) {
      std::size_t j = i;
      while (j < n && is_word_char(src[j])) ++j;
      bool qualified = false;
      while (j + 1 < n && src[j] == '.' && (is_word_start(src[j + 1]) || src[j + 1] == '*')) {
        qualified = true;
        if (src[j + 1] == '*') {
          j += 2;
          break;
        }
        j += 1;
        while (j < n && is_word_char(src[j])) ++j;
      }
      const std::string text(src.substr(i, j - i));
      const std::string up = upper(text);
      if (!qualified && sql_keywords().count(up)) {
        SqlToken tok{SqlTokenKind::Keyword, text, up, LiteralKind::None, start};
        if (up == "GROUP" || up == "ORDER") {
          std::size_t k = j;
          while (k < n && std::isspace(static_cast<unsigned char>(src[k]))) ++k;
          std::size_t e = k;
          while (e < n && is_word_char(src[e])) ++e;
          if (e > k && upper(src.substr(k, e - k)) == "BY") {
            tok.text = text + " " + std::string(src.substr(k, e - k));
            tok.value = up + " BY";
            j = e;
          }
        }
        out.tokens.push_back(std::move(tok));
      } else {
        out.tokens.push_back({SqlTokenKind::Identifier, text, text, LiteralKind::None, start});
      }
      i = j;
      continue;
    }
    static const std::vector<std::string_view> kTwoChar = {"!=", "<>", "<=", ">=", "||", "=="};
    bool matched = false;
    for (auto op : kTwoChar) {
      if (src.substr(i, 2) == op) {
        out.tokens.push_back({SqlTokenKind::Operator, std::string(op), std::string(op), LiteralKind::None, start});
        i += 2;
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (std::string_view("=<>+-*/%").find(c) != std::string_view::npos) {
      out.tokens.push_back({SqlTokenKind::Operator, std::string(1, c), std::string(1, c), LiteralKind::None, start});
      ++i;
      continue;
    }
    if (std::string_view("(),;.").find(c) != std::string_view::npos) {
      out.tokens.push_back({SqlTokenKind::Punctuation, std::string(1, c), std::string(1, c), LiteralKind::None, start});
      ++i;
      continue;
    }
    lex_error(start, std::string("unexpected character '") + c + "'");
  }
  if (out.tokens.empty()) throw Error(ErrorCode::EmptyProgram, "program has no tokens");
  return out;
}

namespace {

template <typename Fn>
std::string join_canonical(const std::vector<SqlToken>& tokens, Fn&& lexeme) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const SqlToken& cur = tokens[i];
    if (i > 0) {
      const SqlToken& prev = tokens[i - 1];
      const bool no_space = (cur.kind == SqlTokenKind::Punctuation && cur.text != "(") ||
                            is_punct(prev, "(") || is_punct(prev, ".") ||
                            (is_punct(cur, "(") && prev.kind == SqlTokenKind::Identifier);
      if (!no_space) out += ' ';
    }
    out += lexeme(i);
  }
  return out;
}

}  // namespace

std::string ProgramTokenization::render() const {
  return join_canonical(tokens, [&](std::size_t i) { return tokens[i].text; });
}

// ---------------------------------------------------------------------------
// Shallow clause parse

namespace {

enum class NodeKind { Query, Clause, SetOp, Function, Predicate, Operator, Keyword, Column, Table, Literal, Star };

struct Node {
  NodeKind kind;
  std::string label;
  std::vector<Node> children;
};

struct ParseFailure {};

bool is_clause_keyword(const SqlToken& t) {
  if (t.kind != SqlTokenKind::Keyword) return false;
  static const std::set<std::string> clauses = {"SELECT", "FROM", "WHERE", "GROUP BY", "HAVING", "ORDER BY", "LIMIT"};
  return clauses.count(t.value) > 0;
}

bool is_set_op(const SqlToken& t) {
  return is_kw(t, "UNION") || is_kw(t, "INTERSECT") || is_kw(t, "EXCEPT");
}

std::string literal_placeholder(const SqlToken& t) { return t.literal == LiteralKind::Number ? "<num>" : "<str>"; }

std::string column_name(const std::string& qualified) {
  const std::size_t dot = qualified.rfind('.');
  return dot == std::string::npos ? qualified : qualified.substr(dot + 1);
}

class Parser {
 public:
  explicit Parser(const std::vector<SqlToken>& tokens) : t_(tokens) {}

  Node parse_program() {
    Node q = parse_query();
    if (at_punct(";")) ++pos_;
    if (pos_ != t_.size()) throw ParseFailure{};
    return q;
  }

 private:
  const SqlToken* peek(std::size_t ahead = 0) const {
    return pos_ + ahead < t_.size() ? &t_[pos_ + ahead] : nullptr;
  }
  bool at_kw(std::string_view k) const { return peek() && is_kw(*peek(), k); }
  bool at_punct(std::string_view p) const { return peek() && is_punct(*peek(), p); }
  bool at_op(std::string_view o) const {
    return peek() && peek()->kind == SqlTokenKind::Operator && peek()->text == o;
  }
  void expect_punct(std::string_view p) {
    if (!at_punct(p)) throw ParseFailure{};
    ++pos_;
  }
  Node keyword_node() {
    Node k{NodeKind::Keyword, t_[pos_].value, {}};
    ++pos_;
    return k;
  }

  Node parse_query() {
    if (!at_kw("SELECT")) throw ParseFailure{};
    Node q{NodeKind::Query, "(SELECT)", {}};
    std::set<std::string> seen;
    while (peek() && is_clause_keyword(*peek())) {
      const std::string clause = peek()->value;
      if (!seen.insert(clause).second) throw ParseFailure{};
      ++pos_;
      Node c{NodeKind::Clause, clause, {}};
      if (clause == "SELECT") {
        parse_select(c);
      } else if (clause == "FROM") {
        parse_from(c);
      } else if (clause == "WHERE" || clause == "HAVING") {
        c.children.push_back(parse_expr());
      } else if (clause == "GROUP BY") {
        parse_expr_list(c);
      } else if (clause == "ORDER BY") {
        parse_order(c);
      } else if (clause == "LIMIT") {
        c.children.push_back(parse_expr());
        if (at_kw("OFFSET") || at_punct(",")) {
          Node off{NodeKind::Keyword, "OFFSET", {}};
          ++pos_;
          off.children.push_back(parse_expr());
          c.children.push_back(std::move(off));
        }
      }
      q.children.push_back(std::move(c));
    }
    if (peek() && is_set_op(*peek())) {
      Node op{NodeKind::SetOp, peek()->value, {}};
      ++pos_;
      if (at_kw("ALL") || at_kw("DISTINCT")) op.children.push_back(keyword_node());
      op.children.push_back(parse_query());
      q.children.push_back(std::move(op));
    }
    return q;
  }

  void skip_alias(Node& owner) {
    if (at_kw("AS")) {
      Node as = keyword_node();
      if (!peek() || peek()->kind != SqlTokenKind::Identifier) throw ParseFailure{};
      aliases_.insert(lower(peek()->text));
      ++pos_;
      owner.children.push_back(std::move(as));
    } else if (peek() && peek()->kind == SqlTokenKind::Identifier) {
      aliases_.insert(lower(peek()->text));
      ++pos_;
    }
  }

  void parse_select(Node& clause) {
    if (at_kw("DISTINCT") || at_kw("ALL")) clause.children.push_back(keyword_node());
    for (;;) {
      Node item = parse_expr();
      skip_alias(item);
      clause.children.push_back(std::move(item));
      if (!at_punct(",")) break;
      ++pos_;
    }
  }

  Node parse_table_ref() {
    Node ref;
    if (at_punct("(")) {
      ++pos_;
      ref = parse_query();
      expect_punct(")");
    } else if (peek() && peek()->kind == SqlTokenKind::Identifier) {
      ref = Node{NodeKind::Table, column_name(peek()->text), {}};
      ++pos_;
    } else {
      throw ParseFailure{};
    }
    skip_alias(ref);
    return ref;
  }

  void parse_from(Node& clause) {
    clause.children.push_back(parse_table_ref());
    for (;;) {
      if (at_punct(",")) {
        ++pos_;
        clause.children.push_back(parse_table_ref());
        continue;
      }
      std::vector<Node> modifiers;
      while (at_kw("NATURAL") || at_kw("INNER") || at_kw("LEFT") || at_kw("RIGHT") || at_kw("FULL") ||
             at_kw("CROSS") || at_kw("OUTER")) {
        modifiers.push_back(keyword_node());
      }
      if (!at_kw("JOIN")) {
        if (!modifiers.empty()) throw ParseFailure{};
        break;
      }
      Node join = keyword_node();
      for (auto& m : modifiers) join.children.push_back(std::move(m));
      join.children.push_back(parse_table_ref());
      if (at_kw("ON")) {
        Node on = keyword_node();
        on.children.push_back(parse_expr());
        join.children.push_back(std::move(on));
      } else if (at_kw("USING")) {
        Node using_node = keyword_node();
        expect_punct("(");
        parse_expr_list(using_node);
        expect_punct(")");
        join.children.push_back(std::move(using_node));
      }
      clause.children.push_back(std::move(join));
    }
  }

  void parse_expr_list(Node& owner) {
    for (;;) {
      owner.children.push_back(parse_expr());
      if (!at_punct(",")) break;
      ++pos_;
    }
  }

  void parse_order(Node& clause) {
    for (;;) {
      Node item = parse_expr();
      if (at_kw("ASC") || at_kw("DESC")) item.children.push_back(keyword_node());
      clause.children.push_back(std::move(item));
      if (!at_punct(",")) break;
      ++pos_;
    }
  }

  Node parse_expr() { return parse_or(); }

  Node parse_or() {
    Node lhs = parse_and();
    if (!at_kw("OR")) return lhs;
    Node op{NodeKind::Keyword, "OR", {}};
    op.children.push_back(std::move(lhs));
    while (at_kw("OR")) {
      ++pos_;
      op.children.push_back(parse_and());
    }
    return op;
  }

  Node parse_and() {
    Node lhs = parse_not();
    if (!at_kw("AND")) return lhs;
    Node op{NodeKind::Keyword, "AND", {}};
    op.children.push_back(std::move(lhs));
    while (at_kw("AND")) {
      ++pos_;
      op.children.push_back(parse_not());
    }
    return op;
  }

  Node parse_not() {
    if (at_kw("NOT") && !(peek(1) && (is_kw(*peek(1), "IN") || is_kw(*peek(1), "LIKE")))) {
      Node n = keyword_node();
      n.children.push_back(parse_not());
      return n;
    }
    return parse_predicate();
  }

  Node parse_predicate() {
    if (at_kw("EXISTS")) {
      Node ex{NodeKind::Predicate, "EXISTS", {}};
      ++pos_;
      expect_punct("(");
      ex.children.push_back(parse_query());
      expect_punct(")");
      return ex;
    }
    Node lhs = parse_additive();
    static const std::set<std::string> kCompare = {"=", "==", "!=", "<>", "<", ">", "<=", ">="};
    if (peek() && peek()->kind == SqlTokenKind::Operator && kCompare.count(peek()->text)) {
      Node op{NodeKind::Predicate, peek()->text, {}};
      ++pos_;
      op.children.push_back(std::move(lhs));
      op.children.push_back(parse_additive());
      return op;
    }
    std::optional<Node> negation;
    if (at_kw("NOT") && peek(1) && (is_kw(*peek(1), "IN") || is_kw(*peek(1), "LIKE") || is_kw(*peek(1), "BETWEEN"))) {
      negation = keyword_node();
    }
    if (at_kw("IN")) {
      Node in{NodeKind::Predicate, "IN", {}};
      ++pos_;
      in.children.push_back(std::move(lhs));
      if (negation) in.children.push_back(std::move(*negation));
      expect_punct("(");
      if (at_kw("SELECT")) {
        in.children.push_back(parse_query());
      } else {
        parse_expr_list(in);
      }
      expect_punct(")");
      return in;
    }
    if (at_kw("LIKE")) {
      Node like{NodeKind::Predicate, "LIKE", {}};
      ++pos_;
      like.children.push_back(std::move(lhs));
      if (negation) like.children.push_back(std::move(*negation));
      like.children.push_back(parse_additive());
      return like;
    }
    if (at_kw("BETWEEN")) {
      Node between{NodeKind::Predicate, "BETWEEN", {}};
      ++pos_;
      between.children.push_back(std::move(lhs));
      if (negation) between.children.push_back(std::move(*negation));
      between.children.push_back(parse_additive());
      if (!at_kw("AND")) throw ParseFailure{};
      between.children.push_back(keyword_node());
      between.children.push_back(parse_additive());
      return between;
    }
    if (negation) throw ParseFailure{};
    if (at_kw("IS")) {
      Node is{NodeKind::Predicate, "IS", {}};
      ++pos_;
      is.children.push_back(std::move(lhs));
      if (at_kw("NOT")) is.children.push_back(keyword_node());
      if (!at_kw("NULL")) throw ParseFailure{};
      is.children.push_back(keyword_node());
      return is;
    }
    return lhs;
  }

  Node parse_binary_chain(Node (Parser::*next)(), std::string_view ops) {
    Node lhs = (this->*next)();
    while (peek() && peek()->kind == SqlTokenKind::Operator && ops.find(peek()->text) != std::string_view::npos) {
      Node op{NodeKind::Operator, peek()->text, {}};
      ++pos_;
      op.children.push_back(std::move(lhs));
      op.children.push_back((this->*next)());
      lhs = std::move(op);
    }
    return lhs;
  }

  Node parse_additive() { return parse_binary_chain(&Parser::parse_multiplicative, "+ - ||"); }
  Node parse_multiplicative() { return parse_binary_chain(&Parser::parse_unary, "* / %"); }

  Node parse_unary() {
    if (at_op("-") || at_op("+")) {
      Node op{NodeKind::Operator, peek()->text, {}};
      ++pos_;
      op.children.push_back(parse_unary());
      return op;
    }
    return parse_primary();
  }

  Node parse_primary() {
    const SqlToken* tok = peek();
    if (!tok) throw ParseFailure{};
    if (tok->kind == SqlTokenKind::Literal) {
      ++pos_;
      return Node{NodeKind::Literal, literal_placeholder(*tok), {}};
    }
    if (tok->kind == SqlTokenKind::Operator && tok->text == "*") {
      ++pos_;
      return Node{NodeKind::Star, "*", {}};
    }
    if (is_kw(*tok, "NULL")) return keyword_node();
    if (tok->kind == SqlTokenKind::Identifier) {
      if (peek(1) && is_punct(*peek(1), "(")) {
        Node fn{NodeKind::Function, lower(tok->text), {}};
        pos_ += 2;
        if (at_punct(")")) {
          ++pos_;
          return fn;
        }
        if (at_kw("DISTINCT")) {
          Node d = keyword_node();
          parse_expr_list(d);
          fn.children.push_back(std::move(d));
        } else {
          parse_expr_list(fn);
        }
        expect_punct(")");
        return fn;
      }
      ++pos_;
      const std::string& text = tok->text;
      if (text.size() > 2 && text.substr(text.size() - 2) == ".*") return Node{NodeKind::Star, "*", {}};
      return Node{NodeKind::Column, column_name(text), {}};
    }
    if (is_punct(*tok, "(")) {
      ++pos_;
      Node inner = at_kw("SELECT") ? parse_query() : parse_expr();
      expect_punct(")");
      return inner;
    }
    throw ParseFailure{};
  }

  const std::vector<SqlToken>& t_;
  std::size_t pos_ = 0;
  std::set<std::string> aliases_;
};

std::optional<Node> parse_tree(const ProgramTokenization& tok) {
  try {
    return Parser(tok.tokens).parse_program();
  } catch (const ParseFailure&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Tree walks

void collect_atoms(const Node& n, std::vector<std::string>& out) {
  if (n.kind != NodeKind::Query) out.push_back(n.label);
  for (const auto& c : n.children) collect_atoms(c, out);
}

void collect_tables(const Node& n, std::vector<std::string>& out) {
  for (const auto& c : n.children) {
    if (c.kind == NodeKind::Query) continue;
    if (c.kind == NodeKind::Table) out.push_back(c.label);
    collect_tables(c, out);
  }
}

void collect_pairs(const Node& n, const std::string* clause, std::vector<std::pair<std::string, std::string>>& out) {
  if (n.kind == NodeKind::Query) {
    std::vector<std::string> items;
    std::vector<std::string> tables;
    for (const auto& c : n.children) {
      if (c.kind != NodeKind::Clause) continue;
      if (c.label == "SELECT") {
        for (const auto& item : c.children) {
          if (item.kind == NodeKind::Keyword && (item.label == "DISTINCT" || item.label == "ALL")) continue;
          items.push_back(item.label);
        }
      } else if (c.label == "FROM") {
        collect_tables(c, tables);
      }
    }
    for (const auto& c : n.children) {
      const std::string* next = (c.kind == NodeKind::Clause || c.kind == NodeKind::SetOp) ? &c.label : nullptr;
      collect_pairs(c, next, out);
    }
    for (const auto& item : items) {
      for (const auto& table : tables) out.emplace_back(item, "@" + table);
    }
    return;
  }
  for (const auto& c : n.children) {
    out.emplace_back(n.label, c.label);
    if (c.kind == NodeKind::Query && clause && n.kind != NodeKind::Clause && n.kind != NodeKind::SetOp) {
      out.emplace_back(*clause, c.label);
    }
    collect_pairs(c, clause, out);
  }
}

void collect_features(const Node& n, const std::string* clause, bool root, HardnessFeatures& f) {
  if (n.kind == NodeKind::Query && !root) ++f.nested;
  if (n.kind == NodeKind::Function && aggregate_functions().count(n.label)) ++f.aggregations;
  if (n.kind == NodeKind::Predicate && clause && (*clause == "WHERE" || *clause == "HAVING")) ++f.where_conditions;
  if (n.kind == NodeKind::Clause) {
    if (n.label == "GROUP BY") ++f.group_by;
    if (n.label == "ORDER BY") ++f.order_by;
    if (n.label == "HAVING") ++f.having;
    if (n.label == "FROM") {
      // every child of FROM is one table reference (plain, subquery or JOIN)
      const std::size_t refs = n.children.size();
      if (refs > 1) f.joins += refs - 1;
    }
  }
  for (const auto& c : n.children) {
    const std::string* next = clause;
    if (c.kind == NodeKind::Clause || c.kind == NodeKind::SetOp) next = &c.label;
    if (c.kind == NodeKind::Query) next = nullptr;
    collect_features(c, next, false, f);
  }
}

// Token-level fallbacks for programs the clause parse rejects.

bool next_is_open_paren(const std::vector<SqlToken>& t, std::size_t i) {
  return i + 1 < t.size() && is_punct(t[i + 1], "(");
}

std::string token_atom(const std::vector<SqlToken>& t, std::size_t i) {
  const SqlToken& tok = t[i];
  switch (tok.kind) {
    case SqlTokenKind::Keyword: return tok.value;
    case SqlTokenKind::Literal: return literal_placeholder(tok);
    case SqlTokenKind::Operator: return tok.text;
    case SqlTokenKind::Identifier:
      if (next_is_open_paren(t, i)) return lower(tok.text);
      if (tok.text.size() > 2 && tok.text.substr(tok.text.size() - 2) == ".*") return "*";
      return column_name(tok.text);
    case SqlTokenKind::Punctuation: return {};
  }
  return {};
}

bool is_alias_position(const std::vector<SqlToken>& t, std::size_t i) {
  return t[i].kind == SqlTokenKind::Identifier && i > 0 && is_kw(t[i - 1], "AS");
}

std::vector<std::string> fallback_atoms(const ProgramTokenization& tok) {
  std::vector<std::string> atoms;
  for (std::size_t i = 0; i < tok.tokens.size(); ++i) {
    if (tok.tokens[i].kind == SqlTokenKind::Punctuation || is_alias_position(tok.tokens, i)) continue;
    atoms.push_back(token_atom(tok.tokens, i));
  }
  return atoms;
}

std::vector<std::pair<std::string, std::string>> fallback_pairs(const ProgramTokenization& tok) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string parent = "ROOT";
  for (std::size_t i = 0; i < tok.tokens.size(); ++i) {
    const SqlToken& t = tok.tokens[i];
    if (t.kind == SqlTokenKind::Punctuation || is_alias_position(tok.tokens, i)) continue;
    if (t.kind == SqlTokenKind::Keyword) {
      out.emplace_back("ROOT", t.value);
      parent = t.value;
      continue;
    }
    out.emplace_back(parent, token_atom(tok.tokens, i));
  }
  return out;
}

HardnessFeatures fallback_features(const ProgramTokenization& tok) {
  HardnessFeatures f;
  std::size_t selects = 0;
  static const std::set<std::string> kPredicates = {"=", "==", "!=", "<>", "<", ">", "<=", ">="};
  for (std::size_t i = 0; i < tok.tokens.size(); ++i) {
    const SqlToken& t = tok.tokens[i];
    if (t.kind == SqlTokenKind::Keyword) {
      if (t.value == "SELECT") ++selects;
      if (t.value == "JOIN") ++f.joins;
      if (t.value == "GROUP BY") ++f.group_by;
      if (t.value == "ORDER BY") ++f.order_by;
      if (t.value == "HAVING") ++f.having;
      if (t.value == "IN" || t.value == "LIKE" || t.value == "BETWEEN" || t.value == "IS") ++f.where_conditions;
    } else if (t.kind == SqlTokenKind::Operator && kPredicates.count(t.text)) {
      ++f.where_conditions;
    } else if (t.kind == SqlTokenKind::Identifier && next_is_open_paren(tok.tokens, i) &&
               aggregate_functions().count(lower(t.text))) {
      ++f.aggregations;
    }
  }
  f.nested = selects > 0 ? selects - 1 : 0;
  return f;
}

}  // namespace

bool program_parses(const ProgramTokenization& tok) { return parse_tree(tok).has_value(); }

StructureBag extract_atoms(const ProgramTokenization& tok) {
  StructureBag bag{BagKind::Atom, {}};
  if (auto tree = parse_tree(tok)) {
    collect_atoms(*tree, bag.items);
  } else {
    bag.items = fallback_atoms(tok);
  }
  std::sort(bag.items.begin(), bag.items.end());
  return bag;
}

std::vector<std::pair<std::string, std::string>> extract_compound_pairs(const ProgramTokenization& tok) {
  if (auto tree = parse_tree(tok)) {
    std::vector<std::pair<std::string, std::string>> out;
    collect_pairs(*tree, nullptr, out);
    return out;
  }
  return fallback_pairs(tok);
}

StructureBag extract_compounds(const ProgramTokenization& tok) {
  StructureBag bag{BagKind::Compound, {}};
  for (auto& [parent, child] : extract_compound_pairs(tok)) {
    // select-item x table pairs carry their "@" on the child
    bag.items.push_back(child.rfind('@', 0) == 0 ? parent + child : parent + ">" + child);
  }
  std::sort(bag.items.begin(), bag.items.end());
  return bag;
}

// ---------------------------------------------------------------------------
// Templates

namespace {

enum class Role { None, Table, Column, Alias, Function };

int clause_rank(const std::string& clause) {
  static const std::map<std::string, int> ranks = {{"SELECT", 0}, {"FROM", 1},     {"WHERE", 2}, {"GROUP BY", 3},
                                                   {"HAVING", 4}, {"ORDER BY", 5}, {"LIMIT", 6}};
  auto it = ranks.find(clause);
  return it == ranks.end() ? -1 : it->second;
}

std::vector<Role> assign_roles(const std::vector<SqlToken>& t) {
  std::vector<Role> roles(t.size(), Role::None);
  std::vector<std::string> clause_stack{""};
  for (std::size_t i = 0; i < t.size(); ++i) {
    const SqlToken& tok = t[i];
    if (is_punct(tok, "(")) {
      clause_stack.push_back(clause_stack.back());
      continue;
    }
    if (is_punct(tok, ")")) {
      if (clause_stack.size() > 1) clause_stack.pop_back();
      continue;
    }
    if (is_clause_keyword(tok)) {
      clause_stack.back() = tok.value;
      continue;
    }
    if (tok.kind != SqlTokenKind::Identifier) continue;
    const SqlToken* prev = i > 0 ? &t[i - 1] : nullptr;
    if (next_is_open_paren(t, i)) {
      roles[i] = Role::Function;
    } else if (prev && is_kw(*prev, "AS")) {
      roles[i] = Role::Alias;
    } else if (clause_stack.back() == "FROM" && prev &&
               (is_kw(*prev, "FROM") || is_kw(*prev, "JOIN") || is_punct(*prev, ","))) {
      roles[i] = Role::Table;
    } else if (clause_stack.back() == "FROM" && prev &&
               ((prev->kind == SqlTokenKind::Identifier && roles[i - 1] == Role::Table) || is_punct(*prev, ")"))) {
      roles[i] = Role::Alias;
    } else {
      roles[i] = Role::Column;
    }
  }
  return roles;
}

std::size_t matching_paren(const std::vector<SqlToken>& t, std::size_t open, std::size_t end) {
  int depth = 0;
  for (std::size_t i = open; i < end; ++i) {
    if (is_punct(t[i], "(")) ++depth;
    if (is_punct(t[i], ")") && --depth == 0) return i;
  }
  return end;
}

// Appends token indices of [begin, end) in canonical clause order.
void canonical_order(const std::vector<SqlToken>& t, std::size_t begin, std::size_t end, std::vector<std::size_t>& out);

void emit_segment(const std::vector<SqlToken>& t, std::size_t begin, std::size_t end, std::vector<std::size_t>& out) {
  for (std::size_t i = begin; i < end; ++i) {
    if (is_punct(t[i], "(") && i + 1 < end && is_kw(t[i + 1], "SELECT")) {
      const std::size_t close = matching_paren(t, i, end);
      out.push_back(i);
      canonical_order(t, i + 1, close, out);
      if (close < end) out.push_back(close);
      i = close;
      continue;
    }
    out.push_back(i);
  }
}

void canonical_order(const std::vector<SqlToken>& t, std::size_t begin, std::size_t end, std::vector<std::size_t>& out) {
  std::size_t core_begin = begin;
  auto flush_core = [&](std::size_t core_end) {
    struct Segment {
      int rank;
      std::size_t begin;
      std::size_t end;
    };
    std::vector<Segment> segments;
    int depth = 0;
    for (std::size_t i = core_begin; i < core_end; ++i) {
      if (is_punct(t[i], "(")) ++depth;
      if (is_punct(t[i], ")")) --depth;
      if (depth == 0 && is_clause_keyword(t[i])) {
        if (!segments.empty()) segments.back().end = i;
        segments.push_back({clause_rank(t[i].value), i, core_end});
      } else if (segments.empty()) {
        segments.push_back({-1, i, core_end});
      }
    }
    std::stable_sort(segments.begin(), segments.end(), [](const Segment& a, const Segment& b) { return a.rank < b.rank; });
    for (const auto& s : segments) emit_segment(t, s.begin, s.end, out);
  };
  int depth = 0;
  for (std::size_t i = begin; i < end; ++i) {
    if (is_punct(t[i], "(")) ++depth;
    if (is_punct(t[i], ")")) --depth;
    if (depth == 0 && is_set_op(t[i])) {
      flush_core(i);
      out.push_back(i);
      core_begin = i + 1;
      if (core_begin < end && (is_kw(t[core_begin], "ALL") || is_kw(t[core_begin], "DISTINCT"))) {
        out.push_back(core_begin);
        ++core_begin;
      }
      i = core_begin - 1;
    }
  }
  flush_core(end);
}

}  // namespace

Template extract_template(const ProgramTokenization& tok) {
  const auto& t = tok.tokens;
  const std::vector<Role> roles = assign_roles(t);
  std::set<std::string> alias_names;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (roles[i] == Role::Alias) alias_names.insert(lower(t[i].text));
  }
  std::vector<std::size_t> order;
  canonical_order(t, 0, t.size(), order);

  std::map<std::string, std::size_t> tables, columns, aliases;
  std::size_t literals = 0;
  auto slot = [](std::map<std::string, std::size_t>& m, const std::string& name, const char* prefix) {
    auto [it, inserted] = m.emplace(lower(name), m.size());
    return std::string(prefix) + std::to_string(it->second);
  };
  std::vector<SqlToken> reordered;
  std::vector<std::string> lexemes;
  for (std::size_t idx : order) {
    const SqlToken& tok_i = t[idx];
    reordered.push_back(tok_i);
    std::string lex;
    switch (tok_i.kind) {
      case SqlTokenKind::Keyword: lex = tok_i.value; break;
      case SqlTokenKind::Literal:
        lex = literal_placeholder(tok_i);
        ++literals;
        break;
      case SqlTokenKind::Operator:
      case SqlTokenKind::Punctuation: lex = tok_i.text; break;
      case SqlTokenKind::Identifier: {
        const std::string& name = tok_i.text;
        switch (roles[idx]) {
          case Role::Function: lex = lower(name); break;
          case Role::Table: lex = slot(tables, column_name(name), "table"); break;
          case Role::Alias: lex = slot(aliases, name, "alias"); break;
          default: {
            const std::size_t dot = name.rfind('.');
            if (dot == std::string::npos) {
              lex = slot(columns, name, "col");
            } else {
              const std::string qualifier = name.substr(0, dot);
              const std::string col = name.substr(dot + 1);
              lex = alias_names.count(lower(qualifier)) ? slot(aliases, qualifier, "alias")
                                                       : slot(tables, qualifier, "table");
              lex += "." + (col == "*" ? std::string("*") : slot(columns, col, "col"));
            }
          }
        }
        break;
      }
    }
    lexemes.push_back(std::move(lex));
  }
  Template out;
  out.canonical = join_canonical(reordered, [&](std::size_t i) { return lexemes[i]; });
  out.arity = tables.size() + columns.size() + aliases.size() + literals;
  return out;
}

// ---------------------------------------------------------------------------
// Hardness

std::string_view hardness_name(Hardness h) {
  switch (h) {
    case Hardness::Easy: return "easy";
    case Hardness::Medium: return "medium";
    case Hardness::Hard: return "hard";
    case Hardness::ExtraHard: return "extra_hard";
  }
  return "easy";
}

Hardness hardness_from_name(std::string_view name) {
  if (name == "easy") return Hardness::Easy;
  if (name == "medium") return Hardness::Medium;
  if (name == "hard") return Hardness::Hard;
  if (name == "extra_hard") return Hardness::ExtraHard;
  throw Error(ErrorCode::MalformedRecord, "unknown hardness `" + std::string(name) + "`");
}

Hardness hardness_level(const HardnessFeatures& f) {
  const int advanced = (f.joins > 0) + (f.aggregations > 0) + (f.group_by > 0) + (f.order_by > 0) + (f.having > 0) +
                       (f.where_conditions >= 2);
  if (f.nested > 0) return advanced >= 2 ? Hardness::ExtraHard : Hardness::Hard;
  if (advanced == 0) return Hardness::Easy;
  if (advanced <= 2) return Hardness::Medium;
  return Hardness::Hard;
}

HardnessRating rate_hardness(const ProgramTokenization& tok) {
  HardnessRating r;
  if (auto tree = parse_tree(tok)) {
    collect_features(*tree, nullptr, true, r.features);
  } else {
    r.features = fallback_features(tok);
  }
  r.level = hardness_level(r.features);
  return r;
}

ProgramStructure analyze_program(std::string_view program) {
  const ProgramTokenization tok = tokenize_sql(program);
  ProgramStructure s;
  s.parsed = program_parses(tok);
  s.atoms = extract_atoms(tok);
  s.compounds = extract_compounds(tok);
  s.tmpl = extract_template(tok);
  s.hardness = rate_hardness(tok);
  return s;
}

// ---------------------------------------------------------------------------
// Structure dump

StructureMap analyze_dataset(const Dataset& ds) {
  StructureMap out;
  for (const auto& ex : ds.examples) {
    if (!ex.target) throw Error(ErrorCode::MissingStructure, ex.id + " has no target program");
    try {
      out.emplace(ex.id, analyze_program(*ex.target));
    } catch (const Error& e) {
      throw Error(e.code(), "id " + ex.id + ": " + e.detail());
    }
  }
  return out;
}

namespace {

json features_json(const HardnessFeatures& f) {
  return json{{"joins", f.joins},       {"aggregations", f.aggregations}, {"group_by", f.group_by},
              {"order_by", f.order_by}, {"having", f.having},             {"nested", f.nested},
              {"where_conditions", f.where_conditions}};
}

}  // namespace

std::string serialize_structures(const StructureMap& structures) {
  std::string out;
  for (const auto& [id, s] : structures) {
    json j;
    j["id"] = id;
    j["atoms"] = s.atoms.items;
    j["compounds"] = s.compounds.items;
    j["template"] = s.tmpl.canonical;
    j["arity"] = s.tmpl.arity;
    j["hardness"] = hardness_name(s.hardness.level);
    j["features"] = features_json(s.hardness.features);
    j["parsed"] = s.parsed;
    out += j.dump();
    out += '\n';
  }
  return out;
}

StructureMap parse_structures(std::string_view text) {
  StructureMap out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "structure line " + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      if (j.is_object() && j.contains("_meta")) continue;  // provenance header
      ProgramStructure s;
      s.atoms.items = j.at("atoms").get<std::vector<std::string>>();
      s.compounds.items = j.at("compounds").get<std::vector<std::string>>();
      std::sort(s.atoms.items.begin(), s.atoms.items.end());
      std::sort(s.compounds.items.begin(), s.compounds.items.end());
      s.tmpl.canonical = j.at("template").get<std::string>();
      s.tmpl.arity = j.value("arity", std::size_t{0});
      s.hardness.level = hardness_from_name(j.at("hardness").get<std::string>());
      if (auto f = j.find("features"); f != j.end()) {
        auto& hf = s.hardness.features;
        hf.joins = f->value("joins", std::size_t{0});
        hf.aggregations = f->value("aggregations", std::size_t{0});
        hf.group_by = f->value("group_by", std::size_t{0});
        hf.order_by = f->value("order_by", std::size_t{0});
        hf.having = f->value("having", std::size_t{0});
        hf.nested = f->value("nested", std::size_t{0});
        hf.where_conditions = f->value("where_conditions", std::size_t{0});
      }
      s.parsed = j.value("parsed", true);
      const std::string id = j.at("id").get<std::string>();
      if (!out.emplace(id, std::move(s)).second) throw Error(ErrorCode::DuplicateId, id);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, where + ": " + e.what());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DuplicateId) throw;
      throw Error(ErrorCode::MalformedRecord, where + ": " + e.detail());
    }
  }
  return out;
}

StructureMap load_structures(const std::filesystem::path& path) { return parse_structures(read_file(path)); }

}  // namespace lsplit
