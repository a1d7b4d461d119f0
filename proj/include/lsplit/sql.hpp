#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lsplit/ingestion.hpp"

namespace lsplit {

enum class SqlTokenKind { Keyword, Identifier, Literal, Operator, Punctuation };
enum class LiteralKind { None, Number, String };

struct SqlToken {
  SqlTokenKind kind;
  std::string text;   // as written in the source
  std::string value;  // keywords upper-cased ("GROUP BY" merged), otherwise == text
  LiteralKind literal = LiteralKind::None;
  std::size_t offset = 0;

  friend bool operator==(const SqlToken&, const SqlToken&) = default;
};

struct ProgramTokenization {
  std::vector<SqlToken> tokens;
  std::string source;

  // Lexemes joined with canonical spacing: one space between tokens, none
  // before ) , . ; or after ( . and none between a function name and its '('.
  std::string render() const;
};

// Keywords are recognized case-insensitively from a fixed set; "GROUP BY" and
// "ORDER BY" become single keyword tokens. String literals use ' or " (a
// doubled quote escapes). Throws EmptyProgram for blank input and
// LexError("position N") for unterminated strings or stray characters.
ProgramTokenization tokenize_sql(std::string_view program);

enum class BagKind { Atom, Compound };

// Multiset of structure strings, stored sorted.
struct StructureBag {
  BagKind kind = BagKind::Atom;
  std::vector<std::string> items;

  std::set<std::string> distinct() const { return {items.begin(), items.end()}; }
  friend bool operator==(const StructureBag&, const StructureBag&) = default;
};

// Atoms: keywords, operators, function names (lower-cased), schema
// identifiers (qualified names reduced to their column), "*", and literals
// as <num> / <str>. Table aliases are not atoms.
StructureBag extract_atoms(const ProgramTokenization& tok);

// A compound is a parent/child pair of atoms in the shallow clause parse,
// written "parent>child":
//   clause -> item         SELECT>count, FROM>singer, WHERE>=, LIMIT><num>
//   function -> argument   count>*, max>age, count>DISTINCT, DISTINCT>name
//   operator -> operand    =>age, =><num>, AND>=, IN>NOT, BETWEEN>AND
//   table -> AS, JOIN -> table, JOIN -> ON, item -> ASC/DESC
//   subquery               <parent>>(SELECT), plus <clause>>(SELECT) for the
//                          enclosing clause of any nested query
//   select item x table    "<item>@<table>" for every SELECT item head and
//                          every table of the same query level
// Programs that do not parse fall back to "<keyword>><token>" pairs (the most
// recent keyword) and "ROOT><keyword>".
StructureBag extract_compounds(const ProgramTokenization& tok);

// The (parent, child) pairs behind extract_compounds, in traversal order.
std::vector<std::pair<std::string, std::string>> extract_compound_pairs(const ProgramTokenization& tok);

// Canonical template: clauses of each query level reordered to SELECT, FROM,
// WHERE, GROUP BY, HAVING, ORDER BY, LIMIT; keywords upper-cased; function
// names lower-cased; tables, columns and aliases replaced by table<i>,
// col<i>, alias<i> in first-occurrence order of the reordered program;
// literals replaced by <num> / <str>.
struct Template {
  std::string canonical;
  std::size_t arity = 0;  // identifier slots plus literal slots

  friend bool operator==(const Template&, const Template&) = default;
};

Template extract_template(const ProgramTokenization& tok);

enum class Hardness { Easy, Medium, Hard, ExtraHard };

std::string_view hardness_name(Hardness h);
Hardness hardness_from_name(std::string_view name);

struct HardnessFeatures {
  std::size_t joins = 0;             // extra table references per FROM clause
  std::size_t aggregations = 0;      // count/sum/avg/min/max calls
  std::size_t group_by = 0;
  std::size_t order_by = 0;
  std::size_t having = 0;
  std::size_t nested = 0;            // subqueries and set-operation operands
  std::size_t where_conditions = 0;  // predicates in WHERE and HAVING

  friend bool operator==(const HardnessFeatures&, const HardnessFeatures&) = default;
};

struct HardnessRating {
  Hardness level = Hardness::Easy;
  HardnessFeatures features;
};

// advanced = [joins>0] + [aggregations>0] + [group_by>0] + [order_by>0]
//          + [having>0] + [where_conditions>=2]
// nested:     extra_hard if advanced >= 2, else hard
// not nested: easy if advanced == 0, medium if advanced <= 2, else hard
Hardness hardness_level(const HardnessFeatures& f);
HardnessRating rate_hardness(const ProgramTokenization& tok);

struct ProgramStructure {
  StructureBag atoms{BagKind::Atom, {}};
  StructureBag compounds{BagKind::Compound, {}};
  Template tmpl;
  HardnessRating hardness;
  bool parsed = true;  // false when the clause parse failed and fallbacks were used
};

bool program_parses(const ProgramTokenization& tok);
ProgramStructure analyze_program(std::string_view program);

// Structure dump: one JSON object per line with id, atoms, compounds,
// template, arity, hardness and parsed. A leading {"_meta": {...}} line is
// skipped when parsing.
using StructureMap = std::map<std::string, ProgramStructure>;

// Analyzes every example's target. Examples without a target are an error
// (MissingStructure); lexing failures propagate.
StructureMap analyze_dataset(const Dataset& ds);
std::string serialize_structures(const StructureMap& structures);
StructureMap parse_structures(std::string_view text);
StructureMap load_structures(const std::filesystem::path& path);

}  // namespace lsplit
