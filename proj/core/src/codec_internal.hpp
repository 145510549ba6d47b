#ifndef NL2SPARQL_CODEC_INTERNAL_HPP
#define NL2SPARQL_CODEC_INTERNAL_HPP

#include "nl2sparql/codec.hpp"

#include <string>
#include <string_view>
#include <vector>

// Lexer for the supported SPARQL subset, shared between the codec and the
// local query evaluator. Not installed.
namespace nl2sparql::codec::detail {

enum class LexKind {
  Keyword,       // canonical upper-case text, multiword merged ("ORDER BY")
  Prefix,        // the PREFIX keyword of a prologue declaration
  Var,           // ?name -> text holds "name"
  PrefixedName,  // label:local
  Iri,           // <...> -> text holds the IRI without angle brackets
  Literal,       // "..." with optional @lang
  Number,        // digit string
  Punct,         // one of { } ( ) . ; * < > <= >= = !=
};

struct Lexeme {
  LexKind kind;
  std::string text;    // keyword text, var name, IRI, literal content, digits, punct
  std::string second;  // local name for PrefixedName, language tag for Literal
  std::size_t pos = 0; // byte offset into the input, for diagnostics
};

/// Lexes a query; throws LexError with byte position on unsupported input.
std::vector<Lexeme> lex(std::string_view input);

/// Splits leading PREFIX declarations from the body and returns the body.
/// Declarations are appended to `table` (re-declaring a label with the same
/// namespace is allowed, with a different one is a TableError).
std::vector<Lexeme> strip_prologue(const std::vector<Lexeme>& lexemes, PrefixTable& table);

}  // namespace nl2sparql::codec::detail

#endif
