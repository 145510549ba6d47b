#ifndef NL2SPARQL_CODEC_HPP
#define NL2SPARQL_CODEC_HPP

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Reversible translation between a restricted SPARQL surface form and flat
// token sequences drawn from the alphabet [A-Za-z0-9_], suitable as the
// target side of a sequence-to-sequence model.
namespace nl2sparql::codec {

/// Base class for all codec failures.
class CodecError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised when the input query cannot be lexed over the supported subset.
class LexError : public CodecError {
public:
  using CodecError::CodecError;
};

/// Raised when an IRI is not covered by the prefix table (and raw
/// passthrough is disabled).
class UnknownNamespace : public CodecError {
public:
  using CodecError::CodecError;
};

/// Raised by decode on a token that matches no reserved form, variable,
/// literal frame, or known prefix label.
class UnknownToken : public CodecError {
public:
  using CodecError::CodecError;
};

/// Raised when a prefix or replacement table violates its invariants.
class TableError : public CodecError {
public:
  using CodecError::CodecError;
};

/// True iff `token` is non-empty and matches [A-Za-z0-9_]+.
bool is_valid_token(std::string_view token);

/// Ordered mapping between prefix labels (e.g. "dbr") and namespace IRIs.
///
/// Labels must match [A-Za-z][A-Za-z0-9]* so that the first underscore of a
/// prefixed token separates label from local name unambiguously. Labels and
/// namespaces are both unique within a table.
class PrefixTable {
public:
  struct Entry {
    std::string label;
    std::string ns;
  };

  /// Adds an entry; throws TableError on an invalid label or a duplicate.
  void add(std::string label, std::string ns);

  /// Loads a table from a TSV file (label<TAB>namespace, '#' comments).
  static PrefixTable from_file(const std::filesystem::path& path);

  /// The handful of DBpedia namespaces used throughout the bundled data.
  static PrefixTable dbpedia_defaults();

  const std::vector<Entry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  /// Namespace for `label`, or nullptr if absent.
  const Entry* find_label(std::string_view label) const;

  /// Splits a full IRI at the longest matching namespace. Returns
  /// (label, local_name) or nullopt when no namespace is a prefix of `iri`.
  std::optional<std::pair<std::string, std::string>> shorten(std::string_view iri) const;

  /// Full IRI for label:local; throws TableError on an unknown label.
  std::string expand(std::string_view label, std::string_view local) const;

private:
  std::vector<Entry> entries_;
};

/// Bidirectional rules mapping SPARQL surface forms (keywords, punctuation,
/// comparison operators) to sequence tokens. Matching is longest-first, so
/// "ORDER BY" wins over any single-word rule and "<=" wins over "<".
class ReplacementTable {
public:
  struct Rule {
    std::string surface;
    std::string token;
  };

  /// The built-in rule set covering the supported operator subset.
  static ReplacementTable builtin();

  /// Built-in rules with overrides applied from a TSV file
  /// (surface<TAB>token, '#' comments). Overrides replace rules with the
  /// same surface; unknown surfaces are rejected.
  static ReplacementTable with_overrides(const std::filesystem::path& path);

  const std::vector<Rule>& rules() const { return rules_; }
  const Rule* by_surface(std::string_view surface) const;
  const Rule* by_token(std::string_view token) const;

private:
  void validate() const;
  std::vector<Rule> rules_;
};

/// A SPARQL query rendered as a flat token sequence. Tokens produced by
/// encode always match [A-Za-z0-9_]+; sequences loaded from third-party
/// datasets are carried verbatim.
struct EncodedQuery {
  std::vector<std::string> tokens;

  /// Tokens joined with single spaces.
  std::string joined() const;

  /// Splits a whitespace-separated token line (no validation).
  static EncodedQuery from_line(std::string_view line);

  bool operator==(const EncodedQuery&) const = default;
};

struct EncodeOptions {
  /// When true, IRIs outside the prefix table become iri_<escaped> tokens
  /// instead of raising UnknownNamespace.
  bool raw_iri_passthrough = false;
};

/// Encodes a SPARQL query over the supported subset into a token sequence.
/// PREFIX declarations are consumed (and may extend the table for this
/// query); every emitted token matches [A-Za-z0-9_]+.
EncodedQuery encode(std::string_view query, const PrefixTable& prefixes,
                    const ReplacementTable& replacements, const EncodeOptions& opts = {});

/// Inverse of encode: reconstructs the normalized query text.
std::string decode(const EncodedQuery& encoded, const PrefixTable& prefixes,
                   const ReplacementTable& replacements);

/// Canonical single-line form of a query: single-space separation,
/// upper-cased keywords, prefixed names for every IRI the table covers,
/// PREFIX declarations folded away. Satisfies
/// decode(encode(q)) == normalize(q) and normalize(normalize(q)) ==
/// normalize(q).
std::string normalize(std::string_view query, const PrefixTable& prefixes,
                      const ReplacementTable& replacements, const EncodeOptions& opts = {});

/// Escapes a word so it matches [A-Za-z0-9]+ with '_' as the escape
/// character: every byte outside [A-Za-z0-9] becomes _XX (upper-case hex).
/// Used for literal content words, language tags and iri_ passthrough.
std::string escape_word(std::string_view word);

/// Inverse of escape_word; throws UnknownToken on a malformed escape.
std::string unescape_word(std::string_view word);

}  // namespace nl2sparql::codec

#endif
