#ifndef NL2SPARQL_KB_HPP
#define NL2SPARQL_KB_HPP

#include "nl2sparql/codec.hpp"

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

// Knowledge-base access: an immutable in-memory triple store with a
// restricted SELECT evaluator, and a SPARQL-protocol HTTP client.
namespace nl2sparql::kb {

class KbError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Triple file or query parse failure; the message carries a line number.
class ParseError : public KbError {
public:
  using KbError::KbError;
};

/// The local evaluator only handles SELECT/DISTINCT/LIMIT over basic
/// triple patterns; anything else lands here.
class UnsupportedQuery : public KbError {
public:
  using KbError::KbError;
};

/// Transport-level failure after all retries.
class NetworkError : public KbError {
public:
  using KbError::KbError;
};

/// Endpoint answered with a non-success HTTP status.
class HttpError : public KbError {
public:
  HttpError(int status, const std::string& msg) : KbError(msg), status_(status) {}
  int status() const { return status_; }

private:
  int status_;
};

/// Endpoint answered 200 but the body is not a results document.
class MalformedResponse : public KbError {
public:
  using KbError::KbError;
};

enum class TermKind { Iri, Literal, Blank };

struct RdfTerm {
  TermKind kind = TermKind::Iri;
  std::string value;     // IRI text, literal content, or blank node label
  std::string lang;      // literals only
  std::string datatype;  // literals only, full IRI

  static RdfTerm iri(std::string v) { return {TermKind::Iri, std::move(v), "", ""}; }
  static RdfTerm literal(std::string v, std::string lang = "", std::string dt = "") {
    return {TermKind::Literal, std::move(v), std::move(lang), std::move(dt)};
  }
  static RdfTerm blank(std::string label) { return {TermKind::Blank, std::move(label), "", ""}; }

  auto operator<=>(const RdfTerm&) const = default;
};

/// One query solution: variable name (without '?') to term.
using Binding = std::map<std::string, RdfTerm>;

struct Triple {
  RdfTerm s, p, o;
  auto operator<=>(const Triple&) const = default;
};

/// A pattern position: either a concrete term or a variable name.
using TermOrVar = std::variant<RdfTerm, std::string>;

/// The query shape the local evaluator accepts:
/// SELECT [DISTINCT] (?v... | *) WHERE { patterns } [LIMIT n]
struct SelectQuery {
  bool distinct = false;
  std::optional<std::size_t> limit;
  std::vector<std::string> vars;  // projection order; empty never occurs ('*' expands)
  struct Pattern {
    TermOrVar s, p, o;
  };
  std::vector<Pattern> patterns;

  /// Parses the restricted form; prefixed names expand through `prefixes`.
  /// Throws UnsupportedQuery on anything outside the shape above.
  static SelectQuery parse(std::string_view text, const codec::PrefixTable& prefixes);
};

/// Immutable collection of triples with subject and predicate indexes.
class TripleStore {
public:
  TripleStore() = default;
  explicit TripleStore(std::vector<Triple> triples);

  /// Loads an N-Triples style file: `<s> <p> <o> .` per line, objects may be
  /// IRIs, quoted literals (optionally @lang or ^^<datatype>) or _:blank
  /// nodes. '#' starts a comment line. Throws ParseError with line numbers.
  static TripleStore load(const std::filesystem::path& path);

  std::size_t size() const { return triples_.size(); }
  const std::vector<Triple>& triples() const { return triples_; }

  /// Indexes of triples with this subject (empty vector when absent).
  const std::vector<std::size_t>& by_subject(const RdfTerm& s) const;
  const std::vector<std::size_t>& by_predicate(const RdfTerm& p) const;

private:
  std::vector<Triple> triples_;
  std::map<RdfTerm, std::vector<std::size_t>> subject_index_;
  std::map<RdfTerm, std::vector<std::size_t>> predicate_index_;
};

/// Evaluates the restricted SELECT form against the store: every assignment
/// of the pattern variables such that all patterns, substituted, are triples
/// of the store. Rows are sorted lexicographically by the projected terms,
/// then deduplicated under DISTINCT, then truncated by LIMIT.
std::vector<Binding> query_local(const TripleStore& store, const SelectQuery& query);

/// Convenience: parse then evaluate.
std::vector<Binding> query_local(const TripleStore& store, std::string_view text,
                                 const codec::PrefixTable& prefixes);

struct EndpointConfig {
  std::string url;             // e.g. http://localhost:8890/sparql
  int timeout_s = 30;
  int max_retries = 3;         // additional attempts after the first
  int backoff_ms = 1000;       // doubles per retry: 1s, 2s, 4s by default
  std::size_t page_size = 1000;
  std::string cache_dir;       // empty disables response caching
};

/// Runs a SELECT against a SPARQL 1.1 protocol endpoint. Results are fetched
/// in LIMIT/OFFSET pages of `page_size` unless the query carries its own
/// LIMIT. Retries transport failures and 5xx answers with exponential
/// backoff; 4xx raises HttpError immediately. With a cache directory set,
/// complete responses are replayed from disk by (url, query) key.
std::vector<Binding> query_endpoint(const EndpointConfig& config, const std::string& query);

/// Uniform handle over the two query paths, so corpus generation does not
/// care where bindings come from.
class KnowledgeBase {
public:
  virtual ~KnowledgeBase() = default;
  virtual std::vector<Binding> select(const std::string& query) = 0;
};

class LocalKb final : public KnowledgeBase {
public:
  LocalKb(TripleStore store, codec::PrefixTable prefixes)
      : store_(std::move(store)), prefixes_(std::move(prefixes)) {}
  std::vector<Binding> select(const std::string& query) override {
    return query_local(store_, query, prefixes_);
  }
  const TripleStore& store() const { return store_; }

private:
  TripleStore store_;
  codec::PrefixTable prefixes_;
};

class EndpointKb final : public KnowledgeBase {
public:
  explicit EndpointKb(EndpointConfig config) : config_(std::move(config)) {}
  std::vector<Binding> select(const std::string& query) override {
    return query_endpoint(config_, query);
  }

private:
  EndpointConfig config_;
};

}  // namespace nl2sparql::kb

#endif
