#ifndef NL2SPARQL_CORPUS_HPP
#define NL2SPARQL_CORPUS_HPP

#include "nl2sparql/codec.hpp"
#include "nl2sparql/kb.hpp"
#include "nl2sparql/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Parallel corpus construction: template instantiation against a knowledge
// base, question tokenization, vocabulary building, splitting, persistence.
namespace nl2sparql::corpus {

class CorpusError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// The two template sides disagree about their placeholder sets.
class PlaceholderMismatch : public CorpusError {
public:
  using CorpusError::CorpusError;
};

/// Template file row is structurally broken (columns, assistant projection).
class TemplateError : public CorpusError {
public:
  using CorpusError::CorpusError;
};

/// A knowledge-base row cannot instantiate a template (missing variable,
/// wrong term kind, label unusable in a question).
class BindingError : public CorpusError {
public:
  using CorpusError::CorpusError;
};

class SplitError : public CorpusError {
public:
  using CorpusError::CorpusError;
};

/// Question and query files of one split disagree in length.
class AlignmentError : public CorpusError {
public:
  using CorpusError::CorpusError;
};

/// One template-file row: an English question pattern, a SPARQL pattern with
/// the same `<A>`-style placeholders, and the query that asks the knowledge
/// base for (entity, label) per placeholder.
struct TemplatePair {
  std::string nl_template;
  std::string sparql_template;
  std::vector<std::string> placeholders;    // in order of first use in the question
  std::string assistant_query;
  std::vector<std::string> assistant_vars;  // 2 per placeholder: entity, label
};

/// Reads the TSV template file (nl<TAB>sparql<TAB>assistant, '#' comments).
std::vector<TemplatePair> parse_templates(const std::filesystem::path& path);

/// One aligned example.
struct QQPair {
  std::string question;
  std::string query_raw;
  codec::EncodedQuery query_encoded;

  bool operator==(const QQPair&) const = default;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::vector<std::string> template_ids;
};

struct ParallelCorpus {
  std::vector<QQPair> pairs;
  Provenance provenance;
};

/// Fills one template from a knowledge-base row: placeholders become the
/// label text in the question (quotes and language tag stripped) and the
/// prefixed name of the entity in the query. The result is codec-encoded.
QQPair instantiate(const TemplatePair& tmpl, const kb::Binding& binding,
                   const codec::PrefixTable& prefixes,
                   const codec::ReplacementTable& replacements,
                   const codec::EncodeOptions& opts = {});

struct GenerateOptions {
  std::size_t cap_per_template = 600;
  std::uint64_t seed = 0;
  /// Acceptable label language tags, most preferred first. The empty string
  /// means an untagged literal. Rows with other tags are ignored.
  std::vector<std::string> label_langs = {"en", ""};
  /// Skip rows that cannot instantiate instead of throwing BindingError.
  bool skip_bad_bindings = false;
  codec::EncodeOptions encode_opts;
};

/// Instantiates every template against the knowledge base: per template the
/// rows are filtered by label language, shuffled by the seed, capped, and
/// instantiated; exact (question, query_raw) duplicates keep their first
/// occurrence. Templates without usable rows add a note to `warnings`.
ParallelCorpus generate(const std::vector<TemplatePair>& templates, kb::KnowledgeBase& kb,
                        const codec::PrefixTable& prefixes,
                        const codec::ReplacementTable& replacements,
                        const GenerateOptions& opts = {},
                        std::vector<std::string>* warnings = nullptr);

/// Whitespace tokenization with sentence punctuation (? ! , ' ") split off
/// at token edges. Periods act as delimiters and are dropped; with
/// `keep_inner_periods` only word-internal ones survive.
std::vector<std::string> tokenize_nl(std::string_view text, bool keep_inner_periods = false);

/// Token table with ids 0..3 pinned to <pad>, <s>, </s>, <unk>.
class Vocabulary {
public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;

  /// The four reserved tokens, by id.
  static const std::vector<std::string>& reserved();

  Vocabulary();  // reserved tokens only

  /// Ranks tokens by (frequency desc, token asc), drops those under
  /// `min_count`, keeps at most `max_size` beyond the reserved four.
  static Vocabulary build(const std::vector<std::vector<std::string>>& lines,
                          std::size_t min_count = 1,
                          std::optional<std::size_t> max_size = std::nullopt);

  /// Rebuilds a table from its id-ordered token list (reserved four first).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::size_t id) const;
  std::optional<std::size_t> find(std::string_view token) const;
  std::size_t id_or_unk(std::string_view token) const;
  std::vector<std::size_t> ids(const std::vector<std::string>& tokens) const;

  /// One token per line; the line number is the id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary&) const = default;

private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Question-side token lines of a corpus.
std::vector<std::vector<std::string>> question_token_lines(const ParallelCorpus& corpus,
                                                           bool keep_inner_periods = false);
/// Encoded-query-side token lines of a corpus.
std::vector<std::vector<std::string>> query_token_lines(const ParallelCorpus& corpus);

struct SplitSpec {
  enum class Mode { Ratio, Fixed };
  Mode mode = Mode::Ratio;
  double train_frac = 0.8, val_frac = 0.1, test_frac = 0.1;
  std::size_t val_count = 0, test_count = 0;
  std::uint64_t seed = 0;

  static SplitSpec ratio(double train, double val, double test, std::uint64_t seed = 0);
  static SplitSpec fixed(std::size_t val, std::size_t test, std::uint64_t seed = 0);
};

struct DatasetSplits {
  ParallelCorpus train, validation, test;
};

/// Seeded shuffle, then partition. Ratio mode sizes validation and test by
/// flooring their fractions; the remainder trains.
DatasetSplits split(const ParallelCorpus& corpus, const SplitSpec& spec);

/// Writes train/valid/test .nl and .sparql files, one pair per line, LF
/// endings, the query side space-joined in encoded form.
void write_corpus(const DatasetSplits& splits, const std::filesystem::path& dir);

/// Reads the six-file layout back; raw queries are recovered by decoding.
DatasetSplits read_corpus(const std::filesystem::path& dir,
                          const codec::PrefixTable& prefixes,
                          const codec::ReplacementTable& replacements);

using nl2sparql::SeededRng;
using nl2sparql::seeded_shuffle;

}  // namespace nl2sparql::corpus

#endif
