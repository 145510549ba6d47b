#ifndef NL2SPARQL_TOOLS_CLI_SUPPORT_HPP
#define NL2SPARQL_TOOLS_CLI_SUPPORT_HPP

#include "nl2sparql/codec.hpp"
#include "nl2sparql/corpus.hpp"
#include "nl2sparql/model.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

// Shared plumbing for the command line tool: the flat run configuration,
// key = value file helpers, and corpus file IO used by several subcommands.
namespace nl2sparql::cli {

/// Everything a run can configure, merged from defaults, an optional preset,
/// an optional config file, and command line flags (in that order).
struct RunConfig {
  // paths
  std::string templates;
  std::string kb;
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string prefixes;      // prefix table TSV, empty = built-in DBpedia set
  std::string replacements;  // replacement override TSV, empty = built-in rules

  // generation
  std::size_t cap = 600;
  bool skip_bad_bindings = false;
  bool raw_iri = false;

  // splitting
  std::string split_mode = "ratio";
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  std::size_t val_count = 100;
  std::size_t test_count = 100;
  std::uint64_t split_seed = 1;

  // vocabulary
  std::size_t vocab_min_count = 1;
  std::size_t vocab_max_size = 0;  // 0 keeps every token

  // model, mirroring nmt::ModelConfig field for field
  std::string architecture = "rnn";
  std::string attention = "none";
  std::string optimizer = "sgd";
  std::size_t num_layers = 2;
  std::size_t hidden_units = 128;
  std::size_t embed_dim = 128;
  bool bidirectional_first = false;
  std::size_t residual_from_layer = 0;
  std::size_t heads = 4;
  std::size_t kernel_width = 3;
  std::size_t local_window = 5;
  double dropout = 0.0;
  double lr = 1.0;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  std::size_t beam_width = 5;
  std::size_t max_len = 96;
  std::uint64_t seed = 1;
};

/// Converts the string-typed model fields, then validates the whole config.
nmt::ModelConfig to_model_config(const RunConfig& cfg);

/// Builds the split specification from split_mode and the sizing fields.
corpus::SplitSpec to_split_spec(const RunConfig& cfg);

/// Shortest round-trip decimal form of a double (to_chars).
std::string fmt_double(double v);

/// Writes `key = value` lines in the given order, LF endings.
void write_kv(const std::filesystem::path& path,
              const std::vector<std::pair<std::string, std::string>>& entries);

/// Parses a flat `key = value` file with '#' comments. Keys keep file order;
/// errors carry the 1-based line number.
std::vector<std::pair<std::string, std::string>> parse_kv_file(
    const std::filesystem::path& path);

/// The model and vocabulary keys of RunConfig as `key = value` pairs, the
/// exact set the train subcommand accepts from a config file.
std::vector<std::pair<std::string, std::string>> train_kv(const RunConfig& cfg);

/// Applies one config file entry to the matching RunConfig field. Throws
/// nmt::ConfigError on a key outside train_kv or an unparseable value.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

codec::PrefixTable load_prefixes(const RunConfig& cfg);
codec::ReplacementTable load_replacements(const RunConfig& cfg);

/// File lines without trailing CR, in order. Throws CorpusError when absent.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Reads an aligned question/query file pair (one example per line, query
/// side in encoded token form). Raw queries are recovered through the codec.
corpus::ParallelCorpus read_pairs(const std::filesystem::path& nl_path,
                                  const std::filesystem::path& sparql_path,
                                  const codec::PrefixTable& prefixes,
                                  const codec::ReplacementTable& replacements);

/// Writes the aligned pair files read back by read_pairs.
void write_pairs(const corpus::ParallelCorpus& corpus,
                 const std::filesystem::path& nl_path,
                 const std::filesystem::path& sparql_path);

/// Wraps a string in single quotes for /bin/sh.
std::string quote_sh(const std::string& s);

/// Absolute path of the running executable (falls back to argv0).
std::string self_exe_path(const char* argv0);

/// Maps a thrown exception onto the exit code contract: 2 for input and
/// configuration problems, 3 for knowledge base service failures, 4 for
/// numeric failures during training.
int exit_code_for(const std::exception& e);

}  // namespace nl2sparql::cli

#endif
