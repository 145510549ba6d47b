#include "cli_support.hpp"

#include "nl2sparql/kb.hpp"
#include "nl2sparql/train.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

namespace nl2sparql::cli {

namespace fs = std::filesystem;

nmt::ModelConfig to_model_config(const RunConfig& cfg) {
  nmt::ModelConfig mc;
  mc.architecture = nmt::arch_from_string(cfg.architecture);
  mc.attention = nmt::attention_from_string(cfg.attention);
  mc.optimizer = nmt::optimizer_from_string(cfg.optimizer);
  mc.num_layers = cfg.num_layers;
  mc.hidden_units = cfg.hidden_units;
  mc.embed_dim = cfg.embed_dim;
  mc.bidirectional_first = cfg.bidirectional_first;
  mc.residual_from_layer = cfg.residual_from_layer;
  mc.heads = cfg.heads;
  mc.kernel_width = cfg.kernel_width;
  mc.local_window = cfg.local_window;
  mc.dropout = cfg.dropout;
  mc.lr = cfg.lr;
  mc.batch_size = cfg.batch_size;
  mc.max_epochs = cfg.max_epochs;
  mc.patience = cfg.patience;
  mc.beam_width = cfg.beam_width;
  mc.max_len = cfg.max_len;
  mc.seed = cfg.seed;
  mc.validate();
  return mc;
}

corpus::SplitSpec to_split_spec(const RunConfig& cfg) {
  if (cfg.split_mode == "ratio") {
    return corpus::SplitSpec::ratio(cfg.train_frac, cfg.val_frac, cfg.test_frac,
                                    cfg.split_seed);
  }
  if (cfg.split_mode == "fixed") {
    return corpus::SplitSpec::fixed(cfg.val_count, cfg.test_count, cfg.split_seed);
  }
  throw corpus::SplitError("unknown split mode '" + cfg.split_mode +
                           "' (valid: ratio, fixed)");
}

std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

void write_kv(const fs::path& path,
              const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [key, value] : entries) out << key << " = " << value << "\n";
}

std::vector<std::pair<std::string, std::string>> parse_kv_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(no) +
                               ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(no) + ": empty key");
    }
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

std::vector<std::pair<std::string, std::string>> train_kv(const RunConfig& cfg) {
  const auto n = [](std::size_t v) { return std::to_string(v); };
  return {
      {"data", cfg.data},
      {"out", cfg.out},
      {"prefixes", cfg.prefixes},
      {"replacements", cfg.replacements},
      {"vocab_min_count", n(cfg.vocab_min_count)},
      {"vocab_max_size", n(cfg.vocab_max_size)},
      {"architecture", cfg.architecture},
      {"attention", cfg.attention},
      {"optimizer", cfg.optimizer},
      {"num_layers", n(cfg.num_layers)},
      {"hidden_units", n(cfg.hidden_units)},
      {"embed_dim", n(cfg.embed_dim)},
      {"bidirectional_first", cfg.bidirectional_first ? "true" : "false"},
      {"residual_from_layer", n(cfg.residual_from_layer)},
      {"heads", n(cfg.heads)},
      {"kernel_width", n(cfg.kernel_width)},
      {"local_window", n(cfg.local_window)},
      {"dropout", fmt_double(cfg.dropout)},
      {"lr", fmt_double(cfg.lr)},
      {"batch_size", n(cfg.batch_size)},
      {"max_epochs", n(cfg.max_epochs)},
      {"patience", n(cfg.patience)},
      {"beam_width", n(cfg.beam_width)},
      {"max_len", n(cfg.max_len)},
      {"seed", std::to_string(cfg.seed)},
  };
}

namespace {

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size()) {
    throw nmt::ConfigError("config key '" + key + "' needs a non-negative integer, got '" +
                           value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size()) {
    throw nmt::ConfigError("config key '" + key + "' needs a number, got '" + value + "'");
  }
  return out;
}

bool parse_switch(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw nmt::ConfigError("config key '" + key + "' needs true or false, got '" + value +
                         "'");
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "data") {
    cfg.data = value;
  } else if (key == "out") {
    cfg.out = value;
  } else if (key == "prefixes") {
    cfg.prefixes = value;
  } else if (key == "replacements") {
    cfg.replacements = value;
  } else if (key == "vocab_min_count") {
    cfg.vocab_min_count = parse_count(key, value);
  } else if (key == "vocab_max_size") {
    cfg.vocab_max_size = parse_count(key, value);
  } else if (key == "architecture") {
    cfg.architecture = value;
  } else if (key == "attention") {
    cfg.attention = value;
  } else if (key == "optimizer") {
    cfg.optimizer = value;
  } else if (key == "num_layers") {
    cfg.num_layers = parse_count(key, value);
  } else if (key == "hidden_units") {
    cfg.hidden_units = parse_count(key, value);
  } else if (key == "embed_dim") {
    cfg.embed_dim = parse_count(key, value);
  } else if (key == "bidirectional_first") {
    cfg.bidirectional_first = parse_switch(key, value);
  } else if (key == "residual_from_layer") {
    cfg.residual_from_layer = parse_count(key, value);
  } else if (key == "heads") {
    cfg.heads = parse_count(key, value);
  } else if (key == "kernel_width") {
    cfg.kernel_width = parse_count(key, value);
  } else if (key == "local_window") {
    cfg.local_window = parse_count(key, value);
  } else if (key == "dropout") {
    cfg.dropout = parse_real(key, value);
  } else if (key == "lr") {
    cfg.lr = parse_real(key, value);
  } else if (key == "batch_size") {
    cfg.batch_size = parse_count(key, value);
  } else if (key == "max_epochs") {
    cfg.max_epochs = parse_count(key, value);
  } else if (key == "patience") {
    cfg.patience = parse_count(key, value);
  } else if (key == "beam_width") {
    cfg.beam_width = parse_count(key, value);
  } else if (key == "max_len") {
    cfg.max_len = parse_count(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_count(key, value);
  } else {
    throw nmt::ConfigError("unknown config key '" + key + "'");
  }
}

codec::PrefixTable load_prefixes(const RunConfig& cfg) {
  if (cfg.prefixes.empty()) return codec::PrefixTable::dbpedia_defaults();
  return codec::PrefixTable::from_file(cfg.prefixes);
}

codec::ReplacementTable load_replacements(const RunConfig& cfg) {
  if (cfg.replacements.empty()) return codec::ReplacementTable::builtin();
  return codec::ReplacementTable::with_overrides(cfg.replacements);
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw corpus::CorpusError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

corpus::ParallelCorpus read_pairs(const fs::path& nl_path, const fs::path& sparql_path,
                                  const codec::PrefixTable& prefixes,
                                  const codec::ReplacementTable& replacements) {
  const auto questions = read_lines(nl_path);
  const auto queries = read_lines(sparql_path);
  if (questions.size() != queries.size()) {
    throw corpus::AlignmentError(nl_path.string() + " has " +
                                 std::to_string(questions.size()) + " lines but " +
                                 sparql_path.string() + " has " +
                                 std::to_string(queries.size()));
  }
  corpus::ParallelCorpus out;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    corpus::QQPair pair;
    pair.question = questions[i];
    pair.query_encoded = codec::EncodedQuery::from_line(queries[i]);
    try {
      pair.query_raw = codec::decode(pair.query_encoded, prefixes, replacements);
    } catch (const codec::CodecError& e) {
      throw codec::UnknownToken(sparql_path.string() + ":" + std::to_string(i + 1) +
                                ": " + e.what());
    }
    out.pairs.push_back(std::move(pair));
  }
  return out;
}

void write_pairs(const corpus::ParallelCorpus& corpus, const fs::path& nl_path,
                 const fs::path& sparql_path) {
  std::ofstream nl(nl_path, std::ios::binary);
  std::ofstream sparql(sparql_path, std::ios::binary);
  if (!nl || !sparql) {
    throw corpus::CorpusError("cannot write " + nl_path.string() + " / " +
                              sparql_path.string());
  }
  for (const auto& pair : corpus.pairs) {
    nl << pair.question << "\n";
    sparql << pair.query_encoded.joined() << "\n";
  }
}

std::string quote_sh(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += "'";
  return out;
}

std::string self_exe_path(const char* argv0) {
  std::error_code ec;
  fs::path exe = fs::read_symlink("/proc/self/exe", ec);
  if (!ec) return exe.string();
  return argv0 ? argv0 : "nl2sparql";
}

int exit_code_for(const std::exception& e) {
  // Input-shaped knowledge base problems before the service bucket.
  if (dynamic_cast<const kb::ParseError*>(&e)) return 2;
  if (dynamic_cast<const kb::UnsupportedQuery*>(&e)) return 2;
  if (dynamic_cast<const kb::KbError*>(&e)) return 3;
  if (dynamic_cast<const nmt::NumericError*>(&e)) return 4;
  return 2;
}

}  // namespace nl2sparql::cli
