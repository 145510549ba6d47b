#include "nl2sparql/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace nl2sparql::corpus {
namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cols.push_back(line.substr(start));
      return cols;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

// `<A>`-style placeholders, unique, in order of first appearance
std::vector<std::string> placeholders_of(const std::string& text) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i + 2 < text.size(); ++i) {
    if (text[i] != '<') continue;
    std::size_t j = i + 1;
    while (j < text.size() && text[j] >= 'A' && text[j] <= 'Z') ++j;
    if (j == i + 1 || j >= text.size() || text[j] != '>') continue;
    std::string name = text.substr(i + 1, j - i - 1);
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      names.push_back(std::move(name));
    }
    i = j;
  }
  return names;
}

// Head-scan for the projection list; the body can use SPARQL features the
// codec never sees, so this deliberately avoids the full lexer.
std::vector<std::string> assistant_projection(const std::string& query) {
  std::istringstream in(query);
  std::string word;
  auto lower = [](std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  while (in >> word && lower(word) != "select") {
  }
  std::vector<std::string> vars;
  while (in >> word) {
    if (vars.empty() && lower(word) == "distinct") continue;
    if (word.size() < 2 || word[0] != '?') break;
    std::string name = word.substr(1);
    for (char c : name) {
      if (std::isalnum(static_cast<unsigned char>(c)) == 0 && c != '_') {
        throw TemplateError("malformed variable '" + word + "' in an assistant query");
      }
    }
    vars.push_back(std::move(name));
  }
  return vars;
}

void replace_all(std::string& text, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

// --- templates -------------------------------------------------------------------

std::vector<TemplatePair> parse_templates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open template file: " + path.string());
  std::vector<TemplatePair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const std::string loc = path.string() + ":" + std::to_string(lineno) + ": ";

    std::vector<std::string> cols = split_tabs(line);
    if (cols.size() != 3) {
      throw TemplateError(loc + "expected 3 tab-separated columns, got " +
                          std::to_string(cols.size()));
    }

    TemplatePair t;
    t.nl_template = cols[0];
    t.sparql_template = cols[1];
    t.assistant_query = cols[2];
    t.placeholders = placeholders_of(t.nl_template);
    std::vector<std::string> in_sparql = placeholders_of(t.sparql_template);
    if (t.placeholders.empty()) {
      throw PlaceholderMismatch(loc + "question template has no placeholders");
    }
    auto sorted = [](std::vector<std::string> v) {
      std::sort(v.begin(), v.end());
      return v;
    };
    if (sorted(t.placeholders) != sorted(in_sparql)) {
      throw PlaceholderMismatch(loc + "question and query use different placeholder sets");
    }
    try {
      t.assistant_vars = assistant_projection(t.assistant_query);
    } catch (const TemplateError& e) {
      throw TemplateError(loc + e.what());
    }
    if (t.assistant_vars.size() != 2 * t.placeholders.size()) {
      throw TemplateError(loc + "assistant query must project an entity and a label variable "
                                "per placeholder (" +
                          std::to_string(2 * t.placeholders.size()) + " expected, " +
                          std::to_string(t.assistant_vars.size()) + " found)");
    }
    out.push_back(std::move(t));
  }
  return out;
}

// --- instantiation ---------------------------------------------------------------

QQPair instantiate(const TemplatePair& tmpl, const kb::Binding& binding,
                   const codec::PrefixTable& prefixes,
                   const codec::ReplacementTable& replacements,
                   const codec::EncodeOptions& opts) {
  if (tmpl.placeholders.empty()) throw TemplateError("template has no placeholders");

  std::string question = tmpl.nl_template;
  std::string query = tmpl.sparql_template;
  for (std::size_t i = 0; i < tmpl.placeholders.size(); ++i) {
    const std::string& name = tmpl.placeholders[i];
    const std::string& entity_var = tmpl.assistant_vars[2 * i];
    const std::string& label_var = tmpl.assistant_vars[2 * i + 1];

    auto entity = binding.find(entity_var);
    if (entity == binding.end()) throw BindingError("row lacks variable ?" + entity_var);
    auto label = binding.find(label_var);
    if (label == binding.end()) throw BindingError("row lacks variable ?" + label_var);
    if (entity->second.kind != kb::TermKind::Iri) {
      throw BindingError("entity for <" + name + "> is not an IRI");
    }
    if (label->second.kind != kb::TermKind::Literal) {
      throw BindingError("label for <" + name + "> is not a literal");
    }
    if (label->second.value.find('\n') != std::string::npos) {
      throw BindingError("label for <" + name + "> contains a line break");
    }

    auto shortened = prefixes.shorten(entity->second.value);
    if (!shortened) {
      throw codec::UnknownNamespace("no prefix covers IRI: " + entity->second.value);
    }
    replace_all(question, "<" + name + ">", label->second.value);
    replace_all(query, "<" + name + ">", shortened->first + ":" + shortened->second);
  }
  if (question.find_first_not_of(" \t") == std::string::npos) {
    throw BindingError("instantiated question is empty");
  }

  QQPair pair;
  pair.question = std::move(question);
  pair.query_raw = query;
  pair.query_encoded = codec::encode(query, prefixes, replacements, opts);
  return pair;
}

ParallelCorpus generate(const std::vector<TemplatePair>& templates, kb::KnowledgeBase& kb,
                        const codec::PrefixTable& prefixes,
                        const codec::ReplacementTable& replacements,
                        const GenerateOptions& opts, std::vector<std::string>* warnings) {
  ParallelCorpus corpus;
  corpus.provenance.seed = opts.seed;
  auto warn = [&](std::string msg) {
    if (warnings != nullptr) warnings->push_back(std::move(msg));
  };

  std::map<std::string, std::size_t> lang_rank;
  for (std::size_t i = 0; i < opts.label_langs.size(); ++i) {
    lang_rank.emplace(opts.label_langs[i], i);
  }

  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t ti = 0; ti < templates.size(); ++ti) {
    const TemplatePair& t = templates[ti];
    const std::string tag = "template " + std::to_string(ti + 1) + " (" + t.nl_template + ")";
    corpus.provenance.template_ids.push_back(t.nl_template);

    std::vector<kb::Binding> rows = kb.select(t.assistant_query);

    // One candidate row per entity combination, labels in the most preferred
    // language winning. Rows with labels outside the accepted languages are
    // dropped silently; structurally unusable rows are errors unless skipped.
    struct Candidate {
      std::vector<std::size_t> ranks;
      std::size_t row;
    };
    std::vector<std::string> key_order;
    std::map<std::string, Candidate> best;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::string key;
      std::vector<std::size_t> ranks;
      bool usable = true;
      for (std::size_t i = 0; usable && i < t.placeholders.size(); ++i) {
        auto entity = rows[r].find(t.assistant_vars[2 * i]);
        auto label = rows[r].find(t.assistant_vars[2 * i + 1]);
        if (entity == rows[r].end() || label == rows[r].end() ||
            label->second.kind != kb::TermKind::Literal) {
          if (!opts.skip_bad_bindings) {
            instantiate(t, rows[r], prefixes, replacements, opts.encode_opts);  // throws
          }
          warn(tag + ": skipped a structurally unusable row");
          usable = false;
          break;
        }
        auto rank = lang_rank.find(label->second.lang);
        if (rank == lang_rank.end()) {
          usable = false;  // language filter, silent
          break;
        }
        ranks.push_back(rank->second);
        key += entity->second.value;
        key += '\x1f';
      }
      if (!usable) continue;
      auto it = best.find(key);
      if (it == best.end()) {
        key_order.push_back(key);
        best.emplace(std::move(key), Candidate{std::move(ranks), r});
      } else if (ranks < it->second.ranks) {
        it->second.ranks = std::move(ranks);
        it->second.row = r;
      }
    }

    std::vector<std::size_t> picked;
    picked.reserve(key_order.size());
    for (const auto& key : key_order) picked.push_back(best.at(key).row);
    seeded_shuffle(picked, opts.seed + (ti + 1) * 0x9E3779B97F4A7C15ull);
    if (picked.size() > opts.cap_per_template) picked.resize(opts.cap_per_template);

    std::size_t made = 0;
    for (std::size_t r : picked) {
      QQPair pair;
      try {
        pair = instantiate(t, rows[r], prefixes, replacements, opts.encode_opts);
      } catch (const CorpusError& e) {
        if (!opts.skip_bad_bindings) throw;
        warn(tag + ": " + e.what());
        continue;
      } catch (const codec::CodecError& e) {
        if (!opts.skip_bad_bindings) throw;
        warn(tag + ": " + e.what());
        continue;
      }
      ++made;
      if (seen.emplace(pair.question, pair.query_raw).second) {
        corpus.pairs.push_back(std::move(pair));
      }
    }
    if (made == 0) warn(tag + ": produced no usable bindings");
  }
  return corpus;
}

// --- tokenization ----------------------------------------------------------------

std::vector<std::string> tokenize_nl(std::string_view text, bool keep_inner_periods) {
  static const std::string_view kEdgePunct = "?!,'\"";
  std::vector<std::string> tokens;

  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])) != 0) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j])) == 0) ++j;
    std::string_view chunk = text.substr(i, j - i);
    i = j;

    // peel sentence punctuation off both edges; periods at the edges vanish
    std::vector<std::string> lead, trail;
    while (!chunk.empty() &&
           (kEdgePunct.find(chunk.front()) != std::string_view::npos || chunk.front() == '.')) {
      if (chunk.front() != '.') lead.emplace_back(1, chunk.front());
      chunk.remove_prefix(1);
    }
    while (!chunk.empty() &&
           (kEdgePunct.find(chunk.back()) != std::string_view::npos || chunk.back() == '.')) {
      if (chunk.back() != '.') trail.emplace_back(1, chunk.back());
      chunk.remove_suffix(1);
    }

    for (auto& p : lead) tokens.push_back(std::move(p));
    if (keep_inner_periods) {
      if (!chunk.empty()) tokens.emplace_back(chunk);
    } else {
      std::size_t start = 0;
      while (start <= chunk.size()) {
        std::size_t dot = chunk.find('.', start);
        if (dot == std::string_view::npos) dot = chunk.size();
        if (dot > start) tokens.emplace_back(chunk.substr(start, dot - start));
        start = dot + 1;
      }
    }
    for (auto it = trail.rbegin(); it != trail.rend(); ++it) tokens.push_back(std::move(*it));
  }
  return tokens;
}

// --- vocabulary ------------------------------------------------------------------

const std::vector<std::string>& Vocabulary::reserved() {
  static const std::vector<std::string> r = {"<pad>", "<s>", "</s>", "<unk>"};
  return r;
}

Vocabulary::Vocabulary() : tokens_(reserved()) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& lines,
                             std::size_t min_count, std::optional<std::size_t> max_size) {
  std::map<std::string, std::size_t> freq;
  for (const auto& line : lines) {
    for (const auto& tok : line) {
      if (std::find(reserved().begin(), reserved().end(), tok) != reserved().end()) continue;
      ++freq[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  for (const auto& [tok, count] : ranked) {
    if (count < min_count) continue;
    if (max_size && v.tokens_.size() - reserved().size() >= *max_size) break;
    v.index_.emplace(tok, v.tokens_.size());
    v.tokens_.push_back(tok);
  }
  return v;
}

const std::string& Vocabulary::token(std::size_t id) const { return tokens_.at(id); }

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::id_or_unk(std::string_view token) const {
  return find(token).value_or(kUnk);
}

std::vector<std::size_t> Vocabulary::ids(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id_or_unk(t));
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write vocabulary file: " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < reserved().size() ||
      !std::equal(reserved().begin(), reserved().end(), tokens.begin())) {
    throw CorpusError("vocabulary must start with the four reserved tokens");
  }
  Vocabulary v;
  for (std::size_t i = reserved().size(); i < tokens.size(); ++i) {
    if (tokens[i].empty()) {
      throw CorpusError("empty vocabulary entry at position " + std::to_string(i + 1));
    }
    auto [it, inserted] = v.index_.emplace(tokens[i], v.tokens_.size());
    if (!inserted) throw CorpusError("duplicate vocabulary entry '" + tokens[i] + "'");
    v.tokens_.push_back(tokens[i]);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  try {
    return from_tokens(read_lines(path));
  } catch (const CorpusError& e) {
    throw CorpusError(std::string(e.what()) + ": " + path.string());
  }
}

std::vector<std::vector<std::string>> question_token_lines(const ParallelCorpus& corpus,
                                                           bool keep_inner_periods) {
  std::vector<std::vector<std::string>> out;
  out.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) out.push_back(tokenize_nl(p.question, keep_inner_periods));
  return out;
}

std::vector<std::vector<std::string>> query_token_lines(const ParallelCorpus& corpus) {
  std::vector<std::vector<std::string>> out;
  out.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) out.push_back(p.query_encoded.tokens);
  return out;
}

// --- splitting -------------------------------------------------------------------

SplitSpec SplitSpec::ratio(double train, double val, double test, std::uint64_t seed) {
  SplitSpec s;
  s.mode = Mode::Ratio;
  s.train_frac = train;
  s.val_frac = val;
  s.test_frac = test;
  s.seed = seed;
  return s;
}

SplitSpec SplitSpec::fixed(std::size_t val, std::size_t test, std::uint64_t seed) {
  SplitSpec s;
  s.mode = Mode::Fixed;
  s.val_count = val;
  s.test_count = test;
  s.seed = seed;
  return s;
}

DatasetSplits split(const ParallelCorpus& corpus, const SplitSpec& spec) {
  const std::size_t n = corpus.pairs.size();
  std::size_t n_val = 0, n_test = 0;
  if (spec.mode == SplitSpec::Mode::Ratio) {
    if (spec.train_frac <= 0 || spec.val_frac <= 0 || spec.test_frac <= 0) {
      throw SplitError("split fractions must all be positive");
    }
    double sum = spec.train_frac + spec.val_frac + spec.test_frac;
    if (sum < 1.0 - 1e-9 || sum > 1.0 + 1e-9) {
      throw SplitError("split fractions must sum to 1");
    }
    // the 1e-9 nudge wards off 0.1 * n landing just under an integer
    n_val = static_cast<std::size_t>(spec.val_frac * static_cast<double>(n) + 1e-9);
    n_test = static_cast<std::size_t>(spec.test_frac * static_cast<double>(n) + 1e-9);
  } else {
    if (spec.val_count + spec.test_count > n) {
      throw SplitError("corpus of " + std::to_string(n) + " pairs is too small for val=" +
                       std::to_string(spec.val_count) + " test=" +
                       std::to_string(spec.test_count));
    }
    n_val = spec.val_count;
    n_test = spec.test_count;
  }
  const std::size_t n_train = n - n_val - n_test;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  seeded_shuffle(order, spec.seed);

  DatasetSplits out;
  auto take = [&](std::size_t from, std::size_t count) {
    ParallelCorpus part;
    part.provenance = corpus.provenance;
    part.pairs.reserve(count);
    for (std::size_t i = from; i < from + count; ++i) {
      part.pairs.push_back(corpus.pairs[order[i]]);
    }
    return part;
  };
  out.train = take(0, n_train);
  out.validation = take(n_train, n_val);
  out.test = take(n_train + n_val, n_test);
  return out;
}

// --- persistence -----------------------------------------------------------------

namespace {

void write_one(const ParallelCorpus& part, const std::filesystem::path& dir,
               const std::string& stem) {
  std::ofstream nl(dir / (stem + ".nl"), std::ios::binary);
  std::ofstream sparql(dir / (stem + ".sparql"), std::ios::binary);
  if (!nl || !sparql) throw CorpusError("cannot write corpus files under " + dir.string());
  for (const auto& pair : part.pairs) {
    if (pair.question.find('\n') != std::string::npos) {
      throw CorpusError("question contains a line break: " + pair.question);
    }
    nl << pair.question << '\n';
    sparql << pair.query_encoded.joined() << '\n';
  }
}

ParallelCorpus read_one(const std::filesystem::path& dir, const std::string& stem,
                        const codec::PrefixTable& prefixes,
                        const codec::ReplacementTable& replacements) {
  std::vector<std::string> questions = read_lines(dir / (stem + ".nl"));
  std::vector<std::string> queries = read_lines(dir / (stem + ".sparql"));
  if (questions.size() != queries.size()) {
    throw AlignmentError(stem + " files disagree: " + std::to_string(questions.size()) +
                         " questions vs " + std::to_string(queries.size()) + " queries");
  }
  ParallelCorpus part;
  part.pairs.reserve(questions.size());
  for (std::size_t i = 0; i < questions.size(); ++i) {
    QQPair pair;
    pair.question = questions[i];
    pair.query_encoded = codec::EncodedQuery::from_line(queries[i]);
    pair.query_raw = codec::decode(pair.query_encoded, prefixes, replacements);
    part.pairs.push_back(std::move(pair));
  }
  return part;
}

}  // namespace

void write_corpus(const DatasetSplits& splits, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_one(splits.train, dir, "train");
  write_one(splits.validation, dir, "valid");
  write_one(splits.test, dir, "test");
}

DatasetSplits read_corpus(const std::filesystem::path& dir,
                          const codec::PrefixTable& prefixes,
                          const codec::ReplacementTable& replacements) {
  DatasetSplits out;
  out.train = read_one(dir, "train", prefixes, replacements);
  out.validation = read_one(dir, "valid", prefixes, replacements);
  out.test = read_one(dir, "test", prefixes, replacements);
  return out;
}

}  // namespace nl2sparql::corpus
