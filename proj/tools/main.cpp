#include "cli_support.hpp"
#include "presets.hpp"

#include "nl2sparql/decode.hpp"
#include "nl2sparql/kb.hpp"
#include "nl2sparql/train.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <thread>
#include <sys/wait.h>

namespace {

using namespace nl2sparql;
namespace fs = std::filesystem;
using cli::RunConfig;
using corpus::Vocabulary;

std::unique_ptr<kb::KnowledgeBase> open_kb(const RunConfig& cfg,
                                           const codec::PrefixTable& prefixes) {
  if (cfg.kb.rfind("http://", 0) == 0 || cfg.kb.rfind("https://", 0) == 0) {
    kb::EndpointConfig ec;
    ec.url = cfg.kb;
    const char* cache = std::getenv("NL2SPARQL_CACHE");
    ec.cache_dir = cache ? cache : (fs::path(cfg.out) / "kb_cache").string();
    return std::make_unique<kb::EndpointKb>(std::move(ec));
  }
  return std::make_unique<kb::LocalKb>(kb::TripleStore::load(cfg.kb), prefixes);
}

std::optional<std::size_t> vocab_cap(const RunConfig& cfg) {
  if (cfg.vocab_max_size == 0) return std::nullopt;
  return cfg.vocab_max_size;
}

int run_generate(const RunConfig& cfg) {
  const auto prefixes = cli::load_prefixes(cfg);
  const auto replacements = cli::load_replacements(cfg);
  const auto templates = corpus::parse_templates(cfg.templates);
  auto base = open_kb(cfg, prefixes);

  corpus::GenerateOptions opts;
  opts.cap_per_template = cfg.cap;
  opts.seed = cfg.seed;
  opts.skip_bad_bindings = cfg.skip_bad_bindings;
  opts.encode_opts.raw_iri_passthrough = cfg.raw_iri;

  std::vector<std::string> warnings;
  const auto data = corpus::generate(templates, *base, prefixes, replacements, opts,
                                     &warnings);

  const fs::path out(cfg.out);
  fs::create_directories(out);
  cli::write_pairs(data, out / "data.nl", out / "data.sparql");

  std::vector<std::pair<std::string, std::string>> manifest = {
      {"pairs", std::to_string(data.pairs.size())},
      {"templates", cfg.templates},
      {"kb", cfg.kb},
      {"cap", std::to_string(cfg.cap)},
      {"seed", std::to_string(cfg.seed)},
  };
  for (const auto& id : data.provenance.template_ids) manifest.emplace_back("template", id);
  for (const auto& w : warnings) manifest.emplace_back("warning", w);
  cli::write_kv(out / "manifest.txt", manifest);

  cli::write_kv(out / "run.cfg",
                {{"templates", cfg.templates},
                 {"kb", cfg.kb},
                 {"cap", std::to_string(cfg.cap)},
                 {"seed", std::to_string(cfg.seed)},
                 {"out", cfg.out},
                 {"skip_bad_bindings", cfg.skip_bad_bindings ? "true" : "false"},
                 {"raw_iri", cfg.raw_iri ? "true" : "false"},
                 {"prefixes", cfg.prefixes},
                 {"replacements", cfg.replacements}});

  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "generated " << data.pairs.size() << " pairs from " << templates.size()
            << " templates -> " << cfg.out << "\n";
  return 0;
}

int run_codec_lines(const RunConfig& cfg, bool encoding, const std::string& in_path,
                    const std::string& out_path) {
  const auto prefixes = cli::load_prefixes(cfg);
  const auto replacements = cli::load_replacements(cfg);
  codec::EncodeOptions eopts;
  eopts.raw_iri_passthrough = cfg.raw_iri;

  std::ifstream fin;
  if (!in_path.empty()) {
    fin.open(in_path, std::ios::binary);
    if (!fin) throw std::runtime_error("cannot open " + in_path);
  }
  std::istream& in = in_path.empty() ? std::cin : fin;

  std::ofstream fout;
  if (!out_path.empty()) {
    fout.open(out_path, std::ios::binary);
    if (!fout) throw std::runtime_error("cannot write " + out_path);
  }
  std::ostream& out = out_path.empty() ? std::cout : fout;

  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      out << "\n";  // blank lines pass through so alignment survives
      continue;
    }
    try {
      if (encoding) {
        out << codec::encode(line, prefixes, replacements, eopts).joined() << "\n";
      } else {
        out << codec::decode(codec::EncodedQuery::from_line(line), prefixes, replacements)
            << "\n";
      }
    } catch (const codec::CodecError& e) {
      std::cerr << (in_path.empty() ? "stdin" : in_path) << ":" << no << ": " << e.what()
                << "\n";
      return 2;
    }
  }
  return 0;
}

int run_split(const RunConfig& cfg) {
  const auto prefixes = cli::load_prefixes(cfg);
  const auto replacements = cli::load_replacements(cfg);
  const fs::path dir(cfg.data);
  const auto data = cli::read_pairs(dir / "data.nl", dir / "data.sparql", prefixes,
                                    replacements);
  const auto splits = corpus::split(data, cli::to_split_spec(cfg));

  fs::create_directories(cfg.out);
  corpus::write_corpus(splits, cfg.out);
  cli::write_kv(fs::path(cfg.out) / "run.cfg",
                {{"data", cfg.data},
                 {"out", cfg.out},
                 {"split_mode", cfg.split_mode},
                 {"train_frac", cli::fmt_double(cfg.train_frac)},
                 {"val_frac", cli::fmt_double(cfg.val_frac)},
                 {"test_frac", cli::fmt_double(cfg.test_frac)},
                 {"val_count", std::to_string(cfg.val_count)},
                 {"test_count", std::to_string(cfg.test_count)},
                 {"split_seed", std::to_string(cfg.split_seed)},
                 {"prefixes", cfg.prefixes},
                 {"replacements", cfg.replacements}});

  std::cout << "split " << data.pairs.size() << " pairs into " << splits.train.pairs.size()
            << "/" << splits.validation.pairs.size() << "/" << splits.test.pairs.size()
            << " -> " << cfg.out << "\n";
  return 0;
}

int run_vocab(const RunConfig& cfg, const std::string& side) {
  const fs::path dir(cfg.data);
  // Prefer the split layout so the vocabulary comes from training data only;
  // fall back to the flat generate layout.
  const std::string stem = fs::exists(dir / "train.nl") ? "train" : "data";
  const fs::path path = dir / (stem + (side == "nl" ? ".nl" : ".sparql"));

  std::vector<std::vector<std::string>> lines;
  for (const auto& line : cli::read_lines(path)) {
    if (side == "nl") {
      lines.push_back(corpus::tokenize_nl(line));
    } else {
      lines.push_back(codec::EncodedQuery::from_line(line).tokens);
    }
  }
  const auto vocab = Vocabulary::build(lines, cfg.vocab_min_count, vocab_cap(cfg));
  vocab.save(cfg.out);
  std::cout << "vocabulary of " << vocab.size() << " tokens (" << path.string() << ") -> "
            << cfg.out << "\n";
  return 0;
}

int run_train(const RunConfig& cfg) {
  const auto prefixes = cli::load_prefixes(cfg);
  const auto replacements = cli::load_replacements(cfg);
  const auto mc = cli::to_model_config(cfg);
  const auto splits = corpus::read_corpus(cfg.data, prefixes, replacements);

  const auto sv = Vocabulary::build(corpus::question_token_lines(splits.train),
                                    cfg.vocab_min_count, vocab_cap(cfg));
  const auto tv = Vocabulary::build(corpus::query_token_lines(splits.train),
                                    cfg.vocab_min_count, vocab_cap(cfg));
  auto model = nmt::build_model<float>(mc, sv, tv);

  const fs::path out(cfg.out);
  fs::create_directories(out);
  nmt::TrainOptions opts;
  opts.log = &std::cout;
  opts.checkpoint_path = out / "model.nsqm";
  const auto report = nmt::fit(*model, splits.train, splits.validation, opts);

  nmt::write_report_tsv(report, out / "report.tsv");
  cli::write_kv(out / "run.cfg", cli::train_kv(cfg));
  std::cout << "best epoch " << report.best_epoch << ", validation bleu "
            << cli::fmt_double(report.best_bleu)
            << (report.stopped_early ? " (stopped early)" : "") << "\n"
            << "checkpoint -> " << (out / "model.nsqm").string() << "\n";
  return 0;
}

int run_translate(const RunConfig& cfg, bool interactive) {
  const auto model = nmt::load_checkpoint(cfg.checkpoint);
  const auto prefixes = cli::load_prefixes(cfg);
  const auto replacements = cli::load_replacements(cfg);

  std::string line;
  std::size_t no = 0;
  while (true) {
    if (interactive) std::cerr << "nl> " << std::flush;
    if (!std::getline(std::cin, line)) break;
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      std::cout << "\n";
      continue;
    }
    const nmt::Translation t = nmt::translate(*model, line, prefixes, replacements);
    if (t.decode_ok) {
      std::cout << t.sparql << "\n";
    } else {
      // Emit the raw token sequence rather than dropping the line.
      std::string joined;
      for (const auto& tok : t.tokens) {
        if (!joined.empty()) joined += ' ';
        joined += tok;
      }
      std::cout << joined << "\n";
      std::cerr << "line " << no << ": " << t.error << "\n";
    }
    if (!t.finished) std::cerr << "line " << no << ": hit the length limit\n";
  }
  return 0;
}

std::vector<std::pair<std::string, std::string>> eval_kv(const nmt::EvalReport& rep) {
  return {{"pairs", std::to_string(rep.pairs)},
          {"bleu", cli::fmt_double(rep.bleu)},
          {"exact_match", cli::fmt_double(rep.exact_match)},
          {"token_f1", cli::fmt_double(rep.token_f1)},
          {"cross_entropy_bits", cli::fmt_double(rep.bits)},
          {"perplexity", cli::fmt_double(rep.ppl)}};
}

int run_evaluate(const RunConfig& cfg) {
  const auto model = nmt::load_checkpoint(cfg.checkpoint);
  const auto prefixes = cli::load_prefixes(cfg);
  const auto replacements = cli::load_replacements(cfg);
  const auto splits = corpus::read_corpus(cfg.data, prefixes, replacements);
  const auto rep = nmt::evaluate(*model, splits.test);

  const auto kv = eval_kv(rep);
  for (const auto& [key, value] : kv) std::cout << key << " = " << value << "\n";
  if (!cfg.out.empty()) {
    fs::create_directories(cfg.out);
    cli::write_kv(fs::path(cfg.out) / "eval.txt", kv);
    // A run directory already carries the config that produced the model;
    // only a fresh report directory gets the evaluation's own echo.
    if (!fs::exists(fs::path(cfg.out) / "run.cfg")) {
      cli::write_kv(fs::path(cfg.out) / "run.cfg",
                    {{"checkpoint", cfg.checkpoint}, {"data", cfg.data}, {"out", cfg.out}});
    }
  }
  return 0;
}

struct GridJob {
  std::string preset;
  std::string dataset;
  std::string seed;
  std::string label;  // preset__dataset__sN, also the run directory name
  fs::path dir;
};

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(value);
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

int run_experiment(const std::string& grid_path, const std::string& out_dir,
                   std::size_t jobs, const char* argv0) {
  std::vector<std::string> grid_presets, datasets, seeds = {"1"};
  std::vector<std::pair<std::string, std::string>> overrides;

  std::set<std::string> forwardable;
  for (const auto& [key, value] : cli::train_kv(RunConfig{})) {
    if (key != "data" && key != "out") forwardable.insert(key);
  }
  for (const auto& [key, value] : cli::parse_kv_file(grid_path)) {
    if (key == "presets") {
      grid_presets = split_list(value);
    } else if (key == "datasets") {
      datasets = split_list(value);
    } else if (key == "seeds") {
      seeds = split_list(value);
    } else if (forwardable.count(key)) {
      overrides.emplace_back(key, value);
    } else {
      throw nmt::ConfigError(grid_path + ": unknown grid key '" + key + "'");
    }
  }
  if (grid_presets.empty() || datasets.empty() || seeds.empty()) {
    throw nmt::ConfigError(grid_path + ": presets, datasets and seeds must be non-empty");
  }
  for (const auto& name : grid_presets) {
    RunConfig scratch;
    cli::apply_preset(scratch, name);  // report bad names before any run starts
  }

  // Dataset labels: basename, disambiguated by position when two collide.
  std::vector<std::string> ds_labels;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    std::string label = fs::path(datasets[i]).filename().string();
    if (label.empty()) label = "ds" + std::to_string(i + 1);
    for (std::size_t j = 0; j < i; ++j) {
      if (fs::path(datasets[j]).filename().string() == label) {
        label += "_" + std::to_string(i + 1);
        break;
      }
    }
    ds_labels.push_back(label);
  }

  std::vector<GridJob> grid;
  for (const auto& preset : grid_presets) {
    for (std::size_t d = 0; d < datasets.size(); ++d) {
      for (const auto& seed : seeds) {
        GridJob job;
        job.preset = preset;
        job.dataset = datasets[d];
        job.seed = seed;
        job.label = preset + "__" + ds_labels[d] + "__s" + seed;
        job.dir = fs::path(out_dir) / job.label;
        grid.push_back(std::move(job));
      }
    }
  }

  fs::create_directories(out_dir);
  const std::string self = cli::self_exe_path(argv0);
  std::vector<int> status(grid.size(), 0);
  std::vector<char> skipped(grid.size(), 0);
  std::atomic<std::size_t> cursor{0};

  auto worker = [&] {
    while (true) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= grid.size()) return;
      const GridJob& job = grid[i];
      if (fs::exists(job.dir / "eval.txt")) {
        skipped[i] = 1;  // a finished run resumes for free
        continue;
      }
      fs::create_directories(job.dir);
      const std::string log = (job.dir / "train.log").string();
      std::string cmd = cli::quote_sh(self) + " train --data " + cli::quote_sh(job.dataset) +
                        " --out " + cli::quote_sh(job.dir.string()) + " --preset " +
                        cli::quote_sh(job.preset) + " --seed " + job.seed;
      for (const auto& [key, value] : overrides) {
        cmd += " --" + key + " " + cli::quote_sh(value);
      }
      cmd += " > " + cli::quote_sh(log) + " 2>&1";
      cmd += " && " + cli::quote_sh(self) + " evaluate --checkpoint " +
             cli::quote_sh((job.dir / "model.nsqm").string()) + " --data " +
             cli::quote_sh(job.dataset) + " --out " + cli::quote_sh(job.dir.string()) +
             " >> " + cli::quote_sh(log) + " 2>&1";
      const int rc = std::system(cmd.c_str());
      status[i] = rc == -1 ? 2 : (WIFEXITED(rc) ? WEXITSTATUS(rc) : 2);
    }
  };

  std::vector<std::thread> pool;
  const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(jobs, 1),
                                                    grid.size());
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  // Collect every run directory that produced an evaluation, current or prior.
  struct Row {
    const GridJob* job;
    double bleu = 0.0;
    std::map<std::string, std::string> values;
  };
  std::vector<Row> rows;
  for (const auto& job : grid) {
    const fs::path eval = job.dir / "eval.txt";
    if (!fs::exists(eval)) continue;
    Row row;
    row.job = &job;
    for (const auto& [key, value] : cli::parse_kv_file(eval)) row.values[key] = value;
    row.bleu = std::stod(row.values.at("bleu"));
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.bleu != b.bleu) return a.bleu > b.bleu;
    return a.job->label < b.job->label;
  });

  {
    std::ofstream summary(fs::path(out_dir) / "summary.tsv", std::ios::binary);
    summary << "preset\tdataset\tseed\tbleu\texact_match\ttoken_f1\tperplexity\tdir\n";
    for (const auto& row : rows) {
      summary << row.job->preset << "\t" << row.job->dataset << "\t" << row.job->seed
              << "\t" << row.values.at("bleu") << "\t" << row.values.at("exact_match")
              << "\t" << row.values.at("token_f1") << "\t"
              << row.values.at("perplexity") << "\t" << row.job->dir.string() << "\n";
    }
  }

  auto join = [](const std::vector<std::string>& items) {
    std::string out;
    for (const auto& item : items) {
      if (!out.empty()) out += ", ";
      out += item;
    }
    return out;
  };
  std::vector<std::pair<std::string, std::string>> echo = {
      {"presets", join(grid_presets)},
      {"datasets", join(datasets)},
      {"seeds", join(seeds)},
      {"jobs", std::to_string(jobs)},
  };
  for (const auto& [key, value] : overrides) echo.emplace_back(key, value);
  cli::write_kv(fs::path(out_dir) / "run.cfg", echo);

  int failures = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (skipped[i]) {
      std::cout << grid[i].label << ": resumed\n";
    } else if (status[i] == 0) {
      std::cout << grid[i].label << ": ok\n";
    } else {
      ++failures;
      std::cout << grid[i].label << ": FAILED (exit " << status[i] << "), see "
                << (grid[i].dir / "train.log").string() << "\n";
    }
  }
  std::cout << rows.size() << "/" << grid.size() << " runs in summary -> "
            << (fs::path(out_dir) / "summary.tsv").string() << "\n";

  if (failures == 0) return 0;
  for (int code : {3, 4, 2}) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (status[i] == code) return code;
    }
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"English questions to SPARQL: template-generated corpora, a reversible "
               "query codec, and desk-scale neural translation models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "nl2sparql 0.1.0");

  RunConfig raw;
  int rc = 0;

  // generate ---------------------------------------------------------------
  auto* generate = app.add_subcommand(
      "generate", "Instantiate question/query templates against a knowledge base");
  generate->add_option("--templates", raw.templates, "Template TSV file")->required();
  generate
      ->add_option("--kb", raw.kb,
                   "Triples file, or SPARQL endpoint URL (http:// or https://)")
      ->required();
  generate->add_option("--cap", raw.cap, "Examples kept per template")
      ->capture_default_str();
  generate->add_option("--seed", raw.seed, "Sampling seed")->capture_default_str();
  generate->add_option("--out", raw.out, "Output directory")->required();
  generate->add_flag("--skip-bad-bindings", raw.skip_bad_bindings,
                     "Skip rows that cannot fill a template instead of failing");
  generate->add_flag("--raw-iri", raw.raw_iri,
                     "Encode IRIs outside the prefix table as iri_ tokens");
  generate->add_option("--prefixes", raw.prefixes, "Prefix table TSV override");
  generate->add_option("--replacements", raw.replacements,
                       "Replacement table TSV override");
  generate->callback([&] { rc = run_generate(raw); });

  // encode / decode ----------------------------------------------------------
  std::string io_in, io_out;
  auto* encode = app.add_subcommand("encode", "SPARQL text to token lines");
  auto* decode = app.add_subcommand("decode", "Token lines back to SPARQL text");
  for (auto* cmd : {encode, decode}) {
    cmd->add_option("--in", io_in, "Input file (default stdin)");
    cmd->add_option("--out", io_out, "Output file (default stdout)");
    cmd->add_option("--prefixes", raw.prefixes, "Prefix table TSV override");
    cmd->add_option("--replacements", raw.replacements, "Replacement table TSV override");
  }
  encode->add_flag("--raw-iri", raw.raw_iri,
                   "Encode IRIs outside the prefix table as iri_ tokens");
  encode->callback([&] { rc = run_codec_lines(raw, true, io_in, io_out); });
  decode->callback([&] { rc = run_codec_lines(raw, false, io_in, io_out); });

  // split --------------------------------------------------------------------
  auto* split = app.add_subcommand("split", "Partition a corpus into train/valid/test");
  split->add_option("--data", raw.data, "Directory holding data.nl and data.sparql")
      ->required();
  split->add_option("--out", raw.out, "Output directory")->required();
  split->add_option("--mode", raw.split_mode, "ratio or fixed")
      ->check(CLI::IsMember({"ratio", "fixed"}))
      ->capture_default_str();
  split->add_option("--train-frac", raw.train_frac, "Training fraction (ratio mode)")
      ->capture_default_str();
  split->add_option("--val-frac", raw.val_frac, "Validation fraction (ratio mode)")
      ->capture_default_str();
  split->add_option("--test-frac", raw.test_frac, "Test fraction (ratio mode)")
      ->capture_default_str();
  split->add_option("--val-count", raw.val_count, "Validation examples (fixed mode)")
      ->capture_default_str();
  split->add_option("--test-count", raw.test_count, "Test examples (fixed mode)")
      ->capture_default_str();
  split->add_option("--seed", raw.split_seed, "Shuffle seed")->capture_default_str();
  split->add_option("--prefixes", raw.prefixes, "Prefix table TSV override");
  split->add_option("--replacements", raw.replacements, "Replacement table TSV override");
  split->callback([&] { rc = run_split(raw); });

  // vocab ----------------------------------------------------------------------
  std::string vocab_side;
  auto* vocab = app.add_subcommand("vocab", "Write a token vocabulary file");
  vocab->add_option("--data", raw.data, "Corpus directory (split or generate layout)")
      ->required();
  vocab->add_option("--side", vocab_side, "nl or sparql")
      ->check(CLI::IsMember({"nl", "sparql"}))
      ->required();
  vocab->add_option("--min-count", raw.vocab_min_count, "Minimum token frequency")
      ->capture_default_str();
  vocab->add_option("--max-size", raw.vocab_max_size,
                    "Size cap beyond the reserved tokens, 0 = unlimited")
      ->capture_default_str();
  vocab->add_option("--out", raw.out, "Output vocabulary file")->required();
  vocab->callback([&] { rc = run_vocab(raw, vocab_side); });

  // train ----------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train a translation model on a split corpus");
  std::string config_path;
  train->add_option("--config", config_path,
                    "Flat key = value config file; precedence is defaults < preset < "
                    "file < flags");

  std::string preset_name;
  std::string preset_help = "Named preset applied before file and flag overrides:";
  for (const auto& [name, preset] : cli::presets()) {
    preset_help += "\n  " + name + ": " + preset.summary;
  }
  auto* preset_opt = train->add_option("--preset", preset_name, preset_help);

  // Each option lands in `raw`; after parsing, values the user actually set
  // are copied over the preset so precedence is defaults < preset < file <
  // flags (CLI11 already ranks file below flags).
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> takes;
  auto opt = [&](const std::string& name, auto member, const char* help) {
    CLI::Option* o = train->add_option(name, raw.*member, help)->capture_default_str();
    takes.emplace_back(o, [member, &raw](RunConfig& cfg) { cfg.*member = raw.*member; });
    return o;
  };
  auto flag = [&](const std::string& name, auto member, const char* help) {
    CLI::Option* o = train->add_flag(name, raw.*member, help);
    takes.emplace_back(o, [member, &raw](RunConfig& cfg) { cfg.*member = raw.*member; });
    return o;
  };
  // --data and --out may come from the config file, so neither is marked
  // required here; the callback checks the merged result instead.
  opt("--data", &RunConfig::data, "Split corpus directory");
  opt("--out", &RunConfig::out, "Run output directory");
  opt("--prefixes", &RunConfig::prefixes, "Prefix table TSV override");
  opt("--replacements", &RunConfig::replacements, "Replacement table TSV override");
  opt("--vocab_min_count", &RunConfig::vocab_min_count, "Minimum token frequency");
  opt("--vocab_max_size", &RunConfig::vocab_max_size, "Vocabulary cap, 0 = unlimited");
  opt("--architecture", &RunConfig::architecture, "rnn, conv or transformer");
  opt("--attention", &RunConfig::attention,
      "none, global_additive or local_multiplicative");
  opt("--optimizer", &RunConfig::optimizer, "sgd or adam");
  opt("--num_layers", &RunConfig::num_layers, "Encoder and decoder depth");
  opt("--hidden_units", &RunConfig::hidden_units, "Hidden state width");
  opt("--embed_dim", &RunConfig::embed_dim, "Embedding width");
  flag("--bidirectional_first", &RunConfig::bidirectional_first,
       "Run the first encoder layer in both directions (rnn)");
  opt("--residual_from_layer", &RunConfig::residual_from_layer,
      "First residual layer, 0 = off (rnn)");
  opt("--heads", &RunConfig::heads, "Attention heads (transformer)");
  opt("--kernel_width", &RunConfig::kernel_width, "Convolution kernel width (conv)");
  opt("--local_window", &RunConfig::local_window, "Local attention half-width (rnn)");
  opt("--dropout", &RunConfig::dropout, "Dropout rate");
  opt("--lr", &RunConfig::lr, "Learning rate");
  opt("--batch_size", &RunConfig::batch_size, "Examples per optimizer step");
  opt("--max_epochs", &RunConfig::max_epochs, "Epoch budget");
  opt("--patience", &RunConfig::patience, "Epochs without improvement before stopping");
  opt("--beam_width", &RunConfig::beam_width, "Beam width for decoding");
  opt("--max_len", &RunConfig::max_len, "Maximum decoded length");
  opt("--seed", &RunConfig::seed, "Initialization and shuffling seed");

  train->callback([&] {
    RunConfig cfg;
    if (preset_opt->count() > 0) cli::apply_preset(cfg, preset_name);
    if (!config_path.empty()) {
      for (const auto& [key, value] : cli::parse_kv_file(config_path)) {
        cli::apply_config_entry(cfg, key, value);
      }
    }
    for (const auto& [option, take] : takes) {
      if (option->count() > 0) take(cfg);
    }
    if (cfg.data.empty()) throw nmt::ConfigError("train needs --data (or data = in the config)");
    if (cfg.out.empty()) throw nmt::ConfigError("train needs --out (or out = in the config)");
    rc = run_train(cfg);
  });

  // translate -------------------------------------------------------------------
  bool interactive = false;
  auto* translate = app.add_subcommand(
      "translate", "Read questions from stdin, write one SPARQL query per line");
  translate->add_option("--checkpoint", raw.checkpoint, "Trained model file")->required();
  translate->add_flag("--interactive", interactive, "Prompt between questions");
  translate->add_option("--prefixes", raw.prefixes, "Prefix table TSV override");
  translate->add_option("--replacements", raw.replacements,
                        "Replacement table TSV override");
  translate->callback([&] { rc = run_translate(raw, interactive); });

  // evaluate ----------------------------------------------------------------------
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on the test split");
  evaluate->add_option("--checkpoint", raw.checkpoint, "Trained model file")->required();
  evaluate->add_option("--data", raw.data, "Split corpus directory")->required();
  evaluate->add_option("--out", raw.out, "Directory for eval.txt (optional)");
  evaluate->add_option("--prefixes", raw.prefixes, "Prefix table TSV override");
  evaluate->add_option("--replacements", raw.replacements,
                       "Replacement table TSV override");
  evaluate->callback([&] { rc = run_evaluate(raw); });

  // experiment ----------------------------------------------------------------------
  std::string grid_path;
  std::size_t jobs = 1;
  auto* experiment = app.add_subcommand(
      "experiment", "Run a preset x dataset grid and rank the results");
  experiment->add_option("--grid", grid_path, "Grid file: presets, datasets, seeds")
      ->required();
  experiment->add_option("--out", raw.out, "Grid output directory")->required();
  experiment->add_option("--jobs", jobs, "Worker processes")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  experiment->callback([&] { rc = run_experiment(grid_path, raw.out, jobs, argv[0]); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::exit_code_for(e);
  }
  return rc;
}
