#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "nl2sparql/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

using namespace nl2sparql;
using corpus::Vocabulary;
using nmt::Arch;
using nmt::AttentionKind;
using nmt::BeamResult;
using nmt::ModelConfig;

namespace {

namespace fs = std::filesystem;

fs::path tmp_path(const std::string& leaf) {
  fs::path dir = fs::path(NL2SPARQL_TEST_TMP) / "train";
  fs::create_directories(dir);
  return dir / leaf;
}

/// Scripted decoding session: a table maps the emitted path to the next
/// log-probability row, which is all beam search ever looks at.
class ToySession final : public nmt::DecodeSession<double> {
public:
  using Table = std::function<std::vector<double>(const std::vector<std::size_t>&)>;

  explicit ToySession(Table table) : table_(std::move(table)) {}

  std::size_t initial() override {
    if (pool_.empty()) pool_.push_back({{}, table_({})});
    return 0;
  }
  const std::vector<double>& logprobs(std::size_t state) override { return pool_[state].lp; }
  std::size_t advance(std::size_t state, std::size_t token) override {
    Rec rec{pool_[state].path, {}};
    rec.path.push_back(token);
    rec.lp = table_(rec.path);
    pool_.push_back(std::move(rec));
    return pool_.size() - 1;
  }

private:
  struct Rec {
    std::vector<std::size_t> path;
    std::vector<double> lp;
  };
  Table table_;
  std::vector<Rec> pool_;
};

/// Normalized log-probability rows from raw weights.
std::vector<double> lp_row(std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) sum += w;
  for (double& w : weights) w = std::log(w / sum);
  return weights;
}

corpus::ParallelCorpus make_corpus(
    const std::vector<std::pair<std::string, std::string>>& rows) {
  corpus::ParallelCorpus c;
  for (const auto& [question, encoded] : rows) {
    corpus::QQPair p;
    p.question = question;
    p.query_raw = encoded;
    p.query_encoded = codec::EncodedQuery::from_line(encoded);
    c.pairs.push_back(std::move(p));
  }
  return c;
}

Vocabulary question_vocab(const corpus::ParallelCorpus& c) {
  std::vector<std::vector<std::string>> lines;
  for (const auto& p : c.pairs) lines.push_back(corpus::tokenize_nl(p.question));
  return Vocabulary::build(lines);
}

Vocabulary query_vocab(const corpus::ParallelCorpus& c) {
  std::vector<std::vector<std::string>> lines;
  for (const auto& p : c.pairs) lines.push_back(p.query_encoded.tokens);
  return Vocabulary::build(lines);
}

corpus::ParallelCorpus toy_training_corpus() {
  return make_corpus({
      {"where is the Eiffel Tower ?",
       "select var_x where brack_open dbr_Eiffel_Tower dbo_location var_x brack_close"},
      {"who designed the Eiffel Tower ?",
       "select var_x where brack_open dbr_Eiffel_Tower dbo_architect var_x brack_close"},
      {"when was the Eiffel Tower built ?",
       "select var_x where brack_open dbr_Eiffel_Tower dbo_buildingStartDate var_x brack_close"},
      {"how tall is the Eiffel Tower ?",
       "select var_x where brack_open dbr_Eiffel_Tower dbo_height var_x brack_close"},
  });
}

ModelConfig memorize_config() {
  ModelConfig cfg;
  cfg.architecture = Arch::Rnn;
  cfg.attention = AttentionKind::GlobalAdditive;
  cfg.num_layers = 2;
  cfg.hidden_units = 48;
  cfg.embed_dim = 48;
  cfg.optimizer = nmt::OptimizerKind::Adam;
  cfg.lr = 0.01;
  cfg.batch_size = 1;
  cfg.max_epochs = 400;
  cfg.patience = 0;
  cfg.beam_width = 2;
  cfg.max_len = 24;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("a two-wide beam beats greedy on a three-step counterexample") {
  // init: a carries 0.6 and b only 0.4, but everything after a is mediocre
  // (best finish 0.5) while b finishes at 0.9. Greedy grabs a; the two-wide
  // beam keeps b alive and wins: 0.4 * 0.9 = 0.36 > 0.6 * 0.5 = 0.30.
  const std::size_t a = 4, b = 5;
  const double tiny = 1e-30;
  ToySession::Table table = [&](const std::vector<std::size_t>& path) {
    //               pad   <s>   </s>  <unk>   a     b
    if (path.empty()) return lp_row({tiny, tiny, tiny, tiny, 0.6, 0.4});
    if (path == std::vector<std::size_t>{a}) {
      return lp_row({tiny, tiny, 0.5, tiny, 0.25, 0.25});
    }
    if (path == std::vector<std::size_t>{b}) {
      return lp_row({tiny, tiny, 0.9, tiny, 0.05, 0.05});
    }
    return lp_row({tiny, tiny, 0.9, tiny, 0.05, 0.05});
  };

  ToySession greedy_session(table);
  BeamResult greedy = nmt::greedy_decode(greedy_session, 6, 3);
  CHECK(greedy.finished);
  CHECK(greedy.ids == std::vector<std::size_t>{a});
  CHECK(greedy.score == doctest::Approx(std::log(0.6 * 0.5) / 2.0).epsilon(1e-9));

  ToySession beam_session(table);
  BeamResult beam = nmt::beam_decode(beam_session, 6, 2, 3);
  CHECK(beam.finished);
  CHECK(beam.ids == std::vector<std::size_t>{b});
  CHECK(beam.score == doctest::Approx(std::log(0.4 * 0.9) / 2.0).epsilon(1e-9));
  CHECK(beam.score > greedy.score);
}

TEST_CASE("a one-wide beam is exactly greedy") {
  // Randomized transition tables keyed by the emitted path.
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    CAPTURE(trial);
    const std::size_t vocab = 4 + 1 + trial % 5;
    ToySession::Table table = [&, vocab](const std::vector<std::size_t>& path) {
      std::uint64_t key = trial * 1315423911u + 17;
      for (std::size_t t : path) key = key * 0x100000001B3ull + t;
      SeededRng rng(key);
      std::vector<double> w(vocab);
      for (double& x : w) x = 0.05 + rng.uniform();
      return lp_row(std::move(w));
    };
    ToySession for_beam(table);
    ToySession for_greedy(table);
    BeamResult beam = nmt::beam_decode(for_beam, vocab, 1, 6);
    BeamResult greedy = nmt::greedy_decode(for_greedy, vocab, 6);
    CHECK(beam.ids == greedy.ids);
    CHECK(beam.finished == greedy.finished);
    CHECK(beam.score == doctest::Approx(greedy.score).epsilon(1e-12));
  }
}

TEST_CASE("beam search flags hypotheses cut off by the length limit") {
  ToySession::Table table = [](const std::vector<std::size_t>&) {
    return lp_row({1e-30, 1e-30, 1e-30, 1e-30, 0.7, 0.3});  // the end never scores
  };
  ToySession session(table);
  BeamResult r = nmt::beam_decode(session, 6, 2, 4);
  CHECK_FALSE(r.finished);
  CHECK(r.ids.size() == 4);
  CHECK(r.ids == std::vector<std::size_t>{4, 4, 4, 4});
}

TEST_CASE("padding and start tokens can never be emitted") {
  ToySession::Table table = [](const std::vector<std::size_t>&) {
    return lp_row({0.90, 0.05, 0.01, 1e-30, 0.04, 1e-30});  // pad and <s> dominate
  };
  ToySession session(table);
  BeamResult r = nmt::beam_decode(session, 6, 3, 3);
  for (std::size_t id : r.ids) {
    CHECK(id != Vocabulary::kPad);
    CHECK(id != Vocabulary::kBos);
  }
  CHECK(r.ids == std::vector<std::size_t>{4, 4});  // then </s> wins over 1e-30
}

TEST_CASE("the unknown token is a last resort") {
  // Some real token is still plausible: unk stays suppressed even though it
  // scores highest. Repeats are priced so low that the length-normalized
  // score cannot amortize the expensive first step by padding the output.
  ToySession::Table plausible = [](const std::vector<std::size_t>& path) {
    if (path.empty()) return lp_row({1e-30, 1e-30, 1e-30, 0.9, 1e-8, 1e-30});
    return lp_row({1e-30, 1e-30, 0.999, 1e-30, 5e-8, 5e-8});
  };
  ToySession s1(plausible);
  BeamResult r1 = nmt::beam_decode(s1, 6, 2, 4);
  CHECK(r1.ids == std::vector<std::size_t>{4});

  // Nothing real clears the floor: unk is allowed through.
  ToySession::Table hopeless = [](const std::vector<std::size_t>& path) {
    if (path.empty()) return lp_row({1e-30, 1e-30, 1e-12, 0.999, 1e-12, 1e-12});
    return lp_row({1e-30, 1e-30, 0.9, 1e-30, 0.05, 0.05});
  };
  ToySession s2(hopeless);
  BeamResult r2 = nmt::beam_decode(s2, 6, 2, 4);
  REQUIRE(!r2.ids.empty());
  CHECK(r2.ids[0] == Vocabulary::kUnk);
}

TEST_CASE("a one-wide beam matches greedy on a real model") {
  corpus::ParallelCorpus data = toy_training_corpus();
  ModelConfig cfg = memorize_config();
  cfg.beam_width = 1;
  auto model = nmt::build_model<float>(cfg, question_vocab(data), query_vocab(data));

  SeededRng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    CAPTURE(trial);
    std::vector<std::size_t> src;
    const std::size_t len = 2 + rng.below(5);
    for (std::size_t i = 0; i < len; ++i) {
      src.push_back(4 + rng.below(model->src_vocab().size() - 4));
    }
    BeamResult beam = nmt::beam_decode(*model, src);
    BeamResult greedy = nmt::greedy_decode(*model, src);
    CHECK(beam.ids == greedy.ids);
    CHECK(beam.finished == greedy.finished);
  }
}

TEST_CASE("training memorizes a small corpus end to end") {
  corpus::ParallelCorpus data = toy_training_corpus();
  auto model =
      nmt::build_model<float>(memorize_config(), question_vocab(data), query_vocab(data));

  const fs::path ckpt = tmp_path("memorize.nsqm");
  nmt::TrainOptions opts;
  opts.checkpoint_path = ckpt;
  nmt::TrainReport report = nmt::fit(*model, data, data, opts);

  REQUIRE(!report.epochs.empty());
  CHECK(report.best_epoch >= 1);
  CHECK(report.best_bleu == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(report.epochs.front().train_loss > report.epochs.back().train_loss);

  nmt::EvalReport eval = nmt::evaluate(*model, data);
  CHECK(eval.pairs == data.pairs.size());
  CHECK(eval.exact_match == 1.0);
  CHECK(eval.token_f1 == doctest::Approx(1.0));
  CHECK(eval.bleu == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(eval.ppl >= 1.0);  // perplexity approaches certainty from above
  CHECK(eval.ppl < 1.5);

  // The checkpoint written during training reproduces the model exactly.
  REQUIRE(fs::exists(ckpt));
  std::map<std::string, std::string> extra;
  auto loaded = nmt::load_checkpoint(ckpt, &extra);
  CHECK(loaded->config().architecture == Arch::Rnn);
  CHECK(loaded->config().hidden_units == 48);
  CHECK(loaded->src_vocab() == model->src_vocab());
  CHECK(loaded->tgt_vocab() == model->tgt_vocab());
  CHECK(extra.count("best_bleu") == 1);
  CHECK(std::stod(extra["best_bleu"]) == doctest::Approx(report.best_bleu));
  CHECK(std::stoull(extra["best_epoch"]) == report.best_epoch);

  auto li = loaded->params().begin();
  for (auto mi = model->params().begin(); mi != model->params().end(); ++mi, ++li) {
    REQUIRE(mi->first == li->first);
    CHECK(mi->second.value == li->second.value);
  }

  // And the two models translate identically.
  const auto prefixes = codec::PrefixTable::dbpedia_defaults();
  const auto replacements = codec::ReplacementTable::builtin();
  for (const auto& pair : data.pairs) {
    nmt::Translation a = nmt::translate(*model, pair.question, prefixes, replacements);
    nmt::Translation b = nmt::translate(*loaded, pair.question, prefixes, replacements);
    CHECK(a.tokens == b.tokens);
    REQUIRE(a.decode_ok);
    CHECK(a.sparql == b.sparql);
    CHECK(a.sparql == codec::decode(pair.query_encoded, prefixes, replacements));
    CHECK(a.finished);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  corpus::ParallelCorpus data = toy_training_corpus();
  ModelConfig cfg = memorize_config();
  cfg.max_epochs = 5;
  cfg.patience = 0;

  nmt::TrainReport reports[2];
  std::vector<float> finals[2];
  for (int i = 0; i < 2; ++i) {
    auto model = nmt::build_model<float>(cfg, question_vocab(data), query_vocab(data));
    reports[i] = nmt::fit(*model, data, data);
    for (auto& [name, p] : model->params()) {
      finals[i].insert(finals[i].end(), p.value.begin(), p.value.end());
    }
  }
  REQUIRE(reports[0].epochs.size() == reports[1].epochs.size());
  for (std::size_t e = 0; e < reports[0].epochs.size(); ++e) {
    CHECK(reports[0].epochs[e].train_loss == reports[1].epochs[e].train_loss);
    CHECK(reports[0].epochs[e].val_loss == reports[1].epochs[e].val_loss);
    CHECK(reports[0].epochs[e].val_bleu == reports[1].epochs[e].val_bleu);
  }
  CHECK(finals[0] == finals[1]);
}

TEST_CASE("empty splits are rejected up front") {
  corpus::ParallelCorpus data = toy_training_corpus();
  corpus::ParallelCorpus empty;
  auto model =
      nmt::build_model<float>(memorize_config(), question_vocab(data), query_vocab(data));
  CHECK_THROWS_AS(nmt::fit(*model, empty, data), nmt::ModelError);
  CHECK_THROWS_AS(nmt::fit(*model, data, empty), nmt::ModelError);
  CHECK_THROWS_AS(nmt::evaluate(*model, empty), nmt::ModelError);
}

TEST_CASE("the training log serializes one epoch per row") {
  nmt::TrainReport report;
  report.epochs.push_back({1, 2.5, 2.0, 4.0, 10.0, 0.5});
  report.epochs.push_back({2, 1.5, 1.0, 2.0, 50.0, 0.4});
  const fs::path path = tmp_path("report.tsv");
  nmt::write_report_tsv(report, path);

  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "epoch\ttrain_loss\tval_loss\tval_ppl\tval_bleu\tseconds");
  CHECK(lines[1].substr(0, 2) == "1\t");
  CHECK(lines[2].substr(0, 2) == "2\t");
}

TEST_CASE("translate reports hypotheses the codec rejects") {
  // One pair whose target is a lone token that decodes to nothing sensible.
  corpus::ParallelCorpus data = make_corpus({{"say the word ?", "blah"}});
  ModelConfig cfg = memorize_config();
  cfg.max_epochs = 60;
  auto model = nmt::build_model<float>(cfg, question_vocab(data), query_vocab(data));
  nmt::fit(*model, data, data);

  const auto prefixes = codec::PrefixTable::dbpedia_defaults();
  const auto replacements = codec::ReplacementTable::builtin();
  nmt::Translation t = nmt::translate(*model, "say the word ?", prefixes, replacements);
  CHECK(t.tokens == std::vector<std::string>{"blah"});
  CHECK_FALSE(t.decode_ok);
  CHECK(t.sparql.empty());
  CHECK(!t.error.empty());

  nmt::Translation none = nmt::translate(*model, "", prefixes, replacements);
  CHECK_FALSE(none.decode_ok);
  CHECK(!none.error.empty());
}

TEST_CASE("question words outside the vocabulary fall back to unk") {
  corpus::ParallelCorpus data = toy_training_corpus();
  Vocabulary vocab = question_vocab(data);
  std::vector<std::size_t> ids = nmt::source_ids(vocab, "where is the zebra ?");
  REQUIRE(ids.size() == 5);
  CHECK(ids[0] == vocab.find("where").value());
  CHECK(ids[3] == Vocabulary::kUnk);
}
