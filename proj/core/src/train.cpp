#include "nl2sparql/train.hpp"

#include "nl2sparql/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace nl2sparql::nmt {
namespace {

using corpus::Vocabulary;

constexpr double kClipNorm = 5.0;
constexpr double kLn2 = 0.6931471805599453;

/// One pair prepared for the model: plain source ids, target input framed
/// with <s>, and the shifted targets ending in </s>.
struct Example {
  std::vector<std::size_t> src;
  std::vector<std::size_t> tgt_in;
  std::vector<std::size_t> targets;
};

std::vector<Example> prepare(const Model<float>& model, const corpus::ParallelCorpus& data) {
  std::vector<Example> out;
  out.reserve(data.pairs.size());
  for (const corpus::QQPair& pair : data.pairs) {
    Example ex;
    ex.src = source_ids(model.src_vocab(), pair.question);
    if (ex.src.empty()) throw ModelError("pair with an empty question: " + pair.query_raw);
    std::vector<std::size_t> tgt = model.tgt_vocab().ids(pair.query_encoded.tokens);
    if (tgt.empty()) throw ModelError("pair with an empty query for: " + pair.question);
    ex.tgt_in.reserve(tgt.size() + 1);
    ex.tgt_in.push_back(Vocabulary::kBos);
    ex.tgt_in.insert(ex.tgt_in.end(), tgt.begin(), tgt.end());
    ex.targets = std::move(tgt);
    ex.targets.push_back(Vocabulary::kEos);
    out.push_back(std::move(ex));
  }
  return out;
}

/// Length-sorted batches: indices ordered by (source length, position) and
/// chunked; the caller shuffles the chunk order per epoch.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<Example>& examples,
                                                   std::size_t batch_size) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (examples[a].src.size() != examples[b].src.size()) {
      return examples[a].src.size() < examples[b].src.size();
    }
    return a < b;
  });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < order.size(); at += batch_size) {
    const std::size_t end = std::min(order.size(), at + batch_size);
    batches.emplace_back(order.begin() + at, order.begin() + end);
  }
  return batches;
}

double teacher_forced_nats(Model<float>& model, const std::vector<Example>& examples,
                           std::size_t* token_count) {
  double nats = 0.0;
  std::size_t tokens = 0;
  for (const Example& ex : examples) {
    ad::Tape<float> tape;
    ForwardResult<float> fwd = model.forward(tape, ex.src, ex.tgt_in, false, nullptr);
    ad::Tensor<float> loss =
        ad::cross_entropy_sum(fwd.logits, ex.targets, Vocabulary::kPad, nullptr);
    nats += static_cast<double>(loss.value()[0]);
    tokens += ex.targets.size();
  }
  if (token_count) *token_count = tokens;
  return nats / static_cast<double>(tokens);
}

std::vector<std::string> to_tokens(const Vocabulary& vocab, const std::vector<std::size_t>& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) out.push_back(vocab.token(id));
  return out;
}

/// Greedy-decoding corpus BLEU against the encoded references. Smoothing and
/// an order cap at the longest reference keep the score meaningful while the
/// model is still bad and for corpora of very short queries.
double validation_bleu(Model<float>& model, const corpus::ParallelCorpus& data,
                       const std::vector<Example>& examples) {
  std::vector<metrics::TokenSeq> hyps, refs;
  hyps.reserve(examples.size());
  refs.reserve(examples.size());
  std::size_t longest_ref = 1;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    BeamResult r = greedy_decode(model, examples[i].src);
    hyps.push_back(to_tokens(model.tgt_vocab(), r.ids));
    refs.push_back(data.pairs[i].query_encoded.tokens);
    longest_ref = std::max(longest_ref, refs.back().size());
  }
  metrics::BleuParams params;
  params.smooth = true;
  params.max_n = static_cast<int>(std::min<std::size_t>(4, longest_ref));
  return metrics::bleu_single(hyps, refs, params).bleu * 100.0;
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::map<std::string, std::string> config_metadata(const ModelConfig& cfg) {
  std::map<std::string, std::string> m;
  m["architecture"] = to_string(cfg.architecture);
  m["num_layers"] = std::to_string(cfg.num_layers);
  m["hidden_units"] = std::to_string(cfg.hidden_units);
  m["embed_dim"] = std::to_string(cfg.embed_dim);
  m["attention"] = to_string(cfg.attention);
  m["bidirectional_first"] = cfg.bidirectional_first ? "1" : "0";
  m["residual_from_layer"] = std::to_string(cfg.residual_from_layer);
  m["heads"] = std::to_string(cfg.heads);
  m["kernel_width"] = std::to_string(cfg.kernel_width);
  m["local_window"] = std::to_string(cfg.local_window);
  m["dropout"] = fmt(cfg.dropout);
  m["optimizer"] = to_string(cfg.optimizer);
  m["lr"] = fmt(cfg.lr);
  m["batch_size"] = std::to_string(cfg.batch_size);
  m["max_epochs"] = std::to_string(cfg.max_epochs);
  m["patience"] = std::to_string(cfg.patience);
  m["beam_width"] = std::to_string(cfg.beam_width);
  m["max_len"] = std::to_string(cfg.max_len);
  m["seed"] = std::to_string(cfg.seed);
  return m;
}

const std::string& need(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw ModelError("checkpoint is missing the '" + key + "' entry");
  return it->second;
}

ModelConfig config_from_metadata(const std::map<std::string, std::string>& meta) {
  ModelConfig cfg;
  cfg.architecture = arch_from_string(need(meta, "architecture"));
  cfg.num_layers = std::stoull(need(meta, "num_layers"));
  cfg.hidden_units = std::stoull(need(meta, "hidden_units"));
  cfg.embed_dim = std::stoull(need(meta, "embed_dim"));
  cfg.attention = attention_from_string(need(meta, "attention"));
  cfg.bidirectional_first = need(meta, "bidirectional_first") == "1";
  cfg.residual_from_layer = std::stoull(need(meta, "residual_from_layer"));
  cfg.heads = std::stoull(need(meta, "heads"));
  cfg.kernel_width = std::stoull(need(meta, "kernel_width"));
  cfg.local_window = std::stoull(need(meta, "local_window"));
  cfg.dropout = std::stod(need(meta, "dropout"));
  cfg.optimizer = optimizer_from_string(need(meta, "optimizer"));
  cfg.lr = std::stod(need(meta, "lr"));
  cfg.batch_size = std::stoull(need(meta, "batch_size"));
  cfg.max_epochs = std::stoull(need(meta, "max_epochs"));
  cfg.patience = std::stoull(need(meta, "patience"));
  cfg.beam_width = std::stoull(need(meta, "beam_width"));
  cfg.max_len = std::stoull(need(meta, "max_len"));
  cfg.seed = std::stoull(need(meta, "seed"));
  return cfg;
}

std::string join_lines(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back('\n');
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t at = 0;
  while (at <= text.size()) {
    const std::size_t nl = text.find('\n', at);
    if (nl == std::string::npos) {
      out.push_back(text.substr(at));
      break;
    }
    out.push_back(text.substr(at, nl - at));
    at = nl + 1;
  }
  return out;
}

using Snapshot = std::map<std::string, std::vector<float>>;

Snapshot snapshot_params(const ad::ParamSet<float>& params) {
  Snapshot s;
  for (const auto& [name, p] : params) s[name] = p.value;
  return s;
}

void restore_params(ad::ParamSet<float>& params, const Snapshot& s) {
  for (auto& [name, p] : params) p.value = s.at(name);
}

}  // namespace

std::vector<std::size_t> source_ids(const Vocabulary& vocab, const std::string& question) {
  return vocab.ids(corpus::tokenize_nl(question));
}

TrainReport fit(Model<float>& model, const corpus::ParallelCorpus& train_set,
                const corpus::ParallelCorpus& val_set, const TrainOptions& opts) {
  if (train_set.pairs.empty()) throw ModelError("training split is empty");
  if (val_set.pairs.empty()) throw ModelError("validation split is empty");
  const ModelConfig& cfg = model.config();

  const std::vector<Example> train_ex = prepare(model, train_set);
  const std::vector<Example> val_ex = prepare(model, val_set);
  std::vector<std::vector<std::size_t>> batches = make_batches(train_ex, cfg.batch_size);

  ad::Sgd<float> sgd{cfg.lr};
  ad::Adam<float> adam;
  adam.lr = cfg.lr;
  SeededRng dropout_rng(cfg.seed ^ 0xD2B74407B1CE6E93ull);

  TrainReport report;
  Snapshot best = snapshot_params(model.params());
  double best_bleu = -1.0;
  double best_val_loss = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    seeded_shuffle(batches, cfg.seed + epoch);

    double nats = 0.0;
    std::size_t tokens = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::size_t batch_tokens = 0;
      for (std::size_t idx : batches[b]) batch_tokens += train_ex[idx].targets.size();
      for (std::size_t idx : batches[b]) {
        const Example& ex = train_ex[idx];
        ad::Tape<float> tape;
        ForwardResult<float> fwd = model.forward(tape, ex.src, ex.tgt_in, true, &dropout_rng);
        ad::Tensor<float> loss =
            ad::cross_entropy_sum(fwd.logits, ex.targets, Vocabulary::kPad, nullptr);
        const double lv = static_cast<double>(loss.value()[0]);
        if (!std::isfinite(lv)) {
          throw NumericError("loss is not finite at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(b + 1));
        }
        nats += lv;
        tape.backward(ad::scale(loss, 1.0 / static_cast<double>(batch_tokens)));
      }
      ad::clip_global_norm(model.params(), kClipNorm);
      if (cfg.optimizer == OptimizerKind::Adam) {
        adam.step(model.params());
      } else {
        sgd.step(model.params());
      }
      model.params().zero_grad();
    }
    tokens = 0;
    for (const Example& ex : train_ex) tokens += ex.targets.size();

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = nats / static_cast<double>(tokens);
    stats.val_loss = teacher_forced_nats(model, val_ex, nullptr);
    stats.val_ppl = metrics::perplexity(stats.val_loss / kLn2);
    stats.val_bleu = validation_bleu(model, val_set, val_ex);
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    // BLEU decides, validation loss breaks ties; either way the earliest
    // epoch of equal quality keeps the weights.
    const bool improved = stats.val_bleu > best_bleu ||
                          (stats.val_bleu == best_bleu && stats.val_loss < best_val_loss);
    if (improved) {
      best_bleu = stats.val_bleu;
      best_val_loss = stats.val_loss;
      report.best_epoch = epoch;
      report.best_bleu = best_bleu;
      best = snapshot_params(model.params());
      if (!opts.checkpoint_path.empty()) {
        save_checkpoint(opts.checkpoint_path, model,
                        {{"best_bleu", fmt(best_bleu)}, {"best_epoch", std::to_string(epoch)}});
      }
    }
    if (opts.log) {
      std::ostream& log = *opts.log;
      log << "epoch " << epoch << "/" << cfg.max_epochs << std::fixed << std::setprecision(4)
          << "  train " << stats.train_loss << "  val " << stats.val_loss << std::setprecision(2)
          << "  ppl " << stats.val_ppl << "  bleu " << stats.val_bleu << "  ("
          << std::setprecision(1) << stats.seconds << "s)" << (improved ? "  *" : "") << "\n";
      log.flush();
    }
    report.epochs.push_back(stats);

    if (cfg.patience > 0 && epoch - report.best_epoch >= cfg.patience) {
      report.stopped_early = true;
      break;
    }
  }

  restore_params(model.params(), best);
  return report;
}

void write_report_tsv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write training log: " + path.string());
  out << "epoch\ttrain_loss\tval_loss\tval_ppl\tval_bleu\tseconds\n";
  out << std::fixed << std::setprecision(6);
  for (const EpochStats& e : report.epochs) {
    out << e.epoch << '\t' << e.train_loss << '\t' << e.val_loss << '\t' << e.val_ppl << '\t'
        << e.val_bleu << '\t' << e.seconds << '\n';
  }
}

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     const std::map<std::string, std::string>& extra) {
  std::map<std::string, std::string> meta = config_metadata(model.config());
  meta["src_vocab"] = join_lines(model.src_vocab().tokens());
  meta["tgt_vocab"] = join_lines(model.tgt_vocab().tokens());
  for (const auto& [k, v] : extra) meta[k] = v;
  ad::save_params(path.string(), model.params(), meta);
}

std::unique_ptr<Model<float>> load_checkpoint(const std::filesystem::path& path,
                                              std::map<std::string, std::string>* extra) {
  const std::map<std::string, std::string> meta = ad::load_metadata(path.string());
  ModelConfig cfg = config_from_metadata(meta);
  Vocabulary src = Vocabulary::from_tokens(split_lines(need(meta, "src_vocab")));
  Vocabulary tgt = Vocabulary::from_tokens(split_lines(need(meta, "tgt_vocab")));
  std::unique_ptr<Model<float>> model = build_model<float>(cfg, src, tgt);
  ad::load_params(path.string(), model->params());
  if (extra) *extra = meta;
  return model;
}

EvalReport evaluate(Model<float>& model, const corpus::ParallelCorpus& data) {
  if (data.pairs.empty()) throw ModelError("cannot evaluate an empty corpus");
  const std::vector<Example> examples = prepare(model, data);

  std::vector<metrics::TokenSeq> hyps, refs;
  hyps.reserve(examples.size());
  refs.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    BeamResult r = beam_decode(model, examples[i].src);
    hyps.push_back(to_tokens(model.tgt_vocab(), r.ids));
    refs.push_back(data.pairs[i].query_encoded.tokens);
  }

  EvalReport report;
  report.pairs = examples.size();
  report.bleu = metrics::bleu_single(hyps, refs).bleu * 100.0;
  metrics::MatchReport match = metrics::exact_match(hyps, refs);
  report.exact_match = match.accuracy;
  report.token_f1 = match.f1_mean;
  report.bits = teacher_forced_nats(model, examples, nullptr) / kLn2;
  report.ppl = metrics::perplexity(report.bits);
  return report;
}

Translation translate(Model<float>& model, const std::string& question,
                      const codec::PrefixTable& prefixes,
                      const codec::ReplacementTable& replacements) {
  Translation t;
  const std::vector<std::size_t> src = source_ids(model.src_vocab(), question);
  if (src.empty()) {
    t.error = "the question contains no tokens";
    return t;
  }
  BeamResult r = beam_decode(model, src);
  t.finished = r.finished;
  t.score = r.score;
  t.tokens = to_tokens(model.tgt_vocab(), r.ids);
  try {
    t.sparql = codec::decode(codec::EncodedQuery{t.tokens}, prefixes, replacements);
    t.decode_ok = true;
  } catch (const codec::CodecError& e) {
    t.error = e.what();
  }
  return t;
}

}  // namespace nl2sparql::nmt
