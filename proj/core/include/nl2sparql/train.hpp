#pragma once

#include "nl2sparql/corpus.hpp"
#include "nl2sparql/decode.hpp"
#include "nl2sparql/model.hpp"

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

// Training loop, checkpointing and whole-corpus evaluation for the float
// models. Sources are plain token ids; targets are framed with the sentence
// markers, and losses are averaged per target token.
namespace nl2sparql::nmt {

/// One row of the training log.
struct EpochStats {
  std::size_t epoch = 0;    // 1-based
  double train_loss = 0.0;  // nats per target token over the epoch
  double val_loss = 0.0;    // teacher-forced nats per token on validation
  double val_ppl = 0.0;     // base-2 perplexity of the validation loss
  double val_bleu = 0.0;    // greedy-decoding corpus BLEU, 0..100
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based epoch whose weights the model keeps
  double best_bleu = 0.0;
  bool stopped_early = false;
};

/// Tab-separated log, one epoch per row with a header line.
void write_report_tsv(const TrainReport& report, const std::filesystem::path& path);

struct TrainOptions {
  std::ostream* log = nullptr;  // per-epoch progress lines (nullptr = silent)
  /// Rewritten with the best weights so far on every improvement; empty
  /// means no file is produced.
  std::filesystem::path checkpoint_path;
};

/// Trains the model in place with the schedule in its config: grouped-length
/// batches in seeded order, per-pair gradient accumulation, global-norm
/// clipping at 5, validation after every epoch, early stopping on `patience`
/// epochs without a BLEU improvement. The weights of the best validation
/// epoch are restored before returning. Throws NumericError when the loss
/// stops being finite.
TrainReport fit(Model<float>& model, const corpus::ParallelCorpus& train_set,
                const corpus::ParallelCorpus& val_set, const TrainOptions& opts = {});

/// Writes weights plus everything needed to rebuild the model: config and
/// both vocabularies ride along as container metadata.
void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     const std::map<std::string, std::string>& extra = {});

/// Rebuilds the model a checkpoint describes and loads its weights. Metadata
/// that is not part of the model description lands in `extra` when given.
std::unique_ptr<Model<float>> load_checkpoint(const std::filesystem::path& path,
                                              std::map<std::string, std::string>* extra = nullptr);

struct EvalReport {
  double bleu = 0.0;         // beam hypotheses vs encoded references, 0..100
  double exact_match = 0.0;  // fraction of exactly reproduced sequences
  double token_f1 = 0.0;     // mean multiset token F1
  double bits = 0.0;         // teacher-forced bits per target token
  double ppl = 0.0;          // 2^bits
  std::size_t pairs = 0;
};

/// Beam-decodes every pair with the width from the model config and scores
/// the hypotheses against the encoded reference queries.
EvalReport evaluate(Model<float>& model, const corpus::ParallelCorpus& data);

struct Translation {
  std::vector<std::string> tokens;  // hypothesis target tokens
  std::string sparql;               // decoded query; empty unless decode_ok
  std::string error;                // codec complaint when decoding failed
  bool decode_ok = false;
  bool finished = false;  // the decoder produced the end marker itself
  double score = 0.0;
};

/// question -> tokenizer -> beam search -> token codec. A hypothesis the
/// codec rejects still comes back, with the complaint in `error`.
Translation translate(Model<float>& model, const std::string& question,
                      const codec::PrefixTable& prefixes,
                      const codec::ReplacementTable& replacements);

/// Question tokens to encoder input ids (unknowns map to <unk>).
std::vector<std::size_t> source_ids(const corpus::Vocabulary& vocab,
                                    const std::string& question);

}  // namespace nl2sparql::nmt
