#ifndef NL2SPARQL_MODEL_HPP
#define NL2SPARQL_MODEL_HPP

#include "nl2sparql/corpus.hpp"
#include "nl2sparql/params.hpp"
#include "nl2sparql/rng.hpp"
#include "nl2sparql/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

// Three sequence-to-sequence families built on the tensor engine: stacked
// LSTMs with optional attention, convolutional blocks with gated linear units
// and per-layer attention, and a multi-head self-attention encoder-decoder.
namespace nl2sparql::nmt {

class ModelError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A ModelConfig that violates its own invariants.
class ConfigError : public ModelError {
public:
  using ModelError::ModelError;
};

/// Training produced a non-finite loss.
class NumericError : public ModelError {
public:
  using ModelError::ModelError;
};

enum class Arch { Rnn, Conv, Transformer };
enum class AttentionKind { None, GlobalAdditive, LocalMultiplicative };
enum class OptimizerKind { Sgd, Adam };

std::string to_string(Arch a);
std::string to_string(AttentionKind a);
std::string to_string(OptimizerKind o);
Arch arch_from_string(const std::string& s);
AttentionKind attention_from_string(const std::string& s);
OptimizerKind optimizer_from_string(const std::string& s);

struct ModelConfig {
  Arch architecture = Arch::Rnn;
  std::size_t num_layers = 2;
  std::size_t hidden_units = 128;
  std::size_t embed_dim = 128;
  AttentionKind attention = AttentionKind::None;  // rnn only
  bool bidirectional_first = false;               // rnn only
  std::size_t residual_from_layer = 0;            // rnn only; 0 = off, else >= 3
  std::size_t heads = 4;                          // transformer only
  std::size_t kernel_width = 3;                   // conv only; odd
  std::size_t local_window = 5;                   // half-width D of the local variant
  double dropout = 0.0;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double lr = 1.0;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;  // epochs without validation improvement; 0 = never stop early
  std::size_t beam_width = 5;
  std::size_t max_len = 96;  // decode cap; also sizes the conv position table
  std::uint64_t seed = 1;

  /// Throws ConfigError when any invariant fails.
  void validate() const;
};

/// One teacher-forced pass. The logits live on the caller's tape; the traces
/// are plain copies for inspection.
template <typename Real>
struct ForwardResult {
  ad::Tensor<Real> logits;  // (tgt_in length, |tgt vocab|)
  // top cross-attention weights, one row of source weights per decoder step
  std::vector<std::vector<Real>> attention;
  // top-layer encoder output, one row per source position
  std::vector<std::vector<Real>> encoder_states;
};

/// Incremental decoding over one source sentence. States are immutable
/// handles into a session-owned pool, so beam hypotheses can branch freely.
template <typename Real>
class DecodeSession {
public:
  virtual ~DecodeSession() = default;

  /// State positioned after `<s>`, i.e. ready to predict the first token.
  virtual std::size_t initial() = 0;

  /// Log-probabilities of the next token out of `state`.
  virtual const std::vector<Real>& logprobs(std::size_t state) = 0;

  /// State reached by emitting `token` from `state`.
  virtual std::size_t advance(std::size_t state, std::size_t token) = 0;
};

template <typename Real>
class Model {
public:
  Model(ModelConfig config, corpus::Vocabulary src_vocab, corpus::Vocabulary tgt_vocab)
      : config_(std::move(config)),
        src_vocab_(std::move(src_vocab)),
        tgt_vocab_(std::move(tgt_vocab)) {}
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  const corpus::Vocabulary& src_vocab() const { return src_vocab_; }
  const corpus::Vocabulary& tgt_vocab() const { return tgt_vocab_; }
  ad::ParamSet<Real>& params() { return params_; }
  const ad::ParamSet<Real>& params() const { return params_; }

  /// Teacher-forced logits for one (source, target-input) pair. `tgt_in`
  /// starts with `<s>`. `dropout_rng` may be null when `training` is false.
  virtual ForwardResult<Real> forward(ad::Tape<Real>& tape,
                                      const std::vector<std::size_t>& src_ids,
                                      const std::vector<std::size_t>& tgt_in,
                                      bool training, SeededRng* dropout_rng) = 0;

  virtual std::unique_ptr<DecodeSession<Real>> start(
      const std::vector<std::size_t>& src_ids) = 0;

protected:
  ModelConfig config_;
  corpus::Vocabulary src_vocab_;
  corpus::Vocabulary tgt_vocab_;
  ad::ParamSet<Real> params_;
};

/// Validates the config and assembles the requested architecture with
/// seed-deterministic initialization.
template <typename Real>
std::unique_ptr<Model<Real>> build_model(const ModelConfig& config,
                                         const corpus::Vocabulary& src_vocab,
                                         const corpus::Vocabulary& tgt_vocab);

}  // namespace nl2sparql::nmt

#endif
