#include "model_detail.hpp"
#include "nl2sparql/model.hpp"

namespace nl2sparql::nmt {

std::string to_string(Arch a) {
  switch (a) {
    case Arch::Rnn: return "rnn";
    case Arch::Conv: return "conv";
    case Arch::Transformer: return "transformer";
  }
  return "rnn";
}

std::string to_string(AttentionKind a) {
  switch (a) {
    case AttentionKind::None: return "none";
    case AttentionKind::GlobalAdditive: return "global_additive";
    case AttentionKind::LocalMultiplicative: return "local_multiplicative";
  }
  return "none";
}

std::string to_string(OptimizerKind o) {
  return o == OptimizerKind::Adam ? "adam" : "sgd";
}

Arch arch_from_string(const std::string& s) {
  if (s == "rnn") return Arch::Rnn;
  if (s == "conv") return Arch::Conv;
  if (s == "transformer") return Arch::Transformer;
  throw ConfigError("unknown architecture '" + s + "' (rnn, conv, transformer)");
}

AttentionKind attention_from_string(const std::string& s) {
  if (s == "none") return AttentionKind::None;
  if (s == "global_additive") return AttentionKind::GlobalAdditive;
  if (s == "local_multiplicative") return AttentionKind::LocalMultiplicative;
  throw ConfigError("unknown attention '" + s +
                    "' (none, global_additive, local_multiplicative)");
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (sgd, adam)");
}

void ModelConfig::validate() const {
  if (num_layers == 0) throw ConfigError("num_layers must be at least 1");
  if (hidden_units == 0 || embed_dim == 0) {
    throw ConfigError("hidden_units and embed_dim must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0,1)");
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (beam_width == 0) throw ConfigError("beam_width must be at least 1");
  if (max_len < 2) throw ConfigError("max_len must be at least 2");

  if (architecture != Arch::Rnn) {
    if (attention != AttentionKind::None) {
      throw ConfigError("attention variants apply to the rnn architecture only");
    }
    if (bidirectional_first) {
      throw ConfigError("bidirectional_first applies to the rnn architecture only");
    }
    if (residual_from_layer != 0) {
      throw ConfigError("residual_from_layer applies to the rnn architecture only");
    }
  }
  if (residual_from_layer != 0) {
    if (residual_from_layer < 3) {
      throw ConfigError("residual_from_layer must be at least 3 when set");
    }
    if (residual_from_layer > num_layers) {
      throw ConfigError("residual_from_layer exceeds num_layers");
    }
  }
  if (bidirectional_first && num_layers < 2) {
    throw ConfigError("bidirectional_first needs at least 2 layers");
  }
  if (attention == AttentionKind::LocalMultiplicative && local_window == 0) {
    throw ConfigError("local_window must be at least 1");
  }
  if (architecture == Arch::Conv && kernel_width % 2 == 0) {
    throw ConfigError("kernel_width must be odd so the encoder windows stay centered");
  }
  if (architecture == Arch::Conv && kernel_width == 0) {
    throw ConfigError("kernel_width must be at least 1");
  }
  if (architecture == Arch::Transformer) {
    if (heads == 0 || hidden_units % heads != 0) {
      throw ConfigError("heads must divide hidden_units");
    }
    if (embed_dim != hidden_units) {
      throw ConfigError("the transformer feeds embeddings straight into the stack; set "
                        "embed_dim equal to hidden_units");
    }
  }
}

template <typename Real>
std::unique_ptr<Model<Real>> build_model(const ModelConfig& config,
                                         const corpus::Vocabulary& src_vocab,
                                         const corpus::Vocabulary& tgt_vocab) {
  config.validate();
  switch (config.architecture) {
    case Arch::Rnn: return detail::make_rnn_model<Real>(config, src_vocab, tgt_vocab);
    case Arch::Conv: return detail::make_conv_model<Real>(config, src_vocab, tgt_vocab);
    case Arch::Transformer:
      return detail::make_transformer_model<Real>(config, src_vocab, tgt_vocab);
  }
  throw ConfigError("unreachable architecture");
}

template std::unique_ptr<Model<float>> build_model<float>(const ModelConfig&,
                                                          const corpus::Vocabulary&,
                                                          const corpus::Vocabulary&);
template std::unique_ptr<Model<double>> build_model<double>(const ModelConfig&,
                                                            const corpus::Vocabulary&,
                                                            const corpus::Vocabulary&);

}  // namespace nl2sparql::nmt
