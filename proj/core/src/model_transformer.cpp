#include "model_detail.hpp"

#include <cmath>
#include <string>
#include <vector>

// Encoder-decoder built from multi-head scaled dot-product attention and
// position-wise feed-forward sublayers, each wrapped in residual + layer norm
// (post-norm). Positions enter through fixed sinusoids. The decoder stacks a
// causally masked self-attention, an attention over the encoder output, and
// the feed-forward. Trailing source padding is masked out of every attention.
namespace nl2sparql::nmt {
namespace {

using corpus::Vocabulary;

template <typename Real>
using T = ad::Tensor<Real>;

template <typename Real>
class TransformerModel final : public Model<Real> {
public:
  TransformerModel(const ModelConfig& cfg, const Vocabulary& src, const Vocabulary& tgt)
      : Model<Real>(cfg, src, tgt) {
    auto& ps = this->params_;
    const std::size_t d = cfg.hidden_units, ff = 4 * d;
    ps.add("src_embed", {src.size(), d});
    ps.add("tgt_embed", {tgt.size(), d});

    auto add_attention = [&](const std::string& stem) {
      for (const char* w : {"Wq", "Wk", "Wv", "Wo"}) ps.add(stem + "." + w, {d, d});
      for (const char* b : {"bq", "bk", "bv", "bo"}) ps.add(stem + "." + b, {d});
    };
    auto add_ln = [&](const std::string& stem) {
      ps.add(stem + ".g", {d});
      ps.add(stem + ".b", {d});
    };
    auto add_ffn = [&](const std::string& stem) {
      ps.add(stem + ".W1", {d, ff});
      ps.add(stem + ".b1", {ff});
      ps.add(stem + ".W2", {ff, d});
      ps.add(stem + ".b2", {d});
    };
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      const std::string enc = layer_name("enc", l);
      add_attention(enc + ".att");
      add_ln(enc + ".ln1");
      add_ffn(enc + ".ff");
      add_ln(enc + ".ln2");
      const std::string dec = layer_name("dec", l);
      add_attention(dec + ".self");
      add_ln(dec + ".ln1");
      add_attention(dec + ".cross");
      add_ln(dec + ".ln2");
      add_ffn(dec + ".ff");
      add_ln(dec + ".ln3");
    }
    ps.add("out.W", {d, tgt.size()});
    ps.add("out.b", {tgt.size()});

    SeededRng rng(cfg.seed);
    for (auto& [name, p] : ps) {
      const std::size_t dot = name.rfind('.');
      const std::string last = dot == std::string::npos ? name : name.substr(dot + 1);
      if (last[0] == 'b') continue;  // biases and norm shifts start at zero
      if (last == "g") {
        for (Real& v : p.value) v = Real(1);  // norm gains start at identity
        continue;
      }
      detail::init_fan_in(p, rng, detail::fan_in_for(name, p.shape));
    }
  }

  ForwardResult<Real> forward(ad::Tape<Real>& tape, const std::vector<std::size_t>& src_ids,
                              const std::vector<std::size_t>& tgt_in, bool training,
                              SeededRng* rng) override {
    detail::check_ids(src_ids, this->src_vocab_, "source");
    detail::check_ids(tgt_in, this->tgt_vocab_, "target");
    if (src_ids.empty() || tgt_in.empty()) throw ModelError("empty sequence");
    detail::BoundParams<Real> B(tape, this->params_, true);
    const ModelConfig& cfg = this->config_;
    const std::size_t S = src_ids.size(), Tt = tgt_in.size();
    const std::size_t valid = valid_prefix(src_ids);

    // encoder
    T<Real> x = embed_in(tape, B, "src_embed", src_ids, training, rng);
    T<Real> enc_self_mask{};
    const bool padded = valid < S;
    if (padded) enc_self_mask = ad::padding_mask<Real>(tape, S, S, valid);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      const std::string stem = layer_name("enc", l);
      auto att = mha(B, stem + ".att", x, x, padded ? &enc_self_mask : nullptr);
      x = sublayer(B, stem + ".ln1", x, att.out, training, rng);
      x = sublayer(B, stem + ".ln2", x, ffn(B, stem + ".ff", x), training, rng);
    }
    T<Real> memory = x;

    // decoder
    T<Real> y = embed_in(tape, B, "tgt_embed", tgt_in, training, rng);
    T<Real> causal = ad::causal_mask<Real>(tape, Tt);
    T<Real> cross_mask{};
    if (padded) cross_mask = ad::padding_mask<Real>(tape, Tt, S, valid);
    T<Real> trace{};
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      const std::string stem = layer_name("dec", l);
      auto self = mha(B, stem + ".self", y, y, &causal);
      y = sublayer(B, stem + ".ln1", y, self.out, training, rng);
      auto cross = mha(B, stem + ".cross", y, memory, padded ? &cross_mask : nullptr);
      y = sublayer(B, stem + ".ln2", y, cross.out, training, rng);
      y = sublayer(B, stem + ".ln3", y, ffn(B, stem + ".ff", y), training, rng);
      trace = cross.head0;
    }

    ForwardResult<Real> out{ad::add_bias(ad::matmul(y, B["out.W"]), B["out.b"]),
                            detail::copy_rows(trace),
                            detail::copy_rows(memory)};
    return out;
  }

  std::unique_ptr<DecodeSession<Real>> start(const std::vector<std::size_t>& src_ids) override;

private:
  static std::string layer_name(const char* stem, std::size_t l) {
    return std::string(stem) + ".l" + std::to_string(l);
  }

  /// Length of the sequence before trailing padding; interior pads are not a
  /// thing this model understands, so they are rejected.
  std::size_t valid_prefix(const std::vector<std::size_t>& ids) const {
    std::size_t valid = ids.size();
    while (valid > 0 && ids[valid - 1] == Vocabulary::kPad) --valid;
    for (std::size_t i = 0; i < valid; ++i) {
      if (ids[i] == Vocabulary::kPad) {
        throw ModelError("padding must be trailing");
      }
    }
    if (valid == 0) throw ModelError("sequence is all padding");
    return valid;
  }

  T<Real> maybe_dropout(const T<Real>& x, bool training, SeededRng* rng) const {
    if (!training || this->config_.dropout == 0.0) return x;
    if (!rng) throw ModelError("training with dropout needs a random source");
    return ad::dropout(x, this->config_.dropout, *rng, true);
  }

  /// Scaled embeddings plus fixed sinusoidal position signals.
  T<Real> embed_in(ad::Tape<Real>& tape, const detail::BoundParams<Real>& B,
                   const char* table, const std::vector<std::size_t>& ids, bool training,
                   SeededRng* rng) const {
    const std::size_t d = this->config_.hidden_units, n = ids.size();
    T<Real> emb = ad::scale(ad::embedding_gather(B[table], ids),
                            std::sqrt(static_cast<double>(d)));
    std::vector<Real> pe(n * d);
    for (std::size_t pos = 0; pos < n; ++pos) {
      for (std::size_t i = 0; i < d; ++i) {
        const double freq =
            std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
        const double angle = static_cast<double>(pos) * freq;
        pe[pos * d + i] = static_cast<Real>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
      }
    }
    return maybe_dropout(ad::add(emb, tape.input({n, d}, std::move(pe))), training, rng);
  }

  struct Mha {
    T<Real> out;
    T<Real> head0;  // first head's weights, kept for inspection
  };

  Mha mha(const detail::BoundParams<Real>& B, const std::string& stem, const T<Real>& xq,
          const T<Real>& xkv, const T<Real>* mask) const {
    const std::size_t d = this->config_.hidden_units;
    const std::size_t heads = this->config_.heads, dk = d / heads;
    T<Real> Q = ad::add_bias(ad::matmul(xq, B[stem + ".Wq"]), B[stem + ".bq"]);
    T<Real> K = ad::add_bias(ad::matmul(xkv, B[stem + ".Wk"]), B[stem + ".bk"]);
    T<Real> V = ad::add_bias(ad::matmul(xkv, B[stem + ".Wv"]), B[stem + ".bv"]);
    Mha result;
    T<Real> merged{};
    for (std::size_t h = 0; h < heads; ++h) {
      auto att = ad::scaled_dot_attention(ad::slice_cols(Q, h * dk, (h + 1) * dk),
                                          ad::slice_cols(K, h * dk, (h + 1) * dk),
                                          ad::slice_cols(V, h * dk, (h + 1) * dk), mask);
      merged = h == 0 ? att.output : ad::concat_cols(merged, att.output);
      if (h == 0) result.head0 = att.weights;
    }
    result.out = ad::add_bias(ad::matmul(merged, B[stem + ".Wo"]), B[stem + ".bo"]);
    return result;
  }

  T<Real> ffn(const detail::BoundParams<Real>& B, const std::string& stem,
              const T<Real>& x) const {
    T<Real> hidden = ad::relu(ad::add_bias(ad::matmul(x, B[stem + ".W1"]), B[stem + ".b1"]));
    return ad::add_bias(ad::matmul(hidden, B[stem + ".W2"]), B[stem + ".b2"]);
  }

  /// residual add + layer norm around a sublayer output
  T<Real> sublayer(const detail::BoundParams<Real>& B, const std::string& ln, const T<Real>& x,
                   const T<Real>& sub, bool training, SeededRng* rng) const {
    return ad::layer_norm(ad::add(x, maybe_dropout(sub, training, rng)), B[ln + ".g"],
                          B[ln + ".b"]);
  }

  class TransformerSession final : public DecodeSession<Real> {
  public:
    TransformerSession(TransformerModel& m, std::vector<std::size_t> src_ids)
        : model_(m), src_(std::move(src_ids)) {}

    std::size_t initial() override {
      if (pool_.empty()) pool_.push_back({{Vocabulary::kBos}, score({Vocabulary::kBos})});
      return 0;
    }

    const std::vector<Real>& logprobs(std::size_t state) override { return pool_[state].lp; }

    std::size_t advance(std::size_t state, std::size_t token) override {
      std::vector<std::size_t> prefix = pool_[state].prefix;
      prefix.push_back(token);
      std::vector<Real> lp = score(prefix);
      pool_.push_back({std::move(prefix), std::move(lp)});
      return pool_.size() - 1;
    }

  private:
    struct Rec {
      std::vector<std::size_t> prefix;
      std::vector<Real> lp;
    };

    std::vector<Real> score(const std::vector<std::size_t>& prefix) {
      ad::Tape<Real> tape;
      ForwardResult<Real> fwd = model_.forward(tape, src_, prefix, false, nullptr);
      return detail::logprob_row(ad::row(fwd.logits, prefix.size() - 1));
    }

    TransformerModel& model_;
    std::vector<std::size_t> src_;
    std::vector<Rec> pool_;
  };
};

template <typename Real>
std::unique_ptr<DecodeSession<Real>> TransformerModel<Real>::start(
    const std::vector<std::size_t>& src_ids) {
  return std::make_unique<TransformerSession>(*this, src_ids);
}

}  // namespace

namespace detail {

template <typename Real>
std::unique_ptr<Model<Real>> make_transformer_model(const ModelConfig& cfg,
                                                    const Vocabulary& src,
                                                    const Vocabulary& tgt) {
  return std::make_unique<TransformerModel<Real>>(cfg, src, tgt);
}

template std::unique_ptr<Model<float>> make_transformer_model<float>(const ModelConfig&,
                                                                     const Vocabulary&,
                                                                     const Vocabulary&);
template std::unique_ptr<Model<double>> make_transformer_model<double>(const ModelConfig&,
                                                                       const Vocabulary&,
                                                                       const Vocabulary&);

}  // namespace detail
}  // namespace nl2sparql::nmt
