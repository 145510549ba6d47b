#include "model_detail.hpp"

#include <string>
#include <vector>

// Convolutional sequence-to-sequence: summed word and position embeddings,
// stacked blocks of conv1d -> gated linear unit -> residual, causal windows
// on the decoder side, and a separate attention over the encoder output in
// every decoder block (multi-step attention). Attention keys are the encoder
// outputs; values also fold the projected input embeddings back in.
namespace nl2sparql::nmt {
namespace {

using corpus::Vocabulary;

template <typename Real>
using T = ad::Tensor<Real>;

template <typename Real>
class ConvModel final : public Model<Real> {
public:
  ConvModel(const ModelConfig& cfg, const Vocabulary& src, const Vocabulary& tgt)
      : Model<Real>(cfg, src, tgt) {
    auto& ps = this->params_;
    const std::size_t e = cfg.embed_dim, h = cfg.hidden_units, k = cfg.kernel_width;
    ps.add("src_embed", {src.size(), e});
    ps.add("tgt_embed", {tgt.size(), e});
    // One extra row: a decode that runs to the max_len emission cap feeds a
    // <s>-framed prefix of max_len + 1 positions back through the decoder.
    ps.add("pos_src", {cfg.max_len + 1, e});
    ps.add("pos_tgt", {cfg.max_len + 1, e});
    ps.add("enc.proj.W", {e, h});
    ps.add("enc.proj.b", {h});
    ps.add("dec.proj.W", {e, h});
    ps.add("dec.proj.b", {h});
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      ps.add(block_name("enc", l) + ".K", {k, h, 2 * h});
      ps.add(block_name("enc", l) + ".b", {2 * h});
      ps.add(block_name("dec", l) + ".K", {k, h, 2 * h});
      ps.add(block_name("dec", l) + ".b", {2 * h});
    }
    ps.add("out.W", {h, tgt.size()});
    ps.add("out.b", {tgt.size()});

    SeededRng rng(cfg.seed);
    for (auto& [name, p] : ps) {
      if (name.ends_with(".b")) continue;  // biases start at zero
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

    Encoded enc = encode(B, src_ids, training, rng);
    Decoded dec = decode_all(B, tgt_in, enc, training, rng);

    ForwardResult<Real> out{dec.logits, {}, detail::copy_rows(enc.z)};
    if (dec.has_weights) out.attention = detail::copy_rows(dec.weights);
    return out;
  }

  std::unique_ptr<DecodeSession<Real>> start(const std::vector<std::size_t>& src_ids) override;

private:
  static std::string block_name(const char* stem, std::size_t l) {
    return std::string(stem) + ".b" + std::to_string(l);
  }

  struct Encoded {
    T<Real> z;       // (S, hidden), top block output
    T<Real> values;  // z plus the projected input embeddings
  };

  struct Decoded {
    T<Real> logits;
    T<Real> weights;  // top block attention, (T, S)
    bool has_weights = false;
  };

  T<Real> maybe_dropout(const T<Real>& x, bool training, SeededRng* rng) const {
    if (!training || this->config_.dropout == 0.0) return x;
    if (!rng) throw ModelError("training with dropout needs a random source");
    return ad::dropout(x, this->config_.dropout, *rng, true);
  }

  /// Word plus position embeddings, projected into the block width.
  T<Real> embed_projected(const detail::BoundParams<Real>& B,
                          const std::vector<std::size_t>& ids, const char* side) const {
    const std::size_t n = ids.size();
    if (n > this->config_.max_len + 1) {
      throw ModelError(std::string(side) + " sequence of " + std::to_string(n) +
                       " tokens exceeds the position table (max_len " +
                       std::to_string(this->config_.max_len) + ")");
    }
    const bool is_src = side[0] == 's';
    std::vector<std::size_t> positions(n);
    for (std::size_t i = 0; i < n; ++i) positions[i] = i;
    T<Real> word = ad::embedding_gather(B[is_src ? "src_embed" : "tgt_embed"], ids);
    T<Real> pos = ad::embedding_gather(B[is_src ? "pos_src" : "pos_tgt"], positions);
    T<Real> summed = ad::add(word, pos);
    const char* proj = is_src ? "enc.proj" : "dec.proj";
    return ad::add_bias(ad::matmul(summed, B[std::string(proj) + ".W"]),
                        B[std::string(proj) + ".b"]);
  }

  Encoded encode(const detail::BoundParams<Real>& B, const std::vector<std::size_t>& src_ids,
                 bool training, SeededRng* rng) {
    T<Real> x0 = embed_projected(B, src_ids, "source");
    T<Real> x = maybe_dropout(x0, training, rng);
    for (std::size_t l = 0; l < this->config_.num_layers; ++l) {
      const std::string stem = block_name("enc", l);
      T<Real> y = ad::add_bias(ad::conv1d(x, B[stem + ".K"], ad::ConvPad::Same),
                               B[stem + ".b"]);
      x = ad::add(ad::glu(y), x);
    }
    return {x, ad::add(x, x0)};
  }

  Decoded decode_all(const detail::BoundParams<Real>& B,
                     const std::vector<std::size_t>& tgt_in, const Encoded& enc, bool training,
                     SeededRng* rng) {
    T<Real> y0 = embed_projected(B, tgt_in, "target");
    T<Real> x = maybe_dropout(y0, training, rng);
    Decoded dec;
    for (std::size_t l = 0; l < this->config_.num_layers; ++l) {
      const std::string stem = block_name("dec", l);
      T<Real> c = ad::add_bias(ad::conv1d(x, B[stem + ".K"], ad::ConvPad::Causal),
                               B[stem + ".b"]);
      T<Real> g = ad::glu(c);
      // each block queries the encoder on its own; the query mixes the gated
      // state with the positioned target embeddings
      auto att = ad::scaled_dot_attention(ad::add(g, y0), enc.z, enc.values);
      x = ad::add(ad::add(g, att.output), x);
      dec.weights = att.weights;
      dec.has_weights = true;
    }
    x = maybe_dropout(x, training, rng);
    dec.logits = ad::add_bias(ad::matmul(x, B["out.W"]), B["out.b"]);
    return dec;
  }

  class ConvSession final : public DecodeSession<Real> {
  public:
    ConvSession(ConvModel& m, std::vector<std::size_t> src_ids)
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

    // the convolutional decoder has no compact recurrent state, so each
    // candidate re-runs its whole prefix on a throwaway tape
    std::vector<Real> score(const std::vector<std::size_t>& prefix) {
      ad::Tape<Real> tape;
      ForwardResult<Real> fwd = model_.forward(tape, src_, prefix, false, nullptr);
      return detail::logprob_row(
          ad::row(fwd.logits, prefix.size() - 1));
    }

    ConvModel& model_;
    std::vector<std::size_t> src_;
    std::vector<Rec> pool_;
  };
};

template <typename Real>
std::unique_ptr<DecodeSession<Real>> ConvModel<Real>::start(
    const std::vector<std::size_t>& src_ids) {
  return std::make_unique<ConvSession>(*this, src_ids);
}

}  // namespace

namespace detail {

template <typename Real>
std::unique_ptr<Model<Real>> make_conv_model(const ModelConfig& cfg, const Vocabulary& src,
                                             const Vocabulary& tgt) {
  return std::make_unique<ConvModel<Real>>(cfg, src, tgt);
}

template std::unique_ptr<Model<float>> make_conv_model<float>(const ModelConfig&,
                                                              const Vocabulary&,
                                                              const Vocabulary&);
template std::unique_ptr<Model<double>> make_conv_model<double>(const ModelConfig&,
                                                                const Vocabulary&,
                                                                const Vocabulary&);

}  // namespace detail
}  // namespace nl2sparql::nmt
