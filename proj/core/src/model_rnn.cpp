#include "model_detail.hpp"

#include <algorithm>
#include <string>
#include <vector>

// Stacked LSTM encoder-decoder. Options: a bidirectional first encoder layer
// whose two passes are concatenated, residual connections from a configured
// layer upward (cell output plus cell input), and two attention variants over
// the top encoder states: additive scoring of every position, and a
// multiplicative variant restricted to a window around the current step.
namespace nl2sparql::nmt {
namespace {

using corpus::Vocabulary;

template <typename Real>
using T = ad::Tensor<Real>;

template <typename Real>
struct CellState {
  T<Real> h;
  T<Real> c;
};

template <typename Real>
class RnnModel final : public Model<Real> {
public:
  RnnModel(const ModelConfig& cfg, const Vocabulary& src, const Vocabulary& tgt)
      : Model<Real>(cfg, src, tgt) {
    auto& ps = this->params_;
    const std::size_t e = cfg.embed_dim, h = cfg.hidden_units;
    ps.add("src_embed", {src.size(), e});
    ps.add("tgt_embed", {tgt.size(), e});

    auto add_cell = [&](const std::string& stem, std::size_t in) {
      ps.add(stem + ".W", {in + h, 4 * h});
      ps.add(stem + ".b", {4 * h});
    };
    if (cfg.bidirectional_first) {
      add_cell("enc.l0.fw", e);
      add_cell("enc.l0.bw", e);
    } else {
      add_cell("enc.l0", e);
    }
    for (std::size_t l = 1; l < cfg.num_layers; ++l) {
      add_cell(layer_name("enc", l), l == 1 && cfg.bidirectional_first ? 2 * h : h);
    }
    add_cell("dec.l0", e);
    for (std::size_t l = 1; l < cfg.num_layers; ++l) add_cell(layer_name("dec", l), h);

    if (cfg.attention == AttentionKind::GlobalAdditive) {
      ps.add("att.W1", {h, h});
      ps.add("att.W2", {h, h});
      ps.add("att.v", {h, 1});
      ps.add("att.Wc", {2 * h, h});
    } else if (cfg.attention == AttentionKind::LocalMultiplicative) {
      ps.add("att.Wa", {h, h});
      ps.add("att.Wc", {2 * h, h});
    }
    ps.add("out.W", {h, tgt.size()});
    ps.add("out.b", {tgt.size()});

    SeededRng rng(cfg.seed);
    for (auto& [name, p] : ps) ad::fill_uniform(p, rng, -0.08, 0.08);
  }

  ForwardResult<Real> forward(ad::Tape<Real>& tape, const std::vector<std::size_t>& src_ids,
                              const std::vector<std::size_t>& tgt_in, bool training,
                              SeededRng* rng) override {
    detail::check_ids(src_ids, this->src_vocab_, "source");
    detail::check_ids(tgt_in, this->tgt_vocab_, "target");
    if (src_ids.empty() || tgt_in.empty()) throw ModelError("empty sequence");
    detail::BoundParams<Real> B(tape, this->params_, true);

    Encoded enc = encode(tape, B, src_ids, training, rng);

    T<Real> tgt_emb = ad::embedding_gather(B["tgt_embed"], tgt_in);
    std::vector<CellState<Real>> states = enc.finals;
    std::vector<T<Real>> rows;
    ForwardResult<Real> out{{}, {}, detail::copy_rows(enc.top)};
    for (std::size_t t = 0; t < tgt_in.size(); ++t) {
      Step step = decode_step(tape, B, ad::row(tgt_emb, t), states, enc.top, t, training, rng);
      states = std::move(step.states);
      rows.push_back(step.logits);
      if (step.has_weights) out.attention.push_back(step.weights.value());
    }
    out.logits = ad::stack_rows(rows);
    return out;
  }

  std::unique_ptr<DecodeSession<Real>> start(const std::vector<std::size_t>& src_ids) override;

private:
  static std::string layer_name(const char* stem, std::size_t l) {
    return std::string(stem) + ".l" + std::to_string(l);
  }

  struct Encoded {
    T<Real> top;  // (S, hidden)
    std::vector<CellState<Real>> finals;
  };

  struct Step {
    T<Real> logits;  // (1, |tgt|)
    std::vector<CellState<Real>> states;
    T<Real> weights;  // (1, S) when attention is on
    bool has_weights = false;
  };

  CellState<Real> zero_state(ad::Tape<Real>& tape) const {
    const std::size_t h = this->config_.hidden_units;
    return {tape.zeros({1, h}), tape.zeros({1, h})};
  }

  CellState<Real> lstm_step(const T<Real>& W, const T<Real>& b, const T<Real>& x,
                            const CellState<Real>& prev) const {
    const std::size_t h = this->config_.hidden_units;
    T<Real> z = ad::add_bias(ad::matmul(ad::concat_cols(x, prev.h), W), b);
    T<Real> i = ad::sigmoid(ad::slice_cols(z, 0, h));
    T<Real> f = ad::sigmoid(ad::slice_cols(z, h, 2 * h));
    T<Real> g = ad::tanh(ad::slice_cols(z, 2 * h, 3 * h));
    T<Real> o = ad::sigmoid(ad::slice_cols(z, 3 * h, 4 * h));
    T<Real> c = ad::add(ad::mul(f, prev.c), ad::mul(i, g));
    return {ad::mul(o, ad::tanh(c)), c};
  }

  T<Real> maybe_dropout(const T<Real>& x, bool training, SeededRng* rng) const {
    if (!training || this->config_.dropout == 0.0) return x;
    if (!rng) throw ModelError("training with dropout needs a random source");
    return ad::dropout(x, this->config_.dropout, *rng, true);
  }

  bool residual_at(std::size_t l) const {
    const std::size_t from = this->config_.residual_from_layer;
    return from != 0 && l + 1 >= from;
  }

  Encoded encode(ad::Tape<Real>& tape, const detail::BoundParams<Real>& B,
                 const std::vector<std::size_t>& src_ids, bool training, SeededRng* rng) {
    const ModelConfig& cfg = this->config_;
    const std::size_t S = src_ids.size();
    T<Real> emb = maybe_dropout(ad::embedding_gather(B["src_embed"], src_ids), training, rng);

    std::vector<T<Real>> inputs;
    for (std::size_t s = 0; s < S; ++s) inputs.push_back(ad::row(emb, s));

    Encoded enc;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      std::vector<T<Real>> outputs(S);
      CellState<Real> final_state = zero_state(tape);
      if (l == 0 && cfg.bidirectional_first) {
        CellState<Real> fw = zero_state(tape), bw = zero_state(tape);
        std::vector<T<Real>> fwd(S), rev(S);
        for (std::size_t s = 0; s < S; ++s) {
          fw = lstm_step(B["enc.l0.fw.W"], B["enc.l0.fw.b"], inputs[s], fw);
          fwd[s] = fw.h;
        }
        for (std::size_t s = S; s-- > 0;) {
          bw = lstm_step(B["enc.l0.bw.W"], B["enc.l0.bw.b"], inputs[s], bw);
          rev[s] = bw.h;
        }
        for (std::size_t s = 0; s < S; ++s) outputs[s] = ad::concat_cols(fwd[s], rev[s]);
        final_state = fw;  // the decoder starts from the left-to-right pass
      } else {
        const std::string stem = layer_name("enc", l);
        CellState<Real> st = zero_state(tape);
        for (std::size_t s = 0; s < S; ++s) {
          st = lstm_step(B[stem + ".W"], B[stem + ".b"], inputs[s], st);
          outputs[s] = residual_at(l) ? ad::add(st.h, inputs[s]) : st.h;
        }
        final_state = st;
      }
      enc.finals.push_back(final_state);
      inputs = std::move(outputs);
      if (l + 1 < cfg.num_layers) {
        for (auto& r : inputs) r = maybe_dropout(r, training, rng);
      }
    }
    enc.top = ad::stack_rows(inputs);
    return enc;
  }

  // `pos` is the index of the target position being predicted; the local
  // variant aims its window at min(pos, S-1), a monotonic alignment guess.
  Step decode_step(ad::Tape<Real>& tape, const detail::BoundParams<Real>& B, const T<Real>& x,
                   const std::vector<CellState<Real>>& prev, const T<Real>& enc_top,
                   std::size_t pos, bool training, SeededRng* rng) {
    const ModelConfig& cfg = this->config_;
    Step step;
    T<Real> in = maybe_dropout(x, training, rng);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      const std::string stem = layer_name("dec", l);
      CellState<Real> st = lstm_step(B[stem + ".W"], B[stem + ".b"], in, prev[l]);
      T<Real> out_row = residual_at(l) ? ad::add(st.h, in) : st.h;
      step.states.push_back(st);
      in = l + 1 < cfg.num_layers ? maybe_dropout(out_row, training, rng) : out_row;
    }

    T<Real> feat = in;
    if (cfg.attention != AttentionKind::None) {
      const std::size_t S = enc_top.shape()[0];
      T<Real> scores{};
      if (cfg.attention == AttentionKind::GlobalAdditive) {
        T<Real> keyed = ad::tanh(
            ad::add_bias(ad::matmul(enc_top, B["att.W2"]), ad::matmul(feat, B["att.W1"])));
        scores = ad::transpose(ad::matmul(keyed, B["att.v"]));
      } else {
        scores = ad::matmul_nt(ad::matmul(feat, B["att.Wa"]), enc_top);
        const std::size_t p = std::min(pos, S - 1);
        const std::size_t lo = p >= cfg.local_window ? p - cfg.local_window : 0;
        const std::size_t hi = std::min(S, p + cfg.local_window + 1);
        std::vector<Real> m(S, ad::mask_off<Real>());
        for (std::size_t s = lo; s < hi; ++s) m[s] = Real(0);
        scores = ad::add(scores, tape.input({1, S}, std::move(m)));
      }
      step.weights = ad::softmax(scores);
      step.has_weights = true;
      T<Real> ctx = ad::matmul(step.weights, enc_top);
      feat = ad::tanh(ad::matmul(ad::concat_cols(ctx, feat), B["att.Wc"]));
    }
    feat = maybe_dropout(feat, training, rng);
    step.logits = ad::add_bias(ad::matmul(feat, B["out.W"]), B["out.b"]);
    return step;
  }

  class RnnSession final : public DecodeSession<Real> {
  public:
    RnnSession(RnnModel& m, const std::vector<std::size_t>& src_ids)
        : model_(m), bound_(tape_, m.params_, false) {
      detail::check_ids(src_ids, m.src_vocab_, "source");
      if (src_ids.empty()) throw ModelError("empty sequence");
      enc_ = model_.encode(tape_, bound_, src_ids, false, nullptr);
    }

    std::size_t initial() override {
      if (pool_.empty()) push_state(enc_.finals, Vocabulary::kBos, 0);
      return 0;
    }

    const std::vector<Real>& logprobs(std::size_t state) override { return pool_[state].lp; }

    std::size_t advance(std::size_t state, std::size_t token) override {
      const Rec& r = pool_[state];
      push_state(r.states, token, r.pos + 1);
      return pool_.size() - 1;
    }

  private:
    struct Rec {
      std::vector<CellState<Real>> states;
      std::vector<Real> lp;
      std::size_t pos;
    };

    void push_state(const std::vector<CellState<Real>>& prev, std::size_t token,
                    std::size_t pos) {
      T<Real> x = ad::embedding_gather(bound_["tgt_embed"], std::vector<std::size_t>{token});
      Step step = model_.decode_step(tape_, bound_, x, prev, enc_.top, pos, false, nullptr);
      pool_.push_back({std::move(step.states), detail::logprob_row(step.logits), pos});
    }

    RnnModel& model_;
    ad::Tape<Real> tape_;
    detail::BoundParams<Real> bound_;
    Encoded enc_;
    std::vector<Rec> pool_;
  };
};

template <typename Real>
std::unique_ptr<DecodeSession<Real>> RnnModel<Real>::start(
    const std::vector<std::size_t>& src_ids) {
  return std::make_unique<typename RnnModel<Real>::RnnSession>(*this, src_ids);
}

}  // namespace

namespace detail {

template <typename Real>
std::unique_ptr<Model<Real>> make_rnn_model(const ModelConfig& cfg, const Vocabulary& src,
                                            const Vocabulary& tgt) {
  return std::make_unique<RnnModel<Real>>(cfg, src, tgt);
}

template std::unique_ptr<Model<float>> make_rnn_model<float>(const ModelConfig&,
                                                             const Vocabulary&,
                                                             const Vocabulary&);
template std::unique_ptr<Model<double>> make_rnn_model<double>(const ModelConfig&,
                                                               const Vocabulary&,
                                                               const Vocabulary&);

}  // namespace detail
}  // namespace nl2sparql::nmt
