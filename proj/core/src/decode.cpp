#include "nl2sparql/decode.hpp"

#include "nl2sparql/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace nl2sparql::nmt {
namespace {

using corpus::Vocabulary;

// Below this log-probability a token is considered hopeless; the unknown
// token is only allowed through when everything else is.
const double kUnkFloor = std::log(1e-9);

/// Per-step candidate scores with the structural tokens masked out.
template <typename Real>
std::vector<double> masked_logprobs(const std::vector<Real>& lp) {
  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> out(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) out[i] = static_cast<double>(lp[i]);
  out[Vocabulary::kPad] = ninf;
  out[Vocabulary::kBos] = ninf;
  bool any_alive = false;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i == Vocabulary::kUnk || i == Vocabulary::kPad || i == Vocabulary::kBos) continue;
    if (out[i] >= kUnkFloor) {
      any_alive = true;
      break;
    }
  }
  if (any_alive) out[Vocabulary::kUnk] = ninf;
  return out;
}

void check_vocab(std::size_t vocab_size) {
  if (vocab_size <= Vocabulary::kUnk) {
    throw ModelError("decoder needs a vocabulary with the reserved tokens");
  }
}

double normalized(double cum, std::size_t emitted) {
  return cum / static_cast<double>(emitted == 0 ? 1 : emitted);
}

}  // namespace

template <typename Real>
BeamResult beam_decode(DecodeSession<Real>& session, std::size_t vocab_size,
                       std::size_t beam_width, std::size_t max_len) {
  check_vocab(vocab_size);
  if (beam_width == 0) throw ModelError("beam width must be positive");

  struct Hyp {
    std::size_t state;
    std::vector<std::size_t> ids;
    double cum;
  };
  std::vector<Hyp> live;
  live.push_back({session.initial(), {}, 0.0});
  std::vector<BeamResult> done;

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    struct Cand {
      double cum;
      std::size_t hyp;
      std::size_t tok;
    };
    std::vector<Cand> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      std::vector<double> lp = masked_logprobs(session.logprobs(live[h].state));
      for (std::size_t tok = 0; tok < lp.size() && tok < vocab_size; ++tok) {
        if (std::isinf(lp[tok]) && lp[tok] < 0) continue;
        cands.push_back({live[h].cum + lp[tok], h, tok});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.cum != b.cum) return a.cum > b.cum;
      if (a.hyp != b.hyp) return a.hyp < b.hyp;
      return a.tok < b.tok;
    });
    if (cands.size() > beam_width) cands.resize(beam_width);

    std::vector<Hyp> next;
    for (const Cand& c : cands) {
      const Hyp& parent = live[c.hyp];
      if (c.tok == Vocabulary::kEos) {
        done.push_back({parent.ids, true, normalized(c.cum, parent.ids.size() + 1)});
        continue;
      }
      Hyp child{session.advance(parent.state, c.tok), parent.ids, c.cum};
      child.ids.push_back(c.tok);
      next.push_back(std::move(child));
    }
    live = std::move(next);
  }

  auto better = [](const BeamResult& a, const BeamResult& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.ids < b.ids;
  };
  if (!done.empty()) {
    return *std::min_element(done.begin(), done.end(),
                             [&](const BeamResult& a, const BeamResult& b) {
                               return better(a, b);
                             });
  }
  BeamResult best{{}, false, -std::numeric_limits<double>::infinity()};
  bool have = false;
  for (const Hyp& h : live) {
    BeamResult r{h.ids, false, normalized(h.cum, h.ids.size())};
    if (!have || better(r, best)) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

template <typename Real>
BeamResult greedy_decode(DecodeSession<Real>& session, std::size_t vocab_size,
                         std::size_t max_len) {
  check_vocab(vocab_size);
  BeamResult out;
  std::size_t state = session.initial();
  double cum = 0.0;
  for (std::size_t step = 0; step < max_len; ++step) {
    std::vector<double> lp = masked_logprobs(session.logprobs(state));
    std::size_t best = Vocabulary::kEos;  // lowest index that is never masked
    for (std::size_t tok = 0; tok < lp.size() && tok < vocab_size; ++tok) {
      if (lp[tok] > lp[best]) best = tok;
    }
    cum += lp[best];
    if (best == Vocabulary::kEos) {
      out.finished = true;
      out.score = normalized(cum, out.ids.size() + 1);
      return out;
    }
    out.ids.push_back(best);
    state = session.advance(state, best);
  }
  out.score = normalized(cum, out.ids.size());
  return out;
}

template <typename Real>
BeamResult beam_decode(Model<Real>& model, const std::vector<std::size_t>& src_ids) {
  auto session = model.start(src_ids);
  return beam_decode(*session, model.tgt_vocab().size(), model.config().beam_width,
                     model.config().max_len);
}

template <typename Real>
BeamResult greedy_decode(Model<Real>& model, const std::vector<std::size_t>& src_ids) {
  auto session = model.start(src_ids);
  return greedy_decode(*session, model.tgt_vocab().size(), model.config().max_len);
}

template BeamResult beam_decode<float>(DecodeSession<float>&, std::size_t, std::size_t,
                                       std::size_t);
template BeamResult beam_decode<double>(DecodeSession<double>&, std::size_t, std::size_t,
                                        std::size_t);
template BeamResult greedy_decode<float>(DecodeSession<float>&, std::size_t, std::size_t);
template BeamResult greedy_decode<double>(DecodeSession<double>&, std::size_t, std::size_t);
template BeamResult beam_decode<float>(Model<float>&, const std::vector<std::size_t>&);
template BeamResult beam_decode<double>(Model<double>&, const std::vector<std::size_t>&);
template BeamResult greedy_decode<float>(Model<float>&, const std::vector<std::size_t>&);
template BeamResult greedy_decode<double>(Model<double>&, const std::vector<std::size_t>&);

}  // namespace nl2sparql::nmt
