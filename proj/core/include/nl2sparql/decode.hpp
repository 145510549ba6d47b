#pragma once

#include "nl2sparql/model.hpp"

#include <cstddef>
#include <vector>

namespace nl2sparql::nmt {

/// One decoded hypothesis: the emitted tokens (without the sentence markers),
/// whether the end marker was actually produced, and the length-normalized
/// log-probability used to rank it.
struct BeamResult {
  std::vector<std::size_t> ids;
  bool finished = false;
  double score = 0.0;
};

// Beam search over an abstract decoding session. Padding and the start
// marker can never be emitted; the unknown token is suppressed unless every
// alternative is hopeless. Scores are cumulative log-probabilities divided by
// the emitted length (the end marker counts). When no hypothesis finishes
// within max_len steps the best live prefix is returned with finished=false.
template <typename Real>
BeamResult beam_decode(DecodeSession<Real>& session, std::size_t vocab_size,
                       std::size_t beam_width, std::size_t max_len);

/// Greedy decoding: the beam_width == 1 special case, written out directly.
template <typename Real>
BeamResult greedy_decode(DecodeSession<Real>& session, std::size_t vocab_size,
                         std::size_t max_len);

// Conveniences that pull width, length cap and vocabulary from the model.
template <typename Real>
BeamResult beam_decode(Model<Real>& model, const std::vector<std::size_t>& src_ids);

template <typename Real>
BeamResult greedy_decode(Model<Real>& model, const std::vector<std::size_t>& src_ids);

}  // namespace nl2sparql::nmt
