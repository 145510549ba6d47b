#ifndef NL2SPARQL_MODEL_DETAIL_HPP
#define NL2SPARQL_MODEL_DETAIL_HPP

#include "nl2sparql/model.hpp"

#include <cmath>
#include <memory>
#include <vector>

// Shared plumbing for the three architecture translation units.
namespace nl2sparql::nmt::detail {

template <typename Real>
std::unique_ptr<Model<Real>> make_rnn_model(const ModelConfig&, const corpus::Vocabulary&,
                                            const corpus::Vocabulary&);
template <typename Real>
std::unique_ptr<Model<Real>> make_conv_model(const ModelConfig&, const corpus::Vocabulary&,
                                             const corpus::Vocabulary&);
template <typename Real>
std::unique_ptr<Model<Real>> make_transformer_model(const ModelConfig&,
                                                    const corpus::Vocabulary&,
                                                    const corpus::Vocabulary&);

/// Fan-in scaled normal init, the conv/transformer convention here.
template <typename Real>
void init_fan_in(ad::Param<Real>& p, SeededRng& rng, std::size_t fan_in) {
  ad::fill_normal(p, rng, 0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

/// Fan-in per parameter kind: kernels see k*d_in inputs, projection matrices
/// their row count, and lookup tables scale by their row width.
inline std::size_t fan_in_for(const std::string& name, const ad::Shape& shape) {
  if (shape.size() == 3) return shape[0] * shape[1];
  const bool lookup = name.find("embed") != std::string::npos ||
                      name.rfind("pos_", 0) == 0;
  if (shape.size() == 2) return lookup ? shape[1] : shape[0];
  return shape.empty() ? 1 : shape[0];
}

/// Bounds-checks ids against the vocabulary before gathering embeddings, so
/// the error names the vocabulary rather than a bare table shape.
inline void check_ids(const std::vector<std::size_t>& ids, const corpus::Vocabulary& vocab,
                      const char* side) {
  for (std::size_t id : ids) {
    if (id >= vocab.size()) {
      throw ModelError(std::string(side) + " id " + std::to_string(id) +
                       " outside vocabulary of " + std::to_string(vocab.size()));
    }
  }
}

/// Copies each row of a (rows, cols) tensor value into its own vector.
template <typename Real>
std::vector<std::vector<Real>> copy_rows(const ad::Tensor<Real>& t) {
  const std::size_t rows = t.shape().at(0), cols = t.shape().at(1);
  std::vector<std::vector<Real>> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    out[r].assign(t.value().begin() + static_cast<std::ptrdiff_t>(r * cols),
                  t.value().begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  }
  return out;
}

/// Row of next-token log-probabilities from a (1, V) logits tensor.
template <typename Real>
std::vector<Real> logprob_row(const ad::Tensor<Real>& logits_row) {
  return ad::log_softmax(logits_row).value();
}

/// Every parameter placed once onto one tape, keyed by name. Training tapes
/// bind differentiable leaves; decode tapes bind constants.
template <typename Real>
class BoundParams {
public:
  BoundParams(ad::Tape<Real>& tape, ad::ParamSet<Real>& params, bool differentiable) {
    for (auto& [name, p] : params) {
      if (differentiable) {
        bound_.emplace(name, ad::use(tape, p));
      } else {
        bound_.emplace(name, tape.input(p.shape, p.value));
      }
    }
  }

  const ad::Tensor<Real>& operator[](const std::string& name) const {
    auto it = bound_.find(name);
    if (it == bound_.end()) throw ModelError("unbound parameter '" + name + "'");
    return it->second;
  }

private:
  std::map<std::string, ad::Tensor<Real>> bound_;
};

}  // namespace nl2sparql::nmt::detail

#endif
