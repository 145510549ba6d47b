#ifndef NL2SPARQL_METRICS_HPP
#define NL2SPARQL_METRICS_HPP

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Corpus-level translation metrics: BLEU with brevity penalty, base-2
// cross-entropy / perplexity, exact-match accuracy and token F1.
namespace nl2sparql::metrics {

using TokenSeq = std::vector<std::string>;

class MetricError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct BleuParams {
  int max_n = 4;
  /// Per-order weights; empty means uniform 1/max_n.
  std::vector<double> weights;
  /// Add-one smoothing for n-gram orders with zero matches (off by default:
  /// a zero precision then zeroes the whole score).
  bool smooth = false;
};

struct BleuReport {
  double bleu = 0.0;  // in [0, 1]; callers usually render it x100
  double brevity_penalty = 0.0;
  std::vector<double> precisions;    // p_1 .. p_max_n
  std::size_t candidate_len = 0;     // total candidate length c
  std::size_t reference_len = 0;     // total effective reference length r
};

/// Clipped modified n-gram precision over a whole corpus: per-candidate
/// counts are clipped against the best reference and summed before dividing.
/// `references[i]` holds the reference set for candidate i (at least one).
double modified_precision(std::span<const TokenSeq> candidates,
                          std::span<const std::vector<TokenSeq>> references, int n);

/// BP = 1 when c > r, exp(1 - r/c) otherwise; 0 when c == 0.
double brevity_penalty(std::size_t candidate_len, std::size_t reference_len);

/// Corpus BLEU. Throws MetricError when candidate and reference counts
/// differ, a reference set is empty, or weights are inconsistent.
BleuReport bleu(std::span<const TokenSeq> candidates,
                std::span<const std::vector<TokenSeq>> references, const BleuParams& params = {});

/// Single-reference convenience overload.
BleuReport bleu_single(std::span<const TokenSeq> candidates, std::span<const TokenSeq> references,
                       const BleuParams& params = {});

struct CrossEntropyReport {
  double bits = 0.0;       // mean -log2 q over rows
  std::size_t clamped = 0; // rows where q fell below the 1e-12 floor
};

/// Mean -log2 q(target) over rows of a predicted distribution. Each row of
/// `probs` must sum to 1 within 1e-6; `targets[i]` indexes the true symbol.
/// Probabilities below 1e-12 are clamped (and counted) instead of producing
/// infinities.
CrossEntropyReport cross_entropy(std::span<const std::size_t> targets,
                                 std::span<const std::vector<double>> probs);

/// General form: H = mean over rows of -sum_x p(x) log2 q(x). One-hot rows
/// of `target_dist` reduce to the index form above.
CrossEntropyReport cross_entropy(std::span<const std::vector<double>> target_dist,
                                 std::span<const std::vector<double>> probs);

/// ppl = 2^bits.
double perplexity(double bits);

/// Multiset token F1 between a candidate and a reference sequence; two empty
/// sequences score 1.
double token_f1(const TokenSeq& candidate, const TokenSeq& reference);

struct MatchReport {
  double accuracy = 0.0;        // fraction of exact sequence matches
  std::vector<bool> matched;    // per-pair flags
  double f1_mean = 0.0;         // mean multiset token F1
};

/// Order-sensitive exact sequence match plus mean token F1.
MatchReport exact_match(std::span<const TokenSeq> candidates,
                        std::span<const TokenSeq> targets);

}  // namespace nl2sparql::metrics

#endif
