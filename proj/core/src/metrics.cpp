#include "nl2sparql/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>

namespace nl2sparql::metrics {
namespace {

// n-grams keyed by their tokens joined with an unprintable separator
using NgramCounts = std::map<std::string, std::size_t>;

NgramCounts count_ngrams(const TokenSeq& seq, int n) {
  NgramCounts counts;
  if (n <= 0 || seq.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) {
      if (k > 0) key += '\x1f';
      key += seq[i + k];
    }
    ++counts[key];
  }
  return counts;
}

void check_shapes(std::span<const TokenSeq> candidates,
                  std::span<const std::vector<TokenSeq>> references) {
  if (candidates.size() != references.size()) {
    throw MetricError("candidate/reference count mismatch: " +
                      std::to_string(candidates.size()) + " vs " +
                      std::to_string(references.size()));
  }
  for (const auto& refs : references) {
    if (refs.empty()) throw MetricError("empty reference set");
  }
}

// effective reference length: the reference closest in length to the
// candidate, ties resolved toward the shorter reference
std::size_t closest_ref_len(std::size_t cand_len, const std::vector<TokenSeq>& refs) {
  std::size_t best = refs.front().size();
  for (const auto& r : refs) {
    auto diff = [cand_len](std::size_t len) {
      return len > cand_len ? len - cand_len : cand_len - len;
    };
    if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) {
      best = r.size();
    }
  }
  return best;
}

struct PrecisionCounts {
  std::size_t clipped = 0;
  std::size_t total = 0;
};

// candidate n-gram counts clipped against the per-n-gram maximum over the
// reference set, summed across the corpus
PrecisionCounts precision_counts(std::span<const TokenSeq> candidates,
                                 std::span<const std::vector<TokenSeq>> references, int n) {
  PrecisionCounts out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    NgramCounts cand = count_ngrams(candidates[i], n);
    NgramCounts max_ref;
    for (const auto& ref : references[i]) {
      for (const auto& [key, cnt] : count_ngrams(ref, n)) {
        auto it = max_ref.find(key);
        if (it == max_ref.end() || it->second < cnt) max_ref[key] = cnt;
      }
    }
    for (const auto& [key, cnt] : cand) {
      out.total += cnt;
      auto it = max_ref.find(key);
      if (it != max_ref.end()) out.clipped += std::min(cnt, it->second);
    }
  }
  return out;
}

}  // namespace

double modified_precision(std::span<const TokenSeq> candidates,
                          std::span<const std::vector<TokenSeq>> references, int n) {
  check_shapes(candidates, references);
  if (n <= 0) throw MetricError("n-gram order must be positive");
  PrecisionCounts counts = precision_counts(candidates, references, n);
  if (counts.total == 0) return 0.0;
  return static_cast<double>(counts.clipped) / static_cast<double>(counts.total);
}

double brevity_penalty(std::size_t candidate_len, std::size_t reference_len) {
  if (candidate_len == 0) return 0.0;
  if (candidate_len > reference_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(reference_len) / static_cast<double>(candidate_len));
}

BleuReport bleu(std::span<const TokenSeq> candidates,
                std::span<const std::vector<TokenSeq>> references, const BleuParams& params) {
  check_shapes(candidates, references);
  if (params.max_n <= 0) throw MetricError("max_n must be positive");
  std::vector<double> weights = params.weights;
  if (weights.empty()) {
    weights.assign(static_cast<std::size_t>(params.max_n), 1.0 / params.max_n);
  }
  if (weights.size() != static_cast<std::size_t>(params.max_n)) {
    throw MetricError("weights size must equal max_n");
  }

  BleuReport report;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    report.candidate_len += candidates[i].size();
    report.reference_len += closest_ref_len(candidates[i].size(), references[i]);
  }
  report.brevity_penalty = brevity_penalty(report.candidate_len, report.reference_len);

  // clipped counts summed across the corpus before dividing
  double log_sum = 0.0;
  bool any_zero = false;
  for (int n = 1; n <= params.max_n; ++n) {
    PrecisionCounts counts = precision_counts(candidates, references, n);
    double p;
    if (counts.total == 0) {
      p = 0.0;
    } else if (counts.clipped == 0 && params.smooth) {
      p = 1.0 / (static_cast<double>(counts.total) + 1.0);
    } else {
      p = static_cast<double>(counts.clipped) / static_cast<double>(counts.total);
    }
    report.precisions.push_back(p);
    if (p <= 0.0) {
      any_zero = true;
    } else {
      log_sum += weights[static_cast<std::size_t>(n - 1)] * std::log(p);
    }
  }

  report.bleu = any_zero ? 0.0 : report.brevity_penalty * std::exp(log_sum);
  return report;
}

BleuReport bleu_single(std::span<const TokenSeq> candidates, std::span<const TokenSeq> references,
                       const BleuParams& params) {
  std::vector<std::vector<TokenSeq>> wrapped;
  wrapped.reserve(references.size());
  for (const auto& r : references) wrapped.push_back({r});
  return bleu(candidates, wrapped, params);
}

namespace {

CrossEntropyReport cross_entropy_impl(std::span<const std::vector<double>> probs,
                                      const std::vector<std::vector<double>>* target_dist,
                                      std::span<const std::size_t> targets) {
  constexpr double kFloor = 1e-12;
  if (probs.empty()) throw MetricError("cross_entropy needs at least one row");
  CrossEntropyReport report;
  double sum = 0.0;
  for (std::size_t r = 0; r < probs.size(); ++r) {
    const auto& row = probs[r];
    if (row.empty()) throw MetricError("empty probability row");
    double mass = std::accumulate(row.begin(), row.end(), 0.0);
    if (std::abs(mass - 1.0) > 1e-6) {
      throw MetricError("probability row " + std::to_string(r) + " sums to " +
                        std::to_string(mass) + ", not 1");
    }
    if (target_dist != nullptr) {
      const auto& t = (*target_dist)[r];
      if (t.size() != row.size()) throw MetricError("target/probability row width mismatch");
      double h = 0.0;
      bool clamped = false;
      for (std::size_t x = 0; x < row.size(); ++x) {
        if (t[x] == 0.0) continue;
        double q = row[x];
        if (q < kFloor) {
          q = kFloor;
          clamped = true;
        }
        h -= t[x] * std::log2(q);
      }
      if (clamped) ++report.clamped;
      sum += h;
    } else {
      std::size_t idx = targets[r];
      if (idx >= row.size()) throw MetricError("target index out of range");
      double q = row[idx];
      if (q < kFloor) {
        q = kFloor;
        ++report.clamped;
      }
      sum += -std::log2(q);
    }
  }
  report.bits = sum / static_cast<double>(probs.size());
  return report;
}

}  // namespace

CrossEntropyReport cross_entropy(std::span<const std::size_t> targets,
                                 std::span<const std::vector<double>> probs) {
  if (targets.size() != probs.size()) throw MetricError("targets/probs row count mismatch");
  return cross_entropy_impl(probs, nullptr, targets);
}

CrossEntropyReport cross_entropy(std::span<const std::vector<double>> target_dist,
                                 std::span<const std::vector<double>> probs) {
  if (target_dist.size() != probs.size()) throw MetricError("targets/probs row count mismatch");
  std::vector<std::vector<double>> dist(target_dist.begin(), target_dist.end());
  return cross_entropy_impl(probs, &dist, {});
}

double perplexity(double bits) { return std::exp2(bits); }

double token_f1(const TokenSeq& candidate, const TokenSeq& reference) {
  if (candidate.empty() && reference.empty()) return 1.0;
  if (candidate.empty() || reference.empty()) return 0.0;
  std::map<std::string, std::size_t> ref_counts;
  for (const auto& t : reference) ++ref_counts[t];
  std::size_t overlap = 0;
  for (const auto& t : candidate) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  double precision = static_cast<double>(overlap) / static_cast<double>(candidate.size());
  double recall = static_cast<double>(overlap) / static_cast<double>(reference.size());
  return 2.0 * precision * recall / (precision + recall);
}

MatchReport exact_match(std::span<const TokenSeq> candidates, std::span<const TokenSeq> targets) {
  if (candidates.size() != targets.size()) {
    throw MetricError("candidate/target count mismatch");
  }
  if (candidates.empty()) throw MetricError("exact_match needs at least one pair");
  MatchReport report;
  std::size_t hits = 0;
  double f1_sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    bool same = candidates[i] == targets[i];
    report.matched.push_back(same);
    if (same) ++hits;
    f1_sum += token_f1(candidates[i], targets[i]);
  }
  report.accuracy = static_cast<double>(hits) / static_cast<double>(candidates.size());
  report.f1_mean = f1_sum / static_cast<double>(candidates.size());
  return report;
}

}  // namespace nl2sparql::metrics
