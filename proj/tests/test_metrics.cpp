#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nl2sparql/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace nl2sparql::metrics;

namespace {

TokenSeq toks(std::initializer_list<const char*> words) {
  TokenSeq out;
  for (const char* w : words) out.emplace_back(w);
  return out;
}

}  // namespace

TEST_CASE("modified precision clips repeated candidate n-grams") {
  // the classic degenerate candidate: seven 'the' against two references
  std::vector<TokenSeq> cand = {toks({"the", "the", "the", "the", "the", "the", "the"})};
  std::vector<std::vector<TokenSeq>> refs = {
      {toks({"the", "cat", "is", "on", "the", "mat"}),
       toks({"there", "is", "a", "cat", "on", "the", "mat"})}};
  CHECK(modified_precision(cand, refs, 1) == doctest::Approx(2.0 / 7.0).epsilon(1e-12));

  std::vector<TokenSeq> cand2 = {toks({"a", "a", "a", "a"})};
  std::vector<std::vector<TokenSeq>> refs2 = {{toks({"a", "b"})}};
  CHECK(modified_precision(cand2, refs2, 1) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(modified_precision(cand2, refs2, 2) == doctest::Approx(0.0));
}

TEST_CASE("brevity penalty formula") {
  CHECK(brevity_penalty(10, 5) == 1.0);
  CHECK(brevity_penalty(5, 5) == 1.0);  // exp(0)
  CHECK(std::abs(brevity_penalty(5, 10) - std::exp(-1.0)) < 1e-12);
  CHECK(brevity_penalty(0, 7) == 0.0);
}

TEST_CASE("identical corpora score BLEU 1 with unit precisions") {
  std::vector<TokenSeq> corpus = {
      toks({"select", "var_x", "where", "brack_open", "var_x", "brack_close"}),
      toks({"ask", "brack_open", "dbr_Paris", "dbo_country", "dbr_France", "brack_close"}),
  };
  std::vector<TokenSeq> same = corpus;
  BleuReport r = bleu_single(corpus, same);
  CHECK(r.bleu == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.brevity_penalty == 1.0);
  REQUIRE(r.precisions.size() == 4);
  for (double p : r.precisions) CHECK(p == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.candidate_len == 12);
  CHECK(r.reference_len == 12);
}

TEST_CASE("unigram BLEU of 'a a a a' against 'a b' is exactly 0.25") {
  std::vector<TokenSeq> cand = {toks({"a", "a", "a", "a"})};
  std::vector<TokenSeq> ref = {toks({"a", "b"})};
  BleuParams params;
  params.max_n = 1;
  BleuReport r = bleu_single(cand, ref, params);
  // c=4 > r=2 so BP=1; p1 = 1/4
  CHECK(std::abs(r.bleu - 0.25) < 1e-9);
  CHECK(r.brevity_penalty == 1.0);
}

TEST_CASE("any zero precision zeroes BLEU unless smoothing is on") {
  std::vector<TokenSeq> cand = {toks({"a", "b", "c", "x"})};
  std::vector<TokenSeq> ref = {toks({"a", "b", "c", "d"})};
  BleuReport r = bleu_single(cand, ref);
  CHECK(r.precisions[0] == doctest::Approx(0.75));
  CHECK(r.precisions[3] == 0.0);  // no 4-gram match
  CHECK(r.bleu == 0.0);

  BleuParams smooth;
  smooth.smooth = true;
  BleuReport rs = bleu_single(cand, ref, smooth);
  CHECK(rs.bleu > 0.0);
  CHECK(rs.precisions[3] == doctest::Approx(0.5));  // add-one: 1/(1+1)
}

TEST_CASE("effective reference length picks the closest, ties to shorter") {
  std::vector<TokenSeq> cand = {toks({"w", "w", "w", "w"})};  // length 4
  std::vector<std::vector<TokenSeq>> refs = {
      {toks({"w", "w", "w"}), toks({"w", "w", "w", "w", "w"})}};  // lengths 3 and 5
  BleuReport r = bleu(cand, refs);
  CHECK(r.reference_len == 3);
}

TEST_CASE("BLEU is invariant under corpus permutation") {
  std::mt19937 rng(7);
  std::vector<TokenSeq> cand, ref;
  const char* words[] = {"a", "b", "c", "d", "e"};
  for (int i = 0; i < 40; ++i) {
    TokenSeq c, r;
    int len = 3 + static_cast<int>(rng() % 6);
    for (int k = 0; k < len; ++k) {
      c.push_back(words[rng() % 5]);
      r.push_back(words[rng() % 5]);
    }
    cand.push_back(c);
    ref.push_back(r);
  }
  BleuParams params;
  params.smooth = true;
  double base = bleu_single(cand, ref, params).bleu;

  std::vector<std::size_t> order(cand.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<TokenSeq> cand2, ref2;
  for (std::size_t i : order) {
    cand2.push_back(cand[i]);
    ref2.push_back(ref[i]);
  }
  CHECK(bleu_single(cand2, ref2, params).bleu == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("shape errors are rejected") {
  std::vector<TokenSeq> cand = {toks({"a"})};
  std::vector<TokenSeq> refs2 = {toks({"a"}), toks({"b"})};
  CHECK_THROWS_AS(bleu_single(cand, refs2), MetricError);
  std::vector<std::vector<TokenSeq>> empty_refs = {{}};
  CHECK_THROWS_AS(bleu(cand, empty_refs), MetricError);
}

TEST_CASE("cross entropy of the uniform distribution is log2 V, perplexity V") {
  for (std::size_t v : {2u, 4u, 8u, 16u}) {
    std::vector<std::vector<double>> probs(5, std::vector<double>(v, 1.0 / v));
    std::vector<std::size_t> targets = {0, v - 1, v / 2, 1, 0};
    CrossEntropyReport h = cross_entropy(targets, probs);
    CHECK(h.bits == doctest::Approx(std::log2(static_cast<double>(v))).epsilon(1e-12));
    CHECK(h.clamped == 0);
    CHECK(perplexity(h.bits) == doctest::Approx(static_cast<double>(v)).epsilon(1e-12));
  }
}

TEST_CASE("perplexity is exactly 2^bits") {
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> dist(0.0, 12.0);
  for (int i = 0; i < 50; ++i) {
    double h = dist(rng);
    CHECK(std::abs(perplexity(h) - std::pow(2.0, h)) < 1e-9);
  }
}

TEST_CASE("zero probability on the target is clamped and counted") {
  std::vector<std::vector<double>> probs = {{1.0, 0.0}, {0.5, 0.5}};
  std::vector<std::size_t> targets = {1, 0};  // first row puts no mass on its target
  CrossEntropyReport h = cross_entropy(targets, probs);
  CHECK(h.clamped == 1);
  CHECK(h.bits == doctest::Approx((-std::log2(1e-12) + 1.0) / 2.0).epsilon(1e-9));
}

TEST_CASE("rows that do not sum to one are rejected") {
  std::vector<std::vector<double>> probs = {{0.5, 0.4}};
  std::vector<std::size_t> targets = {0};
  CHECK_THROWS_AS(cross_entropy(targets, probs), MetricError);
}

TEST_CASE("one-hot distribution rows match the index form") {
  std::vector<std::vector<double>> probs = {{0.7, 0.2, 0.1}, {0.25, 0.5, 0.25}};
  std::vector<std::size_t> targets = {0, 2};
  std::vector<std::vector<double>> onehot = {{1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}};
  CHECK(cross_entropy(targets, probs).bits ==
        doctest::Approx(cross_entropy(onehot, probs).bits).epsilon(1e-12));
}

TEST_CASE("token F1 over multisets") {
  CHECK(token_f1({}, {}) == 1.0);
  CHECK(token_f1(toks({"a"}), {}) == 0.0);
  CHECK(token_f1(toks({"a", "b"}), toks({"c", "d"})) == 0.0);
  CHECK(token_f1(toks({"a", "b"}), toks({"a", "b"})) == 1.0);
  // multiset clipping: overlap of {a,a,b} and {a,b,b} is 2
  CHECK(token_f1(toks({"a", "a", "b"}), toks({"a", "b", "b"})) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  // symmetry
  CHECK(token_f1(toks({"a", "a", "b"}), toks({"a", "c"})) ==
        doctest::Approx(token_f1(toks({"a", "c"}), toks({"a", "a", "b"}))).epsilon(1e-12));
  // order-insensitive
  CHECK(token_f1(toks({"b", "a"}), toks({"a", "b"})) == 1.0);
}

TEST_CASE("exact match is order-sensitive and reports per-pair flags") {
  std::vector<TokenSeq> cand = {toks({"a", "b"}), toks({"b", "a"}), toks({"x"})};
  std::vector<TokenSeq> tgt = {toks({"a", "b"}), toks({"a", "b"}), toks({"y"})};
  MatchReport r = exact_match(cand, tgt);
  CHECK(r.accuracy == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  REQUIRE(r.matched.size() == 3);
  CHECK(r.matched[0]);
  CHECK_FALSE(r.matched[1]);
  CHECK_FALSE(r.matched[2]);
  CHECK(r.f1_mean == doctest::Approx((1.0 + 1.0 + 0.0) / 3.0).epsilon(1e-12));
}
