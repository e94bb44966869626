#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_util.hpp"
#include "ugclab/charvocab.hpp"
#include "ugclab/errors.hpp"
#include "ugclab/metrics.hpp"
#include "ugclab/rng.hpp"

using namespace ugclab;
using namespace oracle;
using testutil::words;

TEST_SUITE("metrics") {

TEST_CASE("BLEU of a hand-worked example") {
  const std::vector<TokenSeq> hyp{words("the cat sat on mat")};
  const std::vector<TokenSeq> ref{words("the cat sat on the mat")};
  const auto b = bleu(hyp, ref, BleuSmoothing::kNone);
  // p = 5/5, 3/4, 2/3, 1/2 ; BP = exp(1 - 6/5)
  const double expected = 100.0 * std::exp(-0.2) * std::pow(1.0 * 0.75 * (2.0 / 3.0) * 0.5, 0.25);
  CHECK(b.score == doctest::Approx(expected).epsilon(1e-12));
  CHECK(b.score == doctest::Approx(57.89).epsilon(1e-4));
  CHECK(std::abs(b.score - oracle_bleu(hyp, ref, false)) < 1e-9);
  CHECK(b.precisions[1] == doctest::Approx(0.75));
  CHECK(b.brevity_penalty == doctest::Approx(std::exp(-0.2)));
}

TEST_CASE("BLEU of an identical corpus is exactly 100") {
  const std::vector<TokenSeq> c{words("a b c d e"), words("x y z w"), words("one more line here")};
  CHECK(bleu(c, c).score == 100.0);
  CHECK(bleu(c, c, BleuSmoothing::kNone).score == 100.0);
}

TEST_CASE("BLEU degenerate inputs") {
  CHECK(bleu({{}}, {words("a b")}).score == 0.0);
  CHECK(bleu({words("a b")}, {words("a b")}, BleuSmoothing::kNone).score == 0.0);  // no 3/4-grams
  CHECK(bleu({words("a b c d")}, {words("w x y z")}, BleuSmoothing::kNone).score == 0.0);
  CHECK(bleu({words("a b c d")}, {words("w x y z")}, BleuSmoothing::kExpFloor).score > 0.0);
  CHECK_THROWS_AS(bleu({words("a")}, {}), DataError);
  CHECK(parse_bleu_smoothing("none") == BleuSmoothing::kNone);
  CHECK_THROWS_AS(parse_bleu_smoothing("add-k"), ConfigError);
}

TEST_CASE("BLEU agrees with the brute-force oracle on random corpora") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TokenSeq> h, r;
    const auto n = 1 + rng.uniform(6);
    for (std::uint64_t i = 0; i < n; ++i) {
      h.push_back(random_seq(rng, 12, 4));
      r.push_back(random_seq(rng, 12, 4));
    }
    CHECK(std::abs(bleu(h, r, BleuSmoothing::kNone).score - oracle_bleu(h, r, false)) < 1e-9);
    CHECK(std::abs(bleu(h, r, BleuSmoothing::kExpFloor).score - oracle_bleu(h, r, true)) < 1e-9);
  }
}

TEST_CASE("character BLEU treats each character as a unit") {
  CHECK(char_units(U"ab c") == TokenSeq{"a", "b", "c"});
  CHECK(char_units(U"ab c", true) == TokenSeq{"a", "b", " ", "c"});
  const auto b = char_bleu({U"abcde"}, {U"abcde"});
  CHECK(b.score == 100.0);
  CHECK(std::abs(char_bleu({U"abcdx"}, {U"abcde"}).score - oracle_bleu({words("a b c d x")}, {words("a b c d e")}, true)) <
        1e-9);
}

TEST_CASE("edit distance examples") {
  CHECK(char_edit_distance(U"kitten", U"sitting").distance == 3);
  CHECK(char_edit_distance(U"kitten", U"sitting").normalized == doctest::Approx(3.0 / 7.0));
  CHECK(edit_distance(words("a b c"), words("a c")).distance == 1);
  CHECK(edit_distance({}, {}).normalized == 0.0);
  CHECK(edit_distance(words("a b"), {}).normalized == 2.0);
}

TEST_CASE("edit distance is a metric on 1000 random triples") {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_seq(rng, 8, 3), b = random_seq(rng, 8, 3), c = random_seq(rng, 8, 3);
    const auto ab = edit_distance(a, b).distance, ba = edit_distance(b, a).distance;
    const auto bc = edit_distance(b, c).distance, ac = edit_distance(a, c).distance;
    CHECK(edit_distance(a, a).distance == 0);
    CHECK(ab == ba);
    CHECK(ac <= ab + bc);
    CHECK((ab == 0) == (a == b));
  }
}

TEST_CASE("KL divergence matches a brute-force computation") {
  const auto p = corpus_from_lines({"a b c", "a b", "c c a"}, std::nullopt);
  const auto q = corpus_from_lines({"a b", "b c a b", "x"}, std::nullopt);
  CHECK(std::abs(kl_divergence_ngram(p, q) - oracle_kl(p, q, 3, 0.5)) < 1e-12);
  CHECK(std::abs(kl_divergence_ngram(p, q, 1, 1.0) - oracle_kl(p, q, 1, 1.0)) < 1e-12);
  CHECK(std::abs(kl_divergence_ngram(p, q, 2, 0.1) - oracle_kl(p, q, 2, 0.1)) < 1e-12);
}

TEST_CASE("KL is zero on identical corpora and non-negative otherwise") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_corpus(rng, 1 + rng.uniform(10), 5);
    const auto q = random_corpus(rng, 1 + rng.uniform(10), 5);
    CHECK(std::abs(kl_divergence_ngram(p, p)) < 1e-12);
    CHECK(kl_divergence_ngram(p, q) >= 0.0);
  }
  const auto p = corpus_from_lines({"a"}, std::nullopt);
  CHECK_THROWS_AS(kl_divergence_ngram(p, p, 0), ConfigError);
  CHECK_THROWS_AS(kl_divergence_ngram(p, p, 3, 0.0), ConfigError);
  CHECK_THROWS_AS(kl_divergence_ngram(ParallelCorpus{}, p), DataError);
}

TEST_CASE("trigram LM distributions sum to one") {
  const auto c = corpus_from_lines({"a b c a", "b b a", "c a b"}, std::nullopt);
  const auto lm = NgramLM::train(c);
  const auto vocab = lm.vocabulary();
  for (const auto& [u, v] : std::vector<std::pair<std::string, std::string>>{
           {"<s>", "<s>"}, {"<s>", "a"}, {"a", "b"}, {"c", "c"}, {"zz", "a"}, {"q", "r"}}) {
    double sum = 0.0;
    for (const auto& w : vocab) sum += lm.prob(u, v, w);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(lm.prob("a", "b", "unseen") == doctest::Approx(lm.prob("a", "b", std::string(NgramLM::kUnk))));
  CHECK_THROWS_AS(NgramLM::train(c, {0.5, 0.5, 0.5}), ConfigError);
  CHECK_THROWS_AS(NgramLM::train(ParallelCorpus{}), DataError);
}

TEST_CASE("fair-coin perplexity is two") {
  Rng rng(99);
  auto coin = [&](std::size_t sentences) {
    std::vector<std::string> lines;
    for (std::size_t s = 0; s < sentences; ++s) {
      std::string line;
      for (int i = 0; i < 500; ++i) line += rng.uniform(2) ? "h " : "t ";
      lines.push_back(line);
    }
    return corpus_from_lines(lines, std::nullopt);
  };
  const auto train = coin(20), test = coin(20);
  const auto lm = NgramLM::train(train, {0.98, 0.01, 0.01});
  CHECK(perplexity(lm, test) == doctest::Approx(2.0).epsilon(0.025));
}

TEST_CASE("perplexity of a single-word model by hand") {
  // Unigram only: vocab {a, </s>, <unk>}; counts a:2 </s>:1 over 3 tokens.
  const auto lm = NgramLM::train(corpus_from_lines({"a a"}, std::nullopt), {1.0 - 2e-12, 1e-12, 1e-12});
  const double pa = 3.0 / 6.0, peos = 2.0 / 6.0;
  const double expected = std::exp(-(2 * std::log(pa) + std::log(peos)) / 3.0);
  CHECK(perplexity(lm, corpus_from_lines({"a a"}, std::nullopt)) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("OOV rate, char OOV count and length ratio") {
  const auto train = corpus_from_lines({"a b c"}, std::nullopt);
  const auto test = corpus_from_lines({"a x", "y c"}, std::nullopt);
  CHECK(oov_rate(test, token_vocabulary(train)) == doctest::Approx(50.0));
  CHECK_THROWS_AS(oov_rate(test, {}), DataError);

  const auto vocab = CharVocab::from_ranked({U'a', U'b'}, {2, 1});
  CHECK(char_oov_count(Sentence::from_raw("abcab d"), vocab) == 3);

  CHECK(length_ratio({words("a b"), words("c")}, {words("a b c"), words("d")}) == doctest::Approx(0.75));
  CHECK_THROWS_AS(length_ratio({words("a")}, {}), DataError);
}

}
