#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "ugclab/aligner.hpp"
#include "ugclab/errors.hpp"
#include "ugclab/rng.hpp"

using namespace ugclab;
using namespace oracle;

TEST_SUITE("aligner") {

TEST_CASE("IBM1 recovers the toy lexicon") {
  const auto c = toy();
  const auto m = em_train(c, 20, AlignModel::kIbm1);
  CHECK_FALSE(m.prior.has_value());
  CHECK(m.table.prob("das", "the") > 0.9);
  CHECK(m.table.prob("Buch", "book") > 0.9);
  CHECK(m.table.prob("Haus", "house") > 0.5);
  CHECK(m.table.prob("ein", "a") > 0.5);
  CHECK(viterbi_align(m, c.pairs[0].source, *c.pairs[0].target) == links({0, 1}));
  CHECK(viterbi_align(m, c.pairs[1].source, *c.pairs[1].target) == links({0, 1}));
  CHECK(viterbi_align(m, c.pairs[2].source, *c.pairs[2].target) == links({0, 1}));
  CHECK(to_pharaoh(viterbi_align(m, c.pairs[2].source, *c.pairs[2].target)) == "0-0 1-1");
}

TEST_CASE("IBM1 and diag2 agree with a dense oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const auto c = random_parallel(rng, 12);
    OracleEm o;
    o.run(c, 3, std::nullopt);
    const auto m = em_train(c, 3, AlignModel::kIbm1);
    REQUIRE(m.log_likelihood.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(m.log_likelihood[i] - o.ll[i]) < 1e-9);
    for (const auto& [k, v] : o.t) CHECK(std::abs(m.table.prob(k.first, k.second) - v) < 1e-9);

    EmOptions opt;
    opt.ibm1_iterations = 2;
    opt.diag2_iterations = 3;
    opt.optimize_tension = false;
    opt.initial_prior = {2.5, 0.1};
    OracleEm o2;
    o2.run(c, 3, opt.initial_prior, 2);
    const auto m2 = em_train(c, opt);
    REQUIRE(m2.log_likelihood.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(m2.log_likelihood[i] - o2.ll[i]) < 1e-9);
    for (const auto& [k, v] : o2.t) CHECK(std::abs(m2.table.prob(k.first, k.second) - v) < 1e-9);
    CHECK(m2.prior->tension == 2.5);
  }
}

TEST_CASE("log-likelihood never decreases") {
  Rng rng(9);
  const auto c = random_parallel(rng, 40);
  for (AlignModel model : {AlignModel::kIbm1, AlignModel::kDiag2}) {
    const auto m = em_train(c, 8, model);
    for (std::size_t i = 1; i < m.log_likelihood.size(); ++i) {
      // The first diag2 round switches models, so only compare within a model.
      if (model == AlignModel::kDiag2 && i == 8) continue;
      CHECK(m.log_likelihood[i] >= m.log_likelihood[i - 1] - 1e-9);
    }
  }
}

TEST_CASE("tension search improves the prior objective") {
  // Monotone corpus: identical words in order favour a sharp diagonal.
  std::vector<std::string> lines;
  Rng rng(2);
  for (int k = 0; k < 60; ++k) {
    std::string s;
    const auto len = 3 + rng.uniform(6);
    for (std::uint64_t i = 0; i < len; ++i) s += "w" + std::to_string(rng.uniform(30)) + " ";
    lines.push_back(s);
  }
  const auto c = corpus_from_lines(lines, lines);
  EmOptions opt;
  opt.initial_prior.tension = 0.5;
  const auto m = em_train(c, opt);
  CHECK(m.prior->tension > 0.5);
  CHECK(m.prior->tension <= 14.0);
}

TEST_CASE("tables are normalized per source word") {
  Rng rng(12);
  const auto c = random_parallel(rng, 30);
  for (AlignModel model : {AlignModel::kIbm1, AlignModel::kDiag2}) {
    const auto m = em_train(c, 4, model);
    for (const auto& s : m.table.source_vocabulary()) CHECK(m.table.row_sum(s) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("single pair") {
  const auto c = corpus_from_lines({"a"}, std::vector<std::string>{"x"});
  const auto m = em_train(c, 5, AlignModel::kIbm1);
  CHECK(m.table.prob("a", "x") == doctest::Approx(1.0));
  CHECK(m.table.prob(TranslationTable::kNull, "x") == doctest::Approx(1.0));
}

TEST_CASE("jobs do not change the result beyond rounding") {
  Rng rng(21);
  const auto c = random_parallel(rng, 101);
  EmOptions opt;
  const auto a = em_train(c, opt);
  opt.jobs = 3;
  const auto b = em_train(c, opt);
  opt.jobs = 3;
  const auto b2 = em_train(c, opt);
  CHECK(b.table.to_tsv() == b2.table.to_tsv());
  for (std::size_t i = 0; i < a.log_likelihood.size(); ++i)
    CHECK(a.log_likelihood[i] == doctest::Approx(b.log_likelihood[i]).epsilon(1e-12));
  CHECK(a.prior->tension == doctest::Approx(b.prior->tension).epsilon(1e-9));
}

TEST_CASE("viterbi details") {
  TranslationTable t;
  t.set("a", "x", 0.5);
  t.set("b", "x", 0.5);
  t.set(TranslationTable::kNull, "x", 0.1);
  t.set(TranslationTable::kNull, "y", 0.3);
  const auto src = Sentence::from_raw("a b");
  CHECK(viterbi_align(t, std::nullopt, src, Sentence::from_raw("x")) == links({0}));
  CHECK(viterbi_align(t, std::nullopt, src, Sentence::from_raw("y")) == links({std::nullopt}));
  CHECK(viterbi_align(t, std::nullopt, src, Sentence::from_raw("zzz")) == links({std::nullopt}));
  // The prior breaks the tie toward the diagonal.
  CHECK(viterbi_align(t, DiagonalPrior{4.0, 0.08}, src, Sentence::from_raw("q x")).links[1] == 1u);

  auto scaled = t;
  scaled.scale(0.25);
  for (const char* tgt : {"x", "y", "x y x"})
    CHECK(viterbi_align(scaled, std::nullopt, src, Sentence::from_raw(tgt)) ==
          viterbi_align(t, std::nullopt, src, Sentence::from_raw(tgt)));
  CHECK_THROWS_AS(t.set("a", "x", 1.5), DataError);
  CHECK_THROWS_AS(t.scale(0), ConfigError);
}

TEST_CASE("diagonal prior") {
  DiagonalPrior p{3.0, 0.2};
  for (std::size_t n : {1u, 4u, 7u}) {
    for (std::size_t j = 0; j < 5; ++j) {
      double sum = p.null_prob;
      for (std::size_t i = 0; i < n; ++i) sum += p.prob(i, j, n, 5);
      CHECK(sum == doctest::Approx(1.0));
    }
  }
  CHECK(p.prob(1, 1, 4, 4) > p.prob(3, 1, 4, 4));
}

TEST_CASE("attention alignment") {
  Eigen::MatrixXd a(3, 4);
  a << 0.7, 0.1, 0.1, 0.1,  //
      0.25, 0.25, 0.25, 0.25,  //
      0.0, 0.1, 0.1, 0.8;
  CHECK(attention_align(a) == links({0, 0, 3}));
  CHECK(attention_align(a, {3}) == links({0, 0, 1}));
  CHECK(attention_align(a, {0, 3}) == links({1, 1, 1}));
  CHECK_THROWS_AS(attention_align(a, {0, 1, 2, 3}), DataError);
  a(0, 0) = 0.9;
  CHECK_THROWS_AS(attention_align(a), DataError);
  CHECK(attention_align(Eigen::MatrixXd(0, 3)).size() == 0);
}

TEST_CASE("pharaoh format") {
  CHECK(to_pharaoh(links({2, std::nullopt, 0})) == "2-0 0-2");
  CHECK(parse_pharaoh("2-0 0-2", 3) == links({2, std::nullopt, 0}));
  CHECK(parse_pharaoh("  3-1\t1-1 ", 2) == links({std::nullopt, 1}));
  CHECK(parse_pharaoh("", 2) == links({std::nullopt, std::nullopt}));
  CHECK_THROWS_AS(parse_pharaoh("0-2", 2), DataError);
  for (const char* bad : {"0", "-1", "1-", "a-b", "1-2-3", "0--1"}) CHECK_THROWS_AS(parse_pharaoh(bad, 5), DataError);
  const auto id = Alignment::identity(4);
  CHECK(parse_pharaoh(to_pharaoh(id), 4) == id);
}

TEST_CASE("corpus validation") {
  CHECK_THROWS_AS(em_train(ParallelCorpus{}, 5, AlignModel::kIbm1), DataError);
  CHECK_THROWS_AS(em_train(corpus_from_lines({"a"}, std::nullopt), 5, AlignModel::kIbm1), DataError);
  CHECK_THROWS_AS(em_train(corpus_from_lines({""}, std::vector<std::string>{"x"}), 5, AlignModel::kIbm1), DataError);
  CHECK_THROWS_AS(em_train(toy(), 0, AlignModel::kIbm1), ConfigError);
  const auto m = em_train(corpus_from_lines({"a", "", "b"}, std::vector<std::string>{"x", "y", ""}), 3,
                          AlignModel::kDiag2);
  CHECK(m.skipped_pairs == 2);
  CHECK(parse_align_model("fast-align") == AlignModel::kDiag2);
  CHECK_THROWS_AS(parse_align_model("hmm"), ConfigError);
  EmOptions opt;
  opt.initial_prior.null_prob = 1.0;
  CHECK_THROWS_AS(em_train(toy(), opt), ConfigError);
}

}
