#include <doctest.h>

#include <set>

#include "test_util.hpp"
#include "ugclab/charvocab.hpp"
#include "ugclab/errors.hpp"
#include "ugclab/synthgen.hpp"

using namespace ugclab;

namespace {

CopyTaskSpec small_spec(std::uint64_t seed = 11) {
  CopyTaskSpec s;
  s.n_train = 2000;
  s.n_dev = 100;
  s.n_test = 300;
  s.seed = seed;
  return s;
}

std::set<char32_t> chars_of(const ParallelCorpus& c) {
  std::set<char32_t> out;
  for (const auto& p : c.pairs) out.insert(p.source.chars.begin(), p.source.chars.end());
  return out;
}

}  // namespace

TEST_SUITE("synthgen") {

TEST_CASE("default alphabets") {
  const CopyTaskSpec spec;
  const auto a = copy_alphabet(spec);
  CHECK(a.train_chars.size() == 164);
  CHECK(a.novel_chars.size() == 541);
  std::set<char32_t> t(a.train_chars.begin(), a.train_chars.end());
  for (char32_t c : a.novel_chars) CHECK_FALSE(t.contains(c));
  CHECK(codepoint_pool().size() >= 705);
}

TEST_CASE("sentences are copies within the length bounds") {
  const auto spec = small_spec();
  const auto c = generate_copy_corpus(spec);
  CHECK(c.train.size() == 2000);
  CHECK(c.dev.size() == 100);
  CHECK(c.in_test.size() == 300);
  CHECK(c.out_test.size() == 300);
  for (const auto* set : {&c.train, &c.dev, &c.in_test, &c.out_test}) {
    for (const auto& p : set->pairs) {
      REQUIRE(p.target.has_value());
      CHECK(p.source == *p.target);
      CHECK(p.source.chars.size() >= 5);
      CHECK(p.source.chars.size() <= 15);
      CHECK(p.source.raw.find_first_of(" \t") == std::string::npos);
    }
  }
  const auto alpha = copy_alphabet(spec);
  const std::set<char32_t> train(alpha.train_chars.begin(), alpha.train_chars.end());
  for (char32_t ch : chars_of(c.train)) CHECK(train.contains(ch));
  for (char32_t ch : chars_of(c.in_test)) CHECK(train.contains(ch));
  CHECK(chars_of(c.train).size() == 164);
}

TEST_CASE("out-test mixes novel characters at the requested rate") {
  const auto c = generate_copy_corpus(small_spec());
  const auto alpha = copy_alphabet(small_spec());
  const std::set<char32_t> novel(alpha.novel_chars.begin(), alpha.novel_chars.end());
  std::size_t total = 0, n_novel = 0;
  for (const auto& p : c.out_test.pairs) {
    for (char32_t ch : p.source.chars) {
      ++total;
      n_novel += novel.contains(ch);
    }
  }
  const double rate = static_cast<double>(n_novel) / static_cast<double>(total);
  CHECK(rate == doctest::Approx(0.5).epsilon(0.06));

  auto spec = small_spec();
  spec.novel_char_rate = 0.0;
  const auto zero = generate_copy_corpus(spec);
  for (char32_t ch : chars_of(zero.out_test)) CHECK_FALSE(novel.contains(ch));
  CHECK(zero.out_test.pairs != zero.in_test.pairs);

  spec.novel_char_rate = 1.0;
  const auto all = copy_alphabet(spec);
  CHECK(all.novel_chars.size() == 705);
  const std::set<char32_t> all_novel(all.novel_chars.begin(), all.novel_chars.end());
  for (char32_t ch : chars_of(generate_copy_corpus(spec).out_test)) CHECK(all_novel.contains(ch));
}

TEST_CASE("lengths are roughly uniform") {
  const auto c = generate_copy_corpus(small_spec());
  std::array<int, 16> hist{};
  for (const auto& p : c.train.pairs) ++hist[p.source.chars.size()];
  for (std::size_t len = 5; len <= 15; ++len) CHECK(hist[len] == doctest::Approx(2000.0 / 11).epsilon(0.3));
}

TEST_CASE("determinism and seed sensitivity") {
  CHECK(generate_copy_corpus(small_spec(3)).train == generate_copy_corpus(small_spec(3)).train);
  CHECK(generate_copy_corpus(small_spec(3)).train != generate_copy_corpus(small_spec(4)).train);
  auto bigger = small_spec(3);
  bigger.n_train = 3000;
  const auto a = generate_copy_corpus(small_spec(3));
  const auto b = generate_copy_corpus(bigger);
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train.pairs[i] == b.train.pairs[i]);
}

TEST_CASE("write and read round trip") {
  testutil::TempDir dir("copy");
  const auto spec = small_spec();
  const auto c = generate_copy_corpus(spec);
  write_copy_corpora(c, spec, dir.path());
  CopyTaskSpec back_spec;
  const auto back = read_copy_corpora(dir.path(), &back_spec);
  CHECK(back_spec == spec);
  CHECK(back.train.pairs == c.train.pairs);
  CHECK(back.out_test.pairs == c.out_test.pairs);
}

TEST_CASE("validation") {
  auto s = small_spec();
  s.len_min = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.len_min = 20;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.novel_char_rate = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.out_alphabet_size = 164;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.train_alphabet_size = 100000;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

}
