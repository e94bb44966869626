#include <doctest.h>

#include "test_util.hpp"
#include "ugclab/errors.hpp"
#include "ugclab/rng.hpp"
#include "ugclab/textcore.hpp"

using namespace ugclab;
using testutil::TempDir;
using testutil::words;

TEST_SUITE("textcore") {

TEST_CASE("tokenizer splits punctuation and keeps word-internal marks") {
  CHECK(tokenize("Hello, world!") == words("Hello , world !"));
  CHECK(tokenize("don't stop") == words("don't stop"));
  CHECK(tokenize("a well-known fact") == words("a well-known fact"));
  CHECK(tokenize("pi is 3.14, not 3,15.") == words("pi is 3.14 , not 3,15 ."));
  CHECK(tokenize("(yes)") == words("( yes )"));
  CHECK(tokenize("") .empty());
  CHECK(tokenize("   \t ").empty());
}

TEST_CASE("tokenizer protects URLs, mentions and hashtags") {
  CHECK(tokenize("lol @JohnDoe check https://t.co/xY1?a=b #Flappy!") ==
        words("lol @JohnDoe check https://t.co/xY1?a=b #Flappy !"));
  CHECK(tokenize("www.example.com/page ok") == words("www.example.com/page ok"));
}

TEST_CASE("placeholders like <unk> stay whole") {
  CHECK(tokenize("I <unk> you") == words("I <unk> you"));
  CHECK(tokenize("<unk>, <NUM_X>.") == words("<unk> , <NUM_X> ."));
  CHECK(tokenize("a<b") == words("a < b"));
  CHECK(tokenize("<> x") == words("< > x"));
}

TEST_CASE("whitespace scheme only splits on spaces") {
  CHECK(tokenize("Hello, world!", TokenizerScheme::kWhitespace) == words("Hello, world!"));
}

TEST_CASE("tokens are never empty and concatenate back to the input minus whitespace") {
  const std::vector<std::string> pieces{"a", "b", "Z", "9", ".", ",", "'", "-", "!", "?", "@", "#", "/", ":",
                                        " ", " ", "é", "😀", "’", "(", ")", "\"", "http://x.y", "…"};
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::string raw;
    const auto len = rng.uniform(30);
    for (std::uint64_t i = 0; i < len; ++i) raw += pieces[rng.uniform(pieces.size())];
    const auto toks = tokenize(raw);
    std::string joined, stripped;
    for (const auto& t : toks) {
      CHECK_FALSE(t.empty());
      joined += t;
    }
    for (char ch : raw) {
      if (ch != ' ') stripped.push_back(ch);
    }
    CHECK(joined == stripped);
    CHECK(tokenize(raw) == toks);
  }
}

TEST_CASE("scheme names") {
  CHECK(parse_tokenizer_scheme("13a") == TokenizerScheme::kMoses13a);
  CHECK(parse_tokenizer_scheme("space") == TokenizerScheme::kWhitespace);
  CHECK_THROWS_AS(parse_tokenizer_scheme("bpe"), ConfigError);
}

TEST_CASE("invalid UTF-8 reports its byte offset") {
  try {
    Sentence::from_raw("ab\xff" "cd");
    FAIL("expected DecodeError");
  } catch (const DecodeError& e) {
    CHECK(e.byte_offset() == 2);
  }
  CHECK_THROWS_AS(Sentence::from_raw("\xc3"), DecodeError);
  CHECK_THROWS_AS(Sentence::from_raw("\xed\xa0\x80"), DecodeError);  // surrogate
  CHECK_THROWS_AS(Sentence::from_raw("\xc0\xaf"), DecodeError);      // overlong
}

TEST_CASE("sentence keeps raw text, tokens and codepoints") {
  const auto s = Sentence::from_raw("Ça va ?");
  CHECK(s.raw == "Ça va ?");
  CHECK(s.tokens == words("Ça va ?"));
  CHECK(s.chars.size() == 7);
  CHECK(s.chars[0] == U'Ç');
}

TEST_CASE("parallel files must have the same number of lines") {
  TempDir dir("tc");
  testutil::write_file(dir / "a.src", "one\ntwo\nthree\n");
  testutil::write_file(dir / "a.tgt", "un\ndeux\n");
  try {
    load_corpus(dir / "a.src", dir / "a.tgt");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('3') != std::string::npos);
    CHECK(msg.find('2') != std::string::npos);
  }
  CHECK_THROWS_AS(load_corpus(dir / "missing.src"), IoError);
}

TEST_CASE("corpus save/load round trip") {
  TempDir dir("tc");
  testutil::write_file(dir / "s", "Hello , world\r\nnoisy   text lol\n\nlast");
  testutil::write_file(dir / "t", "Bonjour\nbruit\nvide\nfin\n");
  const auto c = load_corpus(dir / "s", dir / "t");
  REQUIRE(c.size() == 4);
  CHECK(c.pairs[0].source.raw == "Hello , world");
  CHECK(c.pairs[2].source.tokens.empty());
  save_corpus(c, dir / "s2", dir / "t2");
  CHECK(load_corpus(dir / "s2", dir / "t2").pairs == c.pairs);
  save_tsv_corpus(c, dir / "c.tsv");
  CHECK(load_tsv_corpus(dir / "c.tsv").pairs == c.pairs);
}

TEST_CASE("monolingual corpus refuses target access") {
  const auto c = corpus_from_lines({"a b"}, std::nullopt);
  CHECK_FALSE(c.is_parallel());
  CHECK_THROWS_AS(c.sentence(0, Side::kTarget), DataError);
  CHECK_THROWS_AS(c.require_side(Side::kTarget), DataError);
}

TEST_CASE("corpus statistics by hand") {
  const auto c = corpus_from_lines({"a b a", "c"}, std::nullopt);
  const auto st = corpus_stats(c, Side::kSource);
  CHECK(st.n_sentences == 2);
  CHECK(st.n_tokens == 4);
  CHECK(st.avg_sent_len == doctest::Approx(2.0));
  CHECK(st.vocab_size == 3);
  CHECK(st.ttr == doctest::Approx(0.75));
  CHECK(st.n_char_types == 3);
  CHECK(corpus_stats(c, Side::kSource, {true}).n_char_types == 4);
  CHECK_THROWS_AS(corpus_stats(ParallelCorpus{}, Side::kSource), DataError);
}

TEST_CASE("token occurrence counting") {
  const auto c = corpus_from_lines({"#a # b #a", "#c lol #"}, std::nullopt);
  CHECK(count_token_occurrences(c, "#a", Side::kSource) == 2);
  CHECK(count_token_occurrences(c, "#", Side::kSource) == 2);
  CHECK(count_token_occurrences(c, "#", Side::kSource, TokenMatch::kPrefix) == 5);
}

}
