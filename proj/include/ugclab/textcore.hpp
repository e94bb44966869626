#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ugclab {

enum class TokenizerScheme {
  /// Moses 13a-style: detach punctuation, keep intra-word apostrophes and
  /// hyphens, digit-internal '.' and ',', and protect URLs, @mentions,
  /// #hashtags and ASCII placeholders like <unk> as single tokens.
  kMoses13a,
  /// Split on whitespace only.
  kWhitespace,
};

/// Accepts "13a", "moses", "moses13a", "space", "whitespace", "none".
/// Throws ConfigError otherwise.
TokenizerScheme parse_tokenizer_scheme(std::string_view id);
std::string_view to_string(TokenizerScheme scheme);

/// Deterministic, never yields empty tokens, and concatenating the tokens
/// reproduces `raw` minus its whitespace.
std::vector<std::string> tokenize(std::string_view raw, TokenizerScheme scheme = TokenizerScheme::kMoses13a);

struct Sentence {
  std::string raw;
  std::vector<std::string> tokens;
  std::u32string chars;

  /// Throws DecodeError on invalid UTF-8.
  static Sentence from_raw(std::string raw, TokenizerScheme scheme = TokenizerScheme::kMoses13a);
  /// Raw text is the tokens joined with single spaces.
  static Sentence from_tokens(std::vector<std::string> tokens);

  bool operator==(const Sentence&) const = default;
};

enum class Side { kSource, kTarget };
std::string_view to_string(Side side);
Side parse_side(std::string_view name);

struct SentencePair {
  Sentence source;
  std::optional<Sentence> target;

  bool operator==(const SentencePair&) const = default;
};

struct ParallelCorpus {
  std::string name;
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  /// True when every pair carries a target.
  bool is_parallel() const;
  /// Throws DataError when the requested side is missing for pair `i`.
  const Sentence& sentence(std::size_t i, Side side) const;
  /// Throws DataError unless every pair has `side`.
  void require_side(Side side) const;

  bool operator==(const ParallelCorpus&) const = default;
};

struct LoadOptions {
  TokenizerScheme scheme = TokenizerScheme::kMoses13a;
  std::string name;
};

/// One sentence per line. With a target path, both files must have the
/// same number of lines (DataError names both counts otherwise).
ParallelCorpus load_corpus(const std::filesystem::path& source_path,
                           const std::optional<std::filesystem::path>& target_path = std::nullopt,
                           const LoadOptions& options = {});

/// `src\ttgt` per line; lines without a tab are monolingual.
ParallelCorpus load_tsv_corpus(const std::filesystem::path& path, const LoadOptions& options = {});

/// Parses corpus text already held in memory (same rules as load_corpus).
ParallelCorpus corpus_from_lines(const std::vector<std::string>& source_lines,
                                 const std::optional<std::vector<std::string>>& target_lines,
                                 const LoadOptions& options = {});

/// Writes raw sentences back out. Loading the result with the same tokenizer
/// reproduces the corpus pair-for-pair.
void save_corpus(const ParallelCorpus& corpus, const std::filesystem::path& source_path,
                 const std::optional<std::filesystem::path>& target_path = std::nullopt);
void save_tsv_corpus(const ParallelCorpus& corpus, const std::filesystem::path& path);

/// Reads a file's lines (LF endings; a trailing CR is dropped).
std::vector<std::string> read_lines(const std::filesystem::path& path);

struct CorpusStats {
  std::size_t n_sentences = 0;
  std::size_t n_tokens = 0;
  double avg_sent_len = 0.0;
  double ttr = 0.0;
  std::size_t vocab_size = 0;
  std::size_t n_char_types = 0;
};

struct StatsOptions {
  bool count_whitespace_chars = false;
};

/// Descriptive statistics (size, TTR, char inventory) for one side. Throws
/// DataError on an empty corpus or a corpus without tokens.
CorpusStats corpus_stats(const ParallelCorpus& corpus, Side side, const StatsOptions& options = {});

enum class TokenMatch { kExact, kPrefix };

/// Number of tokens on `side` equal to (or, with kPrefix, starting with)
/// `token`.
std::size_t count_token_occurrences(const ParallelCorpus& corpus, std::string_view token, Side side,
                                    TokenMatch match = TokenMatch::kExact);

}  // namespace ugclab
