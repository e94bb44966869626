#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ugclab/textcore.hpp"

namespace ugclab {

/// The N most frequent characters of a training corpus; every other
/// character maps to UNK. Ids 0..3 are the specials (PAD, BOS, EOS, UNK),
/// character ids start at 4 in rank order.
class CharVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecials = 4;
  /// What decode() writes for the UNK id (U+FFFD REPLACEMENT CHARACTER).
  static constexpr char32_t kUnkDisplay = 0xFFFD;

  CharVocab() = default;

  /// Ranks characters by descending frequency, ties by ascending codepoint,
  /// and keeps the first n. If the corpus has fewer than n distinct
  /// characters, n is clamped (see requested_size()). Throws ConfigError for
  /// n == 0 and DataError for an empty corpus.
  /// Whitespace counts as an ordinary character unless excluded.
  static CharVocab build(const ParallelCorpus& corpus, std::size_t n, Side side = Side::kSource,
                         bool include_whitespace = true);

  /// Entries must already be in rank order.
  static CharVocab from_ranked(std::vector<char32_t> chars, std::vector<std::uint64_t> frequencies);

  std::size_t size() const { return chars_.size(); }
  std::size_t requested_size() const { return requested_; }
  bool clamped() const { return requested_ > chars_.size(); }
  /// Width of the id space: N + specials.
  std::size_t id_count() const { return chars_.size() + kNumSpecials; }
  const std::vector<char32_t>& chars() const { return chars_; }
  const std::vector<std::uint64_t>& frequencies() const { return freqs_; }

  bool contains(char32_t cp) const { return index_.contains(cp); }
  int id_of(char32_t cp) const;

  std::vector<int> encode(std::u32string_view text) const;
  /// Skips PAD/BOS/EOS, writes kUnkDisplay for UNK. Throws DataError for ids
  /// outside [0, id_count()).
  std::u32string decode(std::span<const int> ids) const;

  /// Percentage of characters of `text` that map to UNK. Model output decoded
  /// with this vocabulary counts its emitted UNK symbols the same way.
  double unk_fraction(std::u32string_view text) const;
  double unk_fraction(const std::vector<std::u32string>& texts) const;
  double unk_fraction(const ParallelCorpus& corpus, Side side = Side::kSource) const;

  /// `rank\tcodepoint(hex)\tglyph\tfrequency`, one line per character.
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;
  static CharVocab load(const std::filesystem::path& path);
  static CharVocab parse(const std::string& text);

  /// Stable content hash of the ranked characters.
  std::string fingerprint() const;

  bool operator==(const CharVocab& other) const { return chars_ == other.chars_ && freqs_ == other.freqs_; }

 private:
  std::vector<char32_t> chars_;
  std::vector<std::uint64_t> freqs_;
  std::unordered_map<char32_t, int> index_;
  std::size_t requested_ = 0;
};

}  // namespace ugclab
