#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ugclab/textcore.hpp"

namespace ugclab {

/// Parameters of the synthetic copy-task corpora. Every sentence is a
/// uniform random string whose target is an exact copy of its source.
struct CopyTaskSpec {
  std::size_t n_train = 100000;
  std::size_t n_dev = 2000;
  std::size_t n_test = 3000;
  std::size_t len_min = 5;
  std::size_t len_max = 15;
  std::size_t train_alphabet_size = 164;
  /// Distinct characters the out-of-alphabet test set may use.
  std::size_t out_alphabet_size = 705;
  /// Probability that an out-test character is drawn from the novel pool
  /// rather than the training alphabet.
  double novel_char_rate = 0.5;
  std::uint64_t seed = 0;

  /// Throws ConfigError when the invariants do not hold or the alphabets
  /// exceed the available codepoint pool.
  void validate() const;

  bool operator==(const CopyTaskSpec&) const = default;
};

void to_json(nlohmann::json& j, const CopyTaskSpec& spec);
void from_json(const nlohmann::json& j, CopyTaskSpec& spec);

struct CopyAlphabet {
  std::vector<char32_t> train_chars;
  /// Disjoint from train_chars. When novel_char_rate < 1 the out-test also
  /// draws from the training alphabet, so the novel pool holds
  /// out_alphabet_size - train_alphabet_size characters; with a rate of 1
  /// it holds all out_alphabet_size.
  std::vector<char32_t> novel_chars;
};

/// The fixed pool of printable, non-whitespace codepoints alphabets are cut
/// from, in order: ASCII, Latin-1, Latin Extended-A/B, IPA, Greek, Cyrillic.
const std::vector<char32_t>& codepoint_pool();

CopyAlphabet copy_alphabet(const CopyTaskSpec& spec);

struct CopyCorpora {
  ParallelCorpus train;
  ParallelCorpus dev;
  ParallelCorpus in_test;
  ParallelCorpus out_test;
};

/// Deterministic in spec.seed. Sentence i of each set is generated by its
/// own Rng(seed, stream, i), streams 1..4 for train, dev, in-test, out-test.
CopyCorpora generate_copy_corpus(const CopyTaskSpec& spec);

/// Writes `<set>.src`, `<set>.tgt` for every set plus `copytask.json`.
void write_copy_corpora(const CopyCorpora& corpora, const CopyTaskSpec& spec, const std::filesystem::path& dir);
CopyCorpora read_copy_corpora(const std::filesystem::path& dir, CopyTaskSpec* spec = nullptr);

}  // namespace ugclab
