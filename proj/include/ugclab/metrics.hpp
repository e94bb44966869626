#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ugclab/textcore.hpp"

namespace ugclab {

class CharVocab;

using TokenSeq = std::vector<std::string>;

// ---------------------------------------------------------------------------
// BLEU

enum class BleuSmoothing {
  kNone,
  /// Each order with zero matches gets precision 1 / (2^k * total), k counting
  /// the zero-match orders seen so far (the mteval "exp" floor).
  kExpFloor,
};

BleuSmoothing parse_bleu_smoothing(std::string_view name);

struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& other);
};

struct BleuScore {
  double score = 0.0;                ///< in [0, 100]
  std::array<double, 4> precisions{};  ///< smoothed, in [0, 1]
  double brevity_penalty = 1.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

/// Clipped n-gram statistics of one hypothesis against one reference.
BleuStats bleu_sentence_stats(const TokenSeq& hypothesis, const TokenSeq& reference);
BleuScore bleu_from_stats(const BleuStats& stats, BleuSmoothing smoothing);

/// Corpus-level BLEU-4 with uniform weights. Throws DataError when the lists
/// differ in length. Hypotheses that are all empty score 0.
BleuScore bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references,
               BleuSmoothing smoothing = BleuSmoothing::kExpFloor);

/// BLEU over unicode characters (each scalar value is one unit, whitespace
/// dropped). Used for character-level outputs such as the copy task.
BleuScore char_bleu(const std::vector<std::u32string>& hypotheses, const std::vector<std::u32string>& references,
                    BleuSmoothing smoothing = BleuSmoothing::kExpFloor);

/// Splits text into one-character units.
TokenSeq char_units(std::u32string_view text, bool keep_whitespace = false);

// ---------------------------------------------------------------------------
// Edit distance

struct EditDistance {
  std::size_t distance = 0;
  double normalized = 0.0;  ///< distance / max(1, reference length)

  bool operator==(const EditDistance&) const = default;
};

EditDistance edit_distance(const TokenSeq& hypothesis, const TokenSeq& reference);
EditDistance char_edit_distance(std::u32string_view hypothesis, std::u32string_view reference);

// ---------------------------------------------------------------------------
// Corpus divergence

/// D_KL(P || Q) in nats between the token n-gram distributions of the source
/// sides of two corpora. Sentences are padded with n-1 BOS markers and one EOS
/// marker; both distributions are add-alpha smoothed over the union of
/// observed n-grams. Throws ConfigError for n < 1 or alpha <= 0 and DataError
/// for an empty corpus.
double kl_divergence_ngram(const ParallelCorpus& p_corpus, const ParallelCorpus& q_corpus, int n = 3,
                           double alpha = 0.5, Side side = Side::kSource);

/// Interpolated trigram model with an explicit UNK type. Unigrams are add-one
/// smoothed over vocabulary + UNK, higher orders are maximum likelihood, and
/// the weight of an order whose history was never seen is handed down to the
/// next lower order, so every conditional distribution sums to one.
class NgramLM {
 public:
  static constexpr int kOrder = 3;
  static constexpr std::string_view kBos = "<s>";
  static constexpr std::string_view kEos = "</s>";
  static constexpr std::string_view kUnk = "<unk>";

  /// Throws ConfigError unless the weights are positive and sum to one
  /// (within 1e-9); DataError on an empty corpus.
  static NgramLM train(const ParallelCorpus& corpus, std::array<double, 3> lambdas = {0.1, 0.3, 0.6},
                       Side side = Side::kSource);

  /// p(word | u v); `u` and `v` may be BOS, unknown words map to UNK.
  double prob(std::string_view u, std::string_view v, std::string_view word) const;
  /// The predicted vocabulary: training types plus EOS and UNK.
  std::vector<std::string> vocabulary() const;
  const std::array<double, 3>& lambdas() const { return lambdas_; }
  bool contains(std::string_view word) const;

 private:
  using Id = int;
  Id id_of(std::string_view word) const;
  static std::uint64_t key(Id a, Id b) { return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
                                                static_cast<std::uint32_t>(b); }

  std::array<double, 3> lambdas_{};
  std::unordered_map<std::string, Id> ids_;
  std::vector<std::string> words_;
  Id bos_ = 0, eos_ = 0, unk_ = 0;
  std::vector<std::size_t> unigram_;
  std::size_t unigram_total_ = 0;
  std::size_t predicted_types_ = 0;
  std::unordered_map<std::uint64_t, std::size_t> bigram_;
  std::unordered_map<Id, std::size_t> bigram_history_;
  struct TrigramKeyHash {
    std::size_t operator()(const std::array<Id, 3>& k) const noexcept;
  };
  std::unordered_map<std::array<Id, 3>, std::size_t, TrigramKeyHash> trigram_;
  std::unordered_map<std::uint64_t, std::size_t> trigram_history_;
};

/// exp(-(1/T) sum log p) over every token plus the sentence-final EOS.
double perplexity(const NgramLM& lm, const ParallelCorpus& test, Side side = Side::kSource);

struct DivergenceReport {
  double kl_3gram = 0.0;
  double oov_rate = 0.0;
  double perplexity = 0.0;
};

std::unordered_set<std::string> token_vocabulary(const ParallelCorpus& corpus, Side side = Side::kSource);

/// Percentage of test tokens outside `train_vocab`. Throws DataError when the
/// vocabulary is empty.
double oov_rate(const ParallelCorpus& test, const std::unordered_set<std::string>& train_vocab,
                Side side = Side::kSource);

/// Characters of the sentence that the vocabulary maps to UNK.
std::size_t char_oov_count(const Sentence& sentence, const CharVocab& vocab);

/// Total hypothesis tokens / total reference tokens. DataError when the
/// counts differ or the references are empty.
double length_ratio(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references);

}  // namespace ugclab
