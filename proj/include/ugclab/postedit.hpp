#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ugclab/aligner.hpp"
#include "ugclab/metrics.hpp"
#include "ugclab/textcore.hpp"

namespace ugclab {

enum class Unit { kToken, kCharacter };
Unit parse_unit(std::string_view name);

/// One translated sentence with everything the analyses need.
struct TranslationRecord {
  std::size_t id = 0;
  Sentence source;
  Sentence reference;
  Sentence hypothesis;
  /// Rows: hypothesis units; columns: source units plus a trailing EOS column.
  std::optional<Eigen::MatrixXd> attention;
  /// Normalized edit distance of hypothesis against reference in `unit`s.
  double edit_distance = 0.0;

  static TranslationRecord make(std::size_t id, Sentence source, Sentence reference, Sentence hypothesis,
                                Unit unit = Unit::kToken);
};

/// A sentence holding character-level text (tokens split on whitespace).
Sentence char_sentence(std::u32string chars);

struct ReplacementPolicy {
  enum class OnNull { kDelete, kKeepMarker };

  Unit unit = Unit::kToken;
  OnNull on_null = OnNull::kDelete;
  /// How an UNK unit is written. For character units it must be one character.
  std::string marker = "<unk>";

  /// Character units with U+FFFD as the marker.
  static ReplacementPolicy characters();
  static ReplacementPolicy tokens(std::string marker = "<unk>");
  void validate() const;
};

/// Replaces every UNK unit of `hypothesis` by the source unit it links to.
/// `alignment` is indexed by hypothesis unit. Throws DataError when its
/// length differs from the hypothesis or a link points past the source.
Sentence unk_replace(const Sentence& hypothesis, const Sentence& source, const Alignment& alignment,
                     const ReplacementPolicy& policy);

/// Number of UNK units in a sentence under the policy.
std::size_t count_unk(const Sentence& sentence, const ReplacementPolicy& policy);

enum class AlignSource {
  /// Hypothesis unit j links to source unit j (NULL past the source end).
  kIdentity,
  /// Row-wise argmax of the record's attention, EOS column excluded.
  kAttention,
  /// Viterbi alignment under a trained aligner (token units only).
  kModel,
  /// One externally supplied alignment per record.
  kProvided,
};
AlignSource parse_align_source(std::string_view name);

struct AlignerChoice {
  AlignSource source = AlignSource::kIdentity;
  const AlignerModel* model = nullptr;
  const std::vector<Alignment>* provided = nullptr;
};

Alignment align_record(const TranslationRecord& record, const AlignerChoice& choice, std::size_t index,
                       Unit unit);

struct BeforeAfter {
  BleuScore before;
  BleuScore after;
  /// Percentage of hypothesis units that are UNK, before replacement.
  double unk_pct = 0.0;
  std::size_t replaced = 0;
  std::vector<Sentence> replaced_hypotheses;
};

/// BLEU of the hypotheses against the references before and after UNK
/// replacement. Throws DataError when the choice needs attention or
/// alignments that a record lacks.
BeforeAfter evaluate_before_after(const std::vector<TranslationRecord>& records, const AlignerChoice& choice,
                                  const ReplacementPolicy& policy,
                                  BleuSmoothing smoothing = BleuSmoothing::kExpFloor);

/// BLEU in the given unit.
BleuScore unit_bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references, Unit unit,
                    BleuSmoothing smoothing = BleuSmoothing::kExpFloor);

}  // namespace ugclab
