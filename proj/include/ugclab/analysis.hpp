#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ugclab/annostore.hpp"
#include "ugclab/charvocab.hpp"
#include "ugclab/metrics.hpp"
#include "ugclab/neuralcopy.hpp"
#include "ugclab/postedit.hpp"
#include "ugclab/synthgen.hpp"

namespace ugclab {

struct Extremes {
  std::vector<TranslationRecord> best;   ///< lowest edit distance first
  std::vector<TranslationRecord> worst;  ///< highest edit distance first
};

/// The k records with the lowest and the k with the highest normalized edit
/// distance; ties go to the smaller record id. Throws ConfigError when
/// k > |records|.
Extremes select_extremes(const std::vector<TranslationRecord>& records, std::size_t k = 100);

/// Span counts per category; index 0 is category 1.
using SpecificityHistogram = std::array<std::size_t, kNumCategories>;

/// Counts the spans of the selected sentences. Throws DataError when a
/// selected sentence was never annotated.
SpecificityHistogram specificity_histogram(const AnnotationSet& annotations, const std::vector<std::size_t>& selection);

struct OovBucket {
  /// Char-OOV count of the bucket; the last bucket holds `min_oov` or more.
  std::size_t min_oov = 0;
  std::string label;
  std::size_t size = 0;
  BleuScore bleu;
};

/// Groups records by how many source characters `vocab` maps to UNK
/// (0, 1, 2 or more) and scores each group. Empty buckets are left out.
/// Throws DataError for an empty record list.
std::vector<OovBucket> bucket_by_char_oov(const std::vector<TranslationRecord>& records, const CharVocab& vocab,
                                          Unit unit = Unit::kCharacter,
                                          BleuSmoothing smoothing = BleuSmoothing::kExpFloor);

/// Greedy-decodes the source side of `corpus` and pairs each output with its
/// reference (the target side). Attention is kept when `keep_attention`.
std::vector<TranslationRecord> decode_records(const CopyModel& model, const ParallelCorpus& corpus,
                                              bool keep_attention = false);

struct SweepRow {
  std::size_t vocab_size = 0;
  double bleu_raw = 0.0;
  double bleu_after = 0.0;
  double unk_pred_pct = 0.0;
  double length_ratio = 0.0;

  bool operator==(const SweepRow&) const = default;
};

/// Scores decoded records the way one sweep row does: character BLEU before
/// and after UNK replacement, percentage of UNK units in the hypotheses, and
/// hypothesis/reference length ratio.
SweepRow score_records(std::size_t vocab_size, const std::vector<TranslationRecord>& records,
                       const AlignerChoice& choice = {});

struct SweepOptions {
  /// Checkpoints are cached here under a key hashing N, both configs and
  /// the train/dev data, so rerunning a sweep reuses finished models.
  std::filesystem::path cache_dir = "sweep-cache";
  /// When set, sweep_in/out.tsv and .dat are rewritten after every finished N.
  std::optional<std::filesystem::path> out_dir;
  /// How UNKs are aligned for replacement. Identity suits the copy task.
  AlignSource alignment = AlignSource::kIdentity;
  /// Models trained concurrently.
  int jobs = 1;
  std::function<void(const std::string&)> log;
};

struct SweepResult {
  std::vector<SweepRow> in_rows;
  std::vector<SweepRow> out_rows;
  std::vector<std::filesystem::path> checkpoints;
};

/// Trains (or loads from cache) one copy model per vocabulary size, decodes
/// both test sets and scores them. Rows follow the order of `sizes`. Throws
/// ConfigError for an empty list or a size above the number of distinct
/// training characters; a TrainingError aborts after flushing finished rows.
SweepResult vocab_sweep(const CopyCorpora& data, const std::vector<std::size_t>& sizes, const ModelConfig& mcfg,
                        const TrainConfig& tcfg, const SweepOptions& options = {});

/// `N\tbleu_raw\tbleu_unkrep\tunk_pct\tlen_ratio`, header first.
std::string sweep_tsv(const std::vector<SweepRow>& rows);
/// Whitespace-separated columns with a `#` header, for gnuplot.
std::string sweep_dat(const std::vector<SweepRow>& rows);
void write_sweep(const SweepResult& result, const std::filesystem::path& dir);

/// Cache file a sweep uses for vocabulary size `n`.
std::filesystem::path sweep_checkpoint_path(const SweepOptions& options, const CopyCorpora& data, std::size_t n,
                                            const ModelConfig& mcfg, const TrainConfig& tcfg);

}  // namespace ugclab
