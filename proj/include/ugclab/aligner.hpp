#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "ugclab/textcore.hpp"

namespace ugclab {

/// Lexical translation probabilities t(target | source), with a NULL source
/// word. Only co-occurring pairs are stored; everything else is zero.
class TranslationTable {
 public:
  static constexpr std::string_view kNull = "<null>";

  double prob(std::string_view source, std::string_view target) const;
  void set(std::string_view source, std::string_view target, double p);
  /// Sum of t(. | source) over all targets.
  double row_sum(std::string_view source) const;
  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> source_vocabulary() const;

  /// Multiplies every entry by `factor`.
  void scale(double factor);

  /// `src\ttgt\tprob`, sorted by source then target.
  void save_tsv(const std::filesystem::path& path) const;
  std::string to_tsv() const;

 private:
  static std::string key(std::string_view s, std::string_view t);
  std::unordered_map<std::string, double> entries_;
  std::unordered_map<std::string, double> row_sums_;
};

/// Positional prior of the diagonal-favouring Model 2:
///   p(NULL) = null_prob,
///   p(i | j, m, n) = (1 - null_prob) * exp(-tension * |(i+1)/n - (j+1)/m|) / Z
/// for source position i of n and target position j of m (0-based).
struct DiagonalPrior {
  double tension = 4.0;
  double null_prob = 0.08;

  /// Probability of linking target j to source i (not NULL).
  double prob(std::size_t i, std::size_t j, std::size_t src_len, std::size_t tgt_len) const;
  /// Normalizer Z of the non-NULL positions.
  double partition(std::size_t j, std::size_t src_len, std::size_t tgt_len) const;
};

enum class AlignModel { kIbm1, kDiag2 };
AlignModel parse_align_model(std::string_view name);

struct EmOptions {
  int ibm1_iterations = 5;
  /// Ignored for kIbm1.
  int diag2_iterations = 5;
  AlignModel model = AlignModel::kDiag2;
  DiagonalPrior initial_prior;
  bool optimize_tension = true;
  /// Golden-section steps per EM round for the tension.
  int golden_steps = 8;
  double tension_min = 0.1;
  double tension_max = 14.0;
  /// Worker threads for the E-step.
  int jobs = 1;
};

struct AlignerModel {
  TranslationTable table;
  std::optional<DiagonalPrior> prior;  ///< set for kDiag2
  /// Data log-likelihood at the start of each EM iteration, IBM1 rounds first.
  std::vector<double> log_likelihood;
  std::size_t skipped_pairs = 0;
};

/// Expectation-maximization from a uniform table. Pairs with an empty side
/// are skipped with a warning. Throws DataError for an empty or monolingual
/// corpus and ConfigError for a non-positive iteration count.
AlignerModel em_train(const ParallelCorpus& corpus, const EmOptions& options);
AlignerModel em_train(const ParallelCorpus& corpus, int iterations, AlignModel model);

/// One link per target position; nullopt is the NULL link.
struct Alignment {
  std::vector<std::optional<std::size_t>> links;

  std::size_t size() const { return links.size(); }
  bool operator==(const Alignment&) const = default;

  static Alignment identity(std::size_t n);
};

/// Per target token, argmax over source positions of t(target | source) times
/// the positional prior (uniform without one), NULL last. Ties go to the
/// leftmost source position; zero lexical mass everywhere gives NULL.
Alignment viterbi_align(const TranslationTable& table, const std::optional<DiagonalPrior>& prior,
                        const Sentence& source, const Sentence& target);
Alignment viterbi_align(const AlignerModel& model, const Sentence& source, const Sentence& target);

/// Row-wise argmax of an attention matrix (rows: target positions, columns:
/// source positions). Columns listed in `excluded` (BOS/EOS) never win; ties
/// go to the leftmost column. Throws DataError if a row sum is off by more
/// than 1e-3.
Alignment attention_align(const Eigen::MatrixXd& attention, const std::vector<std::size_t>& excluded = {});

/// Pharaoh format: space-separated `srcIdx-tgtIdx`, 0-based, NULL omitted.
std::string to_pharaoh(const Alignment& alignment);
/// A target index listed more than once keeps its smallest source index.
/// Throws DataError on malformed input or an index >= target_len.
Alignment parse_pharaoh(std::string_view line, std::size_t target_len);

}  // namespace ugclab
