#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ugclab/charvocab.hpp"
#include "ugclab/textcore.hpp"

namespace ugclab {

/// Dimensions and decoding limits of the character-level copy model.
struct ModelConfig {
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  /// Output length cap is ceil(max_decode_factor * source length).
  double max_decode_factor = 2.0;
  std::uint64_t seed = 0;
  /// Parameters start uniform in [-init_range, init_range].
  double init_range = 0.08;

  void validate() const;
};

/// Optimizer and schedule. Defaults: batch 64, Adam at 1e-3, best of 10
/// epochs, patience 2, gradients clipped elementwise to [-1, 1].
struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  int max_epochs = 10;
  int patience = 2;
  double grad_clip = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// All trainable tensors of the model. Layout (H hidden, D embedding, V ids):
///   embed   D x V   (column per id, shared by encoder and decoder)
///   enc_wx  3H x D, enc_wh 3H x H, enc_bx 3H, enc_bh 3H  (GRU, gate order r z n)
///   dec_wx  3H x D, dec_wh 3H x H, dec_bx 3H, dec_bh 3H
///   att_w   H x H   (score = (att_w s_t) . h_j)
///   comb_w  H x 2H, comb_b H    (a_t = tanh(comb_w [c_t; s_t] + comb_b))
///   out_w   V x H,  out_b V
template <typename T>
struct CopyParams {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

  Mat embed, enc_wx, enc_wh, enc_bx, enc_bh, dec_wx, dec_wh, dec_bx, dec_bh, att_w, comb_w, comb_b, out_w, out_b;

  static CopyParams zeros(std::size_t vocab_ids, std::size_t embed_dim, std::size_t hidden_dim);

  template <typename F>
  void for_each(F&& f) {
    f("embed", embed); f("enc_wx", enc_wx); f("enc_wh", enc_wh); f("enc_bx", enc_bx); f("enc_bh", enc_bh);
    f("dec_wx", dec_wx); f("dec_wh", dec_wh); f("dec_bx", dec_bx); f("dec_bh", dec_bh);
    f("att_w", att_w); f("comb_w", comb_w); f("comb_b", comb_b); f("out_w", out_w); f("out_b", out_b);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<CopyParams*>(this)->for_each([&f](const char* name, const Mat& m) { f(name, m); });
  }

  std::size_t parameter_count() const;
  bool all_finite() const;

  template <typename U>
  CopyParams<U> cast() const;
};

/// A padded, time-major batch of id sequences. Sources and targets carry a
/// trailing EOS; position t of item b lives at index t * size + b.
struct Batch {
  int size = 0;
  int src_steps = 0;
  int tgt_steps = 0;
  std::vector<int> src;
  std::vector<int> src_len;
  std::vector<int> tgt;
  std::vector<int> tgt_len;

  static Batch make(const std::vector<std::vector<int>>& sources, const std::vector<std::vector<int>>& targets);
  std::size_t target_tokens() const;
};

struct LossValue {
  double sum = 0.0;          ///< total negative log-likelihood (nats)
  std::size_t tokens = 0;    ///< target tokens scored, EOS included
  double mean() const { return tokens == 0 ? 0.0 : sum / static_cast<double>(tokens); }
};

/// Teacher-forced cross-entropy of the batch. When `grad` is non-null it
/// receives d(mean loss)/d(params), overwriting its previous contents.
template <typename T>
LossValue copy_model_loss(const CopyParams<T>& params, const Batch& batch, CopyParams<T>* grad);

/// Greedy decode output. Attention has one row per emitted unit and one
/// column per source character plus a final column for the source EOS.
struct DecodeResult {
  std::vector<int> output_ids;
  std::u32string output_text;
  Eigen::MatrixXd attention;
  bool reached_eos = false;
};

class CopyModel {
 public:
  CopyModel() = default;
  CopyModel(ModelConfig config, CharVocab vocab);

  const ModelConfig& config() const { return config_; }
  const CharVocab& vocab() const { return vocab_; }
  const CopyParams<float>& params() const { return params_; }
  CopyParams<float>& params() { return params_; }

  /// Greedy argmax decoding; stops at EOS or ceil(max_decode_factor * |source|).
  DecodeResult translate(std::u32string_view source) const;
  DecodeResult translate(const Sentence& source) const { return translate(source.chars); }
  std::vector<DecodeResult> translate_all(const ParallelCorpus& corpus, Side side = Side::kSource) const;

  /// Self-describing binary checkpoint: magic, JSON header (configs, vocab,
  /// vocab hash, tensor names/shapes, dtype f32, little-endian), raw data.
  void save(const std::filesystem::path& path) const;
  static CopyModel load(const std::filesystem::path& path);

 private:
  ModelConfig config_;
  CharVocab vocab_;
  CopyParams<float> params_;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
};

struct TrainResult {
  CopyModel model;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  bool early_stopped = false;
  double first_batch_loss = 0.0;
};

using TrainProgress = std::function<void(const EpochLog&)>;

/// Trains on `train` (source -> target) and keeps the parameters of the
/// epoch with the lowest dev loss. Deterministic given mcfg.seed. Throws
/// TrainingError naming the batch when the loss stops being finite.
TrainResult train_copy_model(const ParallelCorpus& train, const ParallelCorpus& dev, const CharVocab& vocab,
                             const ModelConfig& mcfg, const TrainConfig& tcfg, const TrainProgress& progress = {});

/// `epoch\ttrain_loss\tdev_loss` with a header line.
void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

/// Mean dev loss of a model.
LossValue evaluate_loss(const CopyModel& model, const ParallelCorpus& corpus);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_parameter;
};

/// Compares the analytic gradient of the loss (double precision) against
/// central finite differences with step `h` on up to `max_checked`
/// randomly sampled parameters. Relative error is
/// |a - n| / max(|a|, |n|, abs_floor).
GradientCheckResult gradient_check(const CopyParams<double>& params, const Batch& batch, std::uint64_t seed,
                                   std::size_t max_checked = 2000, double h = 1e-5, double abs_floor = 1e-6);

/// Initializes parameters uniformly in [-range, range] from Rng(seed).
template <typename T>
CopyParams<T> init_params(std::size_t vocab_ids, const ModelConfig& config);

/// Encodes a character string as model input (ids followed by EOS).
std::vector<int> encode_with_eos(const CharVocab& vocab, std::u32string_view text);

}  // namespace ugclab
