#include "ugclab/neuralcopy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "ugclab/errors.hpp"
#include "ugclab/rng.hpp"

namespace ugclab {

// ---------------------------------------------------------------------------
// Configuration

void ModelConfig::validate() const {
  if (embed_dim < 1 || hidden_dim < 1) throw ConfigError("model dimensions must be at least 1");
  if (!(max_decode_factor > 1.0)) throw ConfigError("max_decode_factor must exceed 1");
  if (!(init_range > 0.0)) throw ConfigError("init_range must be positive");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
  if (patience < 1) throw ConfigError("patience must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"embed_dim", c.embed_dim},
                     {"hidden_dim", c.hidden_dim},
                     {"max_decode_factor", c.max_decode_factor},
                     {"seed", c.seed},
                     {"init_range", c.init_range}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.max_decode_factor = j.value("max_decode_factor", d.max_decode_factor);
  c.seed = j.value("seed", d.seed);
  c.init_range = j.value("init_range", d.init_range);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"batch_size", c.batch_size},   {"optimizer", "adam"},
                     {"learning_rate", c.learning_rate}, {"max_epochs", c.max_epochs},
                     {"patience", c.patience},       {"grad_clip", c.grad_clip},
                     {"adam_beta1", c.adam_beta1},   {"adam_beta2", c.adam_beta2},
                     {"adam_epsilon", c.adam_epsilon}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.patience = j.value("patience", d.patience);
  c.grad_clip = j.value("grad_clip", d.grad_clip);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_epsilon = j.value("adam_epsilon", d.adam_epsilon);
}

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
CopyParams<T> CopyParams<T>::zeros(std::size_t vocab_ids, std::size_t embed_dim, std::size_t hidden_dim) {
  const auto V = static_cast<Eigen::Index>(vocab_ids);
  const auto D = static_cast<Eigen::Index>(embed_dim);
  const auto H = static_cast<Eigen::Index>(hidden_dim);
  CopyParams p;
  p.embed = Mat::Zero(D, V);
  p.enc_wx = Mat::Zero(3 * H, D);
  p.enc_wh = Mat::Zero(3 * H, H);
  p.enc_bx = Mat::Zero(3 * H, 1);
  p.enc_bh = Mat::Zero(3 * H, 1);
  p.dec_wx = Mat::Zero(3 * H, D);
  p.dec_wh = Mat::Zero(3 * H, H);
  p.dec_bx = Mat::Zero(3 * H, 1);
  p.dec_bh = Mat::Zero(3 * H, 1);
  p.att_w = Mat::Zero(H, H);
  p.comb_w = Mat::Zero(H, 2 * H);
  p.comb_b = Mat::Zero(H, 1);
  p.out_w = Mat::Zero(V, H);
  p.out_b = Mat::Zero(V, 1);
  return p;
}

template <typename T>
std::size_t CopyParams<T>::parameter_count() const {
  std::size_t n = 0;
  for_each([&n](const char*, const Mat& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <typename T>
bool CopyParams<T>::all_finite() const {
  bool ok = true;
  for_each([&ok](const char*, const Mat& m) { ok = ok && m.allFinite(); });
  return ok;
}

template <typename T>
template <typename U>
CopyParams<U> CopyParams<T>::cast() const {
  CopyParams<U> out;
  auto src = this;
  out.for_each([src](const char* name, typename CopyParams<U>::Mat& dst) {
    src->for_each([&](const char* other, const Mat& m) {
      if (std::string_view(name) == other) dst = m.template cast<U>();
    });
  });
  return out;
}

template <typename T>
CopyParams<T> init_params(std::size_t vocab_ids, const ModelConfig& config) {
  config.validate();
  auto p = CopyParams<T>::zeros(vocab_ids, config.embed_dim, config.hidden_dim);
  Rng rng(config.seed, 0x1417);
  const double range = config.init_range;
  p.for_each([&](const char*, typename CopyParams<T>::Mat& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<T>(rng.uniform(-range, range));
  });
  return p;
}

template struct CopyParams<float>;
template struct CopyParams<double>;
template CopyParams<double> CopyParams<float>::cast<double>() const;
template CopyParams<float> CopyParams<double>::cast<float>() const;
template CopyParams<float> init_params<float>(std::size_t, const ModelConfig&);
template CopyParams<double> init_params<double>(std::size_t, const ModelConfig&);

// ---------------------------------------------------------------------------
// Batches

Batch Batch::make(const std::vector<std::vector<int>>& sources, const std::vector<std::vector<int>>& targets) {
  if (sources.size() != targets.size()) throw DataError("batch needs one target per source");
  Batch b;
  b.size = static_cast<int>(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (sources[i].empty()) throw DataError("batch source sequences must contain at least EOS");
    b.src_len.push_back(static_cast<int>(sources[i].size()));
    b.tgt_len.push_back(static_cast<int>(targets[i].size()));
    b.src_steps = std::max(b.src_steps, b.src_len.back());
    b.tgt_steps = std::max(b.tgt_steps, b.tgt_len.back());
  }
  b.src.assign(static_cast<std::size_t>(b.src_steps * b.size), CharVocab::kPad);
  b.tgt.assign(static_cast<std::size_t>(b.tgt_steps * b.size), CharVocab::kPad);
  for (int i = 0; i < b.size; ++i) {
    for (int t = 0; t < b.src_len[i]; ++t) b.src[t * b.size + i] = sources[i][t];
    for (int t = 0; t < b.tgt_len[i]; ++t) b.tgt[t * b.size + i] = targets[i][t];
  }
  return b;
}

std::size_t Batch::target_tokens() const {
  return static_cast<std::size_t>(std::accumulate(tgt_len.begin(), tgt_len.end(), 0));
}

std::vector<int> encode_with_eos(const CharVocab& vocab, std::u32string_view text) {
  auto ids = vocab.encode(text);
  ids.push_back(CharVocab::kEos);
  return ids;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <typename T>
auto sigmoid(const Eigen::ArrayBase<T>& x) {
  using S = typename T::Scalar;
  return S(1) / (S(1) + (-x).exp());
}

/// Per-step gate activations of a GRU over `steps` time steps of B columns.
template <typename T>
struct GruTrace {
  Mat<T> x;       // D x steps*B inputs
  Mat<T> gx;      // 3H x steps*B, wx x + bx
  Mat<T> r, z, n, ghn, h_prev, h;  // H x steps*B

  void resize(Eigen::Index H, Eigen::Index cols) {
    r.resize(H, cols);
    z.resize(H, cols);
    n.resize(H, cols);
    ghn.resize(H, cols);
    h_prev.resize(H, cols);
    h.resize(H, cols);
  }
};

/// One GRU step on B columns; writes the gate values into column block
/// [col, col + B) of the trace.
template <typename T>
void gru_step(const Mat<T>& wh, const Mat<T>& bh, GruTrace<T>& tr, Eigen::Index col, Eigen::Index B,
              const Mat<T>& h_prev, Mat<T>& h_new) {
  const Eigen::Index H = wh.cols();
  Mat<T> gh = wh * h_prev;
  gh.colwise() += bh.col(0);
  auto gx = tr.gx.middleCols(col, B);
  auto r = tr.r.middleCols(col, B);
  auto z = tr.z.middleCols(col, B);
  auto n = tr.n.middleCols(col, B);
  r = sigmoid((gx.topRows(H) + gh.topRows(H)).array()).matrix();
  z = sigmoid((gx.middleRows(H, H) + gh.middleRows(H, H)).array()).matrix();
  tr.ghn.middleCols(col, B) = gh.bottomRows(H);
  n = (gx.bottomRows(H).array() + r.array() * gh.bottomRows(H).array()).tanh().matrix();
  h_new = ((T(1) - z.array()) * n.array() + z.array() * h_prev.array()).matrix();
  tr.h_prev.middleCols(col, B) = h_prev;
}

/// Backward through one GRU step. `dh` is the gradient w.r.t. the step
/// output; fills the gate-gradient blocks and returns d h_prev through the
/// recurrence (excluding masking).
template <typename T>
Mat<T> gru_step_backward(const Mat<T>& wh, const GruTrace<T>& tr, Eigen::Index col, Eigen::Index B, const Mat<T>& dh,
                         Mat<T>& dgx, Mat<T>& dgh) {
  const Eigen::Index H = wh.cols();
  const auto r = tr.r.middleCols(col, B).array();
  const auto z = tr.z.middleCols(col, B).array();
  const auto n = tr.n.middleCols(col, B).array();
  const auto ghn = tr.ghn.middleCols(col, B).array();
  const auto hp = tr.h_prev.middleCols(col, B).array();
  const auto d = dh.array();

  const auto dpre_n = (d * (T(1) - z) * (T(1) - n * n)).eval();
  const auto dpre_z = (d * (hp - n) * z * (T(1) - z)).eval();
  const auto dpre_r = (dpre_n * ghn * r * (T(1) - r)).eval();

  auto gx = dgx.middleCols(col, B);
  auto gh = dgh.middleCols(col, B);
  gx.topRows(H) = dpre_r.matrix();
  gx.middleRows(H, H) = dpre_z.matrix();
  gx.bottomRows(H) = dpre_n.matrix();
  gh.topRows(H) = dpre_r.matrix();
  gh.middleRows(H, H) = dpre_z.matrix();
  gh.bottomRows(H) = (dpre_n * r).matrix();

  Mat<T> dprev = (d * z).matrix();
  dprev.noalias() += wh.transpose() * gh;
  return dprev;
}

template <typename T>
void gather_embeddings(const Mat<T>& embed, const std::vector<int>& ids, Mat<T>& out) {
  out.resize(embed.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = embed.col(ids[k]);
}

template <typename T>
void scatter_embeddings(const Mat<T>& dx, const std::vector<int>& ids, Mat<T>& dembed) {
  for (std::size_t k = 0; k < ids.size(); ++k) dembed.col(ids[k]) += dx.col(static_cast<Eigen::Index>(k));
}

/// Masked softmax over the first `len` entries of a column.
template <typename T, typename Col>
void masked_softmax(Col&& scores, int len) {
  T mx = -std::numeric_limits<T>::infinity();
  for (int j = 0; j < len; ++j) mx = std::max(mx, scores(j));
  T sum = 0;
  for (int j = 0; j < len; ++j) {
    scores(j) = std::exp(scores(j) - mx);
    sum += scores(j);
  }
  for (int j = 0; j < len; ++j) scores(j) /= sum;
  for (Eigen::Index j = len; j < scores.size(); ++j) scores(j) = T(0);
}

}  // namespace

template <typename T>
LossValue copy_model_loss(const CopyParams<T>& p, const Batch& batch, CopyParams<T>* grad) {
  const Eigen::Index B = batch.size;
  const Eigen::Index S = batch.src_steps;
  const Eigen::Index Tn = batch.tgt_steps;
  const Eigen::Index H = p.enc_wh.cols();
  const Eigen::Index V = p.out_w.rows();

  // ---- encoder
  GruTrace<T> enc;
  gather_embeddings(p.embed, batch.src, enc.x);
  enc.gx.noalias() = p.enc_wx * enc.x;
  enc.gx.colwise() += p.enc_bx.col(0);
  enc.resize(H, S * B);
  Mat<T> h = Mat<T>::Zero(H, B);
  Mat<T> h_new(H, B);
  for (Eigen::Index t = 0; t < S; ++t) {
    gru_step(p.enc_wh, p.enc_bh, enc, t * B, B, h, h_new);
    for (Eigen::Index b = 0; b < B; ++b) {
      if (t >= batch.src_len[b]) h_new.col(b) = h.col(b);
    }
    enc.h.middleCols(t * B, B) = h_new;
    h = h_new;
  }

  // ---- decoder (teacher forcing: BOS, then the gold prefix)
  std::vector<int> dec_in(static_cast<std::size_t>(Tn * B));
  for (Eigen::Index t = 0; t < Tn; ++t) {
    for (Eigen::Index b = 0; b < B; ++b) {
      dec_in[t * B + b] = t == 0 ? CharVocab::kBos : batch.tgt[(t - 1) * B + b];
    }
  }
  GruTrace<T> dec;
  gather_embeddings(p.embed, dec_in, dec.x);
  dec.gx.noalias() = p.dec_wx * dec.x;
  dec.gx.colwise() += p.dec_bx.col(0);
  dec.resize(H, Tn * B);
  Mat<T> s = h;  // final encoder state
  Mat<T> s_new(H, B);
  for (Eigen::Index t = 0; t < Tn; ++t) {
    gru_step(p.dec_wh, p.dec_bh, dec, t * B, B, s, s_new);
    dec.h.middleCols(t * B, B) = s_new;
    s = s_new;
  }

  // ---- attention
  Mat<T> Q;
  Q.noalias() = p.att_w * dec.h;  // H x Tn*B
  std::vector<Mat<T>> alpha(static_cast<std::size_t>(Tn));  // S x B each
  Mat<T> C = Mat<T>::Zero(H, Tn * B);
  for (Eigen::Index t = 0; t < Tn; ++t) {
    Mat<T>& a = alpha[static_cast<std::size_t>(t)];
    a.resize(S, B);
    const auto q = Q.middleCols(t * B, B);
    for (Eigen::Index j = 0; j < S; ++j) {
      a.row(j) = (q.array() * enc.h.middleCols(j * B, B).array()).colwise().sum().matrix();
    }
    for (Eigen::Index b = 0; b < B; ++b) masked_softmax<T>(a.col(b), batch.src_len[b]);
    auto c = C.middleCols(t * B, B);
    for (Eigen::Index j = 0; j < S; ++j) {
      c.array() += enc.h.middleCols(j * B, B).array().rowwise() * a.row(j).array();
    }
  }

  // ---- output layer
  Mat<T> cat(2 * H, Tn * B);
  cat.topRows(H) = C;
  cat.bottomRows(H) = dec.h;
  Mat<T> A;
  A.noalias() = p.comb_w * cat;
  A.colwise() += p.comb_b.col(0);
  A = A.array().tanh().matrix();
  Mat<T> logits;
  logits.noalias() = p.out_w * A;
  logits.colwise() += p.out_b.col(0);

  LossValue loss;
  loss.tokens = batch.target_tokens();
  Mat<T> dlogits;
  if (grad) dlogits = Mat<T>::Zero(V, Tn * B);
  const T scale = loss.tokens == 0 ? T(0) : T(1) / static_cast<T>(loss.tokens);
  for (Eigen::Index t = 0; t < Tn; ++t) {
    for (Eigen::Index b = 0; b < B; ++b) {
      if (t >= batch.tgt_len[b]) continue;
      const Eigen::Index k = t * B + b;
      auto col = logits.col(k);
      const T mx = col.maxCoeff();
      const T lse = mx + std::log((col.array() - mx).exp().sum());
      const int gold = batch.tgt[k];
      loss.sum -= static_cast<double>(col(gold) - lse);
      if (grad) {
        dlogits.col(k) = ((col.array() - lse).exp() * scale).matrix();
        dlogits(gold, k) -= scale;
      }
    }
  }
  if (!grad) return loss;

  // ---- backward
  auto& g = *grad;
  g = CopyParams<T>::zeros(static_cast<std::size_t>(V), static_cast<std::size_t>(p.embed.rows()),
                           static_cast<std::size_t>(H));
  if (loss.tokens == 0) return loss;

  g.out_w.noalias() = dlogits * A.transpose();
  g.out_b = dlogits.rowwise().sum();
  Mat<T> dpre;
  dpre.noalias() = p.out_w.transpose() * dlogits;
  dpre = (dpre.array() * (T(1) - A.array() * A.array())).matrix();
  g.comb_w.noalias() = dpre * cat.transpose();
  g.comb_b = dpre.rowwise().sum();
  Mat<T> dcat;
  dcat.noalias() = p.comb_w.transpose() * dpre;

  Mat<T> dHenc = Mat<T>::Zero(H, S * B);
  Mat<T> dQ(H, Tn * B);
  for (Eigen::Index t = 0; t < Tn; ++t) {
    const Mat<T>& a = alpha[static_cast<std::size_t>(t)];
    const auto dc = dcat.topRows(H).middleCols(t * B, B);
    const auto q = Q.middleCols(t * B, B);
    Mat<T> dalpha(S, B);
    for (Eigen::Index j = 0; j < S; ++j) {
      const auto hj = enc.h.middleCols(j * B, B);
      dalpha.row(j) = (dc.array() * hj.array()).colwise().sum().matrix();
      dHenc.middleCols(j * B, B).array() += dc.array().rowwise() * a.row(j).array();
    }
    // softmax backward: de_j = a_j (da_j - sum_k a_k da_k)
    const RowVec<T> inner = (a.array() * dalpha.array()).colwise().sum().matrix();
    const Mat<T> de = (a.array() * (dalpha.rowwise() - inner).array()).matrix();
    auto dq = dQ.middleCols(t * B, B);
    dq.setZero();
    for (Eigen::Index j = 0; j < S; ++j) {
      const auto hj = enc.h.middleCols(j * B, B);
      dq.array() += hj.array().rowwise() * de.row(j).array();
      dHenc.middleCols(j * B, B).array() += q.array().rowwise() * de.row(j).array();
    }
  }
  g.att_w.noalias() = dQ * dec.h.transpose();
  Mat<T> dS = dcat.bottomRows(H);
  dS.noalias() += p.att_w.transpose() * dQ;

  // decoder recurrence
  Mat<T> dgx(3 * H, Tn * B), dgh(3 * H, Tn * B);
  Mat<T> carry = Mat<T>::Zero(H, B);
  for (Eigen::Index t = Tn - 1; t >= 0; --t) {
    const Mat<T> dh = dS.middleCols(t * B, B) + carry;
    carry = gru_step_backward(p.dec_wh, dec, t * B, B, dh, dgx, dgh);
  }
  g.dec_wx.noalias() = dgx * dec.x.transpose();
  g.dec_bx = dgx.rowwise().sum();
  g.dec_wh.noalias() = dgh * dec.h_prev.transpose();
  g.dec_bh = dgh.rowwise().sum();
  {
    Mat<T> dx;
    dx.noalias() = p.dec_wx.transpose() * dgx;
    scatter_embeddings(dx, dec_in, g.embed);
  }

  // encoder recurrence; the decoder's initial state is the last encoder column
  dHenc.middleCols((S - 1) * B, B) += carry;
  Mat<T> egx(3 * H, S * B), egh(3 * H, S * B);
  carry.setZero();
  for (Eigen::Index t = S - 1; t >= 0; --t) {
    Mat<T> dh = dHenc.middleCols(t * B, B) + carry;
    Mat<T> passthrough = Mat<T>::Zero(H, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      if (t >= batch.src_len[b]) {
        passthrough.col(b) = dh.col(b);
        dh.col(b).setZero();
      }
    }
    carry = gru_step_backward(p.enc_wh, enc, t * B, B, dh, egx, egh) + passthrough;
  }
  g.enc_wx.noalias() = egx * enc.x.transpose();
  g.enc_bx = egx.rowwise().sum();
  g.enc_wh.noalias() = egh * enc.h_prev.transpose();
  g.enc_bh = egh.rowwise().sum();
  {
    Mat<T> dx;
    dx.noalias() = p.enc_wx.transpose() * egx;
    scatter_embeddings(dx, batch.src, g.embed);
  }
  return loss;
}

template LossValue copy_model_loss<float>(const CopyParams<float>&, const Batch&, CopyParams<float>*);
template LossValue copy_model_loss<double>(const CopyParams<double>&, const Batch&, CopyParams<double>*);

// ---------------------------------------------------------------------------
// Decoding

CopyModel::CopyModel(ModelConfig config, CharVocab vocab)
    : config_(config), vocab_(std::move(vocab)), params_(init_params<float>(vocab_.id_count(), config_)) {}

DecodeResult CopyModel::translate(std::u32string_view source) const {
  using M = Mat<float>;
  const auto& p = params_;
  const Eigen::Index H = p.enc_wh.cols();
  const std::vector<int> src = encode_with_eos(vocab_, source);
  const auto S = static_cast<Eigen::Index>(src.size());

  GruTrace<float> enc;
  gather_embeddings(p.embed, src, enc.x);
  enc.gx.noalias() = p.enc_wx * enc.x;
  enc.gx.colwise() += p.enc_bx.col(0);
  enc.resize(H, S);
  M h = M::Zero(H, 1), h_new(H, 1);
  for (Eigen::Index t = 0; t < S; ++t) {
    gru_step(p.enc_wh, p.enc_bh, enc, t, 1, h, h_new);
    enc.h.col(t) = h_new;
    h = h_new;
  }
  const M keys_t = enc.h.transpose();  // S x H

  const auto cap = static_cast<std::size_t>(std::ceil(config_.max_decode_factor * static_cast<double>(source.size())));
  DecodeResult out;
  std::vector<Eigen::VectorXd> rows;
  GruTrace<float> dec;
  dec.resize(H, 1);
  M s = h, s_new(H, 1);
  int prev = CharVocab::kBos;
  while (out.output_ids.size() < cap) {
    dec.gx.noalias() = p.dec_wx * p.embed.col(prev);
    dec.gx.colwise() += p.dec_bx.col(0);
    gru_step(p.dec_wh, p.dec_bh, dec, 0, 1, s, s_new);
    s = s_new;
    M scores = keys_t * (p.att_w * s);
    masked_softmax<float>(scores.col(0), static_cast<int>(S));
    M cat(2 * H, 1);
    cat.topRows(H) = enc.h * scores;
    cat.bottomRows(H) = s;
    M a = ((p.comb_w * cat + p.comb_b).array().tanh()).matrix();
    M logits = p.out_w * a + p.out_b;
    // Specials PAD and BOS are never valid outputs.
    logits(CharVocab::kPad, 0) = -std::numeric_limits<float>::infinity();
    logits(CharVocab::kBos, 0) = -std::numeric_limits<float>::infinity();
    Eigen::Index best = 0;
    logits.col(0).maxCoeff(&best);  // first maximum on ties
    if (best == CharVocab::kEos) {
      out.reached_eos = true;
      break;
    }
    out.output_ids.push_back(static_cast<int>(best));
    rows.push_back(scores.col(0).cast<double>());
    prev = static_cast<int>(best);
  }
  out.output_text = vocab_.decode(out.output_ids);
  out.attention.resize(static_cast<Eigen::Index>(rows.size()), S);
  for (std::size_t i = 0; i < rows.size(); ++i) out.attention.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return out;
}

std::vector<DecodeResult> CopyModel::translate_all(const ParallelCorpus& corpus, Side side) const {
  corpus.require_side(side);
  std::vector<DecodeResult> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) out.push_back(translate(corpus.sentence(i, side).chars));
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct EncodedCorpus {
  std::vector<std::vector<int>> src;
  std::vector<std::vector<int>> tgt;
};

EncodedCorpus encode_corpus(const ParallelCorpus& corpus, const CharVocab& vocab) {
  corpus.require_side(Side::kTarget);
  EncodedCorpus e;
  e.src.reserve(corpus.size());
  e.tgt.reserve(corpus.size());
  for (const auto& pair : corpus.pairs) {
    e.src.push_back(encode_with_eos(vocab, pair.source.chars));
    e.tgt.push_back(encode_with_eos(vocab, pair.target->chars));
  }
  return e;
}

// Batches of similar source length; `rng` shuffles within lengths and the
// batch order. Without an rng the order is fixed (used for evaluation).
std::vector<std::vector<std::size_t>> make_batches(const EncodedCorpus& data, std::size_t batch_size, Rng* rng) {
  std::vector<std::size_t> idx(data.src.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (rng) rng->shuffle(idx);
  std::stable_sort(idx.begin(), idx.end(),
                   [&data](std::size_t a, std::size_t b) { return data.src[a].size() < data.src[b].size(); });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < idx.size(); i += batch_size) {
    batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                         idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), i + batch_size)));
  }
  if (rng) rng->shuffle(batches);
  return batches;
}

Batch gather_batch(const EncodedCorpus& data, const std::vector<std::size_t>& items) {
  std::vector<std::vector<int>> src, tgt;
  src.reserve(items.size());
  tgt.reserve(items.size());
  for (std::size_t i : items) {
    src.push_back(data.src[i]);
    tgt.push_back(data.tgt[i]);
  }
  return Batch::make(src, tgt);
}

LossValue corpus_loss(const CopyParams<float>& params, const EncodedCorpus& data, std::size_t batch_size) {
  LossValue total;
  for (const auto& items : make_batches(data, batch_size, nullptr)) {
    const LossValue l = copy_model_loss<float>(params, gather_batch(data, items), nullptr);
    total.sum += l.sum;
    total.tokens += l.tokens;
  }
  return total;
}

class Adam {
 public:
  Adam(const CopyParams<float>& like, const TrainConfig& cfg) : cfg_(cfg) {
    m_ = like;
    v_ = like;
    m_.for_each([](const char*, Mat<float>& x) { x.setZero(); });
    v_.for_each([](const char*, Mat<float>& x) { x.setZero(); });
  }

  void step(CopyParams<float>& params, CopyParams<float>& grad) {
    ++t_;
    const auto clip = static_cast<float>(cfg_.grad_clip);
    const auto b1 = static_cast<float>(cfg_.adam_beta1);
    const auto b2 = static_cast<float>(cfg_.adam_beta2);
    const auto eps = static_cast<float>(cfg_.adam_epsilon);
    const auto lr_t = static_cast<float>(cfg_.learning_rate * std::sqrt(1.0 - std::pow(cfg_.adam_beta2, t_)) /
                                         (1.0 - std::pow(cfg_.adam_beta1, t_)));
    std::vector<Mat<float>*> ps, gs, ms, vs;
    params.for_each([&](const char*, Mat<float>& x) { ps.push_back(&x); });
    grad.for_each([&](const char*, Mat<float>& x) { gs.push_back(&x); });
    m_.for_each([&](const char*, Mat<float>& x) { ms.push_back(&x); });
    v_.for_each([&](const char*, Mat<float>& x) { vs.push_back(&x); });
    for (std::size_t k = 0; k < ps.size(); ++k) {
      auto g = gs[k]->array().max(-clip).min(clip).eval();
      ms[k]->array() = b1 * ms[k]->array() + (1.0f - b1) * g;
      vs[k]->array() = b2 * vs[k]->array() + (1.0f - b2) * g * g;
      ps[k]->array() -= lr_t * ms[k]->array() / (vs[k]->array().sqrt() + eps);
    }
  }

 private:
  TrainConfig cfg_;
  CopyParams<float> m_, v_;
  int t_ = 0;
};

}  // namespace

TrainResult train_copy_model(const ParallelCorpus& train, const ParallelCorpus& dev, const CharVocab& vocab,
                             const ModelConfig& mcfg, const TrainConfig& tcfg, const TrainProgress& progress) {
  mcfg.validate();
  tcfg.validate();
  if (train.empty()) throw DataError("training corpus is empty");
  if (dev.empty()) throw DataError("dev corpus is empty");
  const EncodedCorpus train_data = encode_corpus(train, vocab);
  const EncodedCorpus dev_data = encode_corpus(dev, vocab);

  TrainResult result;
  CopyModel model(mcfg, vocab);
  CopyParams<float>& params = model.params();
  CopyParams<float> best = params;
  CopyParams<float> grad;
  Adam adam(params, tcfg);
  double best_dev = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  long batch_index = 0;

  for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    Rng rng(mcfg.seed, 0xE90C, static_cast<std::uint64_t>(epoch));
    LossValue epoch_loss;
    for (const auto& items : make_batches(train_data, tcfg.batch_size, &rng)) {
      const Batch batch = gather_batch(train_data, items);
      const LossValue l = copy_model_loss<float>(params, batch, &grad);
      if (!std::isfinite(l.sum) || !grad.all_finite()) {
        throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) + " at batch " +
                                std::to_string(batch_index),
                            batch_index);
      }
      if (batch_index == 0) result.first_batch_loss = l.mean();
      epoch_loss.sum += l.sum;
      epoch_loss.tokens += l.tokens;
      adam.step(params, grad);
      ++batch_index;
    }
    const LossValue dev_loss = corpus_loss(params, dev_data, tcfg.batch_size);
    EpochLog entry{epoch, epoch_loss.mean(), dev_loss.mean()};
    result.log.push_back(entry);
    if (progress) progress(entry);
    if (entry.dev_loss < best_dev) {
      best_dev = entry.dev_loss;
      best = params;
      result.best_epoch = epoch;
      bad_epochs = 0;
    } else if (++bad_epochs >= tcfg.patience) {
      result.early_stopped = epoch < tcfg.max_epochs;
      break;
    }
  }
  params = std::move(best);
  result.model = std::move(model);
  return result;
}

LossValue evaluate_loss(const CopyModel& model, const ParallelCorpus& corpus) {
  return corpus_loss(model.params(), encode_corpus(corpus, model.vocab()), 64);
}

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "epoch\ttrain_loss\tdev_loss\n";
  out.precision(9);
  for (const auto& e : log) out << e.epoch << '\t' << e.train_loss << '\t' << e.dev_loss << '\n';
}

// ---------------------------------------------------------------------------
// Gradient check

GradientCheckResult gradient_check(const CopyParams<double>& params, const Batch& batch, std::uint64_t seed,
                                   std::size_t max_checked, double h, double abs_floor) {
  CopyParams<double> grad;
  copy_model_loss<double>(params, batch, &grad);

  struct Slot {
    std::size_t tensor;
    Eigen::Index index;
  };
  std::vector<std::string> names;
  std::vector<Slot> slots;
  params.for_each([&](const char* name, const Mat<double>& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) slots.push_back({names.size(), k});
    names.emplace_back(name);
  });
  Rng rng(seed, 0x6C4E);
  if (slots.size() > max_checked) {
    for (std::size_t i = 0; i < max_checked; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform(slots.size() - i));
      std::swap(slots[i], slots[j]);
    }
    slots.resize(max_checked);
  }

  CopyParams<double> probe = params;
  std::vector<Mat<double>*> probe_t, grad_t;
  probe.for_each([&](const char*, Mat<double>& m) { probe_t.push_back(&m); });
  grad.for_each([&](const char*, Mat<double>& m) { grad_t.push_back(&m); });

  GradientCheckResult result;
  for (const Slot& slot : slots) {
    double& x = probe_t[slot.tensor]->data()[slot.index];
    const double orig = x;
    x = orig + h;
    const double up = copy_model_loss<double>(probe, batch, nullptr).mean();
    x = orig - h;
    const double down = copy_model_loss<double>(probe, batch, nullptr).mean();
    x = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = grad_t[slot.tensor]->data()[slot.index];
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), abs_floor});
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_parameter = names[slot.tensor] + "[" + std::to_string(slot.index) + "]";
    }
    ++result.checked;
  }
  return result;
}

}  // namespace ugclab
