#include "ugclab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ugclab/charvocab.hpp"
#include "ugclab/errors.hpp"
#include "ugclab/utf8.hpp"

namespace ugclab {

BleuSmoothing parse_bleu_smoothing(std::string_view name) {
  if (name == "none") return BleuSmoothing::kNone;
  if (name == "exp" || name == "exp-floor") return BleuSmoothing::kExpFloor;
  throw ConfigError("unknown BLEU smoothing '" + std::string(name) + "'");
}

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  for (int n = 0; n < 4; ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  hyp_len += other.hyp_len;
  ref_len += other.ref_len;
  return *this;
}

namespace {

// n-grams keyed by their tokens joined with an ASCII unit separator.
std::unordered_map<std::string, std::size_t> ngram_counts(const TokenSeq& tokens, std::size_t n) {
  std::unordered_map<std::string, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t k = 1; k < n; ++k) {
      key.push_back('\x1f');
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

BleuStats bleu_sentence_stats(const TokenSeq& hypothesis, const TokenSeq& reference) {
  BleuStats stats;
  stats.hyp_len = hypothesis.size();
  stats.ref_len = reference.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto hyp = ngram_counts(hypothesis, n);
    const auto ref = ngram_counts(reference, n);
    std::size_t matched = 0;
    for (const auto& [gram, count] : hyp) {
      if (auto it = ref.find(gram); it != ref.end()) matched += std::min(count, it->second);
    }
    stats.matches[n - 1] = matched;
    stats.totals[n - 1] = hypothesis.size() >= n ? hypothesis.size() - n + 1 : 0;
  }
  return stats;
}

BleuScore bleu_from_stats(const BleuStats& stats, BleuSmoothing smoothing) {
  BleuScore out;
  out.hyp_len = stats.hyp_len;
  out.ref_len = stats.ref_len;
  if (stats.hyp_len == 0) {
    out.brevity_penalty = 0.0;
    return out;
  }
  out.brevity_penalty = stats.hyp_len >= stats.ref_len
                            ? 1.0
                            : std::exp(1.0 - static_cast<double>(stats.ref_len) / static_cast<double>(stats.hyp_len));
  double floor_divisor = 1.0;
  double log_sum = 0.0;
  bool zero = false;
  for (int n = 0; n < 4; ++n) {
    const auto total = static_cast<double>(stats.totals[n]);
    double p = 0.0;
    if (stats.totals[n] == 0) {
      zero = true;
    } else if (stats.matches[n] > 0) {
      p = static_cast<double>(stats.matches[n]) / total;
    } else if (smoothing == BleuSmoothing::kExpFloor) {
      floor_divisor *= 2.0;
      p = 1.0 / (floor_divisor * total);
    } else {
      zero = true;
    }
    out.precisions[n] = p;
    if (p > 0.0) log_sum += std::log(p);
  }
  out.score = zero ? 0.0 : 100.0 * out.brevity_penalty * std::exp(log_sum / 4.0);
  return out;
}

BleuScore bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references,
               BleuSmoothing smoothing) {
  if (hypotheses.size() != references.size()) {
    throw DataError("BLEU needs one reference per hypothesis (" + std::to_string(hypotheses.size()) + " vs " +
                    std::to_string(references.size()) + ")");
  }
  BleuStats stats;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) stats += bleu_sentence_stats(hypotheses[i], references[i]);
  return bleu_from_stats(stats, smoothing);
}

TokenSeq char_units(std::u32string_view text, bool keep_whitespace) {
  TokenSeq units;
  units.reserve(text.size());
  for (char32_t cp : text) {
    if (keep_whitespace || !utf8::is_space(cp)) units.push_back(utf8::encode(cp));
  }
  return units;
}

BleuScore char_bleu(const std::vector<std::u32string>& hypotheses, const std::vector<std::u32string>& references,
                    BleuSmoothing smoothing) {
  std::vector<TokenSeq> hyps, refs;
  hyps.reserve(hypotheses.size());
  refs.reserve(references.size());
  for (const auto& h : hypotheses) hyps.push_back(char_units(h));
  for (const auto& r : references) refs.push_back(char_units(r));
  return bleu(hyps, refs, smoothing);
}

namespace {

template <typename Seq>
EditDistance levenshtein(const Seq& hyp, const Seq& ref) {
  const std::size_t m = hyp.size();
  const std::size_t n = ref.size();
  std::vector<std::size_t> prev(n + 1), cur(n + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= m; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  EditDistance out;
  out.distance = prev[n];
  out.normalized = static_cast<double>(out.distance) / static_cast<double>(std::max<std::size_t>(1, n));
  return out;
}

}  // namespace

EditDistance edit_distance(const TokenSeq& hypothesis, const TokenSeq& reference) {
  return levenshtein(hypothesis, reference);
}

EditDistance char_edit_distance(std::u32string_view hypothesis, std::u32string_view reference) {
  return levenshtein(hypothesis, reference);
}

double kl_divergence_ngram(const ParallelCorpus& p_corpus, const ParallelCorpus& q_corpus, int n, double alpha,
                           Side side) {
  if (n < 1) throw ConfigError("n-gram order must be at least 1");
  if (!(alpha > 0.0)) throw ConfigError("smoothing constant alpha must be positive");
  if (p_corpus.empty() || q_corpus.empty()) throw DataError("KL divergence needs two non-empty corpora");

  // counts[g] = {count in P, count in Q}; ordered so the sum is reproducible.
  std::map<std::string, std::array<double, 2>> counts;
  std::array<double, 2> totals{0.0, 0.0};
  auto collect = [&](const ParallelCorpus& corpus, int which) {
    corpus.require_side(side);
    for (std::size_t s = 0; s < corpus.size(); ++s) {
      TokenSeq padded(static_cast<std::size_t>(n - 1), std::string(NgramLM::kBos));
      const auto& tokens = corpus.sentence(s, side).tokens;
      padded.insert(padded.end(), tokens.begin(), tokens.end());
      padded.emplace_back(NgramLM::kEos);
      for (const auto& [gram, c] : ngram_counts(padded, static_cast<std::size_t>(n))) {
        counts[gram][which] += static_cast<double>(c);
        totals[which] += static_cast<double>(c);
      }
    }
  };
  collect(p_corpus, 0);
  collect(q_corpus, 1);

  const double support = static_cast<double>(counts.size());
  const double p_norm = totals[0] + alpha * support;
  const double q_norm = totals[1] + alpha * support;
  double kl = 0.0;
  for (const auto& [gram, c] : counts) {
    const double p = (c[0] + alpha) / p_norm;
    const double q = (c[1] + alpha) / q_norm;
    kl += p * std::log(p / q);
  }
  return std::max(0.0, kl);
}

std::size_t NgramLM::TrigramKeyHash::operator()(const std::array<Id, 3>& k) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Id v : k) {
    h ^= static_cast<std::uint32_t>(v);
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::size_t>(h);
}

NgramLM NgramLM::train(const ParallelCorpus& corpus, std::array<double, 3> lambdas, Side side) {
  for (double l : lambdas) {
    if (!(l > 0.0)) throw ConfigError("interpolation weights must be positive");
  }
  if (std::abs(lambdas[0] + lambdas[1] + lambdas[2] - 1.0) > 1e-9) {
    throw ConfigError("interpolation weights must sum to 1");
  }
  if (corpus.empty()) throw DataError("cannot train a language model on an empty corpus");
  corpus.require_side(side);

  NgramLM lm;
  lm.lambdas_ = lambdas;
  auto intern = [&lm](std::string_view w) {
    auto [it, inserted] = lm.ids_.emplace(std::string(w), static_cast<Id>(lm.words_.size()));
    if (inserted) {
      lm.words_.emplace_back(w);
      lm.unigram_.push_back(0);
    }
    return it->second;
  };
  lm.bos_ = intern(kBos);
  lm.eos_ = intern(kEos);
  lm.unk_ = intern(kUnk);

  for (std::size_t s = 0; s < corpus.size(); ++s) {
    Id u = lm.bos_, v = lm.bos_;
    const auto& tokens = corpus.sentence(s, side).tokens;
    for (std::size_t i = 0; i <= tokens.size(); ++i) {
      const Id w = i < tokens.size() ? intern(tokens[i]) : lm.eos_;
      ++lm.unigram_[static_cast<std::size_t>(w)];
      ++lm.unigram_total_;
      ++lm.bigram_[key(v, w)];
      ++lm.bigram_history_[v];
      ++lm.trigram_[{u, v, w}];
      ++lm.trigram_history_[key(u, v)];
      u = v;
      v = w;
    }
  }
  // Every interned word except BOS is predictable; UNK carries count 0.
  lm.predicted_types_ = lm.words_.size() - 1;
  return lm;
}

NgramLM::Id NgramLM::id_of(std::string_view word) const {
  if (auto it = ids_.find(std::string(word)); it != ids_.end()) return it->second;
  return unk_;
}

bool NgramLM::contains(std::string_view word) const { return ids_.contains(std::string(word)); }

std::vector<std::string> NgramLM::vocabulary() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (static_cast<Id>(i) != bos_) out.push_back(words_[i]);
  }
  return out;
}

double NgramLM::prob(std::string_view u_word, std::string_view v_word, std::string_view word) const {
  const Id u = id_of(u_word);
  const Id v = id_of(v_word);
  Id w = id_of(word);
  if (w == bos_) w = unk_;
  const double p1 = (static_cast<double>(unigram_[static_cast<std::size_t>(w)]) + 1.0) /
                    static_cast<double>(unigram_total_ + predicted_types_);
  double p2 = p1;
  if (auto h = bigram_history_.find(v); h != bigram_history_.end()) {
    auto c = bigram_.find(key(v, w));
    p2 = c == bigram_.end() ? 0.0 : static_cast<double>(c->second) / static_cast<double>(h->second);
  }
  double p3 = p2;
  if (auto h = trigram_history_.find(key(u, v)); h != trigram_history_.end()) {
    auto c = trigram_.find({u, v, w});
    p3 = c == trigram_.end() ? 0.0 : static_cast<double>(c->second) / static_cast<double>(h->second);
  }
  return lambdas_[0] * p1 + lambdas_[1] * p2 + lambdas_[2] * p3;
}

double perplexity(const NgramLM& lm, const ParallelCorpus& test, Side side) {
  if (test.empty()) throw DataError("cannot compute perplexity of an empty corpus");
  test.require_side(side);
  double log_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < test.size(); ++s) {
    std::string_view u = NgramLM::kBos, v = NgramLM::kBos;
    const auto& tokens = test.sentence(s, side).tokens;
    for (std::size_t i = 0; i <= tokens.size(); ++i) {
      const std::string_view w = i < tokens.size() ? std::string_view(tokens[i]) : NgramLM::kEos;
      log_sum += std::log(lm.prob(u, v, w));
      ++count;
      u = v;
      v = w;
    }
  }
  return std::exp(-log_sum / static_cast<double>(count));
}

std::unordered_set<std::string> token_vocabulary(const ParallelCorpus& corpus, Side side) {
  corpus.require_side(side);
  std::unordered_set<std::string> vocab;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto& tokens = corpus.sentence(s, side).tokens;
    vocab.insert(tokens.begin(), tokens.end());
  }
  return vocab;
}

double oov_rate(const ParallelCorpus& test, const std::unordered_set<std::string>& train_vocab, Side side) {
  if (train_vocab.empty()) throw DataError("OOV rate needs a non-empty training vocabulary");
  test.require_side(side);
  std::size_t total = 0, oov = 0;
  for (std::size_t s = 0; s < test.size(); ++s) {
    for (const auto& t : test.sentence(s, side).tokens) {
      ++total;
      if (!train_vocab.contains(t)) ++oov;
    }
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(oov) / static_cast<double>(total);
}

std::size_t char_oov_count(const Sentence& sentence, const CharVocab& vocab) {
  std::size_t count = 0;
  for (char32_t cp : sentence.chars) {
    if (!vocab.contains(cp)) ++count;
  }
  return count;
}

double length_ratio(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references) {
  if (hypotheses.size() != references.size()) {
    throw DataError("length ratio needs one reference per hypothesis (" + std::to_string(hypotheses.size()) +
                    " vs " + std::to_string(references.size()) + ")");
  }
  std::size_t hyp = 0, ref = 0;
  for (const auto& h : hypotheses) hyp += h.size();
  for (const auto& r : references) ref += r.size();
  if (ref == 0) throw DataError("length ratio is undefined for empty references");
  return static_cast<double>(hyp) / static_cast<double>(ref);
}

}  // namespace ugclab
