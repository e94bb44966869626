#include "ugclab/aligner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "ugclab/errors.hpp"

namespace ugclab {

namespace {

constexpr double kFloor = 1e-12;
constexpr char kSep = '\x1f';

}  // namespace

std::string TranslationTable::key(std::string_view s, std::string_view t) {
  std::string k;
  k.reserve(s.size() + t.size() + 1);
  k.append(s);
  k.push_back(kSep);
  k.append(t);
  return k;
}

double TranslationTable::prob(std::string_view source, std::string_view target) const {
  auto it = entries_.find(key(source, target));
  return it == entries_.end() ? 0.0 : it->second;
}

void TranslationTable::set(std::string_view source, std::string_view target, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DataError("translation probability outside [0, 1]");
  double& slot = entries_[key(source, target)];
  row_sums_[std::string(source)] += p - slot;
  slot = p;
}

double TranslationTable::row_sum(std::string_view source) const {
  auto it = row_sums_.find(std::string(source));
  return it == row_sums_.end() ? 0.0 : it->second;
}

std::vector<std::string> TranslationTable::source_vocabulary() const {
  std::vector<std::string> out;
  out.reserve(row_sums_.size());
  for (const auto& [s, _] : row_sums_) out.push_back(s);
  std::sort(out.begin(), out.end());
  return out;
}

void TranslationTable::scale(double factor) {
  if (!(factor > 0.0)) throw ConfigError("scale factor must be positive");
  for (auto& [_, p] : entries_) p *= factor;
  for (auto& [_, s] : row_sums_) s *= factor;
}

std::string TranslationTable::to_tsv() const {
  std::vector<std::pair<std::string, double>> rows(entries_.begin(), entries_.end());
  std::sort(rows.begin(), rows.end());
  std::string out;
  char buf[32];
  for (const auto& [k, p] : rows) {
    const auto sep = k.find(kSep);
    out.append(k, 0, sep);
    out.push_back('\t');
    out.append(k, sep + 1);
    out.push_back('\t');
    auto res = std::to_chars(buf, buf + sizeof buf, p);
    out.append(buf, res.ptr);
    out.push_back('\n');
  }
  return out;
}

void TranslationTable::save_tsv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << to_tsv();
}

double DiagonalPrior::partition(std::size_t j, std::size_t src_len, std::size_t tgt_len) const {
  const double y = static_cast<double>(j + 1) / static_cast<double>(tgt_len);
  double z = 0.0;
  for (std::size_t i = 0; i < src_len; ++i) {
    z += std::exp(-tension * std::abs(static_cast<double>(i + 1) / static_cast<double>(src_len) - y));
  }
  return z;
}

double DiagonalPrior::prob(std::size_t i, std::size_t j, std::size_t src_len, std::size_t tgt_len) const {
  const double y = static_cast<double>(j + 1) / static_cast<double>(tgt_len);
  const double x = static_cast<double>(i + 1) / static_cast<double>(src_len);
  return (1.0 - null_prob) * std::exp(-tension * std::abs(x - y)) / partition(j, src_len, tgt_len);
}

AlignModel parse_align_model(std::string_view name) {
  if (name == "ibm1" || name == "model1") return AlignModel::kIbm1;
  if (name == "diag2" || name == "fast-align" || name == "fastalign") return AlignModel::kDiag2;
  throw ConfigError("unknown alignment model '" + std::string(name) + "' (expected ibm1 or diag2)");
}

namespace {

struct EncodedPair {
  std::vector<std::uint32_t> src;  // source ids, NULL (0) excluded
  std::vector<std::uint32_t> tgt;
};

/// Integer view of the corpus plus the entry index for every co-occurring
/// (source, target) id pair.
struct EmState {
  std::vector<std::string> src_words{std::string(TranslationTable::kNull)};
  std::vector<std::string> tgt_words;
  std::vector<EncodedPair> pairs;
  std::unordered_map<std::uint64_t, std::uint32_t> entry_of;
  std::vector<std::uint32_t> entry_src;
  std::vector<std::uint32_t> entry_tgt;
  std::vector<double> t;

  std::uint32_t entry(std::uint32_t s, std::uint32_t f) const {
    return entry_of.at((static_cast<std::uint64_t>(s) << 32) | f);
  }
};

EmState encode_corpus(const ParallelCorpus& corpus, std::size_t& skipped) {
  if (corpus.empty()) throw DataError("cannot train an aligner on an empty corpus");
  corpus.require_side(Side::kTarget);

  EmState st;
  std::unordered_map<std::string, std::uint32_t> src_ids{{std::string(TranslationTable::kNull), 0}};
  std::unordered_map<std::string, std::uint32_t> tgt_ids;
  auto intern = [](auto& ids, auto& words, const std::string& w) {
    auto [it, inserted] = ids.emplace(w, static_cast<std::uint32_t>(words.size()));
    if (inserted) words.push_back(w);
    return it->second;
  };

  skipped = 0;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const auto& src = corpus.pairs[k].source.tokens;
    const auto& tgt = corpus.pairs[k].target->tokens;
    if (src.empty() || tgt.empty()) {
      std::cerr << "warning: skipping pair " << k << " of '" << corpus.name << "' with an empty side\n";
      ++skipped;
      continue;
    }
    EncodedPair p;
    for (const auto& w : src) p.src.push_back(intern(src_ids, st.src_words, w));
    for (const auto& w : tgt) p.tgt.push_back(intern(tgt_ids, st.tgt_words, w));
    for (std::uint32_t f : p.tgt) {
      auto add = [&](std::uint32_t s) {
        const std::uint64_t key = (static_cast<std::uint64_t>(s) << 32) | f;
        if (st.entry_of.emplace(key, static_cast<std::uint32_t>(st.entry_src.size())).second) {
          st.entry_src.push_back(s);
          st.entry_tgt.push_back(f);
        }
      };
      add(0);
      for (std::uint32_t s : p.src) add(s);
    }
    st.pairs.push_back(std::move(p));
  }
  if (st.pairs.empty()) throw DataError("every pair of '" + corpus.name + "' has an empty side");
  st.t.assign(st.entry_src.size(), 1.0 / static_cast<double>(st.tgt_words.size()));
  return st;
}

/// Sufficient statistics of one E-step.
struct Counts {
  std::vector<double> lexical;  // per entry
  double log_likelihood = 0.0;
  // Diagonal prior: Σ post·|x - y| over all links, and the non-NULL
  // posterior mass per (src_len, tgt_len, j).
  double weighted_distance = 0.0;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, double> mass;
};

void e_step_range(const EmState& st, const std::optional<DiagonalPrior>& prior, std::size_t begin, std::size_t end,
                  Counts& out) {
  out.lexical.assign(st.t.size(), 0.0);
  std::vector<double> score;
  std::vector<std::uint32_t> idx;
  for (std::size_t k = begin; k < end; ++k) {
    const auto& p = st.pairs[k];
    const std::size_t n = p.src.size();
    const std::size_t m = p.tgt.size();
    score.resize(n + 1);
    idx.resize(n + 1);
    for (std::size_t j = 0; j < m; ++j) {
      const std::uint32_t f = p.tgt[j];
      idx[0] = st.entry(0, f);
      for (std::size_t i = 0; i < n; ++i) idx[i + 1] = st.entry(p.src[i], f);
      double z = 0.0;
      if (prior) {
        const double part = prior->partition(j, n, m);
        const double y = static_cast<double>(j + 1) / static_cast<double>(m);
        score[0] = prior->null_prob * st.t[idx[0]];
        for (std::size_t i = 0; i < n; ++i) {
          const double d = std::abs(static_cast<double>(i + 1) / static_cast<double>(n) - y);
          score[i + 1] = (1.0 - prior->null_prob) * std::exp(-prior->tension * d) / part * st.t[idx[i + 1]];
        }
      } else {
        for (std::size_t i = 0; i <= n; ++i) score[i] = st.t[idx[i]] / static_cast<double>(n + 1);
      }
      for (std::size_t i = 0; i <= n; ++i) z += score[i];
      out.log_likelihood += std::log(std::max(z, kFloor));
      if (z <= 0.0) continue;
      double non_null = 0.0;
      for (std::size_t i = 0; i <= n; ++i) {
        const double post = score[i] / z;
        out.lexical[idx[i]] += post;
        if (prior && i > 0) {
          non_null += post;
          const double y = static_cast<double>(j + 1) / static_cast<double>(m);
          out.weighted_distance += post * std::abs(static_cast<double>(i) / static_cast<double>(n) - y);
        }
      }
      if (prior) out.mass[{n, m, j}] += non_null;
    }
  }
}

Counts e_step(const EmState& st, const std::optional<DiagonalPrior>& prior, int jobs) {
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, st.pairs.size());
  std::vector<Counts> parts(workers);
  const std::size_t chunk = (st.pairs.size() + workers - 1) / workers;
  if (workers == 1) {
    e_step_range(st, prior, 0, st.pairs.size(), parts[0]);
    return std::move(parts[0]);
  }
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = std::min(st.pairs.size(), w * chunk);
    const std::size_t e = std::min(st.pairs.size(), b + chunk);
    threads.emplace_back([&, w, b, e] { e_step_range(st, prior, b, e, parts[w]); });
  }
  for (auto& th : threads) th.join();
  // Merge in worker order so the result depends only on the worker count.
  Counts total = std::move(parts[0]);
  for (std::size_t w = 1; w < workers; ++w) {
    for (std::size_t e = 0; e < total.lexical.size(); ++e) total.lexical[e] += parts[w].lexical[e];
    total.log_likelihood += parts[w].log_likelihood;
    total.weighted_distance += parts[w].weighted_distance;
    for (const auto& [k, v] : parts[w].mass) total.mass[k] += v;
  }
  return total;
}

void m_step(EmState& st, const Counts& c) {
  std::vector<double> row(st.src_words.size(), 0.0);
  for (std::size_t e = 0; e < c.lexical.size(); ++e) row[st.entry_src[e]] += c.lexical[e];
  for (std::size_t e = 0; e < c.lexical.size(); ++e) {
    const double r = row[st.entry_src[e]];
    if (r > 0.0) st.t[e] = c.lexical[e] / r;
  }
}

/// λ-dependent part of the expected complete-data log-likelihood.
double prior_objective(const Counts& c, double tension) {
  DiagonalPrior p{tension, 0.0};
  double q = -tension * c.weighted_distance;
  for (const auto& [k, mass] : c.mass) {
    const auto [n, m, j] = k;
    q -= mass * std::log(p.partition(j, n, m));
  }
  return q;
}

double optimize_tension(const Counts& c, double current, const EmOptions& opt) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = opt.tension_min, b = opt.tension_max;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = prior_objective(c, x1), f2 = prior_objective(c, x2);
  for (int step = 0; step < opt.golden_steps; ++step) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = prior_objective(c, x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = prior_objective(c, x1);
    }
  }
  const double candidate = 0.5 * (a + b);
  return prior_objective(c, candidate) > prior_objective(c, current) ? candidate : current;
}

}  // namespace

AlignerModel em_train(const ParallelCorpus& corpus, const EmOptions& options) {
  if (options.ibm1_iterations < 1) throw ConfigError("IBM1 iterations must be at least 1");
  if (options.model == AlignModel::kDiag2 && options.diag2_iterations < 1) {
    throw ConfigError("diag2 iterations must be at least 1");
  }
  if (!(options.initial_prior.tension > 0.0) || !(options.initial_prior.null_prob >= 0.0) ||
      !(options.initial_prior.null_prob < 1.0)) {
    throw ConfigError("diagonal prior needs tension > 0 and null probability in [0, 1)");
  }
  if (!(options.tension_min > 0.0) || !(options.tension_max > options.tension_min)) {
    throw ConfigError("invalid tension search range");
  }

  AlignerModel result;
  EmState st = encode_corpus(corpus, result.skipped_pairs);

  for (int it = 0; it < options.ibm1_iterations; ++it) {
    const Counts c = e_step(st, std::nullopt, options.jobs);
    result.log_likelihood.push_back(c.log_likelihood);
    m_step(st, c);
  }
  if (options.model == AlignModel::kDiag2) {
    DiagonalPrior prior = options.initial_prior;
    for (int it = 0; it < options.diag2_iterations; ++it) {
      const Counts c = e_step(st, prior, options.jobs);
      result.log_likelihood.push_back(c.log_likelihood);
      m_step(st, c);
      if (options.optimize_tension) prior.tension = optimize_tension(c, prior.tension, options);
    }
    result.prior = prior;
  }

  for (std::size_t e = 0; e < st.t.size(); ++e) {
    result.table.set(st.src_words[st.entry_src[e]], st.tgt_words[st.entry_tgt[e]], std::clamp(st.t[e], 0.0, 1.0));
  }
  return result;
}

AlignerModel em_train(const ParallelCorpus& corpus, int iterations, AlignModel model) {
  EmOptions opt;
  opt.model = model;
  opt.ibm1_iterations = iterations;
  opt.diag2_iterations = iterations;
  return em_train(corpus, opt);
}

Alignment Alignment::identity(std::size_t n) {
  Alignment a;
  a.links.resize(n);
  for (std::size_t i = 0; i < n; ++i) a.links[i] = i;
  return a;
}

Alignment viterbi_align(const TranslationTable& table, const std::optional<DiagonalPrior>& prior,
                        const Sentence& source, const Sentence& target) {
  const std::size_t n = source.tokens.size();
  const std::size_t m = target.tokens.size();
  Alignment a;
  a.links.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    const std::string& f = target.tokens[j];
    double best = 0.0;
    std::optional<std::size_t> link;
    const double part = prior && n > 0 ? prior->partition(j, n, m) : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = table.prob(source.tokens[i], f);
      if (prior) {
        const double d = std::abs(static_cast<double>(i + 1) / static_cast<double>(n) -
                                  static_cast<double>(j + 1) / static_cast<double>(m));
        s *= (1.0 - prior->null_prob) * std::exp(-prior->tension * d) / part;
      }
      if (s > best) {
        best = s;
        link = i;
      }
    }
    double null_score = table.prob(TranslationTable::kNull, f);
    if (prior) null_score *= prior->null_prob;
    if (null_score > best) link.reset();
    a.links[j] = link;
  }
  return a;
}

Alignment viterbi_align(const AlignerModel& model, const Sentence& source, const Sentence& target) {
  return viterbi_align(model.table, model.prior, source, target);
}

Alignment attention_align(const Eigen::MatrixXd& attention, const std::vector<std::size_t>& excluded) {
  Alignment a;
  a.links.resize(static_cast<std::size_t>(attention.rows()));
  std::vector<bool> skip(static_cast<std::size_t>(attention.cols()), false);
  for (std::size_t c : excluded) {
    if (c < skip.size()) skip[c] = true;
  }
  if (attention.rows() > 0 && std::find(skip.begin(), skip.end(), false) == skip.end()) {
    throw DataError("attention matrix has no source columns left after exclusions");
  }
  for (Eigen::Index r = 0; r < attention.rows(); ++r) {
    const double sum = attention.row(r).sum();
    if (!(std::abs(sum - 1.0) <= 1e-3)) {
      throw DataError("attention row " + std::to_string(r) + " sums to " + std::to_string(sum));
    }
    std::optional<std::size_t> best;
    for (Eigen::Index c = 0; c < attention.cols(); ++c) {
      if (skip[static_cast<std::size_t>(c)]) continue;
      if (!best || attention(r, c) > attention(r, static_cast<Eigen::Index>(*best))) best = static_cast<std::size_t>(c);
    }
    a.links[static_cast<std::size_t>(r)] = best;
  }
  return a;
}

std::string to_pharaoh(const Alignment& alignment) {
  std::string out;
  for (std::size_t j = 0; j < alignment.links.size(); ++j) {
    if (!alignment.links[j]) continue;
    if (!out.empty()) out.push_back(' ');
    out += std::to_string(*alignment.links[j]);
    out.push_back('-');
    out += std::to_string(j);
  }
  return out;
}

Alignment parse_pharaoh(std::string_view line, std::size_t target_len) {
  Alignment a;
  a.links.resize(target_len);
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r') ++end;
    const std::string_view item = line.substr(pos, end - pos);
    const auto dash = item.find('-');
    std::size_t s = 0, t = 0;
    const bool ok = dash != std::string_view::npos &&
                    std::from_chars(item.data(), item.data() + dash, s).ptr == item.data() + dash && dash > 0 &&
                    std::from_chars(item.data() + dash + 1, item.data() + item.size(), t).ptr ==
                        item.data() + item.size() &&
                    dash + 1 < item.size();
    if (!ok) throw DataError("malformed alignment link '" + std::string(item) + "'");
    if (t >= target_len) {
      throw DataError("alignment target index " + std::to_string(t) + " out of range for length " +
                      std::to_string(target_len));
    }
    if (!a.links[t] || s < *a.links[t]) a.links[t] = s;
    pos = end;
  }
  return a;
}

}  // namespace ugclab
