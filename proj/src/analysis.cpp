#include "ugclab/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "ugclab/errors.hpp"
#include "ugclab/hash.hpp"

namespace ugclab {

Extremes select_extremes(const std::vector<TranslationRecord>& records, std::size_t k) {
  if (k > records.size()) {
    throw ConfigError("cannot select " + std::to_string(k) + " extremes from " + std::to_string(records.size()) +
                      " records");
  }
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = records[a];
    const auto& rb = records[b];
    if (ra.edit_distance != rb.edit_distance) return ra.edit_distance < rb.edit_distance;
    return ra.id < rb.id;
  });
  Extremes out;
  for (std::size_t i = 0; i < k; ++i) out.best.push_back(records[order[i]]);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = records[a];
    const auto& rb = records[b];
    if (ra.edit_distance != rb.edit_distance) return ra.edit_distance > rb.edit_distance;
    return ra.id < rb.id;
  });
  for (std::size_t i = 0; i < k; ++i) out.worst.push_back(records[order[i]]);
  return out;
}

SpecificityHistogram specificity_histogram(const AnnotationSet& annotations,
                                           const std::vector<std::size_t>& selection) {
  SpecificityHistogram h{};
  const std::set<std::size_t> chosen(selection.begin(), selection.end());
  std::set<std::size_t> with_spans;
  for (const auto& s : annotations.spans) with_spans.insert(s.sentence_id);
  for (std::size_t id : chosen) {
    if (!annotations.done.contains(id) && !with_spans.contains(id)) {
      throw DataError("sentence " + std::to_string(id) + " is selected but not annotated");
    }
  }
  for (const auto& s : annotations.spans) {
    if (chosen.contains(s.sentence_id)) ++h[static_cast<std::size_t>(category(s.category).code - 1)];
  }
  return h;
}

std::vector<OovBucket> bucket_by_char_oov(const std::vector<TranslationRecord>& records, const CharVocab& vocab,
                                          Unit unit, BleuSmoothing smoothing) {
  if (records.empty()) throw DataError("cannot bucket an empty record list");
  std::array<std::vector<Sentence>, 3> hyps, refs;
  for (const auto& r : records) {
    const std::size_t b = std::min<std::size_t>(char_oov_count(r.source, vocab), 2);
    hyps[b].push_back(r.hypothesis);
    refs[b].push_back(r.reference);
  }
  std::vector<OovBucket> out;
  for (std::size_t b = 0; b < 3; ++b) {
    if (hyps[b].empty()) continue;
    OovBucket bucket;
    bucket.min_oov = b;
    bucket.label = b == 2 ? ">=2" : std::to_string(b);
    bucket.size = hyps[b].size();
    bucket.bleu = unit_bleu(hyps[b], refs[b], unit, smoothing);
    out.push_back(std::move(bucket));
  }
  return out;
}

std::vector<TranslationRecord> decode_records(const CopyModel& model, const ParallelCorpus& corpus,
                                              bool keep_attention) {
  corpus.require_side(Side::kTarget);
  const auto results = model.translate_all(corpus, Side::kSource);
  std::vector<TranslationRecord> out;
  out.reserve(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& p = corpus.pairs[i];
    auto r = TranslationRecord::make(i, p.source, *p.target, char_sentence(results[i].output_text), Unit::kCharacter);
    if (keep_attention) r.attention = results[i].attention;
    out.push_back(std::move(r));
  }
  return out;
}

SweepRow score_records(std::size_t vocab_size, const std::vector<TranslationRecord>& records,
                       const AlignerChoice& choice) {
  const auto ba = evaluate_before_after(records, choice, ReplacementPolicy::characters());
  std::vector<TokenSeq> hyp, ref;
  hyp.reserve(records.size());
  ref.reserve(records.size());
  for (const auto& r : records) {
    hyp.push_back(char_units(r.hypothesis.chars));
    ref.push_back(char_units(r.reference.chars));
  }
  SweepRow row;
  row.vocab_size = vocab_size;
  row.bleu_raw = ba.before.score;
  row.bleu_after = ba.after.score;
  row.unk_pred_pct = ba.unk_pct;
  row.length_ratio = length_ratio(hyp, ref);
  return row;
}

namespace {

std::string data_hash(const CopyCorpora& data) {
  Fnv1a64 h;
  for (const auto* c : {&data.train, &data.dev}) {
    for (const auto& p : c->pairs) {
      h.update(p.source.raw);
      h.update("\t");
      if (p.target) h.update(p.target->raw);
      h.update("\n");
    }
    h.update("\x1e");
  }
  return h.hex();
}

std::string format_row(const SweepRow& r, char sep) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu%c%.6f%c%.6f%c%.6f%c%.6f\n", r.vocab_size, sep, r.bleu_raw, sep, r.bleu_after,
                sep, r.unk_pred_pct, sep, r.length_ratio);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

std::string sweep_tsv(const std::vector<SweepRow>& rows) {
  std::string out = "N\tbleu_raw\tbleu_unkrep\tunk_pct\tlen_ratio\n";
  for (const auto& r : rows) out += format_row(r, '\t');
  return out;
}

std::string sweep_dat(const std::vector<SweepRow>& rows) {
  std::string out = "# N bleu_raw bleu_unkrep unk_pct len_ratio\n";
  for (const auto& r : rows) out += format_row(r, ' ');
  return out;
}

void write_sweep(const SweepResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "sweep_in.tsv", sweep_tsv(result.in_rows));
  write_text(dir / "sweep_out.tsv", sweep_tsv(result.out_rows));
  write_text(dir / "sweep_in.dat", sweep_dat(result.in_rows));
  write_text(dir / "sweep_out.dat", sweep_dat(result.out_rows));
}

std::filesystem::path sweep_checkpoint_path(const SweepOptions& options, const CopyCorpora& data, std::size_t n,
                                            const ModelConfig& mcfg, const TrainConfig& tcfg) {
  Fnv1a64 h;
  h.update_u64(n);
  h.update(nlohmann::json(mcfg).dump());
  h.update(nlohmann::json(tcfg).dump());
  h.update(data_hash(data));
  return options.cache_dir / ("copy-N" + std::to_string(n) + "-" + h.hex() + ".ckpt");
}

SweepResult vocab_sweep(const CopyCorpora& data, const std::vector<std::size_t>& sizes, const ModelConfig& mcfg,
                        const TrainConfig& tcfg, const SweepOptions& options) {
  if (sizes.empty()) throw ConfigError("vocabulary sweep needs at least one size");
  data.train.require_side(Side::kSource);
  std::set<char32_t> distinct;
  for (const auto& p : data.train.pairs) distinct.insert(p.source.chars.begin(), p.source.chars.end());
  for (std::size_t n : sizes) {
    if (n == 0 || n > distinct.size()) {
      throw ConfigError("vocabulary size " + std::to_string(n) + " outside 1.." + std::to_string(distinct.size()));
    }
  }
  if (options.alignment != AlignSource::kIdentity && options.alignment != AlignSource::kAttention) {
    throw ConfigError("sweep alignment must be identity or attention");
  }
  std::filesystem::create_directories(options.cache_dir);

  const std::size_t count = sizes.size();
  std::vector<std::optional<SweepRow>> in_rows(count), out_rows(count);
  SweepResult result;
  result.checkpoints.resize(count);
  std::mutex mutex;
  std::exception_ptr failure;
  auto log = [&](const std::string& msg) {
    if (options.log) {
      std::lock_guard lock(mutex);
      options.log(msg);
    }
  };

  auto flush = [&] {
    // Caller holds `mutex`. Writes the finished prefix in size order.
    if (!options.out_dir) return;
    SweepResult partial;
    for (std::size_t i = 0; i < count && in_rows[i]; ++i) {
      partial.in_rows.push_back(*in_rows[i]);
      partial.out_rows.push_back(*out_rows[i]);
    }
    write_sweep(partial, *options.out_dir);
  };

  auto run_one = [&](std::size_t i) {
    const std::size_t n = sizes[i];
    const auto ckpt = sweep_checkpoint_path(options, data, n, mcfg, tcfg);
    CopyModel model;
    if (std::filesystem::exists(ckpt)) {
      log("N=" + std::to_string(n) + ": cached " + ckpt.string());
      model = CopyModel::load(ckpt);
    } else {
      const auto vocab = CharVocab::build(data.train, n, Side::kSource);
      auto trained = train_copy_model(data.train, data.dev, vocab, mcfg, tcfg, [&](const EpochLog& e) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "N=%zu epoch %d train %.4f dev %.4f", n, e.epoch, e.train_loss, e.dev_loss);
        log(buf);
      });
      auto tmp = ckpt;
      tmp += ".tmp";
      trained.model.save(tmp);
      std::filesystem::rename(tmp, ckpt);
      auto log_path = ckpt;
      log_path.replace_extension(".log.tsv");
      write_training_log(trained.log, log_path);
      model = std::move(trained.model);
    }
    const bool attn = options.alignment == AlignSource::kAttention;
    const AlignerChoice choice{options.alignment, nullptr, nullptr};
    const auto in_recs = decode_records(model, data.in_test, attn);
    const auto out_recs = decode_records(model, data.out_test, attn);
    const auto in_row = score_records(n, in_recs, choice);
    const auto out_row = score_records(n, out_recs, choice);
    std::lock_guard lock(mutex);
    in_rows[i] = in_row;
    out_rows[i] = out_row;
    result.checkpoints[i] = ckpt;
    flush();
  };

  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(options.jobs, 1)), 1, count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      {
        std::lock_guard lock(mutex);
        if (failure) return;
      }
      try {
        run_one(i);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t i = 0; i < count; ++i) {
    result.in_rows.push_back(*in_rows[i]);
    result.out_rows.push_back(*out_rows[i]);
  }
  return result;
}

}  // namespace ugclab
