// Acceptance suite: one PASS/FAIL line per criterion, exit 1 when any fails.
// The copy-task sweep trains five full-size models; its corpora and
// checkpoints are cached in --workdir so reruns only rescore.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "test_util.hpp"
#include "ugclab/aligner.hpp"
#include "ugclab/analysis.hpp"
#include "ugclab/metrics.hpp"
#include "ugclab/neuralcopy.hpp"
#include "ugclab/postedit.hpp"
#include "ugclab/rng.hpp"
#include "ugclab/synthgen.hpp"

using namespace ugclab;
using namespace oracle;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Copy-task sweep, shared by the trend and bucket criteria.

constexpr std::uint64_t kCorpusSeed = 1;
constexpr std::uint64_t kModelSeed = 1;
const std::vector<std::size_t> kSizes{164, 125, 100, 80, 60};

struct CopyRun {
  CopyCorpora data;
  SweepResult sweep;
};

CopyCorpora cached_corpora(const CopyTaskSpec& spec, const fs::path& dir) {
  if (fs::exists(dir / "copytask.json")) {
    CopyTaskSpec on_disk;
    auto data = read_copy_corpora(dir, &on_disk);
    if (on_disk == spec) return data;
  }
  auto data = generate_copy_corpus(spec);
  write_copy_corpora(data, spec, dir);
  return data;
}

std::string rows_detail(const std::vector<SweepRow>& rows) {
  std::string s;
  for (const auto& r : rows) {
    if (!s.empty()) s += "; ";
    s += "N=" + std::to_string(r.vocab_size) + " raw " + num(r.bleu_raw) + " unkrep " + num(r.bleu_after) + " unk% " +
         num(r.unk_pred_pct);
  }
  return s;
}

const CopyRun& copy_run(const fs::path& workdir, int jobs) {
  static std::optional<CopyRun> run;
  if (run) return *run;
  CopyTaskSpec spec;
  spec.seed = kCorpusSeed;
  CopyRun r;
  r.data = cached_corpora(spec, workdir / "copy-data");
  ModelConfig mcfg;
  mcfg.seed = kModelSeed;
  SweepOptions opt;
  opt.cache_dir = workdir / "sweep-cache";
  opt.out_dir = workdir / "sweep";
  opt.jobs = jobs;
  opt.log = [](const std::string& m) { std::cerr << "  [sweep] " << m << std::endl; };
  r.sweep = vocab_sweep(r.data, kSizes, mcfg, TrainConfig{}, opt);
  std::cout << "     sweep in-test:  " << rows_detail(r.sweep.in_rows) << "\n     sweep out-test: "
            << rows_detail(r.sweep.out_rows) << std::endl;
  run = std::move(r);
  return *run;
}

// ---------------------------------------------------------------------------
// Criteria

Outcome trend_unk_monotone(const CopyRun& r) {
  const auto& in = r.sweep.in_rows;
  bool ok = in.front().unk_pred_pct == 0.0;
  for (std::size_t i = 1; i < in.size(); ++i) ok = ok && in[i].unk_pred_pct >= in[i - 1].unk_pred_pct;
  std::string d = "in-test unk%:";
  for (const auto& row : in) d += " " + num(row.unk_pred_pct, 3);
  return {ok, d};
}

Outcome trend_n60(const CopyRun& r) {
  const auto& row = r.sweep.in_rows.back();
  return {row.bleu_raw < 15.0 && row.bleu_after > 90.0,
          "in-test N=60 raw " + num(row.bleu_raw) + " (< 15), unkrep " + num(row.bleu_after) + " (> 90)"};
}

Outcome trend_unkrep_beats_full(const CopyRun& r) {
  const auto& out = r.sweep.out_rows;
  const double base = out.front().bleu_raw;
  bool ok = true;
  std::string d = "out-test raw@164 " + num(base) + ", unkrep:";
  for (std::size_t i = 1; i < out.size(); ++i) {
    ok = ok && out[i].bleu_after >= base + 10.0;
    d += " " + num(out[i].bleu_after);
  }
  return {ok, d};
}

Outcome trend_raw_125_vs_164(const CopyRun& r) {
  const auto& out = r.sweep.out_rows;
  return {out[1].bleu_raw >= out[0].bleu_raw,
          "out-test raw N=125 " + num(out[1].bleu_raw) + " vs N=164 " + num(out[0].bleu_raw)};
}

Outcome char_oov_buckets(const CopyRun& r) {
  const auto model = CopyModel::load(r.sweep.checkpoints.at(1));
  const auto recs = decode_records(model, r.data.out_test);
  const auto buckets = bucket_by_char_oov(recs, model.vocab());
  const OovBucket* zero = nullptr;
  const OovBucket* many = nullptr;
  std::string d;
  for (const auto& b : buckets) {
    if (b.label == "0") zero = &b;
    if (b.min_oov == 2) many = &b;
    d += "{" + b.label + "} n=" + std::to_string(b.size) + " bleu " + num(b.bleu.score) + "; ";
  }
  if (!zero || !many) return {false, d + "missing bucket"};
  return {zero->bleu.score >= many->bleu.score + 5.0, d + "gap " + num(zero->bleu.score - many->bleu.score)};
}

Outcome bleu_oracle() {
  const std::vector<TokenSeq> ident{testutil::words("a b c d e"), testutil::words("x y z w v u"),
                                    testutil::words("one more line here")};
  const double id_score = bleu(ident, ident).score;
  const std::vector<TokenSeq> hyp{testutil::words("the cat sat on mat")};
  const std::vector<TokenSeq> ref{testutil::words("the cat sat on the mat")};
  const double got = bleu(hyp, ref, BleuSmoothing::kNone).score;
  const double want = oracle_bleu(hyp, ref, false);
  const double err = std::abs(got - want);
  return {id_score == 100.0 && err < 1e-9,
          "identity " + num(id_score, 6) + ", example " + num(got, 6) + " vs oracle " + num(want, 6) + " (|d| " +
              sci(err) + ")"};
}

Outcome metric_properties() {
  Rng rng(2024);
  double worst_self = 0.0, min_kl = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 100; ++i) {
    const auto p = random_corpus(rng, 1 + rng.uniform(10), 5);
    const auto q = random_corpus(rng, 1 + rng.uniform(10), 5);
    worst_self = std::max(worst_self, std::abs(kl_divergence_ngram(p, p)));
    min_kl = std::min(min_kl, kl_divergence_ngram(p, q));
  }
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_seq(rng, 8, 3), b = random_seq(rng, 8, 3), c = random_seq(rng, 8, 3);
    const auto ab = edit_distance(a, b).distance, ba = edit_distance(b, a).distance;
    const auto bc = edit_distance(b, c).distance, ac = edit_distance(a, c).distance;
    if (edit_distance(a, a).distance != 0 || ab != ba || ac > ab + bc || (ab == 0) != (a == b)) ++violations;
  }
  auto coin = [&](std::size_t sentences) {
    std::vector<std::string> lines;
    for (std::size_t s = 0; s < sentences; ++s) {
      std::string line;
      for (int i = 0; i < 500; ++i) line += rng.uniform(2) ? "h " : "t ";
      lines.push_back(line);
    }
    return corpus_from_lines(lines, std::nullopt);
  };
  const auto train = coin(20), test = coin(20);
  const double ppl = perplexity(NgramLM::train(train, {0.98, 0.01, 0.01}), test);
  const bool ok = worst_self <= 1e-12 && min_kl >= 0.0 && violations == 0 && std::abs(ppl - 2.0) <= 0.05;
  return {ok, "max KL(P|P) " + sci(worst_self) + ", min KL " + sci(min_kl) + ", edit-distance violations " +
                  std::to_string(violations) + "/1000, coin ppl " + num(ppl, 4)};
}

Outcome gradient_check_3_seeds() {
  double worst = 0.0;
  std::size_t checked = 0;
  std::string where;
  for (std::uint64_t seed : {101u, 202u, 303u}) {
    Rng rng(seed);
    const int V = 10;
    ModelConfig cfg;
    cfg.embed_dim = 5;
    cfg.hidden_dim = 7;
    cfg.init_range = 0.5;
    cfg.seed = seed;
    const auto params = init_params<double>(V, cfg);
    std::vector<std::vector<int>> srcs, tgts;
    auto ids = [&](std::size_t len) {
      std::vector<int> v;
      for (std::size_t i = 0; i < len; ++i) {
        v.push_back(CharVocab::kNumSpecials + static_cast<int>(rng.uniform(V - CharVocab::kNumSpecials)));
      }
      v.push_back(CharVocab::kEos);
      return v;
    };
    for (int i = 0; i < 3; ++i) {
      srcs.push_back(ids(2 + rng.uniform(5)));
      tgts.push_back(ids(1 + rng.uniform(5)));
    }
    const auto res = gradient_check(params, Batch::make(srcs, tgts), seed, params.parameter_count());
    checked += res.checked;
    if (res.max_relative_error >= worst) {
      worst = res.max_relative_error;
      where = res.worst_parameter;
    }
  }
  return {worst < 1e-4, "max relative error " + sci(worst) + " at " + where + " over " + std::to_string(checked) +
                            " parameters"};
}

Outcome aligner_oracle() {
  const auto c = toy();
  const auto m = em_train(c, 20, AlignModel::kIbm1);
  bool gold = true;
  for (const auto& p : c.pairs) gold = gold && viterbi_align(m, p.source, *p.target) == links({0, 1});
  bool monotone = true;
  for (std::size_t i = 1; i < m.log_likelihood.size(); ++i) {
    monotone = monotone && m.log_likelihood[i] >= m.log_likelihood[i - 1] - 1e-9;
  }
  OracleEm o;
  o.run(c, 3, std::nullopt);
  const auto m3 = em_train(c, 3, AlignModel::kIbm1);
  double err = std::abs(m3.log_likelihood.back() - o.ll.back());
  for (const auto& [k, v] : o.t) err = std::max(err, std::abs(m3.table.prob(k.first, k.second) - v));
  return {gold && monotone && err < 1e-9, std::string("gold links ") + (gold ? "yes" : "no") + ", monotone " +
                                              (monotone ? "yes" : "no") + ", oracle |d| at iter 3 " + sci(err)};
}

Outcome unk_replacement() {
  const auto f = unk_fixture();
  const AlignerChoice choice{AlignSource::kProvided, nullptr, &f.alignments};
  const auto ba = evaluate_before_after(f.records, choice, ReplacementPolicy::tokens(), BleuSmoothing::kNone);
  const double bp = std::exp(1.0 - 20.0 / 19.0);
  const double want = geometric_bleu(bp, {18.0 / 19.0, 12.0 / 14.0, 7.0 / 9.0, 3.0 / 4.0});
  const double err = std::abs(ba.after.score - want);

  std::vector<TranslationRecord> clean;
  clean.push_back(TranslationRecord::make(0, toks("a b c d"), toks("a b c d e"), toks("a b x d")));
  clean.push_back(TranslationRecord::make(1, toks("q"), toks("q r s"), toks("q r s t u")));
  const auto same = evaluate_before_after(clean, {}, ReplacementPolicy::tokens());
  const bool bit_exact = same.before.score == same.after.score && same.before.precisions == same.after.precisions &&
                         same.before.brevity_penalty == same.after.brevity_penalty;
  return {err <= 1e-12 * want && bit_exact, "bleu_after " + num(ba.after.score, 6) + " vs hand " + num(want, 6) +
                                                ", no-UNK before==after " + (bit_exact ? "yes" : "no")};
}

Outcome determinism(const fs::path& workdir) {
  const fs::path root = workdir / "determinism";
  fs::remove_all(root);
  CopyTaskSpec spec;
  spec.seed = 77;
  spec.n_train = 600;
  spec.n_dev = 60;
  spec.n_test = 60;
  spec.len_min = 3;
  spec.len_max = 8;
  spec.train_alphabet_size = 12;
  spec.out_alphabet_size = 30;
  ModelConfig mcfg;
  mcfg.embed_dim = 12;
  mcfg.hidden_dim = 16;
  mcfg.seed = 5;
  TrainConfig tcfg;
  tcfg.max_epochs = 2;
  for (const char* run : {"a", "b"}) {
    const auto data = generate_copy_corpus(spec);
    write_copy_corpora(data, spec, root / run / "data");
    SweepOptions opt;
    opt.cache_dir = root / run / "cache";
    opt.out_dir = root / run / "sweep";
    vocab_sweep(read_copy_corpora(root / run / "data"), {12, 8}, mcfg, tcfg, opt);
  }
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root / "a");
    const auto other = root / "b" / rel;
    ++compared;
    if (!fs::exists(other) || testutil::read_file(e.path()) != testutil::read_file(other)) {
      differing.push_back(rel.string());
    }
  }
  std::string d = std::to_string(compared) + " files compared (corpora, checkpoints, sweep tables)";
  for (const auto& f : differing) d += ", differs: " + f;
  return {differing.empty() && compared >= 14, d};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string workdir = "acceptance-work";
  std::vector<std::string> only;
  int jobs = 1;
  app.add_option("--workdir", workdir, "Cache for the copy-task corpora and checkpoints")->capture_default_str();
  app.add_option("--only", only, "Run only these criteria (by name)");
  app.add_option("--jobs", jobs, "Models trained concurrently in the sweep")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  const fs::path wd(workdir);
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"bleu-oracle", bleu_oracle},
      {"metric-properties", metric_properties},
      {"gradient-check", gradient_check_3_seeds},
      {"aligner-oracle", aligner_oracle},
      {"unk-replacement", unk_replacement},
      {"determinism", [&] { return determinism(wd); }},
      {"copy-trend-a-unk-monotone", [&] { return trend_unk_monotone(copy_run(wd, jobs)); }},
      {"copy-trend-b-n60-unkrep", [&] { return trend_n60(copy_run(wd, jobs)); }},
      {"copy-trend-c-unkrep-over-full", [&] { return trend_unkrep_beats_full(copy_run(wd, jobs)); }},
      {"copy-trend-d-raw-125-vs-164", [&] { return trend_raw_125_vs_164(copy_run(wd, jobs)); }},
      {"char-oov-buckets", [&] { return char_oov_buckets(copy_run(wd, jobs)); }},
  };

  int failed = 0, ran = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << "  " << o.detail << "  [" << num(secs, 1) << "s]"
              << std::endl;
  }
  std::cout << ran - failed << "/" << ran << " criteria passed" << std::endl;
  return failed == 0 && ran > 0 ? 0 : 1;
}
