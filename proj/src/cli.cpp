#include "ugclab/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ugclab/aligner.hpp"
#include "ugclab/analysis.hpp"
#include "ugclab/annoserver.hpp"
#include "ugclab/annostore.hpp"
#include "ugclab/charvocab.hpp"
#include "ugclab/errors.hpp"
#include "ugclab/metrics.hpp"
#include "ugclab/neuralcopy.hpp"
#include "ugclab/postedit.hpp"
#include "ugclab/rng.hpp"
#include "ugclab/synthgen.hpp"
#include "ugclab/utf8.hpp"

namespace ugclab {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kExitCodesHelp =
    "Exit codes: 0 success, 1 unexpected error, 2 usage/config error, 3 I/O error,\n"
    "            4 data/schema error, 5 training failure.";

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out.push_back('\n');
  }
  return out;
}

json bleu_json(const BleuScore& b) {
  return {{"bleu", b.score},
          {"precisions", b.precisions},
          {"brevity_penalty", b.brevity_penalty},
          {"hyp_len", b.hyp_len},
          {"ref_len", b.ref_len}};
}

std::string bleu_line(const BleuScore& b) {
  std::ostringstream s;
  s << "BLEU = " << fmt(b.score, 2) << ' ' << fmt(100 * b.precisions[0], 1) << '/' << fmt(100 * b.precisions[1], 1)
    << '/' << fmt(100 * b.precisions[2], 1) << '/' << fmt(100 * b.precisions[3], 1)
    << " (BP = " << fmt(b.brevity_penalty, 3) << " hyp_len = " << b.hyp_len << " ref_len = " << b.ref_len << ")";
  return s.str();
}

/// Shared flags and the resolved-config dump.
struct Common {
  std::string out;
  std::string tokenizer = "13a";
  int jobs = 1;

  LoadOptions load(const std::string& name = {}) const {
    LoadOptions o;
    o.scheme = parse_tokenizer_scheme(tokenizer);
    o.name = name;
    return o;
  }
};

void add_out(CLI::App* sub, Common& c, bool required) {
  auto* opt = sub->add_option("--out", c.out, "Output directory (resolved config is written there as config.json)");
  if (required) opt->required();
}

void add_tokenizer(CLI::App* sub, Common& c) {
  sub->add_option("--tokenizer", c.tokenizer, "Tokenizer: 13a (Moses-style) or space")->capture_default_str();
}

void add_jobs(CLI::App* sub, Common& c) {
  sub->add_option("--jobs", c.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

json option_value(const CLI::Option* opt) {
  auto to_json_scalar = [](const std::string& s) -> json {
    if (s.empty()) return s;
    try {
      auto v = json::parse(s);
      if (v.is_number() || v.is_boolean()) return v;
    } catch (const json::exception&) {
    }
    return s;
  };
  if (opt->get_type_size() == 0) return opt->count() > 0;
  if (opt->count() == 0) return to_json_scalar(opt->get_default_str());
  const auto r = opt->reduced_results();
  if (r.size() == 1 && opt->get_expected_max() <= 1) return to_json_scalar(r.front());
  json arr = json::array();
  for (const auto& s : r) arr.push_back(to_json_scalar(s));
  return arr;
}

void dump_config(const CLI::App* sub, const std::string& out) {
  if (out.empty()) return;
  json cfg{{"subcommand", sub->get_name()}, {"rng", std::string(Rng::kName)}};
  json opts = json::object();
  for (const auto* opt : sub->get_options()) {
    const auto name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    opts[name] = option_value(opt);
  }
  cfg["options"] = opts;
  write_text(fs::path(out) / "config.json", cfg.dump(2) + "\n");
}

/// Turns a JSON config object into flags placed ahead of the user's own,
/// so explicit flags win (last value taken).
std::vector<std::string> config_args(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (cfg.contains("options") && cfg["options"].is_object()) cfg = cfg["options"];  // a dumped config.json
  if (!cfg.is_object()) throw ConfigError("config '" + path.string() + "' must be a JSON object");
  std::vector<std::string> args;
  for (const auto& [key, value] : cfg.items()) {
    if (key == "config" || key == "help") continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back("--" + key);
      continue;
    }
    if (value.is_null()) continue;
    if (value.is_string() && value.get<std::string>().empty()) continue;
    std::string text;
    if (value.is_array()) {
      for (const auto& v : value) {
        if (!text.empty()) text.push_back(',');
        text += v.is_string() ? v.get<std::string>() : v.dump();
      }
    } else {
      text = value.is_string() ? value.get<std::string>() : value.dump();
    }
    args.push_back("--" + key);
    args.push_back(text);
  }
  return args;
}

void add_model_flags(CLI::App* sub, ModelConfig& m, TrainConfig& t) {
  sub->add_option("--embed-dim", m.embed_dim, "Character embedding size")->capture_default_str();
  sub->add_option("--hidden-dim", m.hidden_dim, "GRU state size")->capture_default_str();
  sub->add_option("--init-range", m.init_range, "Uniform init half-width")->capture_default_str();
  sub->add_option("--max-decode-factor", m.max_decode_factor, "Output cap, multiple of source length")
      ->capture_default_str();
  sub->add_option("--batch-size", t.batch_size, "Sentences per batch")->capture_default_str();
  sub->add_option("--lr", t.learning_rate, "Adam learning rate")->capture_default_str();
  sub->add_option("--epochs", t.max_epochs, "Maximum epochs (best dev epoch kept)")->capture_default_str();
  sub->add_option("--patience", t.patience, "Epochs without dev improvement before stopping")
      ->capture_default_str();
  sub->add_option("--grad-clip", t.grad_clip, "Elementwise gradient clip bound")->capture_default_str();
}

std::vector<Sentence> sentences_of(const ParallelCorpus& c) {
  std::vector<Sentence> out;
  out.reserve(c.size());
  for (const auto& p : c.pairs) out.push_back(p.source);
  return out;
}

std::vector<Sentence> char_sentences_of(const std::string& path) {
  std::vector<Sentence> out;
  for (auto& line : read_lines(path)) out.push_back(char_sentence(utf8::decode(line)));
  return out;
}

/// hyp/ref pairs as records in the requested unit.
std::vector<TranslationRecord> load_records(const std::string& src, const std::string& ref, const std::string& hyp,
                                            Unit unit, const Common& c) {
  std::vector<Sentence> s, r, h;
  if (unit == Unit::kCharacter) {
    s = char_sentences_of(src);
    r = char_sentences_of(ref);
    h = char_sentences_of(hyp);
  } else {
    s = sentences_of(load_corpus(src, std::nullopt, c.load("src")));
    r = sentences_of(load_corpus(ref, std::nullopt, c.load("ref")));
    h = sentences_of(load_corpus(hyp, std::nullopt, c.load("hyp")));
  }
  if (s.size() != r.size() || s.size() != h.size()) {
    throw DataError("source, reference and hypothesis have " + std::to_string(s.size()) + ", " +
                    std::to_string(r.size()) + " and " + std::to_string(h.size()) + " lines");
  }
  std::vector<TranslationRecord> out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    out.push_back(TranslationRecord::make(i, std::move(s[i]), std::move(r[i]), std::move(h[i]), unit));
  }
  return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, std::size_t line) {
  if (!j.is_array()) throw DataError("attention line " + std::to_string(line) + " is not a matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw DataError("attention line " + std::to_string(line) + " has ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

std::string records_tsv(const std::vector<TranslationRecord>& recs) {
  std::string out = "id\tedit_distance\tsource\treference\thypothesis\n";
  for (const auto& r : recs) {
    out += std::to_string(r.id) + '\t' + fmt(r.edit_distance, 6) + '\t' + r.source.raw + '\t' + r.reference.raw +
           '\t' + r.hypothesis.raw + '\n';
  }
  return out;
}

std::vector<std::size_t> read_ids(const fs::path& path) {
  std::vector<std::size_t> ids;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t v = 0;
    auto r = std::from_chars(line.data(), line.data() + line.size(), v);
    if (r.ec != std::errc{} || r.ptr != line.data() + line.size()) {
      throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + " is not a sentence id");
    }
    ids.push_back(v);
  }
  return ids;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"ugclab: noisy user-generated text and character-level translation toolkit"};
  app.footer(kExitCodesHelp);
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file of option values; explicit flags take precedence");

  Common c;
  std::map<const CLI::App*, std::function<void()>> actions;
  auto sub = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("--config", config_path, "JSON file of option values; explicit flags take precedence");
    return s;
  };

  // ---- stats
  std::string src, tgt, ref, hyp, side = "source";
  bool count_ws = false, prefix = false;
  std::vector<std::string> count_tokens;
  {
    auto* s = sub("stats", "Corpus statistics (sentences, tokens, TTR, vocabulary, character types)");
    s->add_option("--src", src, "Source-side text, one sentence per line")->required();
    s->add_option("--tgt", tgt, "Optional target side");
    s->add_option("--side", side, "source or target")->capture_default_str();
    s->add_flag("--count-whitespace", count_ws, "Count whitespace as a character type");
    s->add_option("--count", count_tokens, "Also count occurrences of this token (repeatable)")->delimiter(',');
    s->add_flag("--prefix", prefix, "--count matches token prefixes (e.g. '#')");
    add_tokenizer(s, c);
    add_out(s, c, false);
    actions[s] = [&] {
      auto corpus = load_corpus(src, tgt.empty() ? std::nullopt : std::optional<fs::path>(tgt), c.load(src));
      const Side sd = parse_side(side);
      const auto st = corpus_stats(corpus, sd, StatsOptions{count_ws});
      std::string out = "side\tn_sentences\tn_tokens\tavg_sent_len\tttr\tvocab_size\tn_char_types\n";
      out += std::string(to_string(sd)) + '\t' + std::to_string(st.n_sentences) + '\t' + std::to_string(st.n_tokens) +
             '\t' + fmt(st.avg_sent_len) + '\t' + fmt(st.ttr) + '\t' + std::to_string(st.vocab_size) + '\t' +
             std::to_string(st.n_char_types) + '\n';
      for (const auto& tok : count_tokens) {
        out += "count\t" + tok + '\t' +
               std::to_string(count_token_occurrences(corpus, tok, sd, prefix ? TokenMatch::kPrefix : TokenMatch::kExact)) +
               '\n';
      }
      std::cout << out;
      if (!c.out.empty()) write_text(fs::path(c.out) / "stats.tsv", out);
    };
  }

  // ---- bleu
  std::string smoothing = "exp", unit = "token";
  {
    auto* s = sub("bleu", "Corpus BLEU-4 of hypotheses against references");
    s->add_option("--hyp", hyp, "Hypotheses, one per line")->required();
    s->add_option("--ref", ref, "References, one per line")->required();
    s->add_option("--smoothing", smoothing, "exp (floor for zero-match orders) or none")->capture_default_str();
    s->add_option("--unit", unit, "token or char")->capture_default_str();
    add_tokenizer(s, c);
    add_out(s, c, false);
    actions[s] = [&] {
      const Unit u = parse_unit(unit);
      const auto recs = load_records(ref, ref, hyp, u, c);
      std::vector<Sentence> h, r;
      for (const auto& rec : recs) {
        h.push_back(rec.hypothesis);
        r.push_back(rec.reference);
      }
      const auto b = unit_bleu(h, r, u, parse_bleu_smoothing(smoothing));
      std::cout << bleu_line(b) << '\n';
      if (!c.out.empty()) write_text(fs::path(c.out) / "bleu.json", bleu_json(b).dump(2) + "\n");
    };
  }

  // ---- editdist
  {
    auto* s = sub("editdist", "Per-sentence Levenshtein distance, normalized by reference length");
    s->add_option("--hyp", hyp, "Hypotheses")->required();
    s->add_option("--ref", ref, "References")->required();
    s->add_option("--unit", unit, "token or char")->capture_default_str();
    add_tokenizer(s, c);
    add_out(s, c, false);
    actions[s] = [&] {
      const auto recs = load_records(ref, ref, hyp, parse_unit(unit), c);
      std::string out = "id\tdistance\tnormalized\n";
      double total = 0.0;
      for (const auto& r : recs) {
        const auto d = parse_unit(unit) == Unit::kToken ? edit_distance(r.hypothesis.tokens, r.reference.tokens)
                                                        : char_edit_distance(r.hypothesis.chars, r.reference.chars);
        out += std::to_string(r.id) + '\t' + std::to_string(d.distance) + '\t' + fmt(d.normalized, 6) + '\n';
        total += d.normalized;
      }
      std::cout << out << "mean_normalized\t" << fmt(recs.empty() ? 0.0 : total / static_cast<double>(recs.size()), 6)
                << '\n';
      if (!c.out.empty()) write_text(fs::path(c.out) / "editdist.tsv", out);
    };
  }

  // ---- kl
  std::string p_path, q_path;
  int order = 3;
  double alpha = 0.5;
  {
    auto* s = sub("kl", "KL divergence between the token n-gram distributions of two corpora");
    s->add_option("--p", p_path, "Corpus P (e.g. the test set)")->required();
    s->add_option("--q", q_path, "Corpus Q (e.g. the training set)")->required();
    s->add_option("--order", order, "n-gram order")->capture_default_str();
    s->add_option("--alpha", alpha, "Add-alpha smoothing constant")->capture_default_str();
    add_tokenizer(s, c);
    add_out(s, c, false);
    actions[s] = [&] {
      const auto p = load_corpus(p_path, std::nullopt, c.load(p_path));
      const auto q = load_corpus(q_path, std::nullopt, c.load(q_path));
      const double kl = kl_divergence_ngram(p, q, order, alpha);
      std::cout << "kl_" << order << "gram\t" << fmt(kl, 6) << '\n';
      if (!c.out.empty()) write_text(fs::path(c.out) / "kl.json", json{{"kl", kl}, {"order", order}}.dump(2) + "\n");
    };
  }

  // ---- ppl
  std::string train_path, test_path;
  std::vector<double> lambdas{0.1, 0.3, 0.6};
  {
    auto* s = sub("ppl", "Perplexity of a test corpus under an interpolated trigram model");
    s->add_option("--train", train_path, "Training text")->required();
    s->add_option("--test", test_path, "Test text")->required();
    s->add_option("--lambdas", lambdas, "Unigram,bigram,trigram weights (sum to 1)")
        ->delimiter(',')
        ->expected(3)
        ->capture_default_str();
    add_tokenizer(s, c);
    add_out(s, c, false);
    actions[s] = [&] {
      const auto lm = NgramLM::train(load_corpus(train_path, std::nullopt, c.load(train_path)),
                                     {lambdas[0], lambdas[1], lambdas[2]});
      const double ppl = perplexity(lm, load_corpus(test_path, std::nullopt, c.load(test_path)));
      std::cout << "perplexity\t" << fmt(ppl, 4) << '\n';
      if (!c.out.empty()) write_text(fs::path(c.out) / "ppl.json", json{{"perplexity", ppl}}.dump(2) + "\n");
    };
  }

  // ---- oov
  {
    auto* s = sub("oov", "Percentage of test tokens unseen in the training corpus");
    s->add_option("--train", train_path, "Training text")->required();
    s->add_option("--test", test_path, "Test text")->required();
    add_tokenizer(s, c);
    add_out(s, c, false);
    actions[s] = [&] {
      const auto vocab = token_vocabulary(load_corpus(train_path, std::nullopt, c.load(train_path)));
      const double rate = oov_rate(load_corpus(test_path, std::nullopt, c.load(test_path)), vocab);
      std::cout << "oov_pct\t" << fmt(rate, 4) << '\n';
      if (!c.out.empty()) write_text(fs::path(c.out) / "oov.json", json{{"oov_pct", rate}}.dump(2) + "\n");
    };
  }

  // ---- vocab
  std::size_t vocab_size = 164;
  bool exclude_ws = false;
  std::vector<std::string> test_paths;
  {
    auto* s = sub("vocab", "Build a character vocabulary of the N most frequent characters");
    s->add_option("--train", train_path, "Training text")->required();
    s->add_option("--size", vocab_size, "N, characters kept")->capture_default_str();
    s->add_flag("--exclude-whitespace", exclude_ws, "Leave whitespace out of the ranking");
    s->add_option("--test", test_paths, "Report the UNK percentage of these files")->delimiter(',');
    add_out(s, c, true);
    actions[s] = [&] {
      const auto corpus = load_corpus(train_path, std::nullopt, c.load(train_path));
      const auto vocab = CharVocab::build(corpus, vocab_size, Side::kSource, !exclude_ws);
      vocab.save(fs::path(c.out) / "vocab.tsv");
      std::cout << "size\t" << vocab.size() << '\n';
      for (const auto& t : test_paths) {
        std::vector<std::u32string> texts;
        for (const auto& line : read_lines(t)) texts.push_back(utf8::decode(line));
        std::cout << "unk_pct\t" << t << '\t' << fmt(vocab.unk_fraction(texts), 4) << '\n';
      }
    };
  }

  // ---- gen-copy
  CopyTaskSpec spec;
  std::optional<std::uint64_t> seed;
  {
    auto* s = sub("gen-copy", "Generate the synthetic copy-task corpora");
    s->add_option("--seed", seed, "Random seed (required)")->required();
    s->add_option("--n-train", spec.n_train, "Training sentences")->capture_default_str();
    s->add_option("--n-dev", spec.n_dev, "Development sentences")->capture_default_str();
    s->add_option("--n-test", spec.n_test, "Sentences per test set")->capture_default_str();
    s->add_option("--len-min", spec.len_min, "Minimum length in characters")->capture_default_str();
    s->add_option("--len-max", spec.len_max, "Maximum length in characters")->capture_default_str();
    s->add_option("--train-alphabet", spec.train_alphabet_size, "Characters in the training alphabet")
        ->capture_default_str();
    s->add_option("--out-alphabet", spec.out_alphabet_size, "Distinct characters the out-test may use")
        ->capture_default_str();
    s->add_option("--novel-rate", spec.novel_char_rate, "Probability an out-test character is novel")
        ->capture_default_str();
    add_out(s, c, true);
    actions[s] = [&] {
      spec.seed = *seed;
      spec.validate();
      write_copy_corpora(generate_copy_corpus(spec), spec, c.out);
      std::cout << "wrote copy-task corpora to " << c.out << '\n';
    };
  }

  // ---- train-copy
  ModelConfig mcfg;
  TrainConfig tcfg;
  std::string data_dir, vocab_path;
  std::string train_src, train_tgt, dev_src, dev_tgt;
  {
    auto* s = sub("train-copy", "Train the character-level encoder-decoder");
    s->add_option("--seed", seed, "Random seed (required)")->required();
    s->add_option("--data", data_dir, "Directory written by gen-copy");
    s->add_option("--train-src", train_src, "Training source (instead of --data)");
    s->add_option("--train-tgt", train_tgt, "Training target");
    s->add_option("--dev-src", dev_src, "Development source");
    s->add_option("--dev-tgt", dev_tgt, "Development target");
    s->add_option("--vocab-size", vocab_size, "N, characters in the vocabulary")->capture_default_str();
    s->add_option("--vocab", vocab_path, "Use this vocabulary file instead of building one");
    add_model_flags(s, mcfg, tcfg);
    add_out(s, c, true);
    actions[s] = [&] {
      ParallelCorpus train, dev;
      if (!data_dir.empty()) {
        auto corpora = read_copy_corpora(data_dir);
        train = std::move(corpora.train);
        dev = std::move(corpora.dev);
      } else {
        if (train_src.empty() || train_tgt.empty() || dev_src.empty() || dev_tgt.empty()) {
          throw ConfigError("give --data or all of --train-src/--train-tgt/--dev-src/--dev-tgt");
        }
        LoadOptions lo = c.load("train");
        lo.scheme = TokenizerScheme::kWhitespace;
        train = load_corpus(train_src, fs::path(train_tgt), lo);
        lo.name = "dev";
        dev = load_corpus(dev_src, fs::path(dev_tgt), lo);
      }
      const auto vocab = vocab_path.empty() ? CharVocab::build(train, vocab_size) : CharVocab::load(vocab_path);
      mcfg.seed = *seed;
      auto result = train_copy_model(train, dev, vocab, mcfg, tcfg, [](const EpochLog& e) {
        std::cerr << "epoch " << e.epoch << " train " << fmt(e.train_loss) << " dev " << fmt(e.dev_loss) << '\n';
      });
      const fs::path out(c.out);
      result.model.save(out / "model.ckpt");
      vocab.save(out / "vocab.tsv");
      write_training_log(result.log, out / "train_log.tsv");
      write_text(out / "train_summary.json", json{{"best_epoch", result.best_epoch},
                                                  {"early_stopped", result.early_stopped},
                                                  {"first_batch_loss", result.first_batch_loss},
                                                  {"epochs_run", result.log.size()}}
                                                 .dump(2) +
                                                 "\n");
      std::cout << "best epoch " << result.best_epoch << ", model written to " << (out / "model.ckpt").string()
                << '\n';
    };
  }

  // ---- decode
  std::string model_path, replace_with = "none";
  bool keep_attention = false;
  {
    auto* s = sub("decode", "Greedy-decode a file with a trained copy model");
    s->add_option("--model", model_path, "Checkpoint written by train-copy")->required();
    s->add_option("--src", src, "Input text, one sentence per line")->required();
    s->add_option("--ref", ref, "References; adds BLEU before/after UNK replacement");
    s->add_flag("--attention", keep_attention, "Write attention matrices to attention.jsonl");
    s->add_option("--unk-replace", replace_with, "none, identity or attention")->capture_default_str();
    add_out(s, c, true);
    actions[s] = [&] {
      const auto model = CopyModel::load(model_path);
      const auto sources = char_sentences_of(src);
      std::vector<Sentence> refs;
      if (!ref.empty()) {
        refs = char_sentences_of(ref);
        if (refs.size() != sources.size()) throw DataError("--src and --ref differ in line count");
      }
      std::vector<TranslationRecord> recs;
      std::vector<std::string> hyp_lines;
      std::string attn_lines;
      for (std::size_t i = 0; i < sources.size(); ++i) {
        auto d = model.translate(sources[i]);
        hyp_lines.push_back(utf8::encode(d.output_text));
        if (keep_attention) attn_lines += matrix_json(d.attention).dump() + '\n';
        auto r = TranslationRecord::make(i, sources[i], refs.empty() ? sources[i] : refs[i],
                                         char_sentence(d.output_text), Unit::kCharacter);
        r.attention = std::move(d.attention);
        recs.push_back(std::move(r));
      }
      const fs::path out(c.out);
      write_text(out / "hyp.txt", join_lines(hyp_lines));
      if (keep_attention) write_text(out / "attention.jsonl", attn_lines);
      if (replace_with != "none") {
        AlignerChoice choice{parse_align_source(replace_with), nullptr, nullptr};
        const auto ba = evaluate_before_after(recs, choice, ReplacementPolicy::characters());
        std::vector<std::string> lines;
        for (const auto& h : ba.replaced_hypotheses) lines.push_back(h.raw);
        write_text(out / "hyp.unkrep.txt", join_lines(lines));
        if (!ref.empty()) {
          const auto row = score_records(model.vocab().size(), recs, choice);
          json j{{"bleu_raw", row.bleu_raw},
                 {"bleu_unkrep", row.bleu_after},
                 {"unk_pct", row.unk_pred_pct},
                 {"len_ratio", row.length_ratio}};
          write_text(out / "scores.json", j.dump(2) + "\n");
          std::cout << "bleu_raw\t" << fmt(row.bleu_raw, 2) << "\nbleu_unkrep\t" << fmt(row.bleu_after, 2)
                    << "\nunk_pct\t" << fmt(row.unk_pred_pct, 2) << '\n';
        }
      } else if (!ref.empty()) {
        std::vector<Sentence> h;
        for (const auto& r : recs) h.push_back(r.hypothesis);
        const auto b = unit_bleu(h, refs, Unit::kCharacter);
        write_text(out / "scores.json", bleu_json(b).dump(2) + "\n");
        std::cout << bleu_line(b) << '\n';
      }
    };
  }

  // ---- align
  std::string test_src, test_tgt, align_model = "diag2";
  EmOptions em;
  bool fixed_tension = false;
  {
    auto* s = sub("align", "Train an IBM1 / diagonal-prior aligner and write Pharaoh alignments");
    s->add_option("--src", src, "Source side of the training bitext")->required();
    s->add_option("--tgt", tgt, "Target side of the training bitext")->required();
    s->add_option("--test-src", test_src, "Test source appended to the training data; only its alignments are written");
    s->add_option("--test-tgt", test_tgt, "Test target (e.g. hypotheses)");
    s->add_option("--model", align_model, "ibm1 or diag2")->capture_default_str();
    s->add_option("--ibm1-iterations", em.ibm1_iterations, "IBM1 EM rounds")->capture_default_str();
    s->add_option("--diag2-iterations", em.diag2_iterations, "Diagonal-prior EM rounds")->capture_default_str();
    s->add_option("--tension", em.initial_prior.tension, "Initial diagonal tension")->capture_default_str();
    s->add_option("--null-prob", em.initial_prior.null_prob, "Probability of a NULL link")->capture_default_str();
    s->add_flag("--fixed-tension", fixed_tension, "Do not optimize the tension");
    add_tokenizer(s, c);
    add_jobs(s, c);
    add_out(s, c, true);
    actions[s] = [&] {
      auto corpus = load_corpus(src, fs::path(tgt), c.load("train"));
      std::size_t first = 0;
      if (!test_src.empty() || !test_tgt.empty()) {
        if (test_src.empty() || test_tgt.empty()) throw ConfigError("--test-src and --test-tgt go together");
        auto test = load_corpus(test_src, fs::path(test_tgt), c.load("test"));
        first = corpus.size();
        corpus.pairs.insert(corpus.pairs.end(), test.pairs.begin(), test.pairs.end());
      }
      em.model = parse_align_model(align_model);
      em.optimize_tension = !fixed_tension;
      em.jobs = c.jobs;
      const auto model = em_train(corpus, em);
      std::string lines;
      for (std::size_t i = first; i < corpus.size(); ++i) {
        lines += to_pharaoh(viterbi_align(model, corpus.pairs[i].source, *corpus.pairs[i].target)) + '\n';
      }
      const fs::path out(c.out);
      write_text(out / "alignment.pharaoh", lines);
      model.table.save_tsv(out / "ttable.tsv");
      json summary{{"log_likelihood", model.log_likelihood}, {"skipped_pairs", model.skipped_pairs}};
      if (model.prior) {
        summary["tension"] = model.prior->tension;
        summary["null_prob"] = model.prior->null_prob;
      }
      write_text(out / "align_summary.json", summary.dump(2) + "\n");
      std::cout << "aligned " << corpus.size() - first << " sentence pairs\n";
    };
  }

  // ---- unk-replace
  std::string align_path, attn_path, on_null = "delete", marker;
  {
    auto* s = sub("unk-replace", "Replace UNK units of hypotheses with their aligned source units");
    s->add_option("--src", src, "Source sentences")->required();
    s->add_option("--hyp", hyp, "Hypotheses containing UNK markers")->required();
    auto* a = s->add_option("--align", align_path, "Pharaoh alignments (source-hypothesis), one line per sentence");
    auto* b = s->add_option("--attn", attn_path, "Attention matrices, one JSON array per line (last column EOS)");
    a->excludes(b);
    s->add_option("--ref", ref, "References; adds BLEU before and after");
    s->add_option("--unit", unit, "token or char")->capture_default_str();
    s->add_option("--marker", marker, "UNK marker (default <unk> for tokens, U+FFFD for characters)");
    s->add_option("--on-null", on_null, "delete or keep, for UNKs aligned to NULL")->capture_default_str();
    add_tokenizer(s, c);
    add_out(s, c, true);
    actions[s] = [&] {
      if (align_path.empty() == attn_path.empty()) throw ConfigError("give exactly one of --align or --attn");
      const Unit u = parse_unit(unit);
      auto policy = u == Unit::kCharacter ? ReplacementPolicy::characters() : ReplacementPolicy::tokens();
      if (!marker.empty()) policy.marker = marker;
      if (on_null == "delete") {
        policy.on_null = ReplacementPolicy::OnNull::kDelete;
      } else if (on_null == "keep") {
        policy.on_null = ReplacementPolicy::OnNull::kKeepMarker;
      } else {
        throw ConfigError("--on-null must be delete or keep");
      }
      auto recs = load_records(src, ref.empty() ? hyp : ref, hyp, u, c);
      AlignerChoice choice;
      std::vector<Alignment> provided;
      if (!align_path.empty()) {
        const auto lines = read_lines(align_path);
        if (lines.size() != recs.size()) throw DataError("alignment file and hypotheses differ in line count");
        for (std::size_t i = 0; i < lines.size(); ++i) {
          const auto& h = recs[i].hypothesis;
          provided.push_back(parse_pharaoh(lines[i], u == Unit::kToken ? h.tokens.size() : h.chars.size()));
        }
        choice = {AlignSource::kProvided, nullptr, &provided};
      } else {
        const auto lines = read_lines(attn_path);
        if (lines.size() != recs.size()) throw DataError("attention file and hypotheses differ in line count");
        for (std::size_t i = 0; i < lines.size(); ++i) {
          try {
            recs[i].attention = matrix_from_json(json::parse(lines[i]), i + 1);
          } catch (const json::exception& e) {
            throw DataError("attention line " + std::to_string(i + 1) + ": " + e.what());
          }
        }
        choice = {AlignSource::kAttention, nullptr, nullptr};
      }
      const auto ba = evaluate_before_after(recs, choice, policy);
      std::vector<std::string> lines;
      for (const auto& h : ba.replaced_hypotheses) lines.push_back(h.raw);
      const fs::path out(c.out);
      write_text(out / "hyp.unkrep.txt", join_lines(lines));
      if (!ref.empty()) {
        json j{{"bleu_before", ba.before.score},
               {"bleu_after", ba.after.score},
               {"unk_pct", ba.unk_pct},
               {"replaced", ba.replaced}};
        write_text(out / "scores.json", j.dump(2) + "\n");
        std::cout << "bleu_before\t" << fmt(ba.before.score, 2) << "\nbleu_after\t" << fmt(ba.after.score, 2)
                  << "\nunk_pct\t" << fmt(ba.unk_pct, 2) << '\n';
      } else {
        std::cout << "replaced " << ba.replaced << " UNK units\n";
      }
    };
  }

  // ---- sweep
  std::vector<std::size_t> sizes{164, 125, 100, 80, 60};
  std::string cache_dir, sweep_align = "identity";
  {
    auto* s = sub("sweep", "Train and score copy models over a list of vocabulary sizes");
    s->add_option("--seed", seed, "Random seed for model initialization (required)")->required();
    s->add_option("--data", data_dir, "Directory written by gen-copy")->required();
    s->add_option("--sizes", sizes, "Vocabulary sizes, in output order")->delimiter(',')->capture_default_str();
    s->add_option("--cache", cache_dir, "Checkpoint cache (default <out>/cache)");
    s->add_option("--alignment", sweep_align, "identity or attention")->capture_default_str();
    add_model_flags(s, mcfg, tcfg);
    add_jobs(s, c);
    add_out(s, c, true);
    actions[s] = [&] {
      const auto data = read_copy_corpora(data_dir);
      mcfg.seed = *seed;
      SweepOptions opt;
      opt.cache_dir = cache_dir.empty() ? fs::path(c.out) / "cache" : fs::path(cache_dir);
      opt.out_dir = fs::path(c.out);
      opt.alignment = parse_align_source(sweep_align);
      opt.jobs = c.jobs;
      opt.log = [](const std::string& m) { std::cerr << m << '\n'; };
      const auto result = vocab_sweep(data, sizes, mcfg, tcfg, opt);
      std::cout << "in-test\n" << sweep_tsv(result.in_rows) << "out-test\n" << sweep_tsv(result.out_rows);
    };
  }

  // ---- extremes
  std::size_t k = 100;
  {
    auto* s = sub("extremes", "Select the k best and k worst translations by normalized edit distance");
    s->add_option("--src", src, "Source sentences")->required();
    s->add_option("--ref", ref, "References")->required();
    s->add_option("--hyp", hyp, "Hypotheses")->required();
    s->add_option("--k", k, "Sentences per side")->capture_default_str();
    s->add_option("--unit", unit, "token or char")->capture_default_str();
    add_tokenizer(s, c);
    add_out(s, c, true);
    actions[s] = [&] {
      const auto recs = load_records(src, ref, hyp, parse_unit(unit), c);
      const auto ex = select_extremes(recs, k);
      const fs::path out(c.out);
      write_text(out / "best.tsv", records_tsv(ex.best));
      write_text(out / "worst.tsv", records_tsv(ex.worst));
      std::string b, w;
      for (const auto& r : ex.best) b += std::to_string(r.id) + '\n';
      for (const auto& r : ex.worst) w += std::to_string(r.id) + '\n';
      write_text(out / "best_ids.txt", b);
      write_text(out / "worst_ids.txt", w);
      std::cout << "best/worst " << k << " written to " << c.out << '\n';
    };
  }

  // ---- buckets
  {
    auto* s = sub("buckets", "BLEU per number of out-of-vocabulary characters in the source");
    s->add_option("--src", src, "Source sentences")->required();
    s->add_option("--ref", ref, "References")->required();
    s->add_option("--hyp", hyp, "Hypotheses")->required();
    s->add_option("--vocab", vocab_path, "Character vocabulary file");
    s->add_option("--model", model_path, "Take the vocabulary from this checkpoint");
    s->add_option("--train", train_path, "Build the vocabulary from this text (with --size)");
    s->add_option("--size", vocab_size, "N for --train")->capture_default_str();
    s->add_option("--unit", unit, "BLEU unit: char or token")->capture_default_str();
    add_tokenizer(s, c);
    add_out(s, c, false);
    actions[s] = [&] {
      CharVocab vocab;
      if (!vocab_path.empty()) {
        vocab = CharVocab::load(vocab_path);
      } else if (!model_path.empty()) {
        vocab = CopyModel::load(model_path).vocab();
      } else if (!train_path.empty()) {
        vocab = CharVocab::build(load_corpus(train_path, std::nullopt, c.load(train_path)), vocab_size);
      } else {
        throw ConfigError("give one of --vocab, --model or --train");
      }
      const Unit u = parse_unit(unit);
      const auto recs = load_records(src, ref, hyp, u, c);
      std::string out = "bucket\tsize\tbleu\n";
      for (const auto& b : bucket_by_char_oov(recs, vocab, u)) {
        out += b.label + '\t' + std::to_string(b.size) + '\t' + fmt(b.bleu.score, 4) + '\n';
      }
      std::cout << out;
      if (!c.out.empty()) write_text(fs::path(c.out) / "buckets.tsv", out);
    };
  }

  // ---- histogram
  std::string annotations_path, ids_path, session_dir;
  {
    auto* s = sub("histogram", "Count annotated specificities per category over a sentence selection");
    auto* a = s->add_option("--annotations", annotations_path, "Annotation export file");
    auto* d = s->add_option("--session", session_dir, "Session directory of an annotation store");
    a->excludes(d);
    s->add_option("--ids", ids_path, "Selected sentence ids, one per line (e.g. worst_ids.txt)")->required();
    add_out(s, c, false);
    actions[s] = [&] {
      AnnotationSet set;
      if (!annotations_path.empty()) {
        set = read_annotations(annotations_path);
      } else if (!session_dir.empty()) {
        set = AnnotationSession::open(session_dir)->snapshot();
      } else {
        throw ConfigError("give --annotations or --session");
      }
      const auto h = specificity_histogram(set, read_ids(ids_path));
      std::string out = "code\tlabel\tcount\n";
      for (const auto& cat : categories()) {
        out += std::to_string(cat.code) + '\t' + std::string(cat.label) + '\t' +
               std::to_string(h[static_cast<std::size_t>(cat.code - 1)]) + '\n';
      }
      std::cout << out;
      if (!c.out.empty()) write_text(fs::path(c.out) / "histogram.tsv", out);
    };
  }

  // ---- serve
  std::string store_dir, corpus_name, annotator, host = "127.0.0.1", static_dir;
  int port = 8080;
  {
    auto* s = sub("serve", "Serve the annotation HTTP API (and UI assets)");
    s->add_option("--store", store_dir, "Annotation store directory")->required();
    s->add_option("--corpus", src, "Sentences to annotate, one per line")->required();
    s->add_option("--corpus-name", corpus_name, "Name clients use for the corpus (default: file name)");
    s->add_option("--annotator", annotator, "Create this annotator's session at startup");
    s->add_option("--host", host, "Bind address")->capture_default_str();
    s->add_option("--port", port, "TCP port (0 picks one)")->capture_default_str();
    s->add_option("--static", static_dir, "Directory of built UI assets served at /");
    add_tokenizer(s, c);
    actions[s] = [&] {
      const auto corpus = load_corpus(src, std::nullopt, c.load(src));
      const std::string name = corpus_name.empty() ? fs::path(src).filename().string() : corpus_name;
      AnnotationStore store(store_dir);
      ServerOptions so;
      so.host = host;
      so.port = port;
      if (!static_dir.empty()) so.static_dir = fs::path(static_dir);
      AnnotationServer server(store, so);
      server.register_corpus(name, sentences_of(corpus));
      if (!annotator.empty()) {
        const auto& session = store.create_session(name, sentences_of(corpus), annotator);
        std::cout << "session " << session.id() << " (" << annotator << ")\n";
      }
      const int bound = server.bind();
      std::cout << "listening on http://" << host << ':' << bound << std::endl;
      server.listen();
    };
  }

  // Config file values go in front of the user's flags so the flags win.
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  try {
    std::optional<std::string> cfg;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) {
        cfg = args[i + 1];
        break;
      }
      if (args[i].starts_with("--config=")) {
        cfg = args[i].substr(9);
        break;
      }
    }
    if (cfg) {
      // Right after the subcommand name, where its options are parsed.
      std::size_t insert_at = 0;
      for (std::size_t i = 0; i < args.size(); ++i) {
        if (app.get_subcommand_no_throw(args[i])) {
          insert_at = i + 1;
          break;
        }
      }
      auto extra = config_args(*cfg);
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(insert_at), extra.begin(), extra.end());
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  std::reverse(args.begin(), args.end());

  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    for (const auto* s : app.get_subcommands()) {
      dump_config(s, c.out);
      actions.at(s)();
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DecodeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << " (batch " << e.batch_index() << ")\n";
    return kExitTraining;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
}

}  // namespace ugclab
