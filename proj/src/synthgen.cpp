#include "ugclab/synthgen.hpp"

#include <fstream>

#include "ugclab/errors.hpp"
#include "ugclab/rng.hpp"
#include "ugclab/utf8.hpp"

namespace ugclab {

namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kDevStream = 2;
constexpr std::uint64_t kInTestStream = 3;
constexpr std::uint64_t kOutTestStream = 4;

std::size_t novel_pool_size(const CopyTaskSpec& spec) {
  if (spec.novel_char_rate >= 1.0) return spec.out_alphabet_size;
  return spec.out_alphabet_size > spec.train_alphabet_size ? spec.out_alphabet_size - spec.train_alphabet_size : 0;
}

}  // namespace

const std::vector<char32_t>& codepoint_pool() {
  static const std::vector<char32_t> pool = [] {
    std::vector<char32_t> p;
    auto add = [&p](char32_t lo, char32_t hi) {
      for (char32_t c = lo; c <= hi; ++c) p.push_back(c);
    };
    add(0x21, 0x7E);
    add(0xA1, 0xAC);
    add(0xAE, 0xFF);
    add(0x100, 0x24F);
    add(0x250, 0x2AF);
    add(0x391, 0x3A1);
    add(0x3A3, 0x3A9);
    add(0x3B1, 0x3C9);
    add(0x400, 0x4FF);
    return p;
  }();
  return pool;
}

void CopyTaskSpec::validate() const {
  if (len_min < 1 || len_min > len_max) throw ConfigError("copy task needs 1 <= len_min <= len_max");
  if (train_alphabet_size < 1) throw ConfigError("training alphabet must be non-empty");
  if (!(novel_char_rate >= 0.0 && novel_char_rate <= 1.0)) throw ConfigError("novel_char_rate must lie in [0, 1]");
  if (novel_char_rate < 1.0 && out_alphabet_size < train_alphabet_size) {
    throw ConfigError("out_alphabet_size must cover the training alphabet when novel_char_rate < 1");
  }
  const std::size_t novel = novel_pool_size(*this);
  if (novel_char_rate > 0.0 && novel == 0) {
    throw ConfigError("novel_char_rate > 0 but out_alphabet_size leaves no novel characters");
  }
  if (train_alphabet_size + novel > codepoint_pool().size()) {
    throw ConfigError("alphabets need " + std::to_string(train_alphabet_size + novel) +
                      " codepoints but the pool has " + std::to_string(codepoint_pool().size()));
  }
}

void to_json(nlohmann::json& j, const CopyTaskSpec& s) {
  j = nlohmann::json{{"n_train", s.n_train},
                     {"n_dev", s.n_dev},
                     {"n_test", s.n_test},
                     {"len_min", s.len_min},
                     {"len_max", s.len_max},
                     {"train_alphabet_size", s.train_alphabet_size},
                     {"out_alphabet_size", s.out_alphabet_size},
                     {"novel_char_rate", s.novel_char_rate},
                     {"seed", s.seed},
                     {"rng", std::string(Rng::kName)}};
}

void from_json(const nlohmann::json& j, CopyTaskSpec& s) {
  CopyTaskSpec d;
  s.n_train = j.value("n_train", d.n_train);
  s.n_dev = j.value("n_dev", d.n_dev);
  s.n_test = j.value("n_test", d.n_test);
  s.len_min = j.value("len_min", d.len_min);
  s.len_max = j.value("len_max", d.len_max);
  s.train_alphabet_size = j.value("train_alphabet_size", d.train_alphabet_size);
  s.out_alphabet_size = j.value("out_alphabet_size", d.out_alphabet_size);
  s.novel_char_rate = j.value("novel_char_rate", d.novel_char_rate);
  s.seed = j.value("seed", d.seed);
}

CopyAlphabet copy_alphabet(const CopyTaskSpec& spec) {
  spec.validate();
  const auto& pool = codepoint_pool();
  CopyAlphabet a;
  a.train_chars.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.train_alphabet_size));
  const std::size_t novel = novel_pool_size(spec);
  const auto first = pool.begin() + static_cast<std::ptrdiff_t>(spec.train_alphabet_size);
  a.novel_chars.assign(first, first + static_cast<std::ptrdiff_t>(novel));
  return a;
}

namespace {

Sentence random_sentence(const CopyTaskSpec& spec, const CopyAlphabet& alpha, std::uint64_t stream,
                         std::uint64_t index, double novel_rate) {
  Rng rng(spec.seed, stream, index);
  const std::size_t len = spec.len_min + static_cast<std::size_t>(rng.uniform(spec.len_max - spec.len_min + 1));
  std::u32string chars(len, U'\0');
  for (auto& c : chars) {
    if (novel_rate > 0.0 && rng.uniform01() < novel_rate) {
      c = alpha.novel_chars[static_cast<std::size_t>(rng.uniform(alpha.novel_chars.size()))];
    } else {
      c = alpha.train_chars[static_cast<std::size_t>(rng.uniform(alpha.train_chars.size()))];
    }
  }
  return Sentence::from_raw(utf8::encode(chars));
}

ParallelCorpus make_set(const CopyTaskSpec& spec, const CopyAlphabet& alpha, std::string name, std::size_t n,
                        std::uint64_t stream, double novel_rate) {
  ParallelCorpus corpus;
  corpus.name = std::move(name);
  corpus.pairs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sentence s = random_sentence(spec, alpha, stream, i, novel_rate);
    corpus.pairs[i].target = s;
    corpus.pairs[i].source = std::move(s);
  }
  return corpus;
}

}  // namespace

CopyCorpora generate_copy_corpus(const CopyTaskSpec& spec) {
  const CopyAlphabet alpha = copy_alphabet(spec);
  CopyCorpora out;
  out.train = make_set(spec, alpha, "train", spec.n_train, kTrainStream, 0.0);
  out.dev = make_set(spec, alpha, "dev", spec.n_dev, kDevStream, 0.0);
  out.in_test = make_set(spec, alpha, "in_test", spec.n_test, kInTestStream, 0.0);
  out.out_test = make_set(spec, alpha, "out_test", spec.n_test, kOutTestStream, spec.novel_char_rate);
  return out;
}

void write_copy_corpora(const CopyCorpora& corpora, const CopyTaskSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const ParallelCorpus* c : {&corpora.train, &corpora.dev, &corpora.in_test, &corpora.out_test}) {
    save_corpus(*c, dir / (c->name + ".src"), dir / (c->name + ".tgt"));
  }
  std::ofstream out(dir / "copytask.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + (dir / "copytask.json").string() + "'");
  out << nlohmann::json(spec).dump(2) << '\n';
}

CopyCorpora read_copy_corpora(const std::filesystem::path& dir, CopyTaskSpec* spec) {
  auto load = [&dir](const std::string& name) {
    return load_corpus(dir / (name + ".src"), dir / (name + ".tgt"), LoadOptions{TokenizerScheme::kMoses13a, name});
  };
  CopyCorpora out{load("train"), load("dev"), load("in_test"), load("out_test")};
  if (spec) {
    std::ifstream in(dir / "copytask.json");
    if (!in) throw IoError("cannot open '" + (dir / "copytask.json").string() + "'");
    *spec = nlohmann::json::parse(in).get<CopyTaskSpec>();
  }
  return out;
}

}  // namespace ugclab
