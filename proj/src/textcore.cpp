#include "ugclab/textcore.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "ugclab/errors.hpp"
#include "ugclab/utf8.hpp"

namespace ugclab {

namespace {

// Codepoints that modify the preceding glyph (ZWJ, variation selectors,
// skin tones, keycap) and therefore stay attached to the previous token.
bool is_joiner(char32_t cp) {
  return cp == 0x200D || cp == 0xFE0E || cp == 0xFE0F || cp == 0x20E3 || (cp >= 0x1F3FB && cp <= 0x1F3FF);
}

bool is_intraword_mark(char32_t cp) { return cp == U'\'' || cp == U'-' || cp == 0x2019 || cp == U'_'; }

bool ascii_lower_equal(char32_t a, char32_t b) {
  if (a >= U'A' && a <= U'Z') a = a - U'A' + U'a';
  return a == b;
}

bool starts_with_nocase(std::u32string_view s, std::size_t at, std::u32string_view prefix) {
  if (s.size() - at < prefix.size()) return false;
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    if (!ascii_lower_equal(s[at + k], prefix[k])) return false;
  }
  return true;
}

bool is_url_tail_punct(char32_t cp) {
  switch (cp) {
    case U'.': case U',': case U'!': case U'?': case U';': case U':': case U')': case U']':
    case U'"': case U'\'': case 0xBB: case 0x2026: case 0x201D: case 0x2019:
      return true;
    default:
      return false;
  }
}

// Length of a protected URL / mention / hashtag / <placeholder> starting at
// `at`, or 0.
std::size_t protected_span(std::u32string_view chunk, std::size_t at) {
  const bool boundary = at == 0 || !utf8::is_word(chunk[at - 1]);
  if (!boundary) return 0;
  if (chunk[at] == U'<') {
    std::size_t end = at + 1;
    while (end < chunk.size() && ((chunk[end] >= U'a' && chunk[end] <= U'z') ||
                                  (chunk[end] >= U'A' && chunk[end] <= U'Z') || chunk[end] == U'_')) {
      ++end;
    }
    if (end > at + 1 && end < chunk.size() && chunk[end] == U'>') return end + 1 - at;
  }
  if (starts_with_nocase(chunk, at, U"http://") || starts_with_nocase(chunk, at, U"https://") ||
      starts_with_nocase(chunk, at, U"www.")) {
    std::size_t end = chunk.size();
    while (end > at + 1 && is_url_tail_punct(chunk[end - 1])) --end;
    return end - at;
  }
  if ((chunk[at] == U'#' || chunk[at] == U'@') && at + 1 < chunk.size() && utf8::is_word(chunk[at + 1])) {
    std::size_t end = at + 1;
    while (end < chunk.size()) {
      const char32_t cp = chunk[end];
      if (utf8::is_word(cp) || is_joiner(cp)) {
        ++end;
      } else if (is_intraword_mark(cp) && end + 1 < chunk.size() && utf8::is_word(chunk[end + 1])) {
        ++end;
      } else {
        break;
      }
    }
    return end - at;
  }
  return 0;
}

void tokenize_chunk(std::u32string_view chunk, std::vector<std::string>& out) {
  std::u32string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(utf8::encode(word));
      word.clear();
    }
  };
  // Index in `out` of the first token produced by this chunk, so joiners
  // never glue onto a token from a previous whitespace-separated chunk.
  const std::size_t first = out.size();
  std::size_t i = 0;
  while (i < chunk.size()) {
    if (const std::size_t len = protected_span(chunk, i); len > 0 && word.empty()) {
      out.push_back(utf8::encode(chunk.substr(i, len)));
      i += len;
      continue;
    }
    const char32_t cp = chunk[i];
    const char32_t prev = i > 0 ? chunk[i - 1] : 0;
    const char32_t next = i + 1 < chunk.size() ? chunk[i + 1] : 0;
    if (is_joiner(cp)) {
      if (!word.empty()) {
        word.push_back(cp);
      } else if (out.size() > first) {
        out.back() += utf8::encode(cp);
      } else {
        word.push_back(cp);
      }
    } else if (utf8::is_symbol(cp)) {
      flush();
      word.push_back(cp);
      flush();
    } else if (utf8::is_punct(cp)) {
      const bool intraword = !word.empty() && next != 0 && utf8::is_word(prev) && utf8::is_word(next) &&
                             (is_intraword_mark(cp) ||
                              ((cp == U'.' || cp == U',') && utf8::is_ascii_digit(prev) && utf8::is_ascii_digit(next)));
      if (intraword) {
        word.push_back(cp);
      } else {
        flush();
        word.push_back(cp);
        flush();
      }
    } else {
      // Word characters directly after a symbol or punctuation start anew;
      // a hashtag can only begin at a word boundary.
      word.push_back(cp);
    }
    ++i;
  }
  flush();
}

}  // namespace

TokenizerScheme parse_tokenizer_scheme(std::string_view id) {
  if (id == "13a" || id == "moses" || id == "moses13a") return TokenizerScheme::kMoses13a;
  if (id == "space" || id == "whitespace" || id == "none") return TokenizerScheme::kWhitespace;
  throw ConfigError("unknown tokenizer scheme '" + std::string(id) + "'");
}

std::string_view to_string(TokenizerScheme scheme) {
  return scheme == TokenizerScheme::kMoses13a ? "13a" : "whitespace";
}

std::vector<std::string> tokenize(std::string_view raw, TokenizerScheme scheme) {
  const std::u32string cps = utf8::decode(raw);
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && utf8::is_space(cps[i])) ++i;
    std::size_t j = i;
    while (j < cps.size() && !utf8::is_space(cps[j])) ++j;
    if (j > i) {
      const std::u32string_view chunk(cps.data() + i, j - i);
      if (scheme == TokenizerScheme::kWhitespace) {
        out.push_back(utf8::encode(chunk));
      } else {
        tokenize_chunk(chunk, out);
      }
    }
    i = j;
  }
  return out;
}

Sentence Sentence::from_raw(std::string raw, TokenizerScheme scheme) {
  Sentence s;
  s.chars = utf8::decode(raw);
  s.tokens = tokenize(raw, scheme);
  s.raw = std::move(raw);
  return s;
}

Sentence Sentence::from_tokens(std::vector<std::string> tokens) {
  Sentence s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s.raw.push_back(' ');
    s.raw += tokens[i];
  }
  s.chars = utf8::decode(s.raw);
  s.tokens = std::move(tokens);
  return s;
}

std::string_view to_string(Side side) { return side == Side::kSource ? "source" : "target"; }

Side parse_side(std::string_view name) {
  if (name == "source" || name == "src") return Side::kSource;
  if (name == "target" || name == "tgt" || name == "reference" || name == "ref") return Side::kTarget;
  throw ConfigError("unknown corpus side '" + std::string(name) + "'");
}

bool ParallelCorpus::is_parallel() const {
  for (const auto& p : pairs) {
    if (!p.target) return false;
  }
  return true;
}

const Sentence& ParallelCorpus::sentence(std::size_t i, Side side) const {
  const SentencePair& p = pairs.at(i);
  if (side == Side::kSource) return p.source;
  if (!p.target) throw DataError("corpus '" + name + "' has no target side for sentence " + std::to_string(i));
  return *p.target;
}

void ParallelCorpus::require_side(Side side) const {
  if (side == Side::kTarget && !is_parallel()) {
    throw DataError("corpus '" + name + "' is missing the target side");
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

namespace {

Sentence parse_line(std::string line, std::size_t line_no, std::size_t line_offset, const std::string& file,
                    TokenizerScheme scheme) {
  try {
    return Sentence::from_raw(std::move(line), scheme);
  } catch (const DecodeError& e) {
    throw DecodeError(file + ":" + std::to_string(line_no + 1) + ": invalid UTF-8",
                      line_offset + e.byte_offset());
  }
}

std::vector<std::size_t> line_offsets(const std::vector<std::string>& lines) {
  std::vector<std::size_t> offsets(lines.size());
  std::size_t acc = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    offsets[i] = acc;
    acc += lines[i].size() + 1;
  }
  return offsets;
}

}  // namespace

ParallelCorpus corpus_from_lines(const std::vector<std::string>& source_lines,
                                 const std::optional<std::vector<std::string>>& target_lines,
                                 const LoadOptions& options) {
  if (target_lines && target_lines->size() != source_lines.size()) {
    throw DataError("line count mismatch: source has " + std::to_string(source_lines.size()) +
                    " lines, target has " + std::to_string(target_lines->size()));
  }
  ParallelCorpus corpus;
  corpus.name = options.name;
  corpus.pairs.reserve(source_lines.size());
  const auto src_off = line_offsets(source_lines);
  std::vector<std::size_t> tgt_off;
  if (target_lines) tgt_off = line_offsets(*target_lines);
  for (std::size_t i = 0; i < source_lines.size(); ++i) {
    SentencePair pair;
    pair.source = parse_line(source_lines[i], i, src_off[i], "source", options.scheme);
    if (target_lines) pair.target = parse_line((*target_lines)[i], i, tgt_off[i], "target", options.scheme);
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

ParallelCorpus load_corpus(const std::filesystem::path& source_path,
                           const std::optional<std::filesystem::path>& target_path, const LoadOptions& options) {
  LoadOptions opts = options;
  if (opts.name.empty()) opts.name = source_path.stem().string();
  const auto src = read_lines(source_path);
  std::optional<std::vector<std::string>> tgt;
  if (target_path) tgt = read_lines(*target_path);
  if (tgt && tgt->size() != src.size()) {
    throw DataError("line count mismatch: '" + source_path.string() + "' has " + std::to_string(src.size()) +
                    " lines, '" + target_path->string() + "' has " + std::to_string(tgt->size()));
  }
  return corpus_from_lines(src, tgt, opts);
}

ParallelCorpus load_tsv_corpus(const std::filesystem::path& path, const LoadOptions& options) {
  LoadOptions opts = options;
  if (opts.name.empty()) opts.name = path.stem().string();
  ParallelCorpus corpus;
  corpus.name = opts.name;
  const auto lines = read_lines(path);
  const auto offsets = line_offsets(lines);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    SentencePair pair;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      pair.source = parse_line(line, i, offsets[i], path.string(), opts.scheme);
    } else {
      if (line.find('\t', tab + 1) != std::string::npos) {
        throw DataError(path.string() + ":" + std::to_string(i + 1) + ": more than one tab");
      }
      pair.source = parse_line(line.substr(0, tab), i, offsets[i], path.string(), opts.scheme);
      pair.target = parse_line(line.substr(tab + 1), i, offsets[i] + tab + 1, path.string(), opts.scheme);
    }
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

void save_corpus(const ParallelCorpus& corpus, const std::filesystem::path& source_path,
                 const std::optional<std::filesystem::path>& target_path) {
  if (target_path) corpus.require_side(Side::kTarget);
  auto src = open_out(source_path);
  for (const auto& p : corpus.pairs) src << p.source.raw << '\n';
  if (target_path) {
    auto tgt = open_out(*target_path);
    for (const auto& p : corpus.pairs) tgt << p.target->raw << '\n';
  }
}

void save_tsv_corpus(const ParallelCorpus& corpus, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& p : corpus.pairs) {
    out << p.source.raw;
    if (p.target) out << '\t' << p.target->raw;
    out << '\n';
  }
}

CorpusStats corpus_stats(const ParallelCorpus& corpus, Side side, const StatsOptions& options) {
  if (corpus.empty()) throw DataError("cannot compute statistics of an empty corpus");
  corpus.require_side(side);
  CorpusStats stats;
  std::unordered_set<std::string> types;
  std::set<char32_t> chars;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Sentence& s = corpus.sentence(i, side);
    stats.n_tokens += s.tokens.size();
    types.insert(s.tokens.begin(), s.tokens.end());
    for (char32_t cp : s.chars) {
      if (options.count_whitespace_chars || !utf8::is_space(cp)) chars.insert(cp);
    }
  }
  if (stats.n_tokens == 0) throw DataError("corpus '" + corpus.name + "' has no tokens");
  stats.n_sentences = corpus.size();
  stats.vocab_size = types.size();
  stats.n_char_types = chars.size();
  stats.avg_sent_len = static_cast<double>(stats.n_tokens) / static_cast<double>(stats.n_sentences);
  stats.ttr = static_cast<double>(stats.vocab_size) / static_cast<double>(stats.n_tokens);
  return stats;
}

std::size_t count_token_occurrences(const ParallelCorpus& corpus, std::string_view token, Side side,
                                    TokenMatch match) {
  corpus.require_side(side);
  std::size_t count = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (const auto& t : corpus.sentence(i, side).tokens) {
      if (match == TokenMatch::kExact ? t == token : std::string_view(t).starts_with(token)) ++count;
    }
  }
  return count;
}

}  // namespace ugclab
