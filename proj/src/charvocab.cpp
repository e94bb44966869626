#include "ugclab/charvocab.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "ugclab/errors.hpp"
#include "ugclab/hash.hpp"
#include "ugclab/utf8.hpp"

namespace ugclab {

CharVocab CharVocab::build(const ParallelCorpus& corpus, std::size_t n, Side side, bool include_whitespace) {
  if (n == 0) throw ConfigError("character vocabulary size must be at least 1");
  if (corpus.empty()) throw DataError("cannot build a character vocabulary from an empty corpus");
  corpus.require_side(side);

  std::map<char32_t, std::uint64_t> counts;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (char32_t cp : corpus.sentence(i, side).chars) {
      if (include_whitespace || !utf8::is_space(cp)) ++counts[cp];
    }
  }
  if (counts.empty()) throw DataError("corpus '" + corpus.name + "' contains no characters");

  std::vector<std::pair<char32_t, std::uint64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (n > ranked.size()) {
    std::cerr << "warning: requested " << n << " characters but corpus '" << corpus.name << "' has only "
              << ranked.size() << "; vocabulary clamped\n";
  }
  const std::size_t keep = std::min(n, ranked.size());
  std::vector<char32_t> chars;
  std::vector<std::uint64_t> freqs;
  for (std::size_t i = 0; i < keep; ++i) {
    chars.push_back(ranked[i].first);
    freqs.push_back(ranked[i].second);
  }
  CharVocab vocab = from_ranked(std::move(chars), std::move(freqs));
  vocab.requested_ = n;
  return vocab;
}

CharVocab CharVocab::from_ranked(std::vector<char32_t> chars, std::vector<std::uint64_t> frequencies) {
  if (chars.size() != frequencies.size()) throw DataError("vocabulary needs one frequency per character");
  if (chars.empty()) throw DataError("character vocabulary is empty");
  CharVocab vocab;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    if (!vocab.index_.emplace(chars[i], static_cast<int>(i) + kNumSpecials).second) {
      throw DataError("duplicate character U+" + std::to_string(chars[i]) + " in vocabulary");
    }
  }
  vocab.chars_ = std::move(chars);
  vocab.freqs_ = std::move(frequencies);
  vocab.requested_ = vocab.chars_.size();
  return vocab;
}

int CharVocab::id_of(char32_t cp) const {
  auto it = index_.find(cp);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> CharVocab::encode(std::u32string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char32_t cp : text) ids.push_back(id_of(cp));
  return ids;
}

std::u32string CharVocab::decode(std::span<const int> ids) const {
  std::u32string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= id_count()) {
      throw DataError("character id " + std::to_string(id) + " outside [0, " + std::to_string(id_count()) + ")");
    }
    if (id == kUnk) {
      out.push_back(kUnkDisplay);
    } else if (id >= kNumSpecials) {
      out.push_back(chars_[static_cast<std::size_t>(id - kNumSpecials)]);
    }
  }
  return out;
}

double CharVocab::unk_fraction(std::u32string_view text) const {
  return unk_fraction(std::vector<std::u32string>{std::u32string(text)});
}

double CharVocab::unk_fraction(const std::vector<std::u32string>& texts) const {
  std::size_t total = 0, unk = 0;
  for (const auto& t : texts) {
    total += t.size();
    for (char32_t cp : t) {
      if (!contains(cp)) ++unk;
    }
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(unk) / static_cast<double>(total);
}

double CharVocab::unk_fraction(const ParallelCorpus& corpus, Side side) const {
  corpus.require_side(side);
  std::vector<std::u32string> texts;
  texts.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) texts.push_back(corpus.sentence(i, side).chars);
  return unk_fraction(texts);
}

namespace {

std::string glyph(char32_t cp) {
  if (utf8::is_space(cp) || cp < 0x20 || cp == 0x7F || (cp >= 0x80 && cp < 0xA0)) return "";
  return utf8::encode(cp);
}

std::string hex(char32_t cp) {
  char buf[16];
  auto res = std::to_chars(buf, buf + sizeof buf, static_cast<std::uint32_t>(cp), 16);
  std::string s(buf, res.ptr);
  while (s.size() < 4) s.insert(s.begin(), '0');
  std::transform(s.begin(), s.end(), s.begin(), [](char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

}  // namespace

std::string CharVocab::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < chars_.size(); ++i) {
    out += std::to_string(i + 1);
    out += '\t';
    out += hex(chars_[i]);
    out += '\t';
    out += glyph(chars_[i]);
    out += '\t';
    out += std::to_string(freqs_[i]);
    out += '\n';
  }
  return out;
}

void CharVocab::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << serialize();
}

CharVocab CharVocab::parse(const std::string& text) {
  std::vector<char32_t> chars;
  std::vector<std::uint64_t> freqs;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    auto fail = [&](const std::string& why) {
      throw DataError("vocabulary line " + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != 4) fail("expected 4 tab-separated fields");
    std::size_t rank = 0;
    std::uint32_t cp = 0;
    std::uint64_t freq = 0;
    if (std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), rank).ec != std::errc{}) {
      fail("bad rank");
    }
    if (rank != chars.size() + 1) fail("ranks must be consecutive from 1");
    if (std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), cp, 16).ec != std::errc{}) {
      fail("bad codepoint");
    }
    if (std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), freq).ec != std::errc{}) {
      fail("bad frequency");
    }
    chars.push_back(static_cast<char32_t>(cp));
    freqs.push_back(freq);
  }
  return from_ranked(std::move(chars), std::move(freqs));
}

CharVocab CharVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string CharVocab::fingerprint() const {
  Fnv1a64 h;
  for (char32_t cp : chars_) h.update_u64(cp);
  return h.hex();
}

}  // namespace ugclab
