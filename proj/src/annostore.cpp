#include "ugclab/annostore.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "ugclab/errors.hpp"
#include "ugclab/hash.hpp"

namespace ugclab {

namespace {

constexpr std::array<Category, kNumCategories> kCategories{{
    {1, "Letter deletion/addition"},
    {2, "Missing diacritics"},
    {3, "Phonetic writing"},
    {4, "Tokenisation error"},
    {5, "Wrong verb tense"},
    {6, "#; @, URL"},
    {7, "Wrong gender/grammatical number"},
    {8, "Inconsistent casing"},
    {9, "Emoji"},
    {10, "Named Entity"},
    {11, "Contraction"},
    {12, "Graphemic/punctuation stretching"},
}};

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

template <typename T>
bool parse_num(std::string_view s, T& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool valid_annotator(std::string_view name) {
  return !name.empty() && name.find_first_of("\t\n\r") == std::string_view::npos;
}

}  // namespace

const std::array<Category, kNumCategories>& categories() { return kCategories; }

const Category& category(int code) {
  if (code < 1 || code > kNumCategories) throw DataError("category code " + std::to_string(code) + " outside 1..12");
  return kCategories[static_cast<std::size_t>(code - 1)];
}

bool AnnotationSpan::same_content(const AnnotationSpan& o) const {
  return sentence_id == o.sentence_id && token_start == o.token_start && token_end == o.token_end &&
         category == o.category && annotator == o.annotator;
}

bool AnnotationSet::annotated(std::size_t sentence_id) const {
  if (done.contains(sentence_id)) return true;
  return std::any_of(spans.begin(), spans.end(), [&](const auto& s) { return s.sentence_id == sentence_id; });
}

namespace {

using SpanKey = std::tuple<std::size_t, std::size_t, int, std::size_t, std::string>;

SpanKey content_key(const AnnotationSpan& s) {
  return {s.sentence_id, s.token_start, s.category, s.token_end, s.annotator};
}

}  // namespace

bool AnnotationSet::same_spans(const AnnotationSet& other) const {
  if (spans.size() != other.spans.size()) return false;
  std::vector<SpanKey> a, b;
  for (const auto& s : spans) a.push_back(content_key(s));
  for (const auto& s : other.spans) b.push_back(content_key(s));
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

std::string export_annotations(const AnnotationSet& set) {
  std::vector<const AnnotationSpan*> order;
  order.reserve(set.spans.size());
  for (const auto& s : set.spans) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const AnnotationSpan* a, const AnnotationSpan* b) {
    return std::tie(a->sentence_id, a->token_start, a->category, a->span_id) <
           std::tie(b->sentence_id, b->token_start, b->category, b->span_id);
  });
  std::string out(kExportHeader);
  out.push_back('\n');
  for (const auto* s : order) {
    out += std::to_string(s->sentence_id) + '\t' + std::to_string(s->token_start) + '\t' +
           std::to_string(s->token_end) + '\t' + std::to_string(s->category) + '\t' + s->annotator + '\n';
  }
  return out;
}

AnnotationSet import_annotations(std::string_view text) {
  AnnotationSet set;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::uint64_t next_id = 1;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) {
      if (line != kExportHeader) throw DataError("annotation file must start with the header line");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    AnnotationSpan s;
    auto fail = [&] { throw DataError("annotation line " + std::to_string(line_no) + " is malformed"); };
    if (f.size() != 5) fail();
    if (!parse_num(f[0], s.sentence_id) || !parse_num(f[1], s.token_start) || !parse_num(f[2], s.token_end) ||
        !parse_num(f[3], s.category) || !valid_annotator(f[4]) || s.token_start > s.token_end) {
      fail();
    }
    category(s.category);
    s.annotator = std::string(f[4]);
    s.span_id = next_id++;
    set.done.insert(s.sentence_id);
    set.n_sentences = std::max(set.n_sentences, s.sentence_id + 1);
    set.spans.push_back(std::move(s));
  }
  if (line_no == 0) throw DataError("annotation file is empty");
  return set;
}

AnnotationSet read_annotations(const std::filesystem::path& path) { return import_annotations(read_file(path)); }

std::string corpus_hash(const std::vector<Sentence>& sentences) {
  Fnv1a64 h;
  for (const auto& s : sentences) {
    h.update(s.raw);
    h.update("\n");
  }
  return h.hex();
}

std::string session_id_for(const std::string& corpus_hash, const std::string& annotator) {
  return Fnv1a64{}.update(corpus_hash).update("\t").update(annotator).hex();
}

std::int64_t AnnotationSession::now() const {
  if (clock_) return clock_();
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::unique_ptr<AnnotationSession> AnnotationSession::create(const std::filesystem::path& dir,
                                                             std::string corpus_name, std::vector<Sentence> sentences,
                                                             std::string annotator, Clock clock) {
  if (!valid_annotator(annotator)) throw DataError("annotator name must be non-empty and free of tabs/newlines");
  if (std::filesystem::exists(dir / "meta.json")) return open(dir, std::move(clock));
  std::filesystem::create_directories(dir);
  std::string text;
  for (const auto& s : sentences) {
    if (s.raw.find('\n') != std::string::npos) throw DataError("sentence text contains a newline");
    text += s.raw;
    text.push_back('\n');
  }
  write_file_atomic(dir / "sentences.txt", text);
  nlohmann::json meta{{"annotator", annotator},
                      {"corpus", corpus_name},
                      {"corpus_hash", corpus_hash(sentences)},
                      {"n_sentences", sentences.size()},
                      {"tokenizer", "13a"}};
  // meta.json last: its presence marks a complete session directory.
  write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
  return open(dir, std::move(clock));
}

std::unique_ptr<AnnotationSession> AnnotationSession::open(const std::filesystem::path& dir, Clock clock) {
  std::unique_ptr<AnnotationSession> s(new AnnotationSession);
  s->dir_ = dir;
  s->clock_ = std::move(clock);
  const auto meta = nlohmann::json::parse(read_file(dir / "meta.json"));
  s->annotator_ = meta.at("annotator").get<std::string>();
  s->corpus_name_ = meta.at("corpus").get<std::string>();
  const auto scheme = parse_tokenizer_scheme(meta.value("tokenizer", "13a"));
  for (auto& line : read_lines(dir / "sentences.txt")) s->sentences_.push_back(Sentence::from_raw(line, scheme));
  if (s->sentences_.size() != meta.at("n_sentences").get<std::size_t>()) {
    throw DataError("session '" + dir.string() + "' sentence count does not match its metadata");
  }
  const auto hash = corpus_hash(s->sentences_);
  if (hash != meta.at("corpus_hash").get<std::string>()) {
    throw DataError("session '" + dir.string() + "' corpus does not match its hash");
  }
  s->id_ = session_id_for(hash, s->annotator_);
  s->replay();
  return s;
}

void AnnotationSession::replay() {
  const auto path = dir_ / "log.wal";
  if (!std::filesystem::exists(path)) return;
  const std::string text = read_file(path);
  std::size_t pos = 0, good_end = 0, line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // torn final write
    const std::string_view line(text.data() + pos, nl - pos);
    const bool last = nl + 1 == text.size();
    ++line_no;
    pos = nl + 1;
    const auto tab = line.find('\t');
    const bool sum_ok = tab != std::string_view::npos &&
                        line.substr(0, tab) == Fnv1a64{}.update(line.substr(tab + 1)).hex();
    if (!sum_ok) {
      if (last) break;
      throw DataError("annotation log '" + path.string() + "' is corrupt at line " + std::to_string(line_no));
    }
    const auto f = split_tabs(line.substr(tab + 1));
    auto bad = [&] {
      throw DataError("annotation log '" + path.string() + "' has a bad record at line " + std::to_string(line_no));
    };
    if (f[0] == "ADD" && f.size() == 8) {
      AnnotationSpan s;
      if (!parse_num(f[1], s.span_id) || !parse_num(f[2], s.sentence_id) || !parse_num(f[3], s.token_start) ||
          !parse_num(f[4], s.token_end) || !parse_num(f[5], s.category) || !parse_num(f[7], s.timestamp_ms)) {
        bad();
      }
      s.annotator = std::string(f[6]);
      next_id_ = std::max(next_id_, s.span_id + 1);
      live_[s.span_id] = std::move(s);
    } else if (f[0] == "DEL" && f.size() == 3) {
      std::uint64_t id = 0;
      if (!parse_num(f[1], id)) bad();
      live_.erase(id);
    } else if (f[0] == "DONE" && f.size() == 4) {
      std::size_t sid = 0;
      if (!parse_num(f[1], sid) || (f[2] != "0" && f[2] != "1")) bad();
      if (f[2] == "1") {
        done_.insert(sid);
      } else {
        done_.erase(sid);
      }
    } else {
      bad();
    }
    good_end = pos;
  }
  if (good_end < text.size()) std::filesystem::resize_file(path, good_end);
}

void AnnotationSession::append(const std::string& payload) {
  const std::string line = Fnv1a64{}.update(payload).hex() + '\t' + payload + '\n';
  const auto path = dir_ / "log.wal";
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot open '" + path.string() + "': " + std::strerror(errno));
  std::size_t off = 0;
  while (off < line.size()) {
    const auto n = ::write(fd, line.data() + off, line.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw IoError("write to '" + path.string() + "' failed: " + std::strerror(err));
    }
    off += static_cast<std::size_t>(n);
  }
  const int rc = ::fsync(fd);
  ::close(fd);
  if (rc != 0) throw IoError("fsync of '" + path.string() + "' failed");
}

AddResult AnnotationSession::add_span(std::size_t sentence_id, std::size_t token_start, std::size_t token_end,
                                      int category_code) {
  std::unique_lock lock(mutex_);
  if (sentence_id >= sentences_.size()) {
    throw DataError("sentence " + std::to_string(sentence_id) + " does not exist (" +
                    std::to_string(sentences_.size()) + " sentences)");
  }
  const std::size_t n_tokens = sentences_[sentence_id].tokens.size();
  if (token_start > token_end || token_end >= n_tokens) {
    throw DataError("token span " + std::to_string(token_start) + ".." + std::to_string(token_end) +
                    " invalid for a sentence of " + std::to_string(n_tokens) + " tokens");
  }
  category(category_code);
  AnnotationSpan s{next_id_, sentence_id, token_start, token_end, category_code, annotator_, now()};
  for (const auto& [id, existing] : live_) {
    if (existing.same_content(s)) return {id, true};
  }
  append("ADD\t" + std::to_string(s.span_id) + '\t' + std::to_string(sentence_id) + '\t' +
         std::to_string(token_start) + '\t' + std::to_string(token_end) + '\t' + std::to_string(category_code) +
         '\t' + annotator_ + '\t' + std::to_string(s.timestamp_ms));
  ++next_id_;
  live_[s.span_id] = s;
  return {s.span_id, false};
}

bool AnnotationSession::remove_span(std::uint64_t span_id) {
  std::unique_lock lock(mutex_);
  if (!live_.contains(span_id)) return false;
  append("DEL\t" + std::to_string(span_id) + '\t' + std::to_string(now()));
  live_.erase(span_id);
  return true;
}

void AnnotationSession::set_done(std::size_t sentence_id, bool done) {
  std::unique_lock lock(mutex_);
  if (sentence_id >= sentences_.size()) throw DataError("sentence " + std::to_string(sentence_id) + " does not exist");
  append("DONE\t" + std::to_string(sentence_id) + '\t' + (done ? "1" : "0") + '\t' + std::to_string(now()));
  if (done) {
    done_.insert(sentence_id);
  } else {
    done_.erase(sentence_id);
  }
}

AnnotationSet AnnotationSession::snapshot() const {
  std::shared_lock lock(mutex_);
  AnnotationSet set;
  set.n_sentences = sentences_.size();
  for (const auto& [_, s] : live_) set.spans.push_back(s);
  set.done = done_;
  return set;
}

std::vector<AnnotationSpan> AnnotationSession::spans_of(std::size_t sentence_id) const {
  std::shared_lock lock(mutex_);
  std::vector<AnnotationSpan> out;
  for (const auto& [_, s] : live_) {
    if (s.sentence_id == sentence_id) out.push_back(s);
  }
  return out;
}

std::size_t AnnotationSession::import_set(const AnnotationSet& set) {
  std::size_t added = 0;
  for (const auto& s : set.spans) {
    if (!add_span(s.sentence_id, s.token_start, s.token_end, s.category).duplicate) ++added;
  }
  return added;
}

AnnotationStore::AnnotationStore(std::filesystem::path root, AnnotationSession::Clock clock)
    : root_(std::move(root)), clock_(std::move(clock)) {
  std::filesystem::create_directories(root_);
}

AnnotationSession& AnnotationStore::create_session(const std::string& corpus_name,
                                                   const std::vector<Sentence>& sentences,
                                                   const std::string& annotator) {
  const auto id = session_id_for(corpus_hash(sentences), annotator);
  std::lock_guard lock(mutex_);
  auto it = open_.find(id);
  if (it != open_.end()) return *it->second;
  auto session = AnnotationSession::create(root_ / id, corpus_name, sentences, annotator, clock_);
  return *open_.emplace(id, std::move(session)).first->second;
}

AnnotationSession* AnnotationStore::find(const std::string& session_id) {
  if (session_id.empty() || session_id.find_first_not_of("0123456789abcdef") != std::string::npos) return nullptr;
  std::lock_guard lock(mutex_);
  auto it = open_.find(session_id);
  if (it != open_.end()) return it->second.get();
  if (!std::filesystem::exists(root_ / session_id / "meta.json")) return nullptr;
  auto session = AnnotationSession::open(root_ / session_id, clock_);
  return open_.emplace(session_id, std::move(session)).first->second.get();
}

std::vector<std::string> AnnotationStore::session_ids() const {
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(root_)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "meta.json")) {
      ids.push_back(entry.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace ugclab
