#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "ugclab/textcore.hpp"

namespace ugclab {

struct Category {
  int code = 0;
  std::string_view label;
};

inline constexpr int kNumCategories = 12;
/// The annotation typology, codes 1..12.
const std::array<Category, kNumCategories>& categories();
/// Throws DataError for a code outside 1..12.
const Category& category(int code);

struct AnnotationSpan {
  std::uint64_t span_id = 0;
  std::size_t sentence_id = 0;
  std::size_t token_start = 0;  ///< inclusive
  std::size_t token_end = 0;    ///< inclusive
  int category = 0;
  std::string annotator;
  std::int64_t timestamp_ms = 0;

  /// Same sentence, range, category and annotator.
  bool same_content(const AnnotationSpan& other) const;
};

/// The live spans of a session (tombstoned spans removed) plus completion.
struct AnnotationSet {
  std::size_t n_sentences = 0;
  std::vector<AnnotationSpan> spans;  ///< by span id
  std::set<std::size_t> done;

  /// Marked done or carrying at least one span.
  bool annotated(std::size_t sentence_id) const;
  /// Content equality: span ids and timestamps are ignored, order is not.
  bool same_spans(const AnnotationSet& other) const;
};

inline constexpr std::string_view kExportHeader = "sentence_id\ttoken_start\ttoken_end\tcategory\tannotator";

/// Header line plus one line per span, sorted by (sentence_id, token_start,
/// category), remaining ties by span id.
std::string export_annotations(const AnnotationSet& set);
/// Inverse of export_annotations. Span ids are assigned in file order and
/// `done` holds every sentence with a span. Throws DataError on a bad line.
AnnotationSet import_annotations(std::string_view text);
AnnotationSet read_annotations(const std::filesystem::path& path);

/// Content hash of a corpus side (raw sentences, in order).
std::string corpus_hash(const std::vector<Sentence>& sentences);
/// Deterministic in (corpus hash, annotator).
std::string session_id_for(const std::string& corpus_hash, const std::string& annotator);

struct AddResult {
  std::uint64_t span_id = 0;
  /// True when an identical span already existed; span_id names it.
  bool duplicate = false;
};

/// One annotator working through one corpus. Every change is appended to a
/// write-ahead log and fsynced before the call returns. Writers are
/// serialized, readers may run concurrently.
///
/// Log line: `<fnv64 hex of payload>\t<payload>\n` with payloads
///   ADD <span_id> <sentence> <start> <end> <category> <annotator> <ms>
///   DEL <span_id> <ms>
///   DONE <sentence> <0|1> <ms>
/// (fields tab-separated). A torn final line is dropped on reload.
class AnnotationSession {
 public:
  using Clock = std::function<std::int64_t()>;

  /// Opens (or initializes) the session directory.
  static std::unique_ptr<AnnotationSession> open(const std::filesystem::path& dir, Clock clock = {});
  static std::unique_ptr<AnnotationSession> create(const std::filesystem::path& dir, std::string corpus_name,
                                                   std::vector<Sentence> sentences, std::string annotator,
                                                   Clock clock = {});

  const std::string& id() const { return id_; }
  const std::string& annotator() const { return annotator_; }
  const std::string& corpus_name() const { return corpus_name_; }
  const std::vector<Sentence>& sentences() const { return sentences_; }

  /// Throws DataError for an unknown sentence, an out-of-range token span,
  /// or an unknown category.
  AddResult add_span(std::size_t sentence_id, std::size_t token_start, std::size_t token_end, int category);
  /// False when the span does not exist (or was already removed).
  bool remove_span(std::uint64_t span_id);
  void set_done(std::size_t sentence_id, bool done);

  AnnotationSet snapshot() const;
  std::vector<AnnotationSpan> spans_of(std::size_t sentence_id) const;
  std::string export_text() const { return export_annotations(snapshot()); }
  /// Adds every span of `set` (duplicates skipped). Returns the number added.
  std::size_t import_set(const AnnotationSet& set);

 private:
  AnnotationSession() = default;
  void replay();
  void append(const std::string& payload);
  std::int64_t now() const;

  std::filesystem::path dir_;
  std::string id_, annotator_, corpus_name_;
  std::vector<Sentence> sentences_;
  Clock clock_;
  mutable std::shared_mutex mutex_;
  std::map<std::uint64_t, AnnotationSpan> live_;
  std::set<std::size_t> done_;
  std::uint64_t next_id_ = 1;
};

/// A directory of sessions, one subdirectory per session id.
class AnnotationStore {
 public:
  explicit AnnotationStore(std::filesystem::path root, AnnotationSession::Clock clock = {});

  /// Idempotent per (corpus content, annotator).
  AnnotationSession& create_session(const std::string& corpus_name, const std::vector<Sentence>& sentences,
                                    const std::string& annotator);
  /// nullptr when no such session exists on disk.
  AnnotationSession* find(const std::string& session_id);
  std::vector<std::string> session_ids() const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  AnnotationSession::Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<AnnotationSession>> open_;
};

}  // namespace ugclab
