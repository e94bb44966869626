#include <doctest.h>

#include <thread>

#include "test_util.hpp"
#include "ugclab/annostore.hpp"
#include "ugclab/errors.hpp"

using namespace ugclab;
namespace fs = std::filesystem;

namespace {

std::vector<Sentence> corpus() {
  return {Sentence::from_raw("jsuis trop contente"), Sentence::from_raw("mdr t ou ?"),
          Sentence::from_raw("#paris @ami http://x.fr"), Sentence::from_raw("ok")};
}

AnnotationSession::Clock fixed_clock() {
  auto t = std::make_shared<std::int64_t>(1000);
  return [t] { return (*t)++; };
}

std::string state_of(const AnnotationSession& s) {
  const auto snap = s.snapshot();
  std::string out = export_annotations(snap) + "done:";
  for (auto d : snap.done) out += " " + std::to_string(d);
  return out;
}

}  // namespace

TEST_SUITE("annostore") {

TEST_CASE("category typology") {
  REQUIRE(categories().size() == 12);
  CHECK(category(1).label == "Letter deletion/addition");
  CHECK(category(2).label == "Missing diacritics");
  CHECK(category(3).label == "Phonetic writing");
  CHECK(category(4).label == "Tokenisation error");
  CHECK(category(5).label == "Wrong verb tense");
  CHECK(category(6).label == "#; @, URL");
  CHECK(category(7).label == "Wrong gender/grammatical number");
  CHECK(category(8).label == "Inconsistent casing");
  CHECK(category(9).label == "Emoji");
  CHECK(category(10).label == "Named Entity");
  CHECK(category(11).label == "Contraction");
  CHECK(category(12).label == "Graphemic/punctuation stretching");
  for (int c = 1; c <= 12; ++c) CHECK(category(c).code == c);
  CHECK_THROWS_AS(category(0), DataError);
  CHECK_THROWS_AS(category(13), DataError);
}

TEST_CASE("store sessions are idempotent per corpus and annotator") {
  testutil::TempDir dir("store");
  AnnotationStore store(dir.path(), fixed_clock());
  auto& a = store.create_session("fr", corpus(), "alice");
  auto& a2 = store.create_session("fr", corpus(), "alice");
  auto& b = store.create_session("fr", corpus(), "bob");
  CHECK(&a == &a2);
  CHECK(a.id() != b.id());
  CHECK(a.id() == session_id_for(corpus_hash(corpus()), "alice"));
  CHECK(store.session_ids().size() == 2);
  CHECK(store.find(a.id()) == &a);
  CHECK(store.find("ffff") == nullptr);
  CHECK(store.find("../etc") == nullptr);

  a.add_span(0, 0, 0, 3);
  AnnotationStore reopened(dir.path());
  auto* again = reopened.find(a.id());
  REQUIRE(again != nullptr);
  CHECK(again->annotator() == "alice");
  CHECK(again->corpus_name() == "fr");
  CHECK(again->snapshot().spans.size() == 1);
  CHECK_THROWS_AS(store.create_session("fr", corpus(), ""), DataError);
  CHECK_THROWS_AS(store.create_session("fr", corpus(), "a\tb"), DataError);
}

TEST_CASE("add, duplicate, remove and validation") {
  testutil::TempDir dir("session");
  auto s = AnnotationSession::create(dir / "s", "fr", corpus(), "alice", fixed_clock());
  const auto r1 = s->add_span(0, 0, 1, 11);
  CHECK_FALSE(r1.duplicate);
  const auto r2 = s->add_span(0, 0, 1, 11);
  CHECK(r2.duplicate);
  CHECK(r2.span_id == r1.span_id);
  const auto r3 = s->add_span(0, 0, 1, 1);
  CHECK(r3.span_id != r1.span_id);
  CHECK(s->spans_of(0).size() == 2);
  CHECK(s->spans_of(1).empty());

  CHECK_THROWS_AS(s->add_span(9, 0, 0, 1), DataError);
  CHECK_THROWS_AS(s->add_span(0, 2, 1, 1), DataError);
  CHECK_THROWS_AS(s->add_span(0, 0, 3, 1), DataError);
  CHECK_THROWS_AS(s->add_span(0, 0, 0, 0), DataError);
  CHECK_THROWS_AS(s->add_span(0, 0, 0, 13), DataError);
  CHECK(s->add_span(0, 2, 2, 6).span_id > r3.span_id);

  CHECK(s->remove_span(r1.span_id));
  CHECK_FALSE(s->remove_span(r1.span_id));
  CHECK_FALSE(s->remove_span(12345));
  // Removing then re-adding gives a fresh id.
  CHECK(s->add_span(0, 0, 1, 11).span_id != r1.span_id);

  s->set_done(3, true);
  CHECK(s->snapshot().annotated(3));
  s->set_done(3, false);
  CHECK_FALSE(s->snapshot().annotated(3));
  CHECK(s->snapshot().annotated(0));
  CHECK_THROWS_AS(s->set_done(4, true), DataError);

  const auto before = state_of(*s);
  auto reopened = AnnotationSession::open(dir / "s");
  CHECK(state_of(*reopened) == before);
  const auto next = reopened->add_span(1, 0, 0, 3);
  CHECK(next.span_id > r3.span_id + 2);
}

TEST_CASE("export is sorted and round-trips") {
  testutil::TempDir dir("export");
  auto s = AnnotationSession::create(dir / "s", "fr", corpus(), "alice", fixed_clock());
  CHECK(s->export_text() == std::string(kExportHeader) + "\n");
  s->add_span(2, 1, 1, 6);
  s->add_span(0, 1, 2, 2);
  s->add_span(2, 0, 0, 6);
  s->add_span(0, 1, 2, 1);
  s->add_span(0, 0, 0, 3);
  const std::string expected = std::string(kExportHeader) +
                               "\n"
                               "0\t0\t0\t3\talice\n"
                               "0\t1\t2\t1\talice\n"
                               "0\t1\t2\t2\talice\n"
                               "2\t0\t0\t6\talice\n"
                               "2\t1\t1\t6\talice\n";
  CHECK(s->export_text() == expected);

  const auto set = import_annotations(expected);
  CHECK(set.spans.size() == 5);
  CHECK(set.same_spans(s->snapshot()));
  CHECK(export_annotations(set) == expected);
  CHECK(set.done == std::set<std::size_t>{0, 2});

  auto fresh = AnnotationSession::create(dir / "t", "fr", corpus(), "alice", fixed_clock());
  CHECK(fresh->import_set(set) == 5);
  CHECK(fresh->import_set(set) == 0);
  CHECK(fresh->export_text() == expected);

  testutil::write_file(dir / "a.tsv", expected);
  CHECK(read_annotations(dir / "a.tsv").same_spans(set));
  CHECK_THROWS_AS(import_annotations(""), DataError);
  CHECK_THROWS_AS(import_annotations("0\t0\t0\t3\talice\n"), DataError);
  CHECK_THROWS_AS(import_annotations(std::string(kExportHeader) + "\n0\t0\tx\t3\talice\n"), DataError);
  CHECK_THROWS_AS(import_annotations(std::string(kExportHeader) + "\n0\t0\t0\t3\n"), DataError);
}

TEST_CASE("every prefix of the log replays to a committed state") {
  testutil::TempDir dir("wal");
  const fs::path base = dir / "base";
  auto s = AnnotationSession::create(base, "fr", corpus(), "alice", fixed_clock());
  std::vector<std::pair<std::uintmax_t, std::string>> commits{{0, state_of(*s)}};
  auto commit = [&] { commits.emplace_back(fs::file_size(base / "log.wal"), state_of(*s)); };
  const auto a = s->add_span(0, 0, 1, 11);
  commit();
  s->add_span(1, 0, 2, 3);
  commit();
  s->set_done(3, true);
  commit();
  s->remove_span(a.span_id);
  commit();
  s->add_span(2, 0, 0, 6);
  commit();
  s->set_done(3, false);
  commit();
  s.reset();

  const std::string wal = testutil::read_file(base / "log.wal");
  REQUIRE(wal.size() == commits.back().first);
  for (std::size_t len = 0; len <= wal.size(); ++len) {
    const fs::path d = dir / ("p" + std::to_string(len));
    fs::create_directories(d);
    fs::copy_file(base / "meta.json", d / "meta.json");
    fs::copy_file(base / "sentences.txt", d / "sentences.txt");
    testutil::write_file(d / "log.wal", wal.substr(0, len));
    std::size_t k = 0;
    while (k + 1 < commits.size() && commits[k + 1].first <= len) ++k;
    auto r = AnnotationSession::open(d);
    CHECK(state_of(*r) == commits[k].second);
    CHECK(fs::file_size(d / "log.wal") == commits[k].first);
    // The repaired log accepts new records and replays cleanly.
    r->add_span(3, 0, 0, 9);
    const auto after = state_of(*r);
    r.reset();
    CHECK(state_of(*AnnotationSession::open(d)) == after);
    fs::remove_all(d);
  }
}

TEST_CASE("corruption before the last line is an error") {
  testutil::TempDir dir("corrupt");
  auto s = AnnotationSession::create(dir / "s", "fr", corpus(), "alice", fixed_clock());
  s->add_span(0, 0, 1, 11);
  s->add_span(1, 0, 1, 2);
  s.reset();
  std::string wal = testutil::read_file(dir / "s" / "log.wal");
  const std::string good = wal;
  wal[wal.find("ADD") + 5] ^= 1;
  testutil::write_file(dir / "s" / "log.wal", wal);
  CHECK_THROWS_AS(AnnotationSession::open(dir / "s"), DataError);

  // A bad checksum on the final complete line is treated as torn.
  wal = good;
  wal[wal.rfind("ADD") + 5] ^= 1;
  testutil::write_file(dir / "s" / "log.wal", wal);
  CHECK(AnnotationSession::open(dir / "s")->snapshot().spans.size() == 1);

  testutil::write_file(dir / "s" / "sentences.txt", "tampered\nx\ny\nz\n");
  CHECK_THROWS_AS(AnnotationSession::open(dir / "s"), DataError);
}

TEST_CASE("concurrent writers do not lose records") {
  testutil::TempDir dir("concurrent");
  std::vector<Sentence> many;
  for (int i = 0; i < 40; ++i) many.push_back(Sentence::from_raw("a b c d e"));
  auto s = AnnotationSession::create(dir / "s", "c", many, "alice");
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 10; ++i) s->add_span(static_cast<std::size_t>(t * 10 + i), 0, 4, 1 + t);
    });
  }
  for (auto& th : threads) th.join();
  CHECK(s->snapshot().spans.size() == 40);
  const auto text = s->export_text();
  s.reset();
  CHECK(AnnotationSession::open(dir / "s")->export_text() == text);
}

}
