// Tests for corpus.hpp: JSONL parsing, key normalization, filtering rules,
// genre assignment and chart matching.

#include "cantor/corpus.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "cantor/synth.hpp"
#include "test_support.hpp"

using namespace cantor;
using cantor::test::make_song;

namespace {

std::string minimal_record(const std::string& extra = "") {
  return R"({"id":"s1","title":"A Song","artist":"Someone","year":1980,)"
         R"("duration":180.5,"tempo":120.0,"time_signature":4,)"
         R"("terms":[{"term":"rock","weight":0.8}],"segments":[])" +
         extra + "}";
}

bool songs_equal(const SongRecord& a, const SongRecord& b) {
  if (a.id != b.id || a.title != b.title || a.artist != b.artist ||
      a.year != b.year || a.duration != b.duration || a.tempo != b.tempo ||
      a.time_signature != b.time_signature || a.hot100 != b.hot100 ||
      a.terms.size() != b.terms.size() ||
      a.segments.size() != b.segments.size())
    return false;
  for (std::size_t i = 0; i < a.terms.size(); ++i)
    if (!(a.terms[i] == b.terms[i])) return false;
  for (std::size_t i = 0; i < a.segments.size(); ++i) {
    if (a.segments[i].start != b.segments[i].start ||
        a.segments[i].loudness_max != b.segments[i].loudness_max ||
        a.segments[i].pitches != b.segments[i].pitches ||
        a.segments[i].timbre != b.segments[i].timbre)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("normalize_key folds case, accents and punctuation") {
  REQUIRE(normalize_key("Hey Jude", "The Beatles") == "hey jude|the beatles");
  REQUIRE(normalize_key("", "") == "|");
  REQUIRE(normalize_key("Café", "X") == "cafe|x");
  REQUIRE(normalize_key("Hey Jude!", "THE BEATLES") ==
          normalize_key("hey jude", "The Beatles"));
  REQUIRE(normalize_key("  spaced   out ", "a\tb") == "spaced out|a b");
  REQUIRE(normalize_key("Señor Blues", "Horace") == "senor blues|horace");
  REQUIRE(normalize_key("Łódź", "Œuvre") == "lodz|oeuvre");
}

TEST_CASE("parse_song accepts the documented schema") {
  SECTION("zero segments is a valid song") {
    SongRecord song = parse_song(minimal_record());
    REQUIRE(song.id == "s1");
    REQUIRE(song.segments.empty());
    REQUIRE(song.year == 1980);
    REQUIRE(song.duration == 180.5);
    REQUIRE_FALSE(song.hot100);
  }
  SECTION("nullable fields come back absent") {
    std::string text =
        R"({"id":"s2","title":"T","artist":"A","year":null,"duration":null,)"
        R"("tempo":0.0,"time_signature":0,"terms":[],"segments":[]})";
    SongRecord song = parse_song(text);
    REQUIRE_FALSE(song.year.has_value());
    REQUIRE_FALSE(song.duration.has_value());
  }
  SECTION("segments parse with all arrays") {
    std::string seg =
        R"({"start":1.5,"loudness_max":-12.25,)"
        R"("pitches":[1,0,0,0,0,0,0,0,0,0,0,0.5],)"
        R"("timbre":[0,1,2,3,4,5,6,7,8,9,10,11]})";
    std::string text =
        R"({"id":"s3","title":"T","artist":"A","tempo":100,)"
        R"("time_signature":3,"terms":[],"segments":[)" + seg + "]}";
    SongRecord song = parse_song(text);
    REQUIRE(song.segments.size() == 1);
    REQUIRE(song.segments[0].start == 1.5);
    REQUIRE(song.segments[0].pitches[11] == 0.5);
    REQUIRE(song.segments[0].timbre[11] == 11.0);
  }
}

TEST_CASE("parse_song rejects schema violations") {
  SECTION("pitches array of length 11") {
    std::string seg =
        R"({"start":0,"loudness_max":-1,)"
        R"("pitches":[0,0,0,0,0,0,0,0,0,0,0],)"
        R"("timbre":[0,0,0,0,0,0,0,0,0,0,0,0]})";
    std::string text =
        R"({"id":"x","title":"T","artist":"A","tempo":100,)"
        R"("time_signature":4,"terms":[],"segments":[)" + seg + "]}";
    REQUIRE_THROWS_AS(parse_song(text), SchemaError);
  }
  SECTION("malformed JSON carries the line context") {
    try {
      parse_song("{not json", 17);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      REQUIRE(std::string(e.what()).find("line 17") != std::string::npos);
    }
  }
  SECTION("unknown field") {
    REQUIRE_THROWS_AS(parse_song(minimal_record(R"(,"loudness":1)")),
                      SchemaError);
  }
  SECTION("missing tempo") {
    std::string text =
        R"({"id":"x","title":"T","artist":"A","time_signature":4,)"
        R"("terms":[],"segments":[]})";
    REQUIRE_THROWS_AS(parse_song(text), SchemaError);
  }
  SECTION("term weight out of range") {
    std::string text =
        R"({"id":"x","title":"T","artist":"A","tempo":1,"time_signature":4,)"
        R"("terms":[{"term":"rock","weight":1.5}],"segments":[]})";
    REQUIRE_THROWS_AS(parse_song(text), SchemaError);
  }
  SECTION("chroma value out of [0,1]") {
    std::string seg =
        R"({"start":0,"loudness_max":-1,)"
        R"("pitches":[2,0,0,0,0,0,0,0,0,0,0,0],)"
        R"("timbre":[0,0,0,0,0,0,0,0,0,0,0,0]})";
    std::string text =
        R"({"id":"x","title":"T","artist":"A","tempo":1,"time_signature":4,)"
        R"("terms":[],"segments":[)" + seg + "]}";
    REQUIRE_THROWS_AS(parse_song(text), SchemaError);
  }
  SECTION("segments out of order") {
    std::string segs =
        R"({"start":2,"loudness_max":-1,"pitches":[0,0,0,0,0,0,0,0,0,0,0,0],)"
        R"("timbre":[0,0,0,0,0,0,0,0,0,0,0,0]},)"
        R"({"start":1,"loudness_max":-1,"pitches":[0,0,0,0,0,0,0,0,0,0,0,0],)"
        R"("timbre":[0,0,0,0,0,0,0,0,0,0,0,0]})";
    std::string text =
        R"({"id":"x","title":"T","artist":"A","tempo":1,"time_signature":4,)"
        R"("terms":[],"segments":[)" + segs + "]}";
    REQUIRE_THROWS_AS(parse_song(text), SchemaError);
  }
}

TEST_CASE("parse round-trips serialize for synthetic songs") {
  SynthSpec spec;
  spec.n_songs = 12;
  spec.segments_per_song = 20;
  spec.seed = 99;
  spec.hot100_fraction = 0.5;
  spec.plan(Feature::pitch).generator =
      SymbolGenerator::iid_uniform({0, 5, 9, 4095});
  spec.plan(Feature::loudness).generator =
      SymbolGenerator::iid_uniform({0, 1, 2});
  spec.plan(Feature::timbre).generator =
      SymbolGenerator::deterministic_cycle({0, 1, 177146});
  spec.plan(Feature::rhythm).generator =
      SymbolGenerator::iid_uniform({0, 1, 2, 3});
  SynthCorpus corpus = generate_corpus(spec);
  for (const auto& song : corpus.songs) {
    SongRecord back = parse_song(serialize_song(song));
    REQUIRE(songs_equal(song, back));
  }
}

TEST_CASE("filter_corpus applies the documented removal order") {
  FilterConfig config;

  SECTION("commentary token match is whole-word, case-insensitive") {
    auto interview = make_song("a", 0);
    interview.title = "Artist Interview, Pt. 2";
    auto introspection = make_song("b", 0);
    introspection.title = "Introspection";
    auto [kept, report] = filter_corpus({interview, introspection}, config);
    REQUIRE(kept.size() == 1);
    REQUIRE(kept[0].title == "Introspection");
    REQUIRE(report.removed_commentary == 1);
  }
  SECTION("empty input gives empty output and zero counters") {
    auto [kept, report] = filter_corpus({}, config);
    REQUIRE(kept.empty());
    REQUIRE(report.input_count == 0);
    REQUIRE(report.output_count == 0);
    REQUIRE(report.removed_duplicates == 0);
    REQUIRE(report.removed_missing_metadata == 0);
    REQUIRE(report.removed_commentary == 0);
    REQUIRE(report.removed_out_of_range == 0);
  }
  SECTION("duplicates keep the earliest year, absent year sorts last") {
    auto late = make_song("late", 0);
    late.year = 1990;
    auto early = make_song("early", 0);
    early.year = 1971;
    auto unknown = make_song("unknown", 0);
    unknown.year.reset();
    auto [kept, report] = filter_corpus({late, early, unknown}, config);
    REQUIRE(kept.size() == 1);
    REQUIRE(kept[0].id == "early");
    REQUIRE(report.removed_duplicates == 2);
  }
  SECTION("missing terms or duration is removed") {
    auto no_terms = make_song("a", 0);
    no_terms.title = "Unique A";
    no_terms.terms.clear();
    auto no_duration = make_song("b", 0);
    no_duration.title = "Unique B";
    no_duration.duration.reset();
    auto [kept, report] = filter_corpus({no_terms, no_duration}, config);
    REQUIRE(kept.empty());
    REQUIRE(report.removed_missing_metadata == 2);
  }
  SECTION("year range removes out-of-range years and keeps absent years") {
    auto a = make_song("a", 0);
    a.title = "U1";
    a.year = 1959;
    auto b = make_song("b", 0);
    b.title = "U2";
    b.year = 1960;
    auto c = make_song("c", 0);
    c.title = "U3";
    c.year = 2010;
    auto d = make_song("d", 0);
    d.title = "U4";
    d.year = 2011;
    auto e = make_song("e", 0);
    e.title = "U5";
    e.year.reset();
    auto [kept, report] = filter_corpus({a, b, c, d, e}, config);
    REQUIRE(kept.size() == 3);
    REQUIRE(report.removed_out_of_range == 2);

    config.year_filter_enabled = false;
    auto [kept2, report2] = filter_corpus({a, b, c, d, e}, config);
    REQUIRE(kept2.size() == 5);
    REQUIRE(report2.removed_out_of_range == 0);
  }
  SECTION("counters always sum to input minus output") {
    std::vector<SongRecord> songs;
    for (int i = 0; i < 30; ++i) {
      auto s = make_song("id" + std::to_string(i), 0);
      if (i % 7 == 0) s.title = "Conference Talk " + std::to_string(i);
      if (i % 5 == 0) s.terms.clear();
      if (i % 4 == 0) s.title = "Shared Title";
      if (i % 3 == 0) s.year = 1900 + i;
      songs.push_back(s);
    }
    auto [kept, report] = filter_corpus(songs, config);
    REQUIRE(report.input_count == songs.size());
    REQUIRE(report.output_count == kept.size());
    REQUIRE(report.input_count - report.output_count ==
            report.removed_duplicates + report.removed_missing_metadata +
                report.removed_commentary + report.removed_out_of_range);
  }
  SECTION("filtering is idempotent") {
    std::vector<SongRecord> songs;
    for (int i = 0; i < 40; ++i) {
      auto s = make_song("id" + std::to_string(i), 0);
      s.title = "Track " + std::to_string(i % 11);
      s.year = 1950 + (i % 70);
      if (i % 6 == 0) s.duration.reset();
      songs.push_back(s);
    }
    auto [once, report1] = filter_corpus(songs, config);
    auto [twice, report2] = filter_corpus(once, config);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i)
      REQUIRE(once[i].id == twice[i].id);
    REQUIRE(report2.input_count == report2.output_count);
  }
}

TEST_CASE("assign_genre picks the strongest term") {
  auto song = make_song("s", 0);
  SECTION("unique maximum") {
    song.terms = {{"jazz", 0.9}, {"bop", 0.5}};
    REQUIRE(assign_genre(song) == "jazz");
  }
  SECTION("no terms means absent") {
    song.terms.clear();
    REQUIRE_FALSE(assign_genre(song).has_value());
  }
  SECTION("ties break to the lexicographically smallest term") {
    song.terms = {{"rock", 0.7}, {"pop", 0.7}};
    REQUIRE(assign_genre(song) == "pop");
  }
  SECTION("result is always a member term") {
    song.terms = {{"c", 0.2}, {"a", 0.4}, {"b", 0.4}};
    auto genre = assign_genre(song);
    REQUIRE(genre.has_value());
    bool member = false;
    for (const auto& t : song.terms) member |= t.term == *genre;
    REQUIRE(member);
  }
}

TEST_CASE("match_charts flags songs through normalized keys") {
  auto a = make_song("a", 0);
  a.title = "Hey Jude!";
  a.artist = "The Beatles";
  auto b = make_song("b", 0);
  b.title = "Something Else";
  b.artist = "Someone";
  std::vector<SongRecord> songs = {a, b};

  SECTION("case and punctuation variants match") {
    std::vector<ChartEntry> entries = {{"hey jude", "the beatles"}};
    match_charts(songs, entries);
    REQUIRE(songs[0].hot100);
    REQUIRE_FALSE(songs[1].hot100);
  }
  SECTION("no entries flags nothing") {
    songs[0].hot100 = true;  // stale flag must be overwritten
    match_charts(songs, {});
    REQUIRE_FALSE(songs[0].hot100);
    REQUIRE_FALSE(songs[1].hot100);
  }
}

TEST_CASE("chart csv loads quoted fields and validates the header") {
  auto path = std::filesystem::temp_directory_path() / "cantor_charts.csv";
  write_file(path, "title,artist\n\"Hello, Goodbye\",The Beatles\nYesterday,"
                   "\"Beatles, The\"\n");
  auto entries = load_chart_csv(path);
  REQUIRE(entries.size() == 2);
  REQUIRE(entries[0].title == "Hello, Goodbye");
  REQUIRE(entries[1].artist == "Beatles, The");

  write_file(path, "name,artist\nX,Y\n");
  REQUIRE_THROWS_AS(load_chart_csv(path), ParseError);
  std::filesystem::remove(path);
}
