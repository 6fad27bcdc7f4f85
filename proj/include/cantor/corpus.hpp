#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cantor/csv.hpp"
#include "cantor/errors.hpp"

namespace cantor {

// ---------------------------------------------------------------------------
// Data model
// ---------------------------------------------------------------------------

inline constexpr int kPitchClasses = 12;
inline constexpr int kTimbreComponents = 12;

/// One analyzed slice of audio, aligned to a note onset.
struct Segment {
  double start = 0.0;          // seconds from song start, >= 0
  double loudness_max = 0.0;   // peak level in dB (typically negative)
  std::array<double, kPitchClasses> pitches{};   // chroma salience, each in [0,1]
  std::array<double, kTimbreComponents> timbre{};  // unbounded spectral components
};

struct TermWeight {
  std::string term;
  double weight = 0.0;  // in [0,1]

  bool operator==(const TermWeight&) const = default;
};

/// One song: metadata plus the ordered segment list the codecs consume.
struct SongRecord {
  std::string id;
  std::string title;
  std::string artist;
  std::optional<int> year;
  std::optional<double> duration;  // seconds, > 0 when present
  double tempo = 0.0;              // BPM, >= 0
  int time_signature = 0;
  std::vector<TermWeight> terms;
  std::vector<Segment> segments;   // sorted by start, ties allowed
  bool hot100 = false;
};

struct FilterReport {
  std::uint64_t input_count = 0;
  std::uint64_t removed_duplicates = 0;
  std::uint64_t removed_missing_metadata = 0;
  std::uint64_t removed_commentary = 0;
  std::uint64_t removed_out_of_range = 0;
  std::uint64_t output_count = 0;
};

struct FilterConfig {
  std::vector<std::string> commentary_tokens = {
      "interview", "commentary", "introduction",
      "discuss",   "conference", "intro"};
  bool year_filter_enabled = true;
  int year_min = 1960;
  int year_max = 2010;
};

struct ChartEntry {
  std::string title;
  std::string artist;
};

// ---------------------------------------------------------------------------
// Key normalization
// ---------------------------------------------------------------------------

namespace detail {

/// ASCII replacement for an accented Latin-1 / Latin Extended-A codepoint,
/// or nullptr when the codepoint carries no letter we can fold.
inline const char* fold_accent(std::uint32_t cp) {
  struct Run {
    std::uint32_t lo, hi;
    const char* out;
  };
  // Contiguous codepoint runs sharing one base letter.
  static constexpr Run runs[] = {
      {0x00C0, 0x00C5, "a"},  {0x00C6, 0x00C6, "ae"}, {0x00C7, 0x00C7, "c"},
      {0x00C8, 0x00CB, "e"},  {0x00CC, 0x00CF, "i"},  {0x00D0, 0x00D0, "d"},
      {0x00D1, 0x00D1, "n"},  {0x00D2, 0x00D6, "o"},  {0x00D8, 0x00D8, "o"},
      {0x00D9, 0x00DC, "u"},  {0x00DD, 0x00DD, "y"},  {0x00DE, 0x00DE, "th"},
      {0x00DF, 0x00DF, "ss"}, {0x00E0, 0x00E5, "a"},  {0x00E6, 0x00E6, "ae"},
      {0x00E7, 0x00E7, "c"},  {0x00E8, 0x00EB, "e"},  {0x00EC, 0x00EF, "i"},
      {0x00F0, 0x00F0, "d"},  {0x00F1, 0x00F1, "n"},  {0x00F2, 0x00F6, "o"},
      {0x00F8, 0x00F8, "o"},  {0x00F9, 0x00FC, "u"},  {0x00FD, 0x00FD, "y"},
      {0x00FE, 0x00FE, "th"}, {0x00FF, 0x00FF, "y"},  {0x0100, 0x0105, "a"},
      {0x0106, 0x010D, "c"},  {0x010E, 0x0111, "d"},  {0x0112, 0x011B, "e"},
      {0x011C, 0x0123, "g"},  {0x0124, 0x0127, "h"},  {0x0128, 0x0131, "i"},
      {0x0132, 0x0133, "ij"}, {0x0134, 0x0135, "j"},  {0x0136, 0x0138, "k"},
      {0x0139, 0x0142, "l"},  {0x0143, 0x0149, "n"},  {0x014A, 0x014B, "n"},
      {0x014C, 0x0151, "o"},  {0x0152, 0x0153, "oe"}, {0x0154, 0x0159, "r"},
      {0x015A, 0x0161, "s"},  {0x0162, 0x0167, "t"},  {0x0168, 0x0173, "u"},
      {0x0174, 0x0175, "w"},  {0x0176, 0x0178, "y"},  {0x0179, 0x017E, "z"},
      {0x017F, 0x017F, "s"},
  };
  for (const Run& r : runs) {
    if (cp >= r.lo && cp <= r.hi) return r.out;
  }
  return nullptr;
}

/// Decodes one UTF-8 codepoint starting at s[i]; advances i past it.
/// Invalid bytes are consumed one at a time and reported as U+FFFD.
inline std::uint32_t next_codepoint(std::string_view s, std::size_t& i) {
  const auto byte = [&](std::size_t k) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(s[k]));
  };
  std::uint32_t b0 = byte(i);
  std::size_t len = 0;
  std::uint32_t cp = 0;
  if (b0 < 0x80) {
    ++i;
    return b0;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  if (i + len > s.size()) {
    ++i;
    return 0xFFFD;
  }
  for (std::size_t k = 1; k < len; ++k) {
    std::uint32_t b = byte(i + k);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += len;
  return cp;
}

/// Lowercase, accent-fold, strip punctuation, collapse whitespace.
inline std::string normalize_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  auto push = [&](char c) {
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    out += c;
  };
  std::size_t i = 0;
  while (i < s.size()) {
    std::uint32_t cp = next_codepoint(s, i);
    if (cp < 0x80) {
      char c = static_cast<char>(cp);
      if (c >= 'A' && c <= 'Z') {
        push(static_cast<char>(c - 'A' + 'a'));
      } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
        push(c);
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' ||
                 c == '\f' || c == '\v') {
        pending_space = true;
      }
      // other ASCII (punctuation) dropped
    } else if (const char* folded = fold_accent(cp)) {
      for (const char* p = folded; *p; ++p) push(*p);
    }
    // unfoldable non-ASCII dropped, like punctuation
  }
  return out;
}

/// Lowercased alphanumeric words of a title, for whole-word token matching.
inline std::vector<std::string> title_words(std::string_view title) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : title) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

}  // namespace detail

/// Canonical matching key: lowercase, accents folded to base letters,
/// punctuation removed, whitespace collapsed, "title|artist".
inline std::string normalize_key(std::string_view title,
                                 std::string_view artist) {
  return detail::normalize_text(title) + "|" + detail::normalize_text(artist);
}

// ---------------------------------------------------------------------------
// JSONL ingestion
// ---------------------------------------------------------------------------

namespace detail {

inline double require_finite(const nlohmann::json& j, const char* field) {
  if (!j.is_number())
    throw SchemaError(std::string(field) + ": expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v))
    throw SchemaError(std::string(field) + ": not finite");
  return v;
}

template <std::size_t N>
std::array<double, N> require_array(const nlohmann::json& j, const char* field,
                                    double lo, double hi) {
  if (!j.is_array() || j.size() != N)
    throw SchemaError(std::string(field) + ": expected array of length " +
                      std::to_string(N));
  std::array<double, N> out{};
  for (std::size_t k = 0; k < N; ++k) {
    out[k] = require_finite(j[k], field);
    if (out[k] < lo || out[k] > hi)
      throw SchemaError(std::string(field) + "[" + std::to_string(k) +
                        "]: value out of range");
  }
  return out;
}

}  // namespace detail

/// Parses one JSONL ingestion record. The schema is fixed: id, title,
/// artist, year (nullable), duration (nullable), tempo, time_signature,
/// terms [{term, weight}], segments [{start, loudness_max, pitches[12],
/// timbre[12]}], plus the optional hot100 flag that serialize_song emits.
/// Unknown fields and invariant violations raise SchemaError; text that is
/// not a JSON object raises ParseError with the line context.
inline SongRecord parse_song(std::string_view record_text,
                             std::size_t line_number = 0) {
  const auto context = [&]() -> std::string {
    std::string where =
        line_number ? " (line " + std::to_string(line_number) + ")" : "";
    std::string snippet(record_text.substr(0, 80));
    return where + ": " + snippet;
  };

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(record_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad JSONL record" + context() + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError("record is not an object" + context());

  try {
    static const std::unordered_set<std::string> known = {
        "id",   "title", "artist", "year",     "duration",
        "tempo", "time_signature", "terms",    "segments", "hot100"};
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!known.count(it.key()))
        throw SchemaError("unknown field '" + it.key() + "'");
    }
    for (const char* req : {"id", "title", "artist", "tempo",
                            "time_signature", "terms", "segments"}) {
      if (!j.contains(req))
        throw SchemaError("missing field '" + std::string(req) + "'");
    }

    SongRecord song;
    if (!j["id"].is_string()) throw SchemaError("id: expected string");
    song.id = j["id"].get<std::string>();
    if (song.id.empty()) throw SchemaError("id: must be non-empty");
    if (!j["title"].is_string()) throw SchemaError("title: expected string");
    song.title = j["title"].get<std::string>();
    if (!j["artist"].is_string()) throw SchemaError("artist: expected string");
    song.artist = j["artist"].get<std::string>();

    if (j.contains("year") && !j["year"].is_null()) {
      if (!j["year"].is_number_integer())
        throw SchemaError("year: expected integer or null");
      song.year = j["year"].get<int>();
    }
    if (j.contains("duration") && !j["duration"].is_null()) {
      double d = detail::require_finite(j["duration"], "duration");
      if (d <= 0.0) throw SchemaError("duration: must be > 0");
      song.duration = d;
    }
    song.tempo = detail::require_finite(j["tempo"], "tempo");
    if (song.tempo < 0.0) throw SchemaError("tempo: must be >= 0");
    if (!j["time_signature"].is_number_integer())
      throw SchemaError("time_signature: expected integer");
    song.time_signature = j["time_signature"].get<int>();
    if (song.time_signature < 0)
      throw SchemaError("time_signature: must be >= 0");

    if (!j["terms"].is_array()) throw SchemaError("terms: expected array");
    for (const auto& t : j["terms"]) {
      if (!t.is_object() || !t.contains("term") || !t.contains("weight") ||
          !t["term"].is_string())
        throw SchemaError("terms: expected objects {term, weight}");
      TermWeight tw;
      tw.term = t["term"].get<std::string>();
      tw.weight = detail::require_finite(t["weight"], "terms.weight");
      if (tw.weight < 0.0 || tw.weight > 1.0)
        throw SchemaError("terms.weight: must be in [0,1]");
      song.terms.push_back(std::move(tw));
    }

    if (!j["segments"].is_array())
      throw SchemaError("segments: expected array");
    double prev_start = -std::numeric_limits<double>::infinity();
    for (const auto& s : j["segments"]) {
      if (!s.is_object()) throw SchemaError("segments: expected objects");
      Segment seg;
      seg.start = detail::require_finite(s.at("start"), "segments.start");
      if (seg.start < 0.0) throw SchemaError("segments.start: must be >= 0");
      if (seg.start < prev_start)
        throw SchemaError("segments: starts must be non-decreasing");
      prev_start = seg.start;
      seg.loudness_max =
          detail::require_finite(s.at("loudness_max"), "segments.loudness_max");
      seg.pitches = detail::require_array<12>(s.at("pitches"),
                                              "segments.pitches", 0.0, 1.0);
      seg.timbre = detail::require_array<12>(
          s.at("timbre"), "segments.timbre",
          -std::numeric_limits<double>::max(),
          std::numeric_limits<double>::max());
      song.segments.push_back(seg);
    }

    if (j.contains("hot100")) {
      if (!j["hot100"].is_boolean())
        throw SchemaError("hot100: expected boolean");
      song.hot100 = j["hot100"].get<bool>();
    }
    return song;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("bad record" + context() + ": " + e.what());
  } catch (const SchemaError& e) {
    throw SchemaError(std::string(e.what()) + context());
  }
}

/// Inverse of parse_song; one line, no trailing newline.
inline std::string serialize_song(const SongRecord& song) {
  nlohmann::ordered_json j;
  j["id"] = song.id;
  j["title"] = song.title;
  j["artist"] = song.artist;
  if (song.year)
    j["year"] = *song.year;
  else
    j["year"] = nullptr;
  if (song.duration)
    j["duration"] = *song.duration;
  else
    j["duration"] = nullptr;
  j["tempo"] = song.tempo;
  j["time_signature"] = song.time_signature;
  j["terms"] = nlohmann::ordered_json::array();
  for (const auto& t : song.terms)
    j["terms"].push_back({{"term", t.term}, {"weight", t.weight}});
  j["segments"] = nlohmann::ordered_json::array();
  for (const auto& s : song.segments) {
    nlohmann::ordered_json seg;
    seg["start"] = s.start;
    seg["loudness_max"] = s.loudness_max;
    seg["pitches"] = s.pitches;
    seg["timbre"] = s.timbre;
    j["segments"].push_back(std::move(seg));
  }
  j["hot100"] = song.hot100;
  return j.dump();
}

/// Calls fn(line, line_number) for every non-empty line of a JSONL file.
inline void for_each_jsonl_line(
    const std::filesystem::path& path,
    const std::function<void(std::string_view, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(line, line_number);
  }
}

inline std::vector<SongRecord> load_corpus_jsonl(
    const std::filesystem::path& path) {
  std::vector<SongRecord> songs;
  for_each_jsonl_line(path, [&](std::string_view line, std::size_t n) {
    songs.push_back(parse_song(line, n));
  });
  return songs;
}

inline void save_corpus_jsonl(const std::filesystem::path& path,
                              std::span<const SongRecord> songs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& s : songs) out << serialize_song(s) << '\n';
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

/// Applies the corpus filters in order: duplicates (normalized title/artist
/// key, keeping the earliest year; absent year sorts last, id breaks ties),
/// missing genre terms or duration, commentary tokens as whole words of the
/// title, then the optional year range. Survivor order is the input order.
inline std::pair<std::vector<SongRecord>, FilterReport> filter_corpus(
    std::vector<SongRecord> songs, const FilterConfig& config = {}) {
  FilterReport report;
  report.input_count = songs.size();

  // Duplicate pass: winner per key is min (year-or-max, id).
  struct Best {
    std::size_t index;
    long long year_key;
  };
  std::unordered_map<std::string, Best> winners;
  winners.reserve(songs.size());
  for (std::size_t i = 0; i < songs.size(); ++i) {
    const auto& s = songs[i];
    std::string key = normalize_key(s.title, s.artist);
    long long year_key =
        s.year ? *s.year : std::numeric_limits<long long>::max();
    auto [it, inserted] = winners.emplace(key, Best{i, year_key});
    if (!inserted) {
      const auto& cur = songs[it->second.index];
      if (year_key < it->second.year_key ||
          (year_key == it->second.year_key && s.id < cur.id)) {
        it->second = Best{i, year_key};
      }
    }
  }
  std::vector<bool> keep(songs.size(), false);
  for (const auto& [key, best] : winners) keep[best.index] = true;
  report.removed_duplicates = songs.size() - winners.size();

  std::unordered_set<std::string> tokens(config.commentary_tokens.begin(),
                                         config.commentary_tokens.end());

  std::vector<SongRecord> out;
  out.reserve(winners.size());
  for (std::size_t i = 0; i < songs.size(); ++i) {
    if (!keep[i]) continue;
    SongRecord& s = songs[i];
    if (s.terms.empty() || !s.duration) {
      ++report.removed_missing_metadata;
      continue;
    }
    bool commentary = false;
    for (const auto& word : detail::title_words(s.title)) {
      if (tokens.count(word)) {
        commentary = true;
        break;
      }
    }
    if (commentary) {
      ++report.removed_commentary;
      continue;
    }
    // Absent year survives the range filter; year-dependent studies skip it.
    if (config.year_filter_enabled && s.year &&
        (*s.year < config.year_min || *s.year > config.year_max)) {
      ++report.removed_out_of_range;
      continue;
    }
    out.push_back(std::move(s));
  }
  report.output_count = out.size();
  return {std::move(out), report};
}

/// Term with the strongest weight; lexicographically smallest term on ties;
/// absent when the song has no terms.
inline std::optional<std::string> assign_genre(const SongRecord& song) {
  const TermWeight* best = nullptr;
  for (const auto& t : song.terms) {
    if (!best || t.weight > best->weight ||
        (t.weight == best->weight && t.term < best->term)) {
      best = &t;
    }
  }
  if (!best) return std::nullopt;
  return best->term;
}

/// Sets hot100 on every song whose normalized (title, artist) key appears
/// in the chart list. Existing flags are overwritten.
inline void match_charts(std::vector<SongRecord>& songs,
                         std::span<const ChartEntry> chart_entries) {
  std::unordered_set<std::string> keys;
  keys.reserve(chart_entries.size());
  for (const auto& e : chart_entries)
    keys.insert(normalize_key(e.title, e.artist));
  for (auto& s : songs)
    s.hot100 = keys.count(normalize_key(s.title, s.artist)) > 0;
}

/// Reads the chart list: CSV with header "title,artist".
inline std::vector<ChartEntry> load_chart_csv(
    const std::filesystem::path& path) {
  std::string text = read_file(path);
  // Strip a UTF-8 BOM if present.
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0)
    text.erase(0, 3);
  auto rows = parse_csv(text);
  if (rows.empty() || rows[0].size() != 2 || rows[0][0] != "title" ||
      rows[0][1] != "artist")
    throw ParseError("chart csv: expected header \"title,artist\"");
  std::vector<ChartEntry> entries;
  entries.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 2)
      throw ParseError("chart csv: row " + std::to_string(i + 1) +
                       " does not have 2 fields");
    entries.push_back({rows[i][0], rows[i][1]});
  }
  return entries;
}

}  // namespace cantor
