#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cantor/corpus.hpp"
#include "cantor/errors.hpp"

namespace cantor {

enum class Feature { pitch = 0, loudness = 1, timbre = 2, rhythm = 3 };

inline constexpr std::array<Feature, 4> kAllFeatures = {
    Feature::pitch, Feature::loudness, Feature::timbre, Feature::rhythm};

inline constexpr const char* feature_name(Feature f) {
  switch (f) {
    case Feature::pitch: return "pitch";
    case Feature::loudness: return "loudness";
    case Feature::timbre: return "timbre";
    case Feature::rhythm: return "rhythm";
  }
  return "?";
}

inline std::optional<Feature> feature_from_name(std::string_view name) {
  for (Feature f : kAllFeatures)
    if (name == feature_name(f)) return f;
  return std::nullopt;
}

inline constexpr int kUsedTimbreComponents = kTimbreComponents - 1;  // 11
inline constexpr std::uint32_t kPitchAlphabet = 1u << kPitchClasses;  // 4096
inline constexpr std::uint32_t kTimbreAlphabet = 177147;              // 3^11

/// Free codec parameters. Defaults follow the documented choices; all are
/// overridable through the config file.
struct CodecConfig {
  double pitch_threshold = 0.5;      // chroma salience cutoff, in (0,1]
  double loudness_bin_width = 5.0;   // dB per loudness bin, > 0
  int loudness_min_bin = -12;        // raw bin mapped to symbol 0
  int rhythm_cap = 64;               // inclusive upper bound on rhythm symbols
  int timbre_drop_component = 0;     // component excluded from timbre codewords

  void validate() const {
    if (!(pitch_threshold > 0.0 && pitch_threshold <= 1.0))
      throw ConfigError("pitch_threshold must be in (0,1]");
    if (!(loudness_bin_width > 0.0))
      throw ConfigError("loudness_bin_width must be > 0");
    if (rhythm_cap < 1) throw ConfigError("rhythm_cap must be >= 1");
    if (timbre_drop_component < 0 ||
        timbre_drop_component >= kTimbreComponents)
      throw ConfigError("timbre_drop_component must be in [0,11]");
  }
};

/// A song rendered as discrete symbols for one feature.
struct CodewordSequence {
  Feature feature = Feature::pitch;
  std::vector<std::uint32_t> symbols;
  std::optional<std::uint32_t> alphabet_hint;  // exclusive upper bound
};

/// Tercile thresholds for the 11 used timbre components, in original
/// component order with drop_component skipped.
struct TimbreCalibration {
  int drop_component = 0;
  std::array<double, kUsedTimbreComponents> lower{};
  std::array<double, kUsedTimbreComponents> upper{};

  /// Fixed calibration matching the synthetic generator's planted timbre
  /// values (-1 / 0 / +1 per trit).
  static TimbreCalibration reference(int drop_component = 0) {
    TimbreCalibration cal;
    cal.drop_component = drop_component;
    cal.lower.fill(-0.5);
    cal.upper.fill(0.5);
    return cal;
  }
};

namespace detail {

inline constexpr std::array<std::uint32_t, kUsedTimbreComponents + 1>
make_pow3() {
  std::array<std::uint32_t, kUsedTimbreComponents + 1> p{};
  p[0] = 1;
  for (std::size_t i = 1; i < p.size(); ++i) p[i] = p[i - 1] * 3;
  return p;
}
inline constexpr auto kPow3 = make_pow3();

/// Nearest-rank quantile: the ceil(p*n)-th smallest value (1-indexed).
inline double nearest_rank_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty())
    throw InvalidArgumentError("nearest_rank_quantile: empty input");
  auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

inline void require_segments(const SongRecord& song, const char* op) {
  if (song.segments.empty())
    throw InsufficientDataError(std::string(op) + ": song '" + song.id +
                                "' has no segments");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pitch
// ---------------------------------------------------------------------------

/// Packs a 12-entry chroma vector into one codeword: bit k set iff
/// pitches[k] >= threshold, bit 0 = pitch class C.
inline std::uint32_t encode_pitch_segment(
    const std::array<double, kPitchClasses>& pitches, double threshold) {
  std::uint32_t symbol = 0;
  for (int k = 0; k < kPitchClasses; ++k)
    if (pitches[k] >= threshold) symbol |= (1u << k);
  return symbol;
}

inline std::array<bool, kPitchClasses> decode_pitch_symbol(
    std::uint32_t symbol) {
  std::array<bool, kPitchClasses> bits{};
  for (int k = 0; k < kPitchClasses; ++k) bits[k] = (symbol >> k) & 1u;
  return bits;
}

inline CodewordSequence pitch_codewords(const SongRecord& song,
                                        const CodecConfig& config = {}) {
  detail::require_segments(song, "pitch_codewords");
  CodewordSequence seq;
  seq.feature = Feature::pitch;
  seq.alphabet_hint = kPitchAlphabet;
  seq.symbols.reserve(song.segments.size());
  for (const auto& seg : song.segments)
    seq.symbols.push_back(
        encode_pitch_segment(seg.pitches, config.pitch_threshold));
  return seq;
}

// ---------------------------------------------------------------------------
// Timbre
// ---------------------------------------------------------------------------

/// Empirical tercile thresholds (nearest-rank 1/3 and 2/3 quantiles) per
/// used component, pooled over every segment of the sample.
inline TimbreCalibration calibrate_timbre(std::span<const SongRecord> sample,
                                          const CodecConfig& config = {}) {
  std::array<std::vector<double>, kUsedTimbreComponents> values;
  for (const auto& song : sample) {
    for (const auto& seg : song.segments) {
      int used = 0;
      for (int c = 0; c < kTimbreComponents; ++c) {
        if (c == config.timbre_drop_component) continue;
        values[used++].push_back(seg.timbre[c]);
      }
    }
  }
  if (values[0].empty())
    throw CalibrationError("calibrate_timbre: sample has no segments");
  TimbreCalibration cal;
  cal.drop_component = config.timbre_drop_component;
  for (int i = 0; i < kUsedTimbreComponents; ++i) {
    std::sort(values[i].begin(), values[i].end());
    cal.lower[i] = detail::nearest_rank_quantile(values[i], 1.0 / 3.0);
    cal.upper[i] = detail::nearest_rank_quantile(values[i], 2.0 / 3.0);
  }
  return cal;
}

/// Trit for one component value: 0 below lower, 1 in [lower, upper),
/// 2 at or above upper.
inline int timbre_trit(double value, double lower, double upper) {
  if (value < lower) return 0;
  if (value < upper) return 1;
  return 2;
}

/// Trits packed base-3, least significant trit first, component order
/// preserved (drop_component skipped).
inline std::uint32_t encode_timbre_segment(
    const std::array<double, kTimbreComponents>& timbre,
    const TimbreCalibration& cal) {
  std::uint32_t symbol = 0;
  int used = 0;
  for (int c = 0; c < kTimbreComponents; ++c) {
    if (c == cal.drop_component) continue;
    symbol += static_cast<std::uint32_t>(
                  timbre_trit(timbre[c], cal.lower[used], cal.upper[used])) *
              detail::kPow3[used];
    ++used;
  }
  return symbol;
}

inline std::array<int, kUsedTimbreComponents> decode_timbre_symbol(
    std::uint32_t symbol) {
  std::array<int, kUsedTimbreComponents> trits{};
  for (int i = 0; i < kUsedTimbreComponents; ++i) {
    trits[i] = static_cast<int>(symbol % 3);
    symbol /= 3;
  }
  return trits;
}

inline CodewordSequence timbre_codewords(const SongRecord& song,
                                         const TimbreCalibration& cal) {
  detail::require_segments(song, "timbre_codewords");
  CodewordSequence seq;
  seq.feature = Feature::timbre;
  seq.alphabet_hint = kTimbreAlphabet;
  seq.symbols.reserve(song.segments.size());
  for (const auto& seg : song.segments)
    seq.symbols.push_back(encode_timbre_segment(seg.timbre, cal));
  return seq;
}

// ---------------------------------------------------------------------------
// Loudness
// ---------------------------------------------------------------------------

inline std::int64_t loudness_raw_bin(double loudness_max, double bin_width) {
  return static_cast<std::int64_t>(std::floor(loudness_max / bin_width));
}

/// Raw bin floor(loudness_max / width), shifted by the configured minimum
/// bin so symbols are non-negative. Bins below the minimum clamp to 0.
inline CodewordSequence loudness_codewords(const SongRecord& song,
                                           const CodecConfig& config = {}) {
  detail::require_segments(song, "loudness_codewords");
  CodewordSequence seq;
  seq.feature = Feature::loudness;
  seq.symbols.reserve(song.segments.size());
  for (const auto& seg : song.segments) {
    std::int64_t raw = loudness_raw_bin(seg.loudness_max,
                                        config.loudness_bin_width);
    std::int64_t shifted = raw - config.loudness_min_bin;
    seq.symbols.push_back(
        static_cast<std::uint32_t>(std::max<std::int64_t>(0, shifted)));
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Rhythm
// ---------------------------------------------------------------------------

inline double sixteenth_note_seconds(double tempo_bpm) {
  return 60.0 / (tempo_bpm * 4.0);
}

/// Inter-onset gaps on a sixteenth-note grid derived from tempo: symbol i is
/// round((start[i+1] - start[i]) / sixteenth), half away from zero, clamped
/// to [0, rhythm_cap]. One symbol fewer than segments.
inline CodewordSequence rhythm_codewords(const SongRecord& song,
                                         const CodecConfig& config = {}) {
  if (song.tempo <= 0.0)
    throw FeatureUnavailableError("rhythm_codewords: song '" + song.id +
                                  "' has tempo 0");
  if (song.segments.size() < 2)
    throw FeatureUnavailableError("rhythm_codewords: song '" + song.id +
                                  "' has fewer than 2 segments");
  const double sixteenth = sixteenth_note_seconds(song.tempo);
  CodewordSequence seq;
  seq.feature = Feature::rhythm;
  seq.alphabet_hint = static_cast<std::uint32_t>(config.rhythm_cap) + 1;
  seq.symbols.reserve(song.segments.size() - 1);
  for (std::size_t i = 0; i + 1 < song.segments.size(); ++i) {
    double gap = song.segments[i + 1].start - song.segments[i].start;
    auto sym = std::llround(gap / sixteenth);
    sym = std::clamp<long long>(sym, 0, config.rhythm_cap);
    seq.symbols.push_back(static_cast<std::uint32_t>(sym));
  }
  return seq;
}

/// Whether the feature codec can run on this song at all.
inline bool feature_available(const SongRecord& song, Feature f) {
  switch (f) {
    case Feature::pitch:
    case Feature::loudness:
    case Feature::timbre:
      return !song.segments.empty();
    case Feature::rhythm:
      return song.tempo > 0.0 && song.segments.size() >= 2;
  }
  return false;
}

inline CodewordSequence extract_codewords(const SongRecord& song, Feature f,
                                          const TimbreCalibration& cal,
                                          const CodecConfig& config) {
  switch (f) {
    case Feature::pitch: return pitch_codewords(song, config);
    case Feature::loudness: return loudness_codewords(song, config);
    case Feature::timbre: return timbre_codewords(song, cal);
    case Feature::rhythm: return rhythm_codewords(song, config);
  }
  throw InvalidArgumentError("extract_codewords: bad feature");
}

}  // namespace cantor
