// Tests for codec.hpp: the four codeword encoders, timbre calibration and
// the decode round trips.

#include "cantor/codec.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "cantor/random.hpp"
#include "test_support.hpp"

using namespace cantor;
using cantor::test::make_song;

TEST_CASE("pitch codewords pack thresholded chroma bits") {
  auto song = make_song("p", 3);
  CodecConfig config;

  song.segments[0].pitches.fill(0.0);
  song.segments[1].pitches.fill(1.0);
  song.segments[2].pitches.fill(0.0);
  song.segments[2].pitches[0] = 1.0;   // bit 0
  song.segments[2].pitches[1] = 0.2;   // below threshold
  song.segments[2].pitches[2] = 0.6;   // bit 2

  auto seq = pitch_codewords(song, config);
  REQUIRE(seq.feature == Feature::pitch);
  REQUIRE(seq.symbols == std::vector<std::uint32_t>{0, 4095, 5});

  SECTION("zero segments is an error") {
    auto empty = make_song("e", 0);
    REQUIRE_THROWS_AS(pitch_codewords(empty, config), InsufficientDataError);
  }
  SECTION("scaling chroma on the same side of the threshold changes nothing") {
    auto scaled = song;
    for (auto& seg : scaled.segments)
      for (auto& p : seg.pitches) p = p >= 0.5 ? 0.5 + (p - 0.5) * 0.9 : p * 0.5;
    REQUIRE(pitch_codewords(scaled, config).symbols == seq.symbols);
  }
  SECTION("decode inverts encode") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
      auto symbol = static_cast<std::uint32_t>(rng.next_below(kPitchAlphabet));
      auto bits = decode_pitch_symbol(symbol);
      std::array<double, kPitchClasses> chroma{};
      for (int k = 0; k < kPitchClasses; ++k) chroma[k] = bits[k] ? 1.0 : 0.0;
      REQUIRE(encode_pitch_segment(chroma, config.pitch_threshold) == symbol);
    }
  }
}

TEST_CASE("timbre calibration takes nearest-rank terciles") {
  CodecConfig config;

  SECTION("values 1..9 give thresholds 3 and 6") {
    auto song = make_song("t", 9);
    for (int i = 0; i < 9; ++i)
      song.segments[static_cast<std::size_t>(i)].timbre.fill(i + 1.0);
    auto cal = calibrate_timbre({&song, 1}, config);
    for (int c = 0; c < kUsedTimbreComponents; ++c) {
      REQUIRE(cal.lower[c] == 3.0);
      REQUIRE(cal.upper[c] == 6.0);
    }
  }
  SECTION("degenerate distribution collapses to one bin") {
    auto song = make_song("t", 4);
    for (auto& seg : song.segments) seg.timbre.fill(2.5);
    auto cal = calibrate_timbre({&song, 1}, config);
    REQUIRE(cal.lower[0] == 2.5);
    REQUIRE(cal.upper[0] == 2.5);
    // Boundary rule: a value at or above upper lands in the top bin, so the
    // whole degenerate distribution maps to one consistent symbol.
    auto seq = timbre_codewords(song, cal);
    for (auto s : seq.symbols) REQUIRE(s == seq.symbols[0]);
    REQUIRE(timbre_trit(2.5, 2.5, 2.5) == 2);
  }
  SECTION("calibration pools segments, independent of song grouping") {
    auto one = make_song("a", 4);
    auto two = make_song("b", 3);
    double v = 0.0;
    for (auto& seg : one.segments) seg.timbre.fill(v += 1.0);
    for (auto& seg : two.segments) seg.timbre.fill(v += 1.0);
    std::vector<SongRecord> ab = {one, two};
    std::vector<SongRecord> ba = {two, one};
    auto cal_ab = calibrate_timbre(ab, config);
    auto cal_ba = calibrate_timbre(ba, config);
    REQUIRE(cal_ab.lower == cal_ba.lower);
    REQUIRE(cal_ab.upper == cal_ba.upper);
  }
  SECTION("empty sample is a calibration error") {
    REQUIRE_THROWS_AS(calibrate_timbre({}, config), CalibrationError);
  }
}

TEST_CASE("timbre codewords pack trits base-3, low component first") {
  auto cal = TimbreCalibration::reference();  // lower -0.5, upper 0.5
  auto song = make_song("t", 3);
  for (auto& seg : song.segments) seg.timbre.fill(-1.0);  // all low
  song.segments[1].timbre.fill(1.0);                      // all high
  // First used component (component 1 when dropping 0) mid-bin, rest low.
  song.segments[2].timbre.fill(-1.0);
  song.segments[2].timbre[1] = 0.0;

  auto seq = timbre_codewords(song, cal);
  REQUIRE(seq.symbols[0] == 0);
  REQUIRE(seq.symbols[1] == 177146);  // 3^11 - 1
  REQUIRE(seq.symbols[2] == 1);

  SECTION("decode inverts encode") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      auto symbol = static_cast<std::uint32_t>(rng.next_below(kTimbreAlphabet));
      auto trits = decode_timbre_symbol(symbol);
      std::array<double, kTimbreComponents> values{};
      int used = 0;
      for (int c = 0; c < kTimbreComponents; ++c) {
        if (c == cal.drop_component) continue;
        values[c] = static_cast<double>(trits[used++] - 1);
      }
      REQUIRE(encode_timbre_segment(values, cal) == symbol);
    }
  }
  SECTION("dropped component is ignored") {
    auto copy = song;
    copy.segments[0].timbre[cal.drop_component] = 999.0;
    REQUIRE(timbre_codewords(copy, cal).symbols[0] == 0);
  }
}

TEST_CASE("loudness codewords bin decibels by floor") {
  REQUIRE(loudness_raw_bin(0.0, 5.0) == 0);
  REQUIRE(loudness_raw_bin(-7.3, 5.0) == -2);
  REQUIRE(loudness_raw_bin(-30.0, 5.0) == -6);  // exact boundary stays -6
  REQUIRE(loudness_raw_bin(-0.01, 5.0) == -1);

  CodecConfig config;  // loudness_min_bin -12
  auto song = make_song("l", 3);
  song.segments[0].loudness_max = 0.0;
  song.segments[1].loudness_max = -7.3;
  song.segments[2].loudness_max = -30.0;
  auto seq = loudness_codewords(song, config);
  REQUIRE(seq.symbols == std::vector<std::uint32_t>{12, 10, 6});

  SECTION("bins below the configured minimum clamp to zero") {
    song.segments[0].loudness_max = -500.0;
    REQUIRE(loudness_codewords(song, config).symbols[0] == 0);
  }
}

TEST_CASE("rhythm codewords count sixteenth notes between onsets") {
  CodecConfig config;
  auto song = make_song("r", 0, 120.0);  // sixteenth = 0.125 s
  for (double start : {0.0, 0.5, 0.5, 100.5})
    song.segments.push_back(cantor::test::make_segment(start));

  auto seq = rhythm_codewords(song, config);
  REQUIRE(seq.symbols.size() == song.segments.size() - 1);
  REQUIRE(seq.symbols[0] == 4);   // 0.5 s gap
  REQUIRE(seq.symbols[1] == 0);   // zero gap
  REQUIRE(seq.symbols[2] == 64);  // 100 s gap clamps to the cap

  SECTION("tempo zero is feature-unavailable") {
    song.tempo = 0.0;
    REQUIRE_THROWS_AS(rhythm_codewords(song, config),
                      FeatureUnavailableError);
  }
  SECTION("fewer than two segments is feature-unavailable") {
    auto sparse = make_song("r2", 1);
    REQUIRE_THROWS_AS(rhythm_codewords(sparse, config),
                      FeatureUnavailableError);
  }
}

TEST_CASE("codeword extraction is deterministic") {
  auto song = make_song("d", 16);
  Rng rng(3);
  for (auto& seg : song.segments) {
    for (auto& p : seg.pitches) p = rng.next_unit();
    for (auto& t : seg.timbre) t = rng.next_normal();
    seg.loudness_max = -40.0 * rng.next_unit();
  }
  CodecConfig config;
  auto cal = calibrate_timbre({&song, 1}, config);
  for (Feature f : kAllFeatures) {
    auto first = extract_codewords(song, f, cal, config);
    auto second = extract_codewords(song, f, cal, config);
    REQUIRE(first.symbols == second.symbols);
    if (first.alphabet_hint)
      for (auto s : first.symbols) REQUIRE(s < *first.alphabet_hint);
  }
}
