#pragma once

// Shared builders for unit tests: compact ways to make songs and segments
// with known codeword content.

#include <array>
#include <string>
#include <vector>

#include "cantor/codec.hpp"
#include "cantor/corpus.hpp"

namespace cantor::test {

inline Segment make_segment(double start = 0.0, double loudness = -10.0) {
  Segment seg;
  seg.start = start;
  seg.loudness_max = loudness;
  seg.pitches.fill(0.0);
  seg.timbre.fill(0.0);
  return seg;
}

inline SongRecord make_song(std::string id, std::size_t n_segments,
                            double tempo = 120.0) {
  SongRecord song;
  song.id = std::move(id);
  song.title = "Title " + song.id;
  song.artist = "Artist";
  song.year = 1980;
  song.duration = 200.0;
  song.tempo = tempo;
  song.time_signature = 4;
  song.terms = {{"rock", 0.8}};
  for (std::size_t i = 0; i < n_segments; ++i)
    song.segments.push_back(make_segment(static_cast<double>(i) * 0.25));
  return song;
}

/// Song whose pitch codewords are exactly `symbols` (threshold-independent:
/// chroma entries are 0 or 1).
inline SongRecord make_pitch_song(std::string id,
                                  const std::vector<std::uint32_t>& symbols) {
  SongRecord song = make_song(std::move(id), symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    auto bits = decode_pitch_symbol(symbols[i]);
    for (int k = 0; k < kPitchClasses; ++k)
      song.segments[i].pitches[k] = bits[k] ? 1.0 : 0.0;
  }
  return song;
}

}  // namespace cantor::test
