#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cantor/codec.hpp"
#include "cantor/corpus.hpp"
#include "cantor/errors.hpp"
#include "cantor/infotheory.hpp"
#include "cantor/random.hpp"

namespace cantor {

// ---------------------------------------------------------------------------
// Markov chain analysis
// ---------------------------------------------------------------------------

using MarkovMatrix = std::vector<std::vector<double>>;

namespace detail {

inline void require_row_stochastic(const MarkovMatrix& m) {
  if (m.empty()) throw InvalidArgumentError("markov: empty matrix");
  for (const auto& row : m) {
    if (row.size() != m.size())
      throw InvalidArgumentError("markov: matrix must be square");
    double sum = 0.0;
    for (double p : row) {
      if (p < 0.0 || !std::isfinite(p))
        throw InvalidArgumentError("markov: entries must be >= 0");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw InvalidArgumentError("markov: rows must sum to 1");
  }
}

inline bool strongly_connected(const MarkovMatrix& m) {
  const std::size_t n = m.size();
  auto reach = [&](bool transpose) {
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> stack = {0};
    seen[0] = true;
    while (!stack.empty()) {
      std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v = 0; v < n; ++v) {
        double p = transpose ? m[v][u] : m[u][v];
        if (p > 0.0 && !seen[v]) {
          seen[v] = true;
          stack.push_back(v);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
  };
  return reach(false) && reach(true);
}

}  // namespace detail

/// Stationary distribution of an irreducible row-stochastic matrix, from
/// the linear system pi (P - I) = 0 with the normalization sum(pi) = 1.
inline std::vector<double> stationary_distribution(const MarkovMatrix& m) {
  detail::require_row_stochastic(m);
  if (!detail::strongly_connected(m))
    throw InvalidArgumentError("markov: matrix is reducible");
  const std::size_t n = m.size();

  // Solve A^T x = b where A = (P^T - I) with the last equation replaced by
  // sum(pi) = 1. Plain Gaussian elimination with partial pivoting.
  std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      a[i][j] = m[j][i] - (i == j ? 1.0 : 0.0);
    a[i][n] = 0.0;
  }
  for (std::size_t j = 0; j < n; ++j) a[n - 1][j] = 1.0;
  a[n - 1][n] = 1.0;

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-14)
      throw InvalidArgumentError("markov: singular stationary system");
    std::swap(a[col], a[pivot]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      double factor = a[r][col] / a[col][col];
      if (factor == 0.0) continue;
      for (std::size_t c = col; c <= n; ++c) a[r][c] -= factor * a[col][c];
    }
  }
  std::vector<double> pi(n);
  for (std::size_t i = 0; i < n; ++i) pi[i] = a[i][n] / a[i][i];
  for (double& p : pi) p = std::max(0.0, p);  // scrub -0 / rounding dust
  double sum = 0.0;
  for (double p : pi) sum += p;
  for (double& p : pi) p /= sum;
  return pi;
}

inline double entropy_bits(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log2(p);
  return h < 0.0 ? 0.0 : h;
}

/// H(Y|X) of the chain at stationarity: sum_x pi(x) * H(row x).
inline double analytic_conditional_entropy(const MarkovMatrix& m) {
  std::vector<double> pi = stationary_distribution(m);
  double bits = 0.0;
  for (std::size_t x = 0; x < m.size(); ++x)
    bits += pi[x] * entropy_bits(m[x]);
  return bits;
}

/// Binary entropy H(q) = -q log2 q - (1-q) log2(1-q).
inline double binary_entropy(double q) {
  std::array<double, 2> p = {q, 1.0 - q};
  return entropy_bits(p);
}

/// Inverse of binary_entropy on [0, 1/2], by bisection.
inline double inverse_binary_entropy(double bits) {
  if (bits <= 0.0) return 0.0;
  if (bits >= 1.0) return 0.5;
  double lo = 0.0, hi = 0.5;
  for (int iter = 0; iter < 200; ++iter) {
    double mid = 0.5 * (lo + hi);
    if (binary_entropy(mid) < bits)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-15) break;
  }
  return 0.5 * (lo + hi);
}

/// Symmetric binary chain whose conditional entropy is exactly `bits`.
inline MarkovMatrix binary_chain_for_entropy(double bits) {
  double q = inverse_binary_entropy(bits);
  return {{1.0 - q, q}, {q, 1.0 - q}};
}

// ---------------------------------------------------------------------------
// Symbol generators
// ---------------------------------------------------------------------------

/// Stochastic process over an explicit list of codeword values. The
/// analytic conditional entropy of each kind is known exactly: 0 for the
/// deterministic cycle, the distribution entropy for iid, and the
/// stationary-weighted row entropy for markov.
struct SymbolGenerator {
  enum class Kind { deterministic, iid, markov };

  Kind kind = Kind::deterministic;
  std::vector<std::uint32_t> alphabet;  // emitted codeword values
  std::vector<double> probs;            // iid only
  MarkovMatrix matrix;                  // markov only

  static SymbolGenerator deterministic_cycle(
      std::vector<std::uint32_t> alphabet) {
    SymbolGenerator g;
    g.kind = Kind::deterministic;
    g.alphabet = std::move(alphabet);
    return g;
  }

  static SymbolGenerator iid(std::vector<std::uint32_t> alphabet,
                             std::vector<double> probs) {
    SymbolGenerator g;
    g.kind = Kind::iid;
    g.alphabet = std::move(alphabet);
    g.probs = std::move(probs);
    return g;
  }

  static SymbolGenerator iid_uniform(std::vector<std::uint32_t> alphabet) {
    std::vector<double> probs(alphabet.size(),
                              1.0 / static_cast<double>(alphabet.size()));
    return iid(std::move(alphabet), std::move(probs));
  }

  static SymbolGenerator markov_chain(std::vector<std::uint32_t> alphabet,
                                      MarkovMatrix matrix) {
    SymbolGenerator g;
    g.kind = Kind::markov;
    g.alphabet = std::move(alphabet);
    g.matrix = std::move(matrix);
    return g;
  }

  void validate() const {
    if (alphabet.empty())
      throw ConfigError("generator: alphabet must be non-empty");
    switch (kind) {
      case Kind::deterministic:
        break;
      case Kind::iid: {
        if (probs.size() != alphabet.size())
          throw ConfigError("generator: probs must match alphabet size");
        double sum = 0.0;
        for (double p : probs) {
          if (p < 0.0) throw ConfigError("generator: negative probability");
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
          throw ConfigError("generator: probabilities must sum to 1");
        break;
      }
      case Kind::markov:
        if (matrix.size() != alphabet.size())
          throw ConfigError("generator: matrix must match alphabet size");
        detail::require_row_stochastic(matrix);
        if (!detail::strongly_connected(matrix))
          throw ConfigError("generator: matrix is reducible");
        break;
    }
  }

  double analytic_entropy_bits() const {
    switch (kind) {
      case Kind::deterministic: return 0.0;
      case Kind::iid: return entropy_bits(probs);
      case Kind::markov: return analytic_conditional_entropy(matrix);
    }
    return 0.0;
  }

  std::vector<std::uint32_t> generate(std::size_t length, Rng& rng) const {
    std::vector<std::uint32_t> out;
    out.reserve(length);
    switch (kind) {
      case Kind::deterministic:
        for (std::size_t i = 0; i < length; ++i)
          out.push_back(alphabet[i % alphabet.size()]);
        break;
      case Kind::iid:
        for (std::size_t i = 0; i < length; ++i)
          out.push_back(alphabet[rng.next_weighted(probs)]);
        break;
      case Kind::markov: {
        std::vector<double> pi = stationary_distribution(matrix);
        std::size_t state = rng.next_weighted(pi);
        for (std::size_t i = 0; i < length; ++i) {
          out.push_back(alphabet[state]);
          state = rng.next_weighted(matrix[state]);
        }
        break;
      }
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Corpus synthesis
// ---------------------------------------------------------------------------

/// Year-dependent planted complexity: a song of year y gets a symmetric
/// binary chain with conditional entropy base_bits + slope * (y - ref_year)
/// (+ genre offset, + cohort-scaled noise), clamped into (0, 1).
struct TrendPlan {
  double base_bits = 0.5;
  double slope_per_year = 0.0;
  int ref_year = 1960;
  double noise_sd = 0.0;
  std::array<std::uint32_t, 2> symbols = {0, 1};
};

struct FeaturePlan {
  std::optional<SymbolGenerator> generator;  // fixed process
  std::optional<TrendPlan> trend;            // or planted per-song target

  bool planted() const { return generator.has_value() || trend.has_value(); }
};

struct GenrePlan {
  std::string label;
  double weight = 1.0;
  std::array<double, 4> offsets{};  // added to trend targets per feature
};

struct SynthSpec {
  std::size_t n_songs = 0;
  std::size_t segments_per_song = 0;
  std::pair<int, int> year_range = {1960, 2010};
  double hot100_fraction = 0.0;
  double hot100_noise_scale = 1.0;  // scales trend noise_sd for hot100 songs
  std::vector<GenrePlan> genres;    // empty -> single genre "synthetic"
  double tempo = 120.0;
  std::uint64_t seed = 0;           // mandatory; no default draw exists
  CodecConfig codec;
  std::array<FeaturePlan, 4> features;  // indexed by Feature

  FeaturePlan& plan(Feature f) { return features[static_cast<std::size_t>(f)]; }
  const FeaturePlan& plan(Feature f) const {
    return features[static_cast<std::size_t>(f)];
  }
};

/// Planted per-song truth: the analytic conditional entropy each feature's
/// generator was constructed to have.
struct SongTruth {
  std::array<std::optional<double>, 4> entropy_bits;
};

struct GroundTruth {
  TimbreCalibration calibration;  // decodes the planted timbre values
  std::vector<SongTruth> songs;
};

struct SynthCorpus {
  std::vector<SongRecord> songs;
  GroundTruth truth;
};

namespace detail {

inline void validate_feature_symbols(Feature f,
                                     std::span<const std::uint32_t> alphabet,
                                     const CodecConfig& codec) {
  for (std::uint32_t s : alphabet) {
    bool ok = true;
    switch (f) {
      case Feature::pitch: ok = s < kPitchAlphabet; break;
      case Feature::timbre: ok = s < kTimbreAlphabet; break;
      case Feature::rhythm:
        ok = s <= static_cast<std::uint32_t>(codec.rhythm_cap);
        break;
      case Feature::loudness: ok = true; break;  // any non-negative bin
    }
    if (!ok)
      throw ConfigError(std::string("synth: symbol ") + std::to_string(s) +
                        " not representable in the " + feature_name(f) +
                        " alphabet");
  }
}

/// Feature values for one segment that encode back to `symbol`.
inline void plant_symbol(Segment& seg, Feature f, std::uint32_t symbol,
                         const CodecConfig& codec,
                         const TimbreCalibration& cal) {
  switch (f) {
    case Feature::pitch: {
      auto bits = decode_pitch_symbol(symbol);
      for (int k = 0; k < kPitchClasses; ++k)
        seg.pitches[k] = bits[k] ? 1.0 : 0.0;
      break;
    }
    case Feature::timbre: {
      auto trits = decode_timbre_symbol(symbol);
      int used = 0;
      for (int c = 0; c < kTimbreComponents; ++c) {
        if (c == cal.drop_component) {
          seg.timbre[c] = 0.0;
          continue;
        }
        seg.timbre[c] = static_cast<double>(trits[used] - 1);  // -1 / 0 / +1
        ++used;
      }
      break;
    }
    case Feature::loudness: {
      std::int64_t raw =
          static_cast<std::int64_t>(symbol) + codec.loudness_min_bin;
      seg.loudness_max =
          (static_cast<double>(raw) + 0.5) * codec.loudness_bin_width;
      break;
    }
    case Feature::rhythm:
      break;  // rhythm is planted through segment starts, not per segment
  }
}

}  // namespace detail

/// Builds one song whose codeword sequences follow the per-feature plans
/// exactly. Unplanted features fall back to constants (encode to symbol
/// streams of zero entropy).
inline SongRecord synthesize_song(const SynthSpec& spec, std::size_t index,
                                  int year, const std::string& genre,
                                  bool hot100, SongTruth& truth) {
  // Stream 2*index+1; the corpus-level draws for this song use 2*index.
  Rng rng(derive_seed(spec.seed, 2 * index + 1));
  SongRecord song;
  song.id = "synth-" + std::to_string(index);
  song.title = "Synthetic Piece " + std::to_string(index);
  song.artist = "Generator " + std::to_string(index % 97);
  song.year = year;
  song.tempo = spec.tempo;
  song.time_signature = 4;
  song.hot100 = hot100;
  song.terms = {{genre, 0.8}};

  const std::size_t n_seg = spec.segments_per_song;
  song.segments.assign(n_seg, Segment{});

  const TimbreCalibration cal =
      TimbreCalibration::reference(spec.codec.timbre_drop_component);

  std::array<double, 4> genre_offsets{};
  for (const auto& plan : spec.genres)
    if (plan.label == genre) genre_offsets = plan.offsets;

  for (Feature f : kAllFeatures) {
    const FeaturePlan& plan = spec.plan(f);
    const std::size_t length =
        f == Feature::rhythm ? (n_seg > 0 ? n_seg - 1 : 0) : n_seg;

    std::vector<std::uint32_t> symbols;
    std::optional<double> planted_bits;
    if (plan.trend) {
      double target = plan.trend->base_bits +
                      plan.trend->slope_per_year *
                          static_cast<double>(year - plan.trend->ref_year) +
                      genre_offsets[static_cast<std::size_t>(f)];
      double scale = hot100 ? spec.hot100_noise_scale : 1.0;
      if (plan.trend->noise_sd > 0.0)
        target += plan.trend->noise_sd * scale * rng.next_normal();
      target = std::clamp(target, 0.02, 0.98);
      detail::validate_feature_symbols(f, plan.trend->symbols, spec.codec);
      auto gen = SymbolGenerator::markov_chain(
          {plan.trend->symbols[0], plan.trend->symbols[1]},
          binary_chain_for_entropy(target));
      symbols = gen.generate(length, rng);
      planted_bits = target;
    } else if (plan.generator) {
      plan.generator->validate();
      detail::validate_feature_symbols(f, plan.generator->alphabet, spec.codec);
      symbols = plan.generator->generate(length, rng);
      planted_bits = plan.generator->analytic_entropy_bits();
    } else {
      symbols.assign(length, 0);  // unplanted: constant, zero entropy
      planted_bits = length >= 2 ? std::optional<double>(0.0) : std::nullopt;
    }
    truth.entropy_bits[static_cast<std::size_t>(f)] = planted_bits;

    if (f == Feature::rhythm) {
      const double sixteenth = sixteenth_note_seconds(spec.tempo);
      double t = 0.0;
      for (std::size_t i = 0; i < n_seg; ++i) {
        song.segments[i].start = t;
        if (i < symbols.size())
          t += static_cast<double>(symbols[i]) * sixteenth;
      }
    } else {
      for (std::size_t i = 0; i < n_seg; ++i)
        detail::plant_symbol(song.segments[i], f, symbols[i], spec.codec, cal);
    }
  }

  if (!song.segments.empty())
    song.duration = song.segments.back().start + 1.0;
  else
    song.duration = 1.0;
  return song;
}

/// Deterministic synthetic corpus with planted, analytically known
/// complexity. Bit-identical output for identical specs.
inline SynthCorpus generate_corpus(const SynthSpec& spec) {
  if (spec.n_songs == 0) throw ConfigError("synth: n_songs must be > 0");
  if (spec.segments_per_song == 0)
    throw ConfigError("synth: segments_per_song must be > 0");
  if (spec.year_range.second < spec.year_range.first)
    throw ConfigError("synth: bad year_range");
  if (spec.hot100_fraction < 0.0 || spec.hot100_fraction > 1.0)
    throw ConfigError("synth: hot100_fraction must be in [0,1]");
  spec.codec.validate();
  for (Feature f : kAllFeatures) {
    const auto& plan = spec.plan(f);
    if (plan.generator && plan.trend)
      throw ConfigError("synth: feature has both generator and trend");
  }

  std::vector<GenrePlan> genres = spec.genres;
  if (genres.empty()) genres.push_back({"synthetic", 1.0, {}});
  std::vector<double> weights;
  for (const auto& g : genres) {
    if (g.weight < 0.0) throw ConfigError("synth: negative genre weight");
    weights.push_back(g.weight);
  }

  SynthCorpus corpus;
  corpus.truth.calibration =
      TimbreCalibration::reference(spec.codec.timbre_drop_component);
  corpus.truth.songs.resize(spec.n_songs);
  corpus.songs.resize(spec.n_songs);

  for (std::size_t i = 0; i < spec.n_songs; ++i) {
    Rng rng(derive_seed(spec.seed, 2 * i));
    int year = static_cast<int>(
        rng.next_int(spec.year_range.first, spec.year_range.second));
    const std::string& genre = genres[rng.next_weighted(weights)].label;
    bool hot100 = rng.next_unit() < spec.hot100_fraction;
    corpus.songs[i] = synthesize_song(spec, i, year, genre, hot100,
                                      corpus.truth.songs[i]);
  }
  return corpus;
}

}  // namespace cantor
