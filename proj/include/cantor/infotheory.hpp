#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "cantor/codec.hpp"
#include "cantor/errors.hpp"

namespace cantor {

// ---------------------------------------------------------------------------
// Transition models and entropy
// ---------------------------------------------------------------------------

/// First-order counts over adjacent codeword pairs. Ordered maps keep every
/// downstream iteration deterministic.
struct TransitionModel {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> pair_counts;
  std::map<std::uint32_t, std::uint64_t> source_counts;
  std::uint64_t total = 0;

  void add_pair(std::uint32_t x, std::uint32_t y, std::uint64_t n = 1) {
    pair_counts[{x, y}] += n;
    source_counts[x] += n;
    total += n;
  }

  /// Associative merge: counts add pairwise. merge(A, B) over two sequences
  /// equals counting both sequences into one model (no bridging pair).
  void merge(const TransitionModel& other) {
    for (const auto& [xy, n] : other.pair_counts) pair_counts[xy] += n;
    for (const auto& [x, n] : other.source_counts) source_counts[x] += n;
    total += other.total;
  }
};

inline TransitionModel transition_model(
    std::span<const std::uint32_t> symbols) {
  if (symbols.size() < 2)
    throw InsufficientDataError(
        "transition_model: need at least 2 symbols, got " +
        std::to_string(symbols.size()));
  TransitionModel model;
  for (std::size_t i = 0; i + 1 < symbols.size(); ++i)
    model.add_pair(symbols[i], symbols[i + 1]);
  return model;
}

inline TransitionModel transition_model(const CodewordSequence& seq) {
  return transition_model(std::span<const std::uint32_t>(seq.symbols));
}

/// H(Y|X) = -sum_x p(x) sum_y p(y|x) log2 p(y|x), with p(x) the source
/// frequency and p(y|x) the conditional pair frequency; 0*log 0 = 0.
/// Evaluated as (sum_x n_x log2 n_x - sum_xy c_xy log2 c_xy) / total, which
/// is the same expression with the divisions factored out.
inline double conditional_entropy(const TransitionModel& model) {
  if (model.total == 0)
    throw InsufficientDataError("conditional_entropy: empty model");
  double source_term = 0.0;
  for (const auto& [x, n] : model.source_counts)
    source_term += static_cast<double>(n) * std::log2(static_cast<double>(n));
  double pair_term = 0.0;
  for (const auto& [xy, c] : model.pair_counts)
    pair_term += static_cast<double>(c) * std::log2(static_cast<double>(c));
  double bits = (source_term - pair_term) / static_cast<double>(model.total);
  return bits < 0.0 ? 0.0 : bits;  // clamp float dust on deterministic models
}

// ---------------------------------------------------------------------------
// Distributions
// ---------------------------------------------------------------------------

struct Distribution {
  std::map<std::uint32_t, double> probs;

  void validate(double tol = 1e-9) const {
    double sum = 0.0;
    for (const auto& [sym, p] : probs) {
      if (p < 0.0 || !std::isfinite(p))
        throw InvalidArgumentError("Distribution: negative or non-finite mass");
      sum += p;
    }
    if (std::abs(sum - 1.0) > tol)
      throw InvalidArgumentError("Distribution: probabilities sum to " +
                                 std::to_string(sum));
  }
};

inline double shannon_entropy(const Distribution& dist) {
  double bits = 0.0;
  for (const auto& [sym, p] : dist.probs)
    if (p > 0.0) bits -= p * std::log2(p);
  return bits < 0.0 ? 0.0 : bits;
}

/// Pooled empirical symbol frequencies over all sequences.
inline Distribution codeword_distribution(
    std::span<const CodewordSequence> seqs) {
  std::map<std::uint32_t, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& seq : seqs) {
    for (std::uint32_t s : seq.symbols) {
      ++counts[s];
      ++total;
    }
  }
  if (total == 0)
    throw InsufficientDataError("codeword_distribution: no symbols");
  Distribution dist;
  for (const auto& [sym, n] : counts)
    dist.probs[sym] = static_cast<double>(n) / static_cast<double>(total);
  return dist;
}

inline Distribution codeword_distribution(const CodewordSequence& seq) {
  return codeword_distribution(std::span<const CodewordSequence>(&seq, 1));
}

/// KL(p || q) in bits after additive smoothing: both distributions are
/// re-estimated with pseudo-count alpha spread over the union support,
/// p~(i) = (p(i) + alpha) / (1 + alpha * |union|). With alpha = 0 the raw
/// divergence is returned and any p-symbol missing from q is an error.
inline double kl_divergence(const Distribution& p, const Distribution& q,
                            double alpha) {
  if (alpha < 0.0 || !std::isfinite(alpha))
    throw InvalidArgumentError("kl_divergence: alpha must be >= 0");
  std::set<std::uint32_t> support;
  for (const auto& [sym, prob] : p.probs) support.insert(sym);
  for (const auto& [sym, prob] : q.probs) support.insert(sym);

  const double denom = 1.0 + alpha * static_cast<double>(support.size());
  auto smoothed = [&](const Distribution& d, std::uint32_t sym) {
    auto it = d.probs.find(sym);
    double raw = it == d.probs.end() ? 0.0 : it->second;
    return (raw + alpha) / denom;
  };

  double bits = 0.0;
  for (std::uint32_t sym : support) {
    double pi = smoothed(p, sym);
    double qi = smoothed(q, sym);
    if (pi <= 0.0) continue;  // 0 * log 0 = 0
    if (qi <= 0.0)
      throw InvalidArgumentError(
          "kl_divergence: symbol with p > 0 has q = 0 and alpha = 0");
    bits += pi * std::log2(pi / qi);
  }
  return bits;
}

// ---------------------------------------------------------------------------
// Per-song complexity
// ---------------------------------------------------------------------------

/// Conditional entropy per feature, in bits. A feature whose codec or
/// transition model cannot run on the song is absent, never zero.
struct ComplexityProfile {
  std::optional<double> pitch_bits;
  std::optional<double> loudness_bits;
  std::optional<double> timbre_bits;
  std::optional<double> rhythm_bits;

  std::optional<double>& operator[](Feature f) {
    switch (f) {
      case Feature::pitch: return pitch_bits;
      case Feature::loudness: return loudness_bits;
      case Feature::timbre: return timbre_bits;
      case Feature::rhythm: return rhythm_bits;
    }
    return pitch_bits;
  }
  const std::optional<double>& operator[](Feature f) const {
    return (*const_cast<ComplexityProfile*>(this))[f];
  }
};

/// Number of symbols the codec emits for this song (codewords per segment,
/// minus one for the inter-onset rhythm feature).
inline std::size_t codeword_count(const SongRecord& song, Feature f) {
  if (f == Feature::rhythm)
    return song.segments.empty() ? 0 : song.segments.size() - 1;
  return song.segments.size();
}

inline ComplexityProfile complexity_profile(const SongRecord& song,
                                            const TimbreCalibration& cal,
                                            const CodecConfig& config = {}) {
  ComplexityProfile profile;
  for (Feature f : kAllFeatures) {
    if (!feature_available(song, f) || codeword_count(song, f) < 2) continue;
    CodewordSequence seq = extract_codewords(song, f, cal, config);
    profile[f] = conditional_entropy(transition_model(seq));
  }
  return profile;
}

}  // namespace cantor
