#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cantor/errors.hpp"
#include "cantor/random.hpp"

namespace cantor {

enum class Statistic { mean, variance };

struct MeanVariance {
  double mean = 0.0;
  std::optional<double> variance;  // absent for n = 1
};

inline MeanVariance mean_variance(std::span<const double> values) {
  if (values.empty())
    throw InvalidArgumentError("mean_variance: empty input");
  double sum = 0.0;
  for (double v : values) sum += v;
  MeanVariance mv;
  mv.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - mv.mean) * (v - mv.mean);
    mv.variance = ss / static_cast<double>(values.size() - 1);
  }
  return mv;
}

namespace detail {

inline double eval_statistic(std::span<const double> values, Statistic stat) {
  MeanVariance mv = mean_variance(values);
  if (stat == Statistic::mean) return mv.mean;
  if (!mv.variance)
    throw InvalidArgumentError("variance undefined for a single value");
  return *mv.variance;
}

/// Quantile with linear interpolation between order statistics (the common
/// "type 7" rule: h = q * (n - 1)).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty())
    throw InvalidArgumentError("quantile_sorted: empty input");
  if (sorted.size() == 1) return sorted[0];
  double h = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

struct BootstrapResult {
  double statistic_value = 0.0;  // statistic on the original values
  double ci_low = 0.0;
  double ci_high = 0.0;
  double resample_mean = 0.0;    // mean of the resample statistics
  int n_resamples = 0;
  double level = 0.0;
  std::uint64_t seed = 0;
};

/// Percentile bootstrap interval. Resamples are drawn with replacement at
/// `resample_size` (0 = same size as the input, the plain bootstrap; a
/// nonzero size gives the null-cohort comparison used by the popularity
/// study). Resample r uses the generator seeded with derive_seed(seed, r),
/// so results do not depend on evaluation order.
inline BootstrapResult bootstrap_ci(std::span<const double> values,
                                    Statistic stat, int n_resamples,
                                    double level, std::uint64_t seed,
                                    std::size_t resample_size = 0) {
  if (values.empty()) throw InvalidArgumentError("bootstrap_ci: empty input");
  if (n_resamples < 1)
    throw InvalidArgumentError("bootstrap_ci: n_resamples must be >= 1");
  if (!(level > 0.0 && level < 1.0))
    throw InvalidArgumentError("bootstrap_ci: level must be in (0,1)");
  const std::size_t size = resample_size ? resample_size : values.size();
  if (stat == Statistic::variance && size < 2)
    throw InvalidArgumentError("bootstrap_ci: variance needs resamples >= 2");

  std::vector<double> stats(static_cast<std::size_t>(n_resamples));
  std::vector<double> resample(size);
  for (int r = 0; r < n_resamples; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    for (std::size_t i = 0; i < size; ++i)
      resample[i] = values[rng.next_index(values.size())];
    stats[static_cast<std::size_t>(r)] = detail::eval_statistic(resample, stat);
  }
  std::sort(stats.begin(), stats.end());

  BootstrapResult result;
  result.statistic_value = detail::eval_statistic(values, stat);
  double sum = 0.0;
  for (double s : stats) sum += s;
  result.resample_mean = sum / static_cast<double>(stats.size());
  double tail = (1.0 - level) / 2.0;
  result.ci_low = detail::quantile_sorted(stats, tail);
  result.ci_high = detail::quantile_sorted(stats, 1.0 - tail);
  result.n_resamples = n_resamples;
  result.level = level;
  result.seed = seed;
  return result;
}

// ---------------------------------------------------------------------------
// OLS trend fit
// ---------------------------------------------------------------------------

struct TrendFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::pair<double, double> slope_ci{0.0, 0.0};
  int n_points = 0;
  std::pair<int, int> epoch{0, 0};
};

namespace detail {

/// Plain least squares on (x, y) pairs; requires two distinct x.
inline std::pair<double, double> ols_slope_intercept(
    std::span<const std::pair<double, double>> pts) {
  double n = static_cast<double>(pts.size());
  double mean_x = 0.0, mean_y = 0.0;
  for (const auto& [x, y] : pts) {
    mean_x += x;
    mean_y += y;
  }
  mean_x /= n;
  mean_y /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : pts) {
    sxx += (x - mean_x) * (x - mean_x);
    sxy += (x - mean_x) * (y - mean_y);
  }
  if (sxx == 0.0)
    throw InvalidArgumentError("ols: all x values identical (singular fit)");
  double slope = sxy / sxx;
  return {slope, mean_y - slope * mean_x};
}

}  // namespace detail

/// OLS on the points whose year lies in [epoch_start, epoch_end); the slope
/// CI is a percentile bootstrap over the points. Bootstrap resamples whose
/// years collapse to a single value are skipped.
inline TrendFit ols_fit(std::span<const std::pair<double, double>> points,
                        int epoch_start, int epoch_end, int n_resamples = 1000,
                        double level = 0.95, std::uint64_t seed = 0) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : points)
    if (p.first >= static_cast<double>(epoch_start) &&
        p.first < static_cast<double>(epoch_end))
      pts.push_back(p);
  if (pts.size() < 2)
    throw InvalidArgumentError("ols_fit: need at least 2 points in epoch [" +
                               std::to_string(epoch_start) + ", " +
                               std::to_string(epoch_end) + ")");

  TrendFit fit;
  fit.epoch = {epoch_start, epoch_end};
  fit.n_points = static_cast<int>(pts.size());
  auto [slope, intercept] = detail::ols_slope_intercept(pts);
  fit.slope = slope;
  fit.intercept = intercept;

  std::vector<double> slopes;
  slopes.reserve(static_cast<std::size_t>(n_resamples));
  std::vector<std::pair<double, double>> resample(pts.size());
  for (int r = 0; r < n_resamples; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    for (auto& p : resample) p = pts[rng.next_index(pts.size())];
    bool degenerate = true;
    for (const auto& p : resample)
      if (p.first != resample[0].first) {
        degenerate = false;
        break;
      }
    if (degenerate) continue;
    slopes.push_back(detail::ols_slope_intercept(resample).first);
  }
  if (slopes.empty()) {
    fit.slope_ci = {fit.slope, fit.slope};
  } else {
    std::sort(slopes.begin(), slopes.end());
    double tail = (1.0 - level) / 2.0;
    fit.slope_ci = {detail::quantile_sorted(slopes, tail),
                    detail::quantile_sorted(slopes, 1.0 - tail)};
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov
// ---------------------------------------------------------------------------

struct KsResult {
  double d = 0.0;
  double p_value = 1.0;
};

namespace detail {

/// Complementary CDF of the asymptotic Kolmogorov distribution,
/// Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 1000; ++k) {
    double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    sign = -sign;
    if (term < 1e-14) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace detail

/// Two-sample KS: D = sup |ECDF_a - ECDF_b|; p from the asymptotic
/// Kolmogorov distribution at lambda = sqrt(n_a n_b / (n_a + n_b)) * D.
inline KsResult ks_two_sample(std::span<const double> a,
                              std::span<const double> b) {
  if (a.empty() || b.empty())
    throw InvalidArgumentError("ks_two_sample: empty sample");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());

  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    double x = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == x) ++i;
    while (j < sb.size() && sb[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }
  // Tail past the shorter sample can only shrink the gap; no update needed.

  KsResult result;
  result.d = d;
  double effective = na * nb / (na + nb);
  result.p_value = detail::kolmogorov_q(std::sqrt(effective) * d);
  return result;
}

// ---------------------------------------------------------------------------
// Pearson correlation
// ---------------------------------------------------------------------------

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw InvalidArgumentError("pearson: length mismatch");
  if (a.size() < 2)
    throw InvalidArgumentError("pearson: need at least 2 pairs");
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= static_cast<double>(a.size());
  mean_b /= static_cast<double>(b.size());
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double da = a[i] - mean_a;
    double db = b[i] - mean_b;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0.0 || sbb == 0.0)
    throw InvalidArgumentError("pearson: zero variance input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace cantor
