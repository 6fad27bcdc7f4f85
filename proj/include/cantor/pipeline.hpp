#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cantor/cluster.hpp"
#include "cantor/codec.hpp"
#include "cantor/config.hpp"
#include "cantor/corpus.hpp"
#include "cantor/csv.hpp"
#include "cantor/errors.hpp"
#include "cantor/infotheory.hpp"
#include "cantor/parallel.hpp"
#include "cantor/random.hpp"
#include "cantor/stats.hpp"
#include "cantor/synth.hpp"

namespace cantor {

// ---------------------------------------------------------------------------
// Corpus loading
// ---------------------------------------------------------------------------

struct LoadedCorpus {
  std::vector<SongRecord> songs;  // filtered, sorted by id
  FilterReport report;
};

namespace detail {

/// Batched parallel JSONL parse. Output order equals file order; the first
/// bad line (smallest line number) is the one reported.
inline std::vector<SongRecord> parse_jsonl_parallel(
    const std::filesystem::path& path, unsigned threads) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());

  std::vector<SongRecord> songs;
  std::vector<std::string> batch;
  std::vector<std::size_t> batch_lines;
  const std::size_t kBatch = 8192;
  std::string line;
  std::size_t line_number = 0;

  auto flush = [&] {
    if (batch.empty()) return;
    std::size_t offset = songs.size();
    songs.resize(offset + batch.size());
    std::mutex error_mutex;
    std::size_t error_index = batch.size();
    std::string error_message;
    parallel_for(batch.size(), threads, [&](std::size_t i) {
      try {
        songs[offset + i] = parse_song(batch[i], batch_lines[i]);
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error_message = e.what();
        }
      }
    });
    if (error_index != batch.size()) throw ParseError(error_message);
    batch.clear();
    batch_lines.clear();
  };

  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    batch.push_back(std::move(line));
    batch_lines.push_back(line_number);
    if (batch.size() >= kBatch) flush();
  }
  flush();
  return songs;
}

}  // namespace detail

/// Loads, sorts by id, filters, and (optionally) applies chart flags.
inline LoadedCorpus load_corpus(
    const std::filesystem::path& input,
    const std::optional<std::filesystem::path>& charts,
    const PipelineConfig& config, unsigned threads) {
  LoadedCorpus loaded;
  auto songs = detail::parse_jsonl_parallel(input, threads);
  std::sort(songs.begin(), songs.end(),
            [](const SongRecord& a, const SongRecord& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < songs.size(); ++i)
    if (songs[i].id == songs[i - 1].id)
      throw SchemaError("corpus: duplicate song id '" + songs[i].id + "'");
  auto [filtered, report] = filter_corpus(std::move(songs), config.filter);
  loaded.songs = std::move(filtered);
  loaded.report = report;
  if (charts) {
    auto entries = load_chart_csv(*charts);
    match_charts(loaded.songs, entries);
  }
  return loaded;
}

// ---------------------------------------------------------------------------
// Calibration for a whole corpus
// ---------------------------------------------------------------------------

/// Timbre calibration over the corpus. Corpora within the segment cap are
/// calibrated exactly; larger ones use a seeded reservoir sample of
/// segments, which keeps memory bounded and results reproducible.
inline TimbreCalibration calibrate_corpus_timbre(
    std::span<const SongRecord> corpus, const PipelineConfig& config,
    std::uint64_t seed) {
  const std::size_t cap = config.calibration_max_segments;
  std::vector<std::array<double, kUsedTimbreComponents>> sample;
  sample.reserve(std::min<std::size_t>(cap, 4096));
  Rng rng(derive_seed(seed, 0xCA11B8ULL));
  std::size_t seen = 0;
  for (const auto& song : corpus) {
    for (const auto& seg : song.segments) {
      std::array<double, kUsedTimbreComponents> used{};
      int u = 0;
      for (int c = 0; c < kTimbreComponents; ++c) {
        if (c == config.codec.timbre_drop_component) continue;
        used[u++] = seg.timbre[c];
      }
      if (sample.size() < cap) {
        sample.push_back(used);
      } else {
        std::size_t j = rng.next_index(seen + 1);
        if (j < cap) sample[j] = used;
      }
      ++seen;
    }
  }
  if (sample.empty())
    throw CalibrationError("calibrate: corpus has no segments");

  TimbreCalibration cal;
  cal.drop_component = config.codec.timbre_drop_component;
  std::vector<double> values(sample.size());
  for (int i = 0; i < kUsedTimbreComponents; ++i) {
    for (std::size_t s = 0; s < sample.size(); ++s) values[s] = sample[s][i];
    std::sort(values.begin(), values.end());
    cal.lower[i] = detail::nearest_rank_quantile(values, 1.0 / 3.0);
    cal.upper[i] = detail::nearest_rank_quantile(values, 2.0 / 3.0);
  }
  return cal;
}

// ---------------------------------------------------------------------------
// Per-song profiles
// ---------------------------------------------------------------------------

struct ProfileRow {
  std::string id;
  std::optional<int> year;
  std::optional<std::string> genre;
  bool hot100 = false;
  ComplexityProfile profile;
};

inline std::vector<ProfileRow> compute_profiles(
    std::span<const SongRecord> corpus, const TimbreCalibration& cal,
    const CodecConfig& codec, unsigned threads) {
  std::vector<ProfileRow> rows(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t i) {
    const SongRecord& song = corpus[i];
    ProfileRow& row = rows[i];
    row.id = song.id;
    row.year = song.year;
    row.genre = assign_genre(song);
    row.hot100 = song.hot100;
    row.profile = complexity_profile(song, cal, codec);
  });
  return rows;
}

namespace detail {

inline std::vector<double> feature_values(std::span<const ProfileRow> rows,
                                          Feature f, bool hot100_only) {
  std::vector<double> values;
  for (const auto& row : rows) {
    if (hot100_only && !row.hot100) continue;
    if (row.profile[f]) values.push_back(*row.profile[f]);
  }
  return values;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Study: complexity distributions
// ---------------------------------------------------------------------------

struct Histogram {
  Feature feature = Feature::pitch;
  std::string cohort;  // "all" or "hot100"
  double bin_width = 0.1;
  std::map<std::int64_t, std::uint64_t> bins;  // bin index -> count
};

struct ComplexityStudy {
  std::vector<ProfileRow> rows;
  std::vector<Histogram> histograms;
};

/// Per-song profile table plus per-feature complexity histograms for the
/// full corpus and the hot100 cohort.
inline ComplexityStudy run_complexity(std::span<const SongRecord> corpus,
                                      const TimbreCalibration& cal,
                                      const PipelineConfig& config,
                                      unsigned threads) {
  if (corpus.empty()) throw InsufficientDataError("run_complexity: empty corpus");
  ComplexityStudy study;
  study.rows = compute_profiles(corpus, cal, config.codec, threads);
  for (Feature f : kAllFeatures) {
    for (bool hot : {false, true}) {
      Histogram hist;
      hist.feature = f;
      hist.cohort = hot ? "hot100" : "all";
      hist.bin_width = config.hist_bin(f);
      for (const auto& row : study.rows) {
        if (hot && !row.hot100) continue;
        if (!row.profile[f]) continue;
        auto bin = static_cast<std::int64_t>(
            std::floor(*row.profile[f] / hist.bin_width));
        ++hist.bins[bin];
      }
      study.histograms.push_back(std::move(hist));
    }
  }
  return study;
}

// ---------------------------------------------------------------------------
// Study: popularity comparison
// ---------------------------------------------------------------------------

struct PopularityRow {
  Feature feature = Feature::pitch;
  Statistic statistic = Statistic::mean;
  double hot100_value = 0.0;
  double corpus_value = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::string flag;  // below | inside | above
  std::uint64_t n_hot100 = 0;
  std::uint64_t n_corpus = 0;
};

/// Hot 100 mean and variance per feature against percentile CIs from
/// bootstrap_n random same-size samples of the full corpus.
inline std::vector<PopularityRow> run_popularity_comparison(
    std::span<const ProfileRow> rows, const PipelineConfig& config,
    std::uint64_t seed) {
  bool any_hot = false;
  for (const auto& row : rows)
    if (row.hot100) {
      any_hot = true;
      break;
    }
  if (!any_hot)
    throw InsufficientDataError("run_popularity_comparison: no hot100 songs");

  std::vector<PopularityRow> out;
  for (Feature f : kAllFeatures) {
    std::vector<double> corpus_values = detail::feature_values(rows, f, false);
    std::vector<double> hot_values = detail::feature_values(rows, f, true);
    if (hot_values.empty() || corpus_values.empty()) continue;
    for (Statistic stat : {Statistic::mean, Statistic::variance}) {
      if (stat == Statistic::variance && hot_values.size() < 2) continue;
      std::uint64_t stream = static_cast<std::uint64_t>(f) * 2 +
                             (stat == Statistic::variance ? 1 : 0);
      BootstrapResult null_ci =
          bootstrap_ci(corpus_values, stat, config.bootstrap_n, 0.95,
                       derive_seed(seed, 0x909 + stream), hot_values.size());
      PopularityRow row;
      row.feature = f;
      row.statistic = stat;
      row.hot100_value = detail::eval_statistic(hot_values, stat);
      row.corpus_value = null_ci.statistic_value;
      row.ci_low = null_ci.ci_low;
      row.ci_high = null_ci.ci_high;
      row.flag = row.hot100_value < row.ci_low    ? "below"
                 : row.hot100_value > row.ci_high ? "above"
                                                  : "inside";
      row.n_hot100 = hot_values.size();
      row.n_corpus = corpus_values.size();
      out.push_back(std::move(row));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Study: trends over time
// ---------------------------------------------------------------------------

struct YearlyRow {
  std::string cohort;
  Feature feature = Feature::pitch;
  int year = 0;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::uint64_t count = 0;
};

struct EpochFitRow {
  std::string cohort;
  Feature feature = Feature::pitch;
  TrendFit fit;  // fit.epoch carries (start, inclusive label end)
};

struct TrendsStudy {
  std::vector<YearlyRow> yearly;
  std::vector<EpochFitRow> fits;
};

namespace detail {

/// Yearly means with bootstrap CIs for one cohort, plus per-epoch OLS fits
/// over the yearly mean points. Used by both the trends and divergence
/// studies (values = complexity or KL respectively).
inline void yearly_and_fits(
    const std::map<int, std::vector<double>>& by_year, const std::string& cohort,
    Feature f, const PipelineConfig& config, std::uint64_t seed,
    std::vector<YearlyRow>& yearly, std::vector<EpochFitRow>& fits) {
  std::vector<std::pair<double, double>> mean_points;
  for (const auto& [year, values] : by_year) {
    if (values.empty()) continue;
    BootstrapResult ci = bootstrap_ci(
        values, Statistic::mean, config.bootstrap_n, 0.95,
        derive_seed(seed, 0xF00D + static_cast<std::uint64_t>(year)));
    YearlyRow row;
    row.cohort = cohort;
    row.feature = f;
    row.year = year;
    row.mean = ci.statistic_value;
    row.ci_low = ci.ci_low;
    row.ci_high = ci.ci_high;
    row.count = values.size();
    yearly.push_back(std::move(row));
    mean_points.emplace_back(static_cast<double>(year), ci.statistic_value);
  }
  int interval_index = 0;
  for (const auto& interval : config.epochs.fit_intervals()) {
    ++interval_index;
    std::size_t in_epoch = 0;
    std::set<double> distinct;
    for (const auto& [x, y] : mean_points)
      if (x >= interval.start && x < interval.end) {
        ++in_epoch;
        distinct.insert(x);
      }
    if (in_epoch < 2 || distinct.size() < 2) continue;  // epoch not covered
    EpochFitRow row;
    row.cohort = cohort;
    row.feature = f;
    row.fit = ols_fit(mean_points, interval.start, interval.end,
                      config.bootstrap_n, 0.95,
                      derive_seed(seed, 0xF17 + static_cast<std::uint64_t>(
                                                    interval_index)));
    row.fit.epoch = {interval.start, interval.label_end};
    fits.push_back(std::move(row));
  }
}

}  // namespace detail

/// Yearly mean complexity and per-epoch OLS trends, for the full corpus and
/// the hot100 cohort. Years without songs are omitted, never interpolated.
inline TrendsStudy run_trends(std::span<const ProfileRow> rows,
                              const PipelineConfig& config,
                              std::uint64_t seed) {
  TrendsStudy study;
  bool any_hot = false;
  for (const auto& row : rows) any_hot |= row.hot100;
  for (const char* cohort : {"all", "hot100"}) {
    bool hot_only = std::string_view(cohort) == "hot100";
    if (hot_only && !any_hot) continue;
    for (Feature f : kAllFeatures) {
      std::map<int, std::vector<double>> by_year;
      for (const auto& row : rows) {
        if (!row.year || !row.profile[f]) continue;
        if (hot_only && !row.hot100) continue;
        by_year[*row.year].push_back(*row.profile[f]);
      }
      std::uint64_t stream =
          fnv1a64(cohort) ^ (static_cast<std::uint64_t>(f) << 8);
      detail::yearly_and_fits(by_year, cohort, f, config,
                              derive_seed(seed, stream), study.yearly,
                              study.fits);
    }
  }
  return study;
}

// ---------------------------------------------------------------------------
// Study: contemporary divergence
// ---------------------------------------------------------------------------

struct DivergenceStudy {
  std::vector<YearlyRow> yearly;  // cohort fixed to "hot100"
  std::vector<EpochFitRow> fits;
  std::uint64_t skipped_years = 0;  // years with one hot100 song only
  double alpha = 1.0;
};

/// Per hot100 song and feature, the smoothed KL divergence from the song's
/// codeword distribution to the pooled distribution of its same-year hot100
/// contemporaries (self excluded), aggregated per year.
inline DivergenceStudy run_divergence(std::span<const SongRecord> corpus,
                                      const TimbreCalibration& cal,
                                      const PipelineConfig& config,
                                      std::uint64_t seed, unsigned threads) {
  DivergenceStudy study;
  study.alpha = config.kl_alpha;

  std::map<int, std::vector<std::size_t>> hot_by_year;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (corpus[i].hot100 && corpus[i].year)
      hot_by_year[*corpus[i].year].push_back(i);

  std::set<int> usable_years;
  for (const auto& [year, members] : hot_by_year) {
    if (members.size() >= 2)
      usable_years.insert(year);
    else
      ++study.skipped_years;
  }

  for (Feature f : kAllFeatures) {
    // Per-song symbol counts per year, then leave-one-out pooled KL.
    std::map<int, std::vector<double>> kl_by_year;
    for (int year : usable_years) {
      const auto& members = hot_by_year.at(year);
      std::vector<std::map<std::uint32_t, std::uint64_t>> counts(
          members.size());
      std::vector<std::uint64_t> totals(members.size(), 0);
      parallel_for(members.size(), threads, [&](std::size_t m) {
        const SongRecord& song = corpus[members[m]];
        if (!feature_available(song, f)) return;
        CodewordSequence seq = extract_codewords(song, f, cal, config.codec);
        for (std::uint32_t s : seq.symbols) ++counts[m][s];
        totals[m] = seq.symbols.size();
      });

      std::map<std::uint32_t, std::uint64_t> pooled;
      std::uint64_t pooled_total = 0;
      for (std::size_t m = 0; m < members.size(); ++m) {
        for (const auto& [sym, n] : counts[m]) pooled[sym] += n;
        pooled_total += totals[m];
      }

      std::vector<double> kls;
      for (std::size_t m = 0; m < members.size(); ++m) {
        if (totals[m] == 0) continue;
        std::uint64_t rest_total = pooled_total - totals[m];
        if (rest_total == 0) continue;  // no contemporaries with this feature
        Distribution p;
        for (const auto& [sym, n] : counts[m])
          p.probs[sym] =
              static_cast<double>(n) / static_cast<double>(totals[m]);
        Distribution q;
        for (const auto& [sym, n] : pooled) {
          auto it = counts[m].find(sym);
          std::uint64_t rest = n - (it == counts[m].end() ? 0 : it->second);
          if (rest > 0)
            q.probs[sym] =
                static_cast<double>(rest) / static_cast<double>(rest_total);
        }
        kls.push_back(kl_divergence(p, q, config.kl_alpha));
      }
      if (!kls.empty()) kl_by_year[year] = std::move(kls);
    }
    std::uint64_t stream = 0xD1F ^ (static_cast<std::uint64_t>(f) << 8);
    detail::yearly_and_fits(kl_by_year, "hot100", f, config,
                            derive_seed(seed, stream), study.yearly,
                            study.fits);
  }
  return study;
}

// ---------------------------------------------------------------------------
// Study: genres
// ---------------------------------------------------------------------------

struct GenreRow {
  std::string genre;
  Feature feature = Feature::pitch;
  std::uint64_t song_count = 0;     // songs in the genre
  std::uint64_t present_count = 0;  // songs with this feature present
  double genre_mean = 0.0;
  double null_mean = 0.0;   // mean of the bootstrap sample means
  double deviation = 0.0;   // genre_mean - null_mean
  double ci_low = 0.0;
  double ci_high = 0.0;
  double ks_d = 0.0;
  double ks_p = 1.0;
  std::string flag;  // below | inside | above
};

struct CorrelationCell {
  Feature a = Feature::pitch;
  Feature b = Feature::pitch;
  double r = 1.0;  // NaN when undefined (zero variance or < 2 pairs)
};

struct GenresStudy {
  std::vector<GenreRow> rows;
  std::vector<CorrelationCell> correlations;  // full 4x4 table
  std::vector<GenreProfile> profiles;         // qualifying genres
  ClusterTree tree;
  CutResult cut;
};

/// Genre deviation table (bootstrap null of genre_bootstrap_n same-size
/// samples), per-genre KS tests against a seeded random sample, the 4x4
/// feature correlation table, and the genre dendrogram with its
/// silhouette-optimal community count.
inline GenresStudy run_genres(std::span<const ProfileRow> rows,
                              const PipelineConfig& config,
                              std::uint64_t seed) {
  GenresStudy study;

  std::vector<std::pair<std::string, ComplexityProfile>> labeled;
  std::map<std::string, std::uint64_t> genre_counts;
  for (const auto& row : rows) {
    if (!row.genre) continue;
    labeled.emplace_back(*row.genre, row.profile);
    ++genre_counts[*row.genre];
  }
  study.profiles = genre_profiles(
      labeled, static_cast<std::size_t>(config.min_genre_songs));
  if (study.profiles.size() < 2)
    throw InsufficientDataError(
        "run_genres: fewer than 2 genres above the song threshold");

  for (const auto& gp : study.profiles) {
    for (Feature f : kAllFeatures) {
      std::vector<double> genre_values;
      for (const auto& [genre, profile] : labeled)
        if (genre == gp.genre && profile[f])
          genre_values.push_back(*profile[f]);
      if (genre_values.empty()) continue;
      std::vector<double> all_values = detail::feature_values(rows, f, false);

      std::uint64_t stream =
          fnv1a64(gp.genre) ^ (static_cast<std::uint64_t>(f) << 4);
      BootstrapResult null_ci = bootstrap_ci(
          all_values, Statistic::mean, config.genre_bootstrap_n, 0.95,
          derive_seed(seed, stream), genre_values.size());
      double null_mean = null_ci.resample_mean;

      Rng ks_rng(derive_seed(seed, stream ^ 0x4B53ULL));
      std::vector<double> random_sample(genre_values.size());
      for (auto& v : random_sample)
        v = all_values[ks_rng.next_index(all_values.size())];
      KsResult ks = ks_two_sample(genre_values, random_sample);

      GenreRow row;
      row.genre = gp.genre;
      row.feature = f;
      row.song_count = genre_counts[gp.genre];
      row.present_count = genre_values.size();
      row.genre_mean = mean_variance(genre_values).mean;
      row.null_mean = null_mean;
      row.deviation = row.genre_mean - null_mean;
      row.ci_low = null_ci.ci_low;
      row.ci_high = null_ci.ci_high;
      row.ks_d = ks.d;
      row.ks_p = ks.p_value;
      row.flag = row.genre_mean < row.ci_low    ? "below"
                 : row.genre_mean > row.ci_high ? "above"
                                                : "inside";
      study.rows.push_back(std::move(row));
    }
  }

  // Pairwise feature correlations over all songs (pairwise deletion).
  for (Feature a : kAllFeatures) {
    for (Feature b : kAllFeatures) {
      CorrelationCell cell;
      cell.a = a;
      cell.b = b;
      if (a == b) {
        cell.r = 1.0;
      } else {
        std::vector<double> va, vb;
        for (const auto& row : rows) {
          if (row.profile[a] && row.profile[b]) {
            va.push_back(*row.profile[a]);
            vb.push_back(*row.profile[b]);
          }
        }
        try {
          cell.r = pearson(va, vb);
        } catch (const InvalidArgumentError&) {
          cell.r = std::numeric_limits<double>::quiet_NaN();
        }
      }
      study.correlations.push_back(cell);
    }
  }

  std::vector<GenreProfile> cluster_input =
      config.standardize ? standardize_profiles(study.profiles)
                         : study.profiles;
  study.tree = agglomerate(cluster_input, config.linkage);
  study.cut =
      cut_tree(study.tree, 2, static_cast<int>(study.tree.leaves.size()));
  return study;
}

// ---------------------------------------------------------------------------
// Report writers (all byte-deterministic)
// ---------------------------------------------------------------------------

inline void write_profiles_csv(const std::filesystem::path& path,
                               std::span<const ProfileRow> rows) {
  CsvWriter csv(path);
  csv.row({"song_id", "year", "genre", "hot100", "pitch_bits",
           "loudness_bits", "timbre_bits", "rhythm_bits"});
  for (const auto& row : rows) {
    csv.row({row.id, format_opt(row.year), row.genre.value_or(""),
             row.hot100 ? "1" : "0", format_opt(row.profile.pitch_bits),
             format_opt(row.profile.loudness_bits),
             format_opt(row.profile.timbre_bits),
             format_opt(row.profile.rhythm_bits)});
  }
}

inline void write_histograms_csv(const std::filesystem::path& path,
                                 std::span<const Histogram> histograms) {
  CsvWriter csv(path);
  csv.row({"feature", "cohort", "bin_start", "bin_end", "count"});
  for (const auto& hist : histograms) {
    for (const auto& [bin, count] : hist.bins) {
      double lo = static_cast<double>(bin) * hist.bin_width;
      csv.row({feature_name(hist.feature), hist.cohort, format_double(lo),
               format_double(lo + hist.bin_width), std::to_string(count)});
    }
  }
}

inline void write_popularity_csv(const std::filesystem::path& path,
                                 std::span<const PopularityRow> rows) {
  CsvWriter csv(path);
  csv.row({"feature", "statistic", "hot100_value", "corpus_value", "ci_low",
           "ci_high", "flag", "n_hot100", "n_corpus"});
  for (const auto& row : rows) {
    csv.row({feature_name(row.feature),
             row.statistic == Statistic::mean ? "mean" : "variance",
             format_double(row.hot100_value), format_double(row.corpus_value),
             format_double(row.ci_low), format_double(row.ci_high), row.flag,
             std::to_string(row.n_hot100), std::to_string(row.n_corpus)});
  }
}

namespace detail {

// Columns: record, [cohort,] feature, year, epoch, mean, ci_low, ci_high,
// count, slope, intercept, slope_ci_low, slope_ci_high. "year" rows fill
// the mean/CI block; "fit" rows fill the slope block; count holds the year
// cohort size or the fit's point count.
inline void write_yearly_and_fits(CsvWriter& csv, bool with_cohort,
                                  std::span<const YearlyRow> yearly,
                                  std::span<const EpochFitRow> fits) {
  for (const auto& row : yearly) {
    std::vector<std::string> cells = {"year"};
    if (with_cohort) cells.push_back(row.cohort);
    cells.insert(cells.end(),
                 {feature_name(row.feature), std::to_string(row.year), "",
                  format_double(row.mean), format_double(row.ci_low),
                  format_double(row.ci_high), std::to_string(row.count), "",
                  "", "", ""});
    csv.row(cells);
  }
  for (const auto& row : fits) {
    std::vector<std::string> cells = {"fit"};
    if (with_cohort) cells.push_back(row.cohort);
    cells.insert(cells.end(),
                 {feature_name(row.feature), "",
                  std::to_string(row.fit.epoch.first) + "-" +
                      std::to_string(row.fit.epoch.second),
                  "", "", "", std::to_string(row.fit.n_points),
                  format_double(row.fit.slope),
                  format_double(row.fit.intercept),
                  format_double(row.fit.slope_ci.first),
                  format_double(row.fit.slope_ci.second)});
    csv.row(cells);
  }
}

}  // namespace detail

inline void write_trends_csv(const std::filesystem::path& path,
                             const TrendsStudy& study) {
  CsvWriter csv(path);
  csv.row({"record", "cohort", "feature", "year", "epoch", "mean", "ci_low",
           "ci_high", "count", "slope", "intercept", "slope_ci_low",
           "slope_ci_high"});
  detail::write_yearly_and_fits(csv, true, study.yearly, study.fits);
}

inline void write_divergence_csv(const std::filesystem::path& path,
                                 const DivergenceStudy& study) {
  CsvWriter csv(path);
  csv.row({"record", "feature", "year", "epoch", "mean_kl", "ci_low",
           "ci_high", "count", "slope", "intercept", "slope_ci_low",
           "slope_ci_high"});
  detail::write_yearly_and_fits(csv, false, study.yearly, study.fits);
}

inline void write_genres_csv(const std::filesystem::path& path,
                             const GenresStudy& study) {
  CsvWriter csv(path);
  csv.row({"record", "genre", "feature", "feature_b", "song_count",
           "present_count", "genre_mean", "null_mean", "deviation", "ci_low",
           "ci_high", "ks_d", "ks_p", "flag", "r"});
  for (const auto& row : study.rows) {
    csv.row({"genre", row.genre, feature_name(row.feature), "",
             std::to_string(row.song_count), std::to_string(row.present_count),
             format_double(row.genre_mean), format_double(row.null_mean),
             format_double(row.deviation), format_double(row.ci_low),
             format_double(row.ci_high), format_double(row.ks_d),
             format_double(row.ks_p), row.flag, ""});
  }
  for (const auto& cell : study.correlations) {
    csv.row({"correlation", "", feature_name(cell.a), feature_name(cell.b),
             "", "", "", "", "", "", "", "", "", "",
             std::isnan(cell.r) ? "" : format_double(cell.r)});
  }
}

inline nlohmann::ordered_json dendrogram_json(const ClusterTree& tree,
                                              const CutResult& cut) {
  nlohmann::ordered_json j;
  j["linkage"] = linkage_name(tree.linkage);
  j["leaves"] = tree.leaves;
  j["merges"] = nlohmann::ordered_json::array();
  for (const auto& m : tree.merges)
    j["merges"].push_back(
        {{"left", m.left}, {"right", m.right}, {"height", m.height}});
  j["optimal"] = {{"k", cut.k}, {"silhouette", cut.score}};
  nlohmann::ordered_json assignment;
  for (std::size_t i = 0; i < tree.leaves.size(); ++i)
    assignment[tree.leaves[i]] = cut.assignment[i];
  j["optimal"]["assignment"] = assignment;
  j["silhouette_scan"] = nlohmann::ordered_json::array();
  for (const auto& [k, score] : cut.scanned)
    j["silhouette_scan"].push_back({{"k", k}, {"silhouette", score}});
  return j;
}

inline void write_dendrogram_json(const std::filesystem::path& path,
                                  const ClusterTree& tree,
                                  const CutResult& cut) {
  write_file(path, dendrogram_json(tree, cut).dump(2) + "\n");
}

inline void write_filter_report_json(const std::filesystem::path& path,
                                     const FilterReport& report) {
  nlohmann::ordered_json j;
  j["input_count"] = report.input_count;
  j["removed_duplicates"] = report.removed_duplicates;
  j["removed_missing_metadata"] = report.removed_missing_metadata;
  j["removed_commentary"] = report.removed_commentary;
  j["removed_out_of_range"] = report.removed_out_of_range;
  j["output_count"] = report.output_count;
  write_file(path, j.dump(2) + "\n");
}

inline nlohmann::ordered_json calibration_to_json(
    const TimbreCalibration& cal) {
  nlohmann::ordered_json j;
  j["drop_component"] = cal.drop_component;
  j["lower"] = cal.lower;
  j["upper"] = cal.upper;
  return j;
}

inline void write_calibration_json(const std::filesystem::path& path,
                                   const TimbreCalibration& cal) {
  write_file(path, calibration_to_json(cal).dump(2) + "\n");
}

inline TimbreCalibration load_calibration_json(
    const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("calibration: " + std::string(e.what()));
  }
  TimbreCalibration cal;
  try {
    cal.drop_component = j.at("drop_component").get<int>();
    auto lower = j.at("lower").get<std::vector<double>>();
    auto upper = j.at("upper").get<std::vector<double>>();
    if (lower.size() != kUsedTimbreComponents ||
        upper.size() != kUsedTimbreComponents)
      throw SchemaError("calibration: expected 11 thresholds per bound");
    std::copy(lower.begin(), lower.end(), cal.lower.begin());
    std::copy(upper.begin(), upper.end(), cal.upper.begin());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("calibration: " + std::string(e.what()));
  }
  for (int i = 0; i < kUsedTimbreComponents; ++i)
    if (cal.lower[i] > cal.upper[i])
      throw SchemaError("calibration: lower > upper for component " +
                        std::to_string(i));
  return cal;
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

/// Streaming FNV-1a digest of a file, as fixed-width hex.
inline std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    std::streamsize got = in.gcount();
    if (got <= 0) break;
    h = fnv1a64_bytes(
        std::span<const char>(buf.data(), static_cast<std::size_t>(got)), h);
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(hex);
}

/// Reproducibility record: command, config echo, seed, input digests and
/// output names. Contains nothing volatile, so identical runs write
/// identical manifests.
inline nlohmann::ordered_json make_manifest(
    const std::string& command, const PipelineConfig& config,
    std::uint64_t seed,
    const std::vector<std::pair<std::string, std::filesystem::path>>& inputs,
    const std::vector<std::string>& outputs) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = config_to_json(config);
  j["inputs"] = nlohmann::ordered_json::object();
  for (const auto& [name, path] : inputs) {
    j["inputs"][name] = {{"path", path.string()},
                         {"fnv1a64", file_digest(path)}};
  }
  j["outputs"] = outputs;
  return j;
}

// ---------------------------------------------------------------------------
// Synthesis spec (JSON form used by the synth subcommand)
// ---------------------------------------------------------------------------

inline SymbolGenerator generator_from_json(const nlohmann::json& j) {
  std::string kind = j.at("kind").get<std::string>();
  std::vector<std::uint32_t> alphabet;
  if (j.contains("alphabet"))
    alphabet = j.at("alphabet").get<std::vector<std::uint32_t>>();
  if (kind == "deterministic") {
    return SymbolGenerator::deterministic_cycle(std::move(alphabet));
  } else if (kind == "iid") {
    if (j.contains("probs"))
      return SymbolGenerator::iid(std::move(alphabet),
                                  j.at("probs").get<std::vector<double>>());
    return SymbolGenerator::iid_uniform(std::move(alphabet));
  } else if (kind == "markov") {
    return SymbolGenerator::markov_chain(
        std::move(alphabet), j.at("matrix").get<MarkovMatrix>());
  }
  throw ConfigError("synth spec: unknown generator kind '" + kind + "'");
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec spec;
  try {
    spec.n_songs = j.at("n_songs").get<std::size_t>();
    spec.segments_per_song = j.at("segments_per_song").get<std::size_t>();
    if (j.contains("year_range")) {
      auto range = j.at("year_range").get<std::vector<int>>();
      if (range.size() != 2) throw ConfigError("synth spec: bad year_range");
      spec.year_range = {range[0], range[1]};
    }
    if (j.contains("hot100_fraction"))
      spec.hot100_fraction = j.at("hot100_fraction").get<double>();
    if (j.contains("hot100_noise_scale"))
      spec.hot100_noise_scale = j.at("hot100_noise_scale").get<double>();
    if (j.contains("tempo")) spec.tempo = j.at("tempo").get<double>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("genres")) {
      for (const auto& g : j.at("genres")) {
        GenrePlan plan;
        plan.label = g.at("label").get<std::string>();
        if (g.contains("weight")) plan.weight = g.at("weight").get<double>();
        if (g.contains("offsets")) {
          auto offsets = g.at("offsets").get<std::vector<double>>();
          if (offsets.size() != 4)
            throw ConfigError("synth spec: genre offsets need 4 entries");
          std::copy(offsets.begin(), offsets.end(), plan.offsets.begin());
        }
        spec.genres.push_back(std::move(plan));
      }
    }
    if (j.contains("features")) {
      for (const auto& [name, fj] : j.at("features").items()) {
        auto f = feature_from_name(name);
        if (!f) throw ConfigError("synth spec: unknown feature '" + name + "'");
        FeaturePlan& plan = spec.plan(*f);
        if (fj.contains("generator"))
          plan.generator = generator_from_json(fj.at("generator"));
        if (fj.contains("trend")) {
          const auto& t = fj.at("trend");
          TrendPlan trend;
          trend.base_bits = t.at("base_bits").get<double>();
          if (t.contains("slope_per_year"))
            trend.slope_per_year = t.at("slope_per_year").get<double>();
          if (t.contains("ref_year"))
            trend.ref_year = t.at("ref_year").get<int>();
          if (t.contains("noise_sd"))
            trend.noise_sd = t.at("noise_sd").get<double>();
          if (t.contains("symbols")) {
            auto symbols = t.at("symbols").get<std::vector<std::uint32_t>>();
            if (symbols.size() != 2)
              throw ConfigError("synth spec: trend symbols need 2 entries");
            trend.symbols = {symbols[0], symbols[1]};
          }
          plan.trend = trend;
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("synth spec: " + std::string(e.what()));
  }
  return spec;
}

/// Ground-truth manifest: the reference calibration, per-feature plan
/// summaries, and per-song planted entropies.
inline nlohmann::ordered_json ground_truth_json(const SynthSpec& spec,
                                                const SynthCorpus& corpus,
                                                bool per_song) {
  nlohmann::ordered_json j;
  j["seed"] = spec.seed;
  j["n_songs"] = spec.n_songs;
  j["segments_per_song"] = spec.segments_per_song;
  j["year_range"] = {spec.year_range.first, spec.year_range.second};
  j["hot100_fraction"] = spec.hot100_fraction;
  j["calibration"] = calibration_to_json(corpus.truth.calibration);
  j["features"] = nlohmann::ordered_json::object();
  for (Feature f : kAllFeatures) {
    const FeaturePlan& plan = spec.plan(f);
    nlohmann::ordered_json fj;
    if (plan.trend) {
      fj["mode"] = "trend";
      fj["base_bits"] = plan.trend->base_bits;
      fj["slope_per_year"] = plan.trend->slope_per_year;
      fj["ref_year"] = plan.trend->ref_year;
      fj["noise_sd"] = plan.trend->noise_sd;
    } else if (plan.generator) {
      fj["mode"] = plan.generator->kind == SymbolGenerator::Kind::markov
                       ? "markov"
                   : plan.generator->kind == SymbolGenerator::Kind::iid
                       ? "iid"
                       : "deterministic";
      fj["analytic_bits"] = plan.generator->analytic_entropy_bits();
    } else {
      fj["mode"] = "constant";
      fj["analytic_bits"] = 0.0;
    }
    j["features"][feature_name(f)] = std::move(fj);
  }
  if (per_song) {
    j["songs"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < corpus.songs.size(); ++i) {
      nlohmann::ordered_json sj;
      sj["id"] = corpus.songs[i].id;
      for (Feature f : kAllFeatures) {
        const auto& bits =
            corpus.truth.songs[i].entropy_bits[static_cast<std::size_t>(f)];
        if (bits) sj[feature_name(f)] = *bits;
      }
      j["songs"].push_back(std::move(sj));
    }
  }
  return j;
}

}  // namespace cantor
