/// cantor CLI: discretizes song corpora into codewords, measures per-song
/// conditional-entropy complexity, and runs the corpus studies
/// (popularity comparison, epoch trends, contemporary divergence, genre
/// clustering). Reads JSONL corpora, writes CSV/JSON reports.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cantor/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cantor;

namespace {

struct GlobalOptions {
  std::string input;
  std::string charts;
  std::string config_path;
  std::string out_dir = ".";
  std::string calibration_path;
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0 = hardware concurrency
};

PipelineConfig effective_config(const GlobalOptions& opts) {
  PipelineConfig config;
  if (!opts.config_path.empty()) config = load_config(opts.config_path);
  config.validate();
  return config;
}

struct PreparedCorpus {
  LoadedCorpus loaded;
  TimbreCalibration calibration;
  std::string calibration_source;
};

PreparedCorpus prepare(const GlobalOptions& opts,
                       const PipelineConfig& config) {
  if (opts.input.empty())
    throw ConfigError("--input is required for this command");
  PreparedCorpus prepared;
  std::optional<fs::path> charts;
  if (!opts.charts.empty()) charts = fs::path(opts.charts);
  prepared.loaded = load_corpus(opts.input, charts, config, opts.threads);
  if (!opts.calibration_path.empty()) {
    prepared.calibration = load_calibration_json(opts.calibration_path);
    prepared.calibration_source = opts.calibration_path;
  } else {
    prepared.calibration =
        calibrate_corpus_timbre(prepared.loaded.songs, config, opts.seed);
    prepared.calibration_source = "computed";
  }
  return prepared;
}

std::vector<std::pair<std::string, fs::path>> manifest_inputs(
    const GlobalOptions& opts) {
  std::vector<std::pair<std::string, fs::path>> inputs;
  if (!opts.input.empty()) inputs.emplace_back("input", opts.input);
  if (!opts.charts.empty()) inputs.emplace_back("charts", opts.charts);
  if (!opts.config_path.empty()) inputs.emplace_back("config", opts.config_path);
  if (!opts.calibration_path.empty())
    inputs.emplace_back("calibration", opts.calibration_path);
  return inputs;
}

void finish(const GlobalOptions& opts, const PipelineConfig& config,
            const std::string& command, std::vector<std::string> outputs,
            nlohmann::ordered_json extra = {}) {
  auto manifest = make_manifest(command, config, opts.seed,
                                manifest_inputs(opts), outputs);
  if (!extra.is_null() && !extra.empty())
    for (auto& [key, value] : extra.items()) manifest[key] = value;
  write_file(fs::path(opts.out_dir) / "run_manifest.json",
             manifest.dump(2) + "\n");
}

void ensure_out_dir(const GlobalOptions& opts) {
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + opts.out_dir);
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

void cmd_ingest(const GlobalOptions& opts) {
  auto config = effective_config(opts);
  ensure_out_dir(opts);
  std::optional<fs::path> charts;
  if (!opts.charts.empty()) charts = fs::path(opts.charts);
  LoadedCorpus loaded = load_corpus(opts.input, charts, config, opts.threads);
  fs::path out = fs::path(opts.out_dir);
  save_corpus_jsonl(out / "corpus.jsonl", loaded.songs);
  write_filter_report_json(out / "filter_report.json", loaded.report);
  std::uint64_t flagged = 0;
  for (const auto& s : loaded.songs) flagged += s.hot100 ? 1 : 0;
  nlohmann::ordered_json extra;
  extra["stats"] = {{"input_count", loaded.report.input_count},
                    {"output_count", loaded.report.output_count},
                    {"hot100_matched", flagged}};
  finish(opts, config, "ingest", {"corpus.jsonl", "filter_report.json"},
         extra);
  std::cout << "ingest: " << loaded.report.input_count << " -> "
            << loaded.report.output_count << " songs (" << flagged
            << " hot100)\n";
}

void cmd_calibrate(const GlobalOptions& opts) {
  auto config = effective_config(opts);
  ensure_out_dir(opts);
  auto prepared = prepare(opts, config);
  write_calibration_json(fs::path(opts.out_dir) / "calibration.json",
                         prepared.calibration);
  finish(opts, config, "calibrate", {"calibration.json"});
  std::cout << "calibrate: thresholds over " << prepared.loaded.songs.size()
            << " songs written\n";
}

void cmd_complexity(const GlobalOptions& opts) {
  auto config = effective_config(opts);
  ensure_out_dir(opts);
  auto prepared = prepare(opts, config);
  ComplexityStudy study = run_complexity(prepared.loaded.songs,
                                         prepared.calibration, config,
                                         opts.threads);
  fs::path out = fs::path(opts.out_dir);
  write_profiles_csv(out / "profiles.csv", study.rows);
  write_histograms_csv(out / "histograms.csv", study.histograms);
  nlohmann::ordered_json extra;
  extra["stats"] = {{"songs", study.rows.size()},
                    {"calibration", prepared.calibration_source}};
  finish(opts, config, "complexity", {"profiles.csv", "histograms.csv"},
         extra);
  std::cout << "complexity: " << study.rows.size() << " profiles written\n";
}

void cmd_compare_popularity(const GlobalOptions& opts) {
  auto config = effective_config(opts);
  ensure_out_dir(opts);
  auto prepared = prepare(opts, config);
  auto profiles = compute_profiles(prepared.loaded.songs,
                                   prepared.calibration, config.codec,
                                   opts.threads);
  auto rows = run_popularity_comparison(profiles, config, opts.seed);
  write_popularity_csv(fs::path(opts.out_dir) / "popularity.csv", rows);
  finish(opts, config, "compare-popularity", {"popularity.csv"});
  std::cout << "compare-popularity: " << rows.size() << " rows written\n";
}

void cmd_trends(const GlobalOptions& opts) {
  auto config = effective_config(opts);
  ensure_out_dir(opts);
  auto prepared = prepare(opts, config);
  auto profiles = compute_profiles(prepared.loaded.songs,
                                   prepared.calibration, config.codec,
                                   opts.threads);
  TrendsStudy study = run_trends(profiles, config, opts.seed);
  write_trends_csv(fs::path(opts.out_dir) / "trends.csv", study);
  finish(opts, config, "trends", {"trends.csv"});
  std::cout << "trends: " << study.yearly.size() << " yearly rows, "
            << study.fits.size() << " fits\n";
}

void cmd_divergence(const GlobalOptions& opts) {
  auto config = effective_config(opts);
  ensure_out_dir(opts);
  auto prepared = prepare(opts, config);
  DivergenceStudy study =
      run_divergence(prepared.loaded.songs, prepared.calibration, config,
                     opts.seed, opts.threads);
  write_divergence_csv(fs::path(opts.out_dir) / "divergence.csv", study);
  nlohmann::ordered_json extra;
  extra["warnings"] = {{"skipped_years", study.skipped_years}};
  finish(opts, config, "divergence", {"divergence.csv"}, extra);
  std::cout << "divergence: " << study.yearly.size() << " yearly rows ("
            << study.skipped_years << " years skipped)\n";
}

void cmd_genres(const GlobalOptions& opts) {
  auto config = effective_config(opts);
  ensure_out_dir(opts);
  auto prepared = prepare(opts, config);
  auto profiles = compute_profiles(prepared.loaded.songs,
                                   prepared.calibration, config.codec,
                                   opts.threads);
  GenresStudy study = run_genres(profiles, config, opts.seed);
  fs::path out = fs::path(opts.out_dir);
  write_genres_csv(out / "genres.csv", study);
  write_dendrogram_json(out / "dendrogram.json", study.tree, study.cut);
  finish(opts, config, "genres", {"genres.csv", "dendrogram.json"});
  std::cout << "genres: " << study.profiles.size() << " genres, optimal k = "
            << study.cut.k << "\n";
}

void cmd_cluster(const GlobalOptions& opts, bool newick) {
  auto config = effective_config(opts);
  ensure_out_dir(opts);
  auto prepared = prepare(opts, config);
  auto profiles = compute_profiles(prepared.loaded.songs,
                                   prepared.calibration, config.codec,
                                   opts.threads);
  std::vector<std::pair<std::string, ComplexityProfile>> labeled;
  for (const auto& row : profiles)
    if (row.genre) labeled.emplace_back(*row.genre, row.profile);
  auto genre_means = genre_profiles(
      labeled, static_cast<std::size_t>(config.min_genre_songs));
  if (genre_means.size() < 2)
    throw InsufficientDataError(
        "cluster: fewer than 2 genres above the song threshold");
  auto cluster_input = config.standardize
                           ? standardize_profiles(genre_means)
                           : genre_means;
  ClusterTree tree = agglomerate(cluster_input, config.linkage);
  CutResult cut = cut_tree(tree, 2, static_cast<int>(tree.leaves.size()));
  fs::path out = fs::path(opts.out_dir);
  write_dendrogram_json(out / "dendrogram.json", tree, cut);
  std::vector<std::string> outputs = {"dendrogram.json"};
  if (newick) {
    write_file(out / "dendrogram.newick", to_newick(tree) + "\n");
    outputs.push_back("dendrogram.newick");
  }
  finish(opts, config, "cluster", outputs);
  std::cout << "cluster: " << tree.leaves.size() << " genres, optimal k = "
            << cut.k << "\n";
}

void cmd_synth(const GlobalOptions& opts, const std::string& spec_path,
               bool per_song_truth) {
  auto config = effective_config(opts);
  ensure_out_dir(opts);
  nlohmann::json spec_json;
  try {
    spec_json = nlohmann::json::parse(read_file(spec_path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("synth spec: " + std::string(e.what()));
  }
  SynthSpec spec = synth_spec_from_json(spec_json);
  if (!spec_json.contains("seed")) spec.seed = opts.seed;
  SynthCorpus corpus = generate_corpus(spec);
  fs::path out = fs::path(opts.out_dir);
  save_corpus_jsonl(out / "corpus.jsonl", corpus.songs);
  write_file(out / "ground_truth.json",
             ground_truth_json(spec, corpus, per_song_truth).dump(2) + "\n");
  write_calibration_json(out / "calibration.json", corpus.truth.calibration);
  nlohmann::ordered_json extra;
  extra["stats"] = {{"songs", corpus.songs.size()},
                    {"segments_per_song", spec.segments_per_song}};
  auto manifest = make_manifest("synth", config, spec.seed,
                                {{"spec", spec_path}},
                                {"corpus.jsonl", "ground_truth.json",
                                 "calibration.json"});
  manifest["stats"] = extra["stats"];
  write_file(out / "run_manifest.json", manifest.dump(2) + "\n");
  std::cout << "synth: " << corpus.songs.size() << " songs written\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"symbolic song-complexity analytics"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions opts;
  app.add_option("--input", opts.input, "corpus JSONL path");
  app.add_option("--charts", opts.charts, "chart CSV path (title,artist)");
  app.add_option("--config", opts.config_path, "flat key = value config file");
  app.add_option("--seed", opts.seed, "master seed for randomized steps");
  app.add_option("--out", opts.out_dir, "output directory");
  app.add_option("--threads", opts.threads,
                 "worker threads (0 = hardware concurrency)");
  app.add_option("--calibration", opts.calibration_path,
                 "timbre calibration JSON (otherwise computed from corpus)");

  auto* ingest = app.add_subcommand(
      "ingest", "parse, filter and flag a corpus; write corpus.jsonl");
  auto* calibrate = app.add_subcommand(
      "calibrate", "compute timbre tercile thresholds; write calibration.json");
  auto* complexity = app.add_subcommand(
      "complexity", "per-song profiles and histograms");
  auto* popularity = app.add_subcommand(
      "compare-popularity", "hot100 mean/variance vs bootstrap CIs");
  auto* trends = app.add_subcommand(
      "trends", "yearly means and per-epoch OLS fits");
  auto* divergence = app.add_subcommand(
      "divergence", "yearly KL divergence of hot100 songs vs contemporaries");
  auto* genres = app.add_subcommand(
      "genres", "genre deviations, KS tests, correlations and dendrogram");
  auto* cluster = app.add_subcommand(
      "cluster", "genre dendrogram and optimal communities only");
  bool newick = false;
  cluster->add_flag("--newick", newick, "also write dendrogram.newick");
  auto* synth = app.add_subcommand(
      "synth", "generate a synthetic corpus with planted ground truth");
  std::string spec_path;
  bool per_song_truth = false;
  synth->add_option("--spec", spec_path, "synthesis spec JSON")->required();
  synth->add_flag("--per-song-truth", per_song_truth,
                  "record per-song planted entropies in ground_truth.json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) cmd_ingest(opts);
    if (calibrate->parsed()) cmd_calibrate(opts);
    if (complexity->parsed()) cmd_complexity(opts);
    if (popularity->parsed()) cmd_compare_popularity(opts);
    if (trends->parsed()) cmd_trends(opts);
    if (divergence->parsed()) cmd_divergence(opts);
    if (genres->parsed()) cmd_genres(opts);
    if (cluster->parsed()) cmd_cluster(opts, newick);
    if (synth->parsed()) cmd_synth(opts, spec_path, per_song_truth);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
