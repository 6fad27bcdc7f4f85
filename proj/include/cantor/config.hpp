#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cantor/cluster.hpp"
#include "cantor/codec.hpp"
#include "cantor/corpus.hpp"
#include "cantor/csv.hpp"
#include "cantor/errors.hpp"

namespace cantor {

/// Epoch boundaries for the trend studies. Consecutive boundaries delimit
/// half-open intervals [b_i, b_{i+1}); a boundary year belongs to the later
/// epoch. The span before the first interior boundary is reported in yearly
/// tables but never fitted, and the final epoch keeps its last year (there
/// is no later epoch to hand it to).
struct EpochSet {
  std::vector<int> boundaries = {1960, 1964, 1983, 1991, 2010};

  void validate() const {
    if (boundaries.size() < 2)
      throw ConfigError("epochs: need at least 2 boundaries");
    for (std::size_t i = 1; i < boundaries.size(); ++i)
      if (boundaries[i] <= boundaries[i - 1])
        throw ConfigError("epochs: boundaries must be strictly increasing");
  }

  struct Interval {
    int start;      // inclusive
    int end;        // exclusive fit bound
    int label_end;  // inclusive year named in reports
  };

  /// Fit windows: one per consecutive boundary pair after the first span.
  std::vector<Interval> fit_intervals() const {
    validate();
    std::vector<Interval> out;
    for (std::size_t i = 1; i + 1 < boundaries.size(); ++i) {
      bool last = i + 2 == boundaries.size();
      out.push_back({boundaries[i],
                     last ? boundaries[i + 1] + 1 : boundaries[i + 1],
                     boundaries[i + 1]});
    }
    return out;
  }
};

/// Every free parameter of the pipeline, loadable from a flat key = value
/// config file.
struct PipelineConfig {
  CodecConfig codec;
  FilterConfig filter;
  double kl_alpha = 1.0;
  int bootstrap_n = 1000;        // popularity / yearly CIs
  int genre_bootstrap_n = 100;   // genre deviation table
  EpochSet epochs;
  int min_genre_songs = 5000;
  Linkage linkage = Linkage::average;
  bool standardize = false;
  double hist_bin_bits = 0.1;
  double hist_bin_bits_timbre = 0.02;
  std::size_t calibration_max_segments = 2000000;

  void validate() const {
    codec.validate();
    if (kl_alpha < 0.0) throw ConfigError("kl_alpha must be >= 0");
    if (bootstrap_n < 1) throw ConfigError("bootstrap_n must be >= 1");
    if (genre_bootstrap_n < 1)
      throw ConfigError("genre_bootstrap_n must be >= 1");
    if (min_genre_songs < 0) throw ConfigError("min_genre_songs must be >= 0");
    if (hist_bin_bits <= 0.0 || hist_bin_bits_timbre <= 0.0)
      throw ConfigError("histogram bin widths must be > 0");
    if (calibration_max_segments < 1)
      throw ConfigError("calibration_max_segments must be >= 1");
    epochs.validate();
  }

  double hist_bin(Feature f) const {
    return f == Feature::timbre ? hist_bin_bits_timbre : hist_bin_bits;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": '" + v + "'");
  }
}

inline long long parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  std::string tail = trim(cur);
  if (!tail.empty() || !out.empty()) out.push_back(tail);
  return out;
}

}  // namespace detail

/// Applies one key = value assignment. Unknown keys are errors.
inline void apply_config_entry(PipelineConfig& config, const std::string& key,
                               const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  if (key == "pitch_threshold") {
    config.codec.pitch_threshold = parse_double(value, key);
  } else if (key == "loudness_bin_width") {
    config.codec.loudness_bin_width = parse_double(value, key);
  } else if (key == "loudness_min_bin") {
    config.codec.loudness_min_bin = static_cast<int>(parse_int(value, key));
  } else if (key == "rhythm_cap") {
    config.codec.rhythm_cap = static_cast<int>(parse_int(value, key));
  } else if (key == "timbre_drop_component") {
    config.codec.timbre_drop_component =
        static_cast<int>(parse_int(value, key));
  } else if (key == "kl_alpha") {
    config.kl_alpha = parse_double(value, key);
  } else if (key == "bootstrap_n") {
    config.bootstrap_n = static_cast<int>(parse_int(value, key));
  } else if (key == "genre_bootstrap_n") {
    config.genre_bootstrap_n = static_cast<int>(parse_int(value, key));
  } else if (key == "epochs") {
    config.epochs.boundaries.clear();
    for (const auto& item : detail::split_list(value))
      config.epochs.boundaries.push_back(
          static_cast<int>(parse_int(item, key)));
  } else if (key == "min_genre_songs") {
    config.min_genre_songs = static_cast<int>(parse_int(value, key));
  } else if (key == "linkage") {
    auto l = linkage_from_name(value);
    if (!l) throw ConfigError("config: unknown linkage '" + value + "'");
    config.linkage = *l;
  } else if (key == "standardize") {
    config.standardize = parse_bool(value, key);
  } else if (key == "year_filter") {
    config.filter.year_filter_enabled = parse_bool(value, key);
  } else if (key == "year_min") {
    config.filter.year_min = static_cast<int>(parse_int(value, key));
  } else if (key == "year_max") {
    config.filter.year_max = static_cast<int>(parse_int(value, key));
  } else if (key == "commentary_tokens") {
    config.filter.commentary_tokens = detail::split_list(value);
  } else if (key == "hist_bin_bits") {
    config.hist_bin_bits = parse_double(value, key);
  } else if (key == "hist_bin_bits_timbre") {
    config.hist_bin_bits_timbre = parse_double(value, key);
  } else if (key == "calibration_max_segments") {
    config.calibration_max_segments =
        static_cast<std::size_t>(parse_int(value, key));
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

/// Parses the flat config format: one `key = value` per line, '#' comments,
/// blank lines ignored.
inline PipelineConfig parse_config(std::string_view text) {
  PipelineConfig config;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? eol : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(line_no) +
                        " is not key = value");
    std::string key = detail::trim(stripped.substr(0, eq));
    std::string value = detail::trim(stripped.substr(eq + 1));
    apply_config_entry(config, key, value);
  }
  config.validate();
  return config;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path));
}

/// Config echo for the run manifest; every parameter in stable order.
inline nlohmann::ordered_json config_to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["pitch_threshold"] = c.codec.pitch_threshold;
  j["loudness_bin_width"] = c.codec.loudness_bin_width;
  j["loudness_min_bin"] = c.codec.loudness_min_bin;
  j["rhythm_cap"] = c.codec.rhythm_cap;
  j["timbre_drop_component"] = c.codec.timbre_drop_component;
  j["kl_alpha"] = c.kl_alpha;
  j["bootstrap_n"] = c.bootstrap_n;
  j["genre_bootstrap_n"] = c.genre_bootstrap_n;
  j["epochs"] = c.epochs.boundaries;
  j["min_genre_songs"] = c.min_genre_songs;
  j["linkage"] = linkage_name(c.linkage);
  j["standardize"] = c.standardize;
  j["year_filter"] = c.filter.year_filter_enabled;
  j["year_min"] = c.filter.year_min;
  j["year_max"] = c.filter.year_max;
  j["commentary_tokens"] = c.filter.commentary_tokens;
  j["hist_bin_bits"] = c.hist_bin_bits;
  j["hist_bin_bits_timbre"] = c.hist_bin_bits_timbre;
  j["calibration_max_segments"] = c.calibration_max_segments;
  return j;
}

}  // namespace cantor
