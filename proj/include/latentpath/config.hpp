#pragma once

// Flat `key = value` run configuration with '#' comments. Flags override
// file values; files override preset values. Unknown keys fail loudly.

#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "latentpath/common.hpp"
#include "latentpath/experiment.hpp"

namespace latentpath {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream stream(s);
  while (std::getline(stream, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const std::string v = trim(value);
  const auto result = std::from_chars(v.data(), v.data() + v.size(), out);
  if (result.ec != std::errc{} || result.ptr != v.data() + v.size()) {
    throw ConfigError("config: bad value '" + value + "' for key '" + key + "'");
  }
  return out;
}

template <>
inline double parse_number<double>(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(trim(value), &used);
    if (used != trim(value).size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: bad value '" + value + "' for key '" + key + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config: bad boolean '" + value + "' for key '" + key + "'");
}

}  // namespace detail

// Ordered key/value pairs exactly as they appear in the file.
inline std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line.erase(comment);
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    }
    entries.emplace_back(detail::trim(trimmed.substr(0, eq)),
                         detail::trim(trimmed.substr(eq + 1)));
  }
  return entries;
}

inline void apply_config_entry(ExperimentConfig& config, const std::string& key,
                               const std::string& value) {
  using detail::parse_bool;
  using detail::parse_number;
  if (key == "patch_size") {
    config.arch.patch_size = parse_number<std::size_t>(key, value);
    config.synth.patch_size = config.arch.patch_size;
  } else if (key == "latent_dim") {
    config.arch.latent_dim = parse_number<std::size_t>(key, value);
  } else if (key == "channel_cap") {
    config.arch.channel_cap = parse_number<std::size_t>(key, value);
  } else if (key == "dr_size") {
    config.dr_size = parse_number<std::size_t>(key, value);
  } else if (key == "db_size") {
    config.db_size = parse_number<std::size_t>(key, value);
  } else if (key == "test_size") {
    config.test_size = parse_number<std::size_t>(key, value);
  } else if (key == "grid") {
    config.nlp_grid.clear();
    for (const auto& item : detail::split_list(value)) {
      config.nlp_grid.push_back(parse_number<std::size_t>(key, item));
    }
    if (config.nlp_grid.empty()) throw ConfigError("config: empty grid");
  } else if (key == "repeats") {
    config.repeats = parse_number<std::size_t>(key, value);
    if (config.repeats < 1) throw ConfigError("config: repeats must be >= 1");
  } else if (key == "base_seed") {
    config.base_seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "ae_epochs") {
    config.ae_epochs = parse_number<std::size_t>(key, value);
  } else if (key == "head_epochs") {
    config.head_epochs = parse_number<std::size_t>(key, value);
  } else if (key == "supervised_epochs") {
    config.supervised_epochs = parse_number<std::size_t>(key, value);
  } else if (key == "batch_size") {
    config.batch_size = parse_number<std::size_t>(key, value);
  } else if (key == "learning_rate") {
    config.learning_rate = parse_number<double>(key, value);
  } else if (key == "kmeans_k") {
    config.kmeans_k = parse_number<std::size_t>(key, value);
  } else if (key == "kmeans_max_iter") {
    config.kmeans_max_iter = parse_number<std::size_t>(key, value);
  } else if (key == "kmeans_tol") {
    config.kmeans_tol = parse_number<double>(key, value);
  } else if (key == "include_cross_stain") {
    config.include_cross_stain = parse_bool(key, value);
  } else if (key == "include_supervised_ihc") {
    config.include_supervised_ihc = parse_bool(key, value);
  } else if (key == "jobs") {
    config.jobs = parse_number<std::size_t>(key, value);
  } else if (key == "ratios") {
    const auto items = detail::split_list(value);
    if (items.size() != class_count) throw ConfigError("config: ratios needs 3 values");
    for (std::size_t c = 0; c < class_count; ++c) {
      config.ratios[c] = parse_number<double>(key, items[c]);
    }
  } else if (key == "aug_hue_degrees") {
    config.augment_ranges.hue_degrees = parse_number<double>(key, value);
  } else if (key == "aug_saturation") {
    config.augment_ranges.saturation = parse_number<double>(key, value);
  } else if (key == "aug_brightness") {
    config.augment_ranges.brightness = parse_number<double>(key, value);
  } else if (key == "aug_contrast") {
    config.augment_ranges.contrast = parse_number<double>(key, value);
  } else if (key == "synth_train_count") {
    config.synth.train_count = parse_number<std::size_t>(key, value);
  } else if (key == "synth_test_count") {
    config.synth.test_count = parse_number<std::size_t>(key, value);
  } else if (key == "synth_appearance_jitter") {
    config.synth.appearance_jitter = parse_number<double>(key, value);
  } else if (key == "synth_clutter") {
    config.synth.clutter = parse_number<double>(key, value);
  } else if (key == "synth_patches_per_slide") {
    config.synth.patches_per_slide = parse_number<std::size_t>(key, value);
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

inline void apply_config_file(ExperimentConfig& config, const std::filesystem::path& path) {
  for (const auto& [key, value] : parse_config_file(path)) {
    apply_config_entry(config, key, value);
  }
}

// Desk preset: the compiled-in defaults (CPU-friendly scale).
inline ExperimentConfig desk_preset() { return ExperimentConfig{}; }

// Full-scale protocol: 256-px patches, 100k-patch sets, the published grid.
inline ExperimentConfig paper_preset() {
  ExperimentConfig config;
  config.arch.patch_size = 256;
  config.arch.latent_dim = 128;
  config.dr_size = 100000;
  config.db_size = 100000;
  config.test_size = 10000;
  config.nlp_grid = {100, 500, 1000, 2000, 10000, 100000};
  config.repeats = 5;
  config.include_supervised_ihc = true;
  config.synth.patch_size = 256;
  config.synth.train_count = 220000;
  config.synth.test_count = 20000;
  return config;
}

inline ExperimentConfig preset_by_name(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw ConfigError("unknown preset '" + name + "' (expected 'desk' or 'paper')");
}

// Full snapshot in config-file syntax; reapplying it reproduces the run.
inline std::map<std::string, std::string> config_snapshot(const ExperimentConfig& config) {
  std::map<std::string, std::string> snap;
  auto put = [&](const std::string& key, auto value) {
    std::ostringstream out;
    out << value;
    snap[key] = out.str();
  };
  put("patch_size", config.arch.patch_size);
  put("latent_dim", config.arch.latent_dim);
  put("channel_cap", config.arch.channel_cap);
  put("dr_size", config.dr_size);
  put("db_size", config.db_size);
  put("test_size", config.test_size);
  {
    std::string grid;
    for (std::size_t i = 0; i < config.nlp_grid.size(); ++i) {
      if (i) grid += ",";
      grid += std::to_string(config.nlp_grid[i]);
    }
    snap["grid"] = grid;
  }
  put("repeats", config.repeats);
  put("base_seed", config.base_seed);
  put("ae_epochs", config.ae_epochs);
  put("head_epochs", config.head_epochs);
  put("supervised_epochs", config.supervised_epochs);
  put("batch_size", config.batch_size);
  put("learning_rate", config.learning_rate);
  put("kmeans_k", config.kmeans_k);
  put("kmeans_max_iter", config.kmeans_max_iter);
  put("kmeans_tol", config.kmeans_tol);
  put("include_cross_stain", config.include_cross_stain ? "1" : "0");
  put("include_supervised_ihc", config.include_supervised_ihc ? "1" : "0");
  put("jobs", config.jobs);
  snap["ratios"] = std::to_string(config.ratios[0]) + "," + std::to_string(config.ratios[1]) +
                   "," + std::to_string(config.ratios[2]);
  put("aug_hue_degrees", config.augment_ranges.hue_degrees);
  put("aug_saturation", config.augment_ranges.saturation);
  put("aug_brightness", config.augment_ranges.brightness);
  put("aug_contrast", config.augment_ranges.contrast);
  put("synth_train_count", config.synth.train_count);
  put("synth_test_count", config.synth.test_count);
  put("synth_appearance_jitter", config.synth.appearance_jitter);
  put("synth_clutter", config.synth.clutter);
  put("synth_patches_per_slide", config.synth.patches_per_slide);
  return snap;
}

}  // namespace latentpath
