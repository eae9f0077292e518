#pragma once

// Paired-stain patch datasets: the unlabeled random pool, the ratio-balanced
// labeled pool, manifest CSV ingestion and dataset directory emission.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "latentpath/common.hpp"
#include "latentpath/image.hpp"
#include "latentpath/rng.hpp"
#include "latentpath/tensor.hpp"

namespace latentpath {

enum class Label : std::uint8_t { Stroma = 0, BenignEpithelium = 1, Tumour = 2 };

inline constexpr std::size_t class_count = 3;

// Tumour-vs-rest binarization used by the F1 metric.
inline bool is_tumour(Label label) { return label == Label::Tumour; }

inline const char* label_name(Label label) {
  switch (label) {
    case Label::Stroma: return "stroma";
    case Label::BenignEpithelium: return "benign";
    case Label::Tumour: return "tumour";
  }
  return "?";
}

inline std::optional<Label> parse_label(std::string token) {
  std::transform(token.begin(), token.end(), token.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (token == "stroma") return Label::Stroma;
  if (token == "benign") return Label::BenignEpithelium;
  if (token == "tumour" || token == "tumor") return Label::Tumour;
  return std::nullopt;
}

struct PatchRecord {
  Tensor he_image;                       // [3,S,S] in [0,1]
  Tensor ihc_image;                      // optional pair image, same shape
  std::optional<Label> label;
  std::string source_id;
  double pixel_resolution_um = 0.96;
  std::vector<std::uint8_t> mask;        // optional per-pixel classes, S*S row-major

  bool has_ihc() const { return ihc_image.defined(); }
  bool has_mask() const { return !mask.empty(); }
  std::size_t patch_size() const { return he_image.extent(1); }
};

enum class SetRole { SourcePool, RandomUnlabeled, BalancedLabeled, Test };

struct PatchSet {
  std::vector<PatchRecord> records;
  SetRole role = SetRole::SourcePool;

  std::size_t size() const { return records.size(); }
  bool fully_labeled() const {
    return std::all_of(records.begin(), records.end(),
                       [](const PatchRecord& r) { return r.label.has_value(); });
  }
};

// Class of the (floor(S/2), floor(S/2)) pixel of a mask patch.
inline Label center_pixel_label(const std::vector<std::uint8_t>& mask, std::size_t size) {
  if (size < 1 || mask.size() != size * size) {
    throw InputError("center_pixel_label: mask size mismatch");
  }
  const std::uint8_t cls = mask[(size / 2) * size + (size / 2)];
  if (cls >= class_count) {
    throw InputError("center_pixel_label: invalid class index " + std::to_string(cls));
  }
  return static_cast<Label>(cls);
}

// Uniform draw of n records without replacement; labels (and masks) are
// dropped, matching the unlabeled pretraining role.
inline PatchSet sample_random(const PatchSet& source, std::size_t n, std::uint64_t seed) {
  if (n > source.size()) {
    throw InputError("sample_random: requested " + std::to_string(n) + " of " +
                     std::to_string(source.size()));
  }
  std::vector<std::size_t> indices(source.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  Rng rng(hash_seed(seed));
  // Partial Fisher-Yates: the first n slots are the sample.
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(indices[i], indices[i + rng.next_index(source.size() - i)]);
  }
  PatchSet out;
  out.role = SetRole::RandomUnlabeled;
  out.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PatchRecord rec = source.records[indices[i]];
    rec.label.reset();
    rec.mask.clear();
    out.records.push_back(std::move(rec));
  }
  return out;
}

// Largest-remainder apportionment of n over the class ratios; ties go to the
// lower class index so counts are deterministic.
inline std::array<std::size_t, class_count> balanced_counts(
    std::size_t n, const std::array<double, class_count>& ratios) {
  std::array<std::size_t, class_count> counts{};
  std::array<double, class_count> remainders{};
  std::size_t used = 0;
  for (std::size_t c = 0; c < class_count; ++c) {
    const double exact = static_cast<double>(n) * ratios[c];
    counts[c] = static_cast<std::size_t>(exact);
    remainders[c] = exact - static_cast<double>(counts[c]);
    used += counts[c];
  }
  std::array<std::size_t, class_count> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t i = 0; used < n; ++i) {
    counts[order[i % class_count]] += 1;
    ++used;
  }
  return counts;
}

inline constexpr std::array<double, class_count> default_class_ratios = {0.25, 0.25, 0.50};

// Ratio-balanced draw: class c contributes round(n * ratio_c) records
// (largest remainder, exact sum), uniform without replacement within class.
inline PatchSet sample_balanced(const PatchSet& source, std::size_t n,
                                const std::array<double, class_count>& ratios,
                                std::uint64_t seed) {
  if (!source.fully_labeled()) {
    throw InputError("sample_balanced: source must be fully labeled");
  }
  std::array<std::vector<std::size_t>, class_count> pools;
  for (std::size_t i = 0; i < source.size(); ++i) {
    pools[static_cast<std::size_t>(*source.records[i].label)].push_back(i);
  }
  const auto counts = balanced_counts(n, ratios);
  for (std::size_t c = 0; c < class_count; ++c) {
    if (counts[c] > pools[c].size()) {
      throw InputError(std::string("sample_balanced: class '") +
                       label_name(static_cast<Label>(c)) + "' has " +
                       std::to_string(pools[c].size()) + " members, need " +
                       std::to_string(counts[c]));
    }
  }
  PatchSet out;
  out.role = SetRole::BalancedLabeled;
  out.records.reserve(n);
  Rng rng(hash_seed(seed));
  for (std::size_t c = 0; c < class_count; ++c) {
    auto& pool = pools[c];
    for (std::size_t i = 0; i < counts[c]; ++i) {
      std::swap(pool[i], pool[i + rng.next_index(pool.size() - i)]);
      out.records.push_back(source.records[pool[i]]);
    }
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(field);
  return fields;
}

}  // namespace detail

inline constexpr const char* manifest_header = "he_path,ihc_path,label,source_id";

// Reads a manifest CSV plus the PPM/PGM files it references. Image paths are
// resolved relative to the manifest's directory. Errors name the failing row.
inline PatchSet load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("manifest: cannot open " + manifest_path.string());
  const auto base = manifest_path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw IoError("manifest: empty file " + manifest_path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != manifest_header) {
    throw IoError("manifest: bad header '" + line + "', expected '" + manifest_header + "'");
  }
  PatchSet out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 4) {
      throw IoError("manifest: row " + std::to_string(row) + " has " +
                    std::to_string(fields.size()) + " fields, expected 4");
    }
    PatchRecord rec;
    try {
      rec.he_image = image_to_tensor(read_ppm(base / fields[0]));
      if (!fields[1].empty()) {
        rec.ihc_image = image_to_tensor(read_ppm(base / fields[1]));
        if (rec.ihc_image.shape() != rec.he_image.shape()) {
          throw IoError("pair members have different dimensions");
        }
      }
    } catch (const IoError& err) {
      throw IoError("manifest: row " + std::to_string(row) + ": " + err.what());
    }
    if (!fields[2].empty()) {
      const auto label = parse_label(fields[2]);
      if (!label) {
        throw IoError("manifest: row " + std::to_string(row) + ": unknown label token '" +
                      fields[2] + "'");
      }
      rec.label = *label;
    }
    rec.source_id = fields[3];
    out.records.push_back(std::move(rec));
  }
  return out;
}

// Emits the dataset directory layout: images/, masks/, manifest.csv.
inline void save_dataset(const std::filesystem::path& dir, const PatchSet& set) {
  std::filesystem::create_directories(dir / "images");
  const bool any_mask =
      std::any_of(set.records.begin(), set.records.end(),
                  [](const PatchRecord& r) { return r.has_mask(); });
  if (any_mask) std::filesystem::create_directories(dir / "masks");
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw IoError("dataset: cannot write manifest in " + dir.string());
  manifest << manifest_header << "\n";
  char name[64];
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    const PatchRecord& rec = set.records[i];
    std::snprintf(name, sizeof(name), "images/he_%05zu.ppm", i);
    const std::string he_rel = name;
    write_ppm(dir / he_rel, tensor_to_image(rec.he_image));
    std::string ihc_rel;
    if (rec.has_ihc()) {
      std::snprintf(name, sizeof(name), "images/ihc_%05zu.ppm", i);
      ihc_rel = name;
      write_ppm(dir / ihc_rel, tensor_to_image(rec.ihc_image));
    }
    if (rec.has_mask()) {
      std::snprintf(name, sizeof(name), "masks/mask_%05zu.pgm", i);
      ImageU8 mask_img;
      mask_img.width = mask_img.height = rec.patch_size();
      mask_img.channels = 1;
      mask_img.pixels = rec.mask;
      write_pgm(dir / name, mask_img);
    }
    manifest << he_rel << "," << ihc_rel << ","
             << (rec.label ? label_name(*rec.label) : "") << "," << rec.source_id << "\n";
  }
  if (!manifest) throw IoError("dataset: manifest write failed in " + dir.string());
}

}  // namespace latentpath
