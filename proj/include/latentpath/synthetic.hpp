#pragma once

// Procedural paired-stain patch generator. Three tissue textures: smooth
// pink stroma, benign glands (large epithelial rings around white lumens),
// and tumour nests (crowded microglands with little or no lumen). Benign
// and tumour share the epithelium palette and differ in geometry, so color
// alone cannot separate them. Patches group into pseudo-slides that share a
// palette and texture style; the slide-to-slide variation is what makes tiny
// supervised label budgets genuinely hard. The "IHC-like" pair image is
// recolored from the class field (epithelium brown on pale counterstain)
// with no palette jitter, so the cross-stain target carries clean class
// signal.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "latentpath/color.hpp"
#include "latentpath/data.hpp"
#include "latentpath/rng.hpp"
#include "latentpath/tensor.hpp"

namespace latentpath {

struct SynthConfig {
  std::size_t patch_size = 64;
  std::size_t train_count = 4000;
  std::size_t test_count = 2000;
  std::array<double, class_count> class_ratios = {0.40, 0.30, 0.30};
  double appearance_jitter = 1.0;   // scales the slide-level palette shift
  double clutter = 1.0;             // density of off-center structures
  std::size_t patches_per_slide = 32;
  bool with_ihc = true;
};

namespace synth_detail {

inline double hash01(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return static_cast<double>(hash_seed(seed, a, b) >> 11) * 0x1.0p-53;
}

// Bilinear value noise over a hashed lattice, smoothstep-eased, in [0,1].
inline double value_noise(std::uint64_t seed, double x, double y, double period) {
  const double gx = x / period, gy = y / period;
  const auto x0 = static_cast<std::int64_t>(std::floor(gx));
  const auto y0 = static_cast<std::int64_t>(std::floor(gy));
  double tx = gx - static_cast<double>(x0);
  double ty = gy - static_cast<double>(y0);
  tx = tx * tx * (3.0 - 2.0 * tx);
  ty = ty * ty * (3.0 - 2.0 * ty);
  const auto ux0 = static_cast<std::uint64_t>(x0), uy0 = static_cast<std::uint64_t>(y0);
  const double v00 = hash01(seed, ux0, uy0);
  const double v10 = hash01(seed, ux0 + 1, uy0);
  const double v01 = hash01(seed, ux0, uy0 + 1);
  const double v11 = hash01(seed, ux0 + 1, uy0 + 1);
  return (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty;
}

// Constant random value per (cell x cell) block; the nuclear dot field.
inline double cell_noise(std::uint64_t seed, std::size_t x, std::size_t y, std::size_t cell) {
  return hash01(seed, x / cell, y / cell);
}

// Slide-level style: palette shift plus texture statistics. Thirty labeled
// patches only cover a handful of slides; two thousand cover them all.
struct SlideStyle {
  double hue_shift = 0.0;
  double sat_scale = 1.0;
  double brightness = 0.0;
  double contrast = 1.0;
  double dot_density = 0.45;   // nuclear speckle density inside epithelium
  double dot_cell_scale = 1.0; // speckle grain
  double band_scale = 1.0;     // epithelial band thickness
  double epi_contrast = 1.0;   // how far epithelium separates from stroma
  double noise_amp = 1.0;
};

inline SlideStyle slide_style(std::uint64_t seed, std::uint64_t slide, double jitter) {
  Rng rng(hash_seed(seed, 0x51aull, slide));
  SlideStyle s;
  s.hue_shift = jitter * rng.uniform(-30.0, 30.0);
  s.sat_scale = 1.0 + jitter * rng.uniform(-0.35, 0.35);
  s.brightness = jitter * rng.uniform(-0.14, 0.14);
  s.contrast = 1.0 + jitter * rng.uniform(-0.22, 0.22);
  s.dot_density = rng.uniform(0.32, 0.60);
  s.dot_cell_scale = rng.uniform(0.9, 2.1);
  s.band_scale = rng.uniform(0.85, 1.25);
  s.epi_contrast = rng.uniform(0.55, 1.0);
  s.noise_amp = rng.uniform(0.75, 1.35);
  return s;
}

inline void apply_palette(double& r, double& g, double& b, const SlideStyle& s) {
  Hsv hsv = rgb_to_hsv({r, g, b});
  hsv.h = std::fmod(hsv.h + s.hue_shift + 360.0, 360.0);
  hsv.s = std::clamp(hsv.s * s.sat_scale, 0.0, 1.0);
  Rgb px = hsv_to_rgb(hsv);
  r = std::clamp((px.r - 0.5) * s.contrast + 0.5 + s.brightness, 0.0, 1.0);
  g = std::clamp((px.g - 0.5) * s.contrast + 0.5 + s.brightness, 0.0, 1.0);
  b = std::clamp((px.b - 0.5) * s.contrast + 0.5 + s.brightness, 0.0, 1.0);
}

// One gland: an epithelial annulus around a lumen. Tumour microglands are
// small with little or no lumen; benign glands are large with open lumens.
struct Gland {
  double cx = 0.0, cy = 0.0;
  double radius = 0.0;      // outer radius
  double lumen_radius = 0.0;
  std::uint8_t cls = 1;     // 1 benign, 2 tumour

  bool band_contains(double x, double y) const {
    const double d = std::hypot(x - cx, y - cy);
    return d <= radius && d >= lumen_radius;
  }
  bool lumen_contains(double x, double y) const {
    return std::hypot(x - cx, y - cy) < lumen_radius;
  }
  bool covers(double x, double y) const { return std::hypot(x - cx, y - cy) <= radius; }
};

inline Gland benign_gland(Rng& rng, double cx, double cy, double scale,
                          const SlideStyle& style) {
  Gland g;
  g.cls = 1;
  g.cx = cx;
  g.cy = cy;
  g.radius = scale * rng.uniform(0.14, 0.26);
  const double band = std::min(g.radius * 0.8, scale * rng.uniform(0.05, 0.08) * style.band_scale);
  g.lumen_radius = g.radius - band;
  return g;
}

// A tumour nest: crowded microglands. The first one is solid and anchored.
inline std::vector<Gland> tumour_nest(Rng& rng, double cx, double cy, double scale,
                                      const SlideStyle& style) {
  std::vector<Gland> nest;
  const int count = 3 + static_cast<int>(rng.next_index(4));
  for (int i = 0; i < count; ++i) {
    Gland g;
    g.cls = 2;
    if (i == 0) {
      g.cx = cx;
      g.cy = cy;
    } else {
      g.cx = cx + scale * rng.uniform(-0.16, 0.16);
      g.cy = cy + scale * rng.uniform(-0.16, 0.16);
    }
    g.radius = scale * rng.uniform(0.05, 0.10);
    // scarce, cramped lumens; the anchor microgland is solid
    const double lumen_frac = (i == 0) ? 0.0 : std::max(0.0, rng.uniform(-0.25, 0.35));
    g.lumen_radius = g.radius * lumen_frac * style.band_scale;
    nest.push_back(g);
  }
  return nest;
}

// Class/lumen painter shared by the patch and region generators.
struct TissueField {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> classes;  // 0/1/2
  std::vector<std::uint8_t> lumen;    // white gland interiors (color only)

  void init(std::size_t w, std::size_t h) {
    width = w;
    height = h;
    classes.assign(w * h, 0);
    lumen.assign(w * h, 0);
  }

  void paint(const Gland& g) {
    const auto x_lo = static_cast<std::size_t>(std::max(0.0, std::floor(g.cx - g.radius - 1)));
    const auto y_lo = static_cast<std::size_t>(std::max(0.0, std::floor(g.cy - g.radius - 1)));
    const auto x_hi = std::min(width, static_cast<std::size_t>(
                                          std::max(0.0, std::ceil(g.cx + g.radius + 1))));
    const auto y_hi = std::min(height, static_cast<std::size_t>(
                                           std::max(0.0, std::ceil(g.cy + g.radius + 1))));
    for (std::size_t y = y_lo; y < y_hi; ++y) {
      for (std::size_t x = x_lo; x < x_hi; ++x) {
        const auto fx = static_cast<double>(x), fy = static_cast<double>(y);
        const std::size_t i = y * width + x;
        if (g.band_contains(fx, fy)) {
          classes[i] = g.cls;
          lumen[i] = 0;
        } else if (g.lumen_contains(fx, fy)) {
          if (g.cls == 1) {
            // benign lumens are real stroma-class holes
            classes[i] = 0;
          }
          lumen[i] = 1;
        }
      }
    }
  }

  void paint_all(const std::vector<Gland>& glands) {
    for (const auto& g : glands) paint(g);
  }
};

// H&E rendering. Epithelium of both classes shares one purple palette,
// faded toward the stroma tone on low-contrast slides.
inline void he_pixel(const TissueField& field, std::size_t x, std::size_t y,
                     std::uint64_t texture_seed, const SlideStyle& style,
                     std::size_t dot_cell, double& r, double& g, double& b) {
  const std::size_t i = y * field.width + x;
  const auto fx = static_cast<double>(x), fy = static_cast<double>(y);
  const std::uint8_t cls = field.classes[i];

  // stroma ground: smooth pink collagen
  const double t = value_noise(hash_seed(texture_seed, 3), fx, fy, 16.0);
  const double fine = (value_noise(hash_seed(texture_seed, 4), fx, fy, 5.0) - 0.5) *
                      style.noise_amp;
  double sr = 0.93 + (0.80 - 0.93) * t + 0.05 * fine;
  double sg = 0.78 + (0.55 - 0.78) * t + 0.05 * fine;
  double sb = 0.85 + (0.68 - 0.85) * t + 0.05 * fine;

  if (cls == 0) {
    if (field.lumen[i]) {
      const double n =
          (value_noise(hash_seed(texture_seed, 9), fx, fy, 8.0) - 0.5) * style.noise_amp;
      r = 0.96 + 0.03 * n;
      g = 0.945 + 0.03 * n;
      b = 0.965 + 0.03 * n;
    } else {
      r = sr;
      g = sg;
      b = sb;
    }
    return;
  }

  // epithelium: purple cytoplasm with nuclear dots, shared by both classes
  double er, eg, eb;
  const double dot =
      cell_noise(hash_seed(texture_seed, 2), x, y, dot_cell) < style.dot_density ? 1.0 : 0.0;
  if (dot > 0.5) {
    er = 0.37; eg = 0.21; eb = 0.49;
  } else {
    er = 0.64; eg = 0.45; eb = 0.68;
  }
  const double n =
      (value_noise(hash_seed(texture_seed, 5), fx, fy, 4.0) - 0.5) * 0.08 * style.noise_amp;
  er += n;
  eg += n;
  eb += n;
  // faint slides pull the epithelium toward the stroma tone
  r = sr + (er - sr) * style.epi_contrast;
  g = sg + (eg - sg) * style.epi_contrast;
  b = sb + (eb - sb) * style.epi_contrast;
  if (field.lumen[i]) {  // cramped microgland lumens read as pale slits
    r = 0.90; g = 0.88; b = 0.91;
  }
}

// IHC rendering keyed on the class field: epithelium brown, stroma pale
// blue. No slide palette, so the target is class-revealing.
inline void ihc_pixel(const TissueField& field, std::size_t x, std::size_t y,
                      std::uint64_t texture_seed, const SlideStyle& style,
                      std::size_t dot_cell, double& r, double& g, double& b) {
  const std::size_t i = y * field.width + x;
  const auto fx = static_cast<double>(x), fy = static_cast<double>(y);
  const std::uint8_t cls = field.classes[i];
  if (cls == 0) {
    if (field.lumen[i]) {
      r = 0.95; g = 0.95; b = 0.97;
    } else {
      const double t = value_noise(hash_seed(texture_seed, 3), fx, fy, 16.0);
      r = 0.84 - 0.06 * t;
      g = 0.87 - 0.05 * t;
      b = 0.94 - 0.04 * t;
    }
    return;
  }
  const double dot =
      cell_noise(hash_seed(texture_seed, 2), x, y, dot_cell) < style.dot_density ? 1.0 : 0.0;
  if (dot > 0.5) {
    r = 0.38; g = 0.23; b = 0.10;
  } else {
    r = 0.58; g = 0.40; b = 0.22;
  }
  if (field.lumen[i]) {
    r = 0.93; g = 0.92; b = 0.95;
  }
}

}  // namespace synth_detail

// One procedural patch. The center pixel's class always equals the drawn
// center class: clutter that would overpaint it is re-rolled, the center
// structure is painted last.
inline PatchRecord generate_patch(const SynthConfig& config, std::uint64_t record_seed,
                                  const synth_detail::SlideStyle& style,
                                  std::string source_id) {
  using namespace synth_detail;
  const std::size_t s = config.patch_size;
  const double scale = static_cast<double>(s);
  const double center = std::floor(static_cast<double>(s) / 2.0);
  Rng rng(record_seed);

  const double u = rng.next_double();
  std::uint8_t center_class = 0;
  double acc = 0.0;
  for (std::size_t c = 0; c < class_count; ++c) {
    acc += config.class_ratios[c];
    if (u < acc) {
      center_class = static_cast<std::uint8_t>(c);
      break;
    }
  }

  TissueField field;
  field.init(s, s);

  const auto n_extra = static_cast<std::size_t>(
      config.clutter * static_cast<double>(rng.next_index(4)));
  for (std::size_t k = 0; k < n_extra; ++k) {
    const bool benign = rng.next_double() < 0.5;
    for (int attempt = 0; attempt < 6; ++attempt) {
      const double cx = rng.uniform(0.0, scale);
      const double cy = rng.uniform(0.0, scale);
      if (benign) {
        const Gland gland = benign_gland(rng, cx, cy, scale * 0.8, style);
        if (gland.covers(center, center)) continue;
        field.paint(gland);
      } else {
        const auto nest = tumour_nest(rng, cx, cy, scale * 0.8, style);
        bool hits_center = false;
        for (const auto& g : nest) hits_center = hits_center || g.covers(center, center);
        if (hits_center) continue;
        field.paint_all(nest);
      }
      break;
    }
  }
  if (center_class == 1) {
    // a gland whose band passes through the center pixel
    const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    Gland gland = benign_gland(rng, 0.0, 0.0, scale, style);
    const double band_mid = (gland.radius + gland.lumen_radius) / 2.0;
    gland.cx = center + band_mid * std::cos(angle);
    gland.cy = center + band_mid * std::sin(angle);
    field.paint(gland);
  } else if (center_class == 2) {
    field.paint_all(tumour_nest(rng, center, center, scale, style));
  } else {
    const std::size_t ci = static_cast<std::size_t>(center) * s + static_cast<std::size_t>(center);
    field.classes[ci] = 0;
  }

  const std::uint64_t texture_seed = rng.next_u64();
  const std::size_t dot_cell = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(style.dot_cell_scale * scale / 64.0)));

  PatchRecord rec;
  rec.he_image = Tensor::zeros({3, s, s});
  if (config.with_ihc) rec.ihc_image = Tensor::zeros({3, s, s});
  const std::size_t plane = s * s;
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      double r, g, b;
      he_pixel(field, x, y, texture_seed, style, dot_cell, r, g, b);
      apply_palette(r, g, b, style);
      rec.he_image.data()[y * s + x] = r;
      rec.he_image.data()[plane + y * s + x] = g;
      rec.he_image.data()[2 * plane + y * s + x] = b;
      if (config.with_ihc) {
        ihc_pixel(field, x, y, texture_seed, style, dot_cell, r, g, b);
        rec.ihc_image.data()[y * s + x] = r;
        rec.ihc_image.data()[plane + y * s + x] = g;
        rec.ihc_image.data()[2 * plane + y * s + x] = b;
      }
    }
  }
  rec.mask = field.classes;
  rec.label = center_pixel_label(rec.mask, s);
  rec.source_id = std::move(source_id);
  return rec;
}

// Deterministic (train, test) pair; the test stream uses disjoint seeds and
// pseudo-slides. Train records carry masks, test records only labels.
inline std::pair<PatchSet, PatchSet> generate_synthetic(const SynthConfig& config,
                                                        std::uint64_t seed) {
  using namespace synth_detail;
  auto make_set = [&](std::size_t count, std::uint64_t stream, const char* slide_prefix) {
    PatchSet set;
    set.records.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint64_t slide = i / std::max<std::size_t>(1, config.patches_per_slide);
      const auto style =
          slide_style(hash_seed(seed, stream), slide, config.appearance_jitter);
      char sid[48];
      std::snprintf(sid, sizeof(sid), "%s%04llu", slide_prefix,
                    static_cast<unsigned long long>(slide));
      set.records.push_back(generate_patch(config, hash_seed(seed, stream, i), style, sid));
    }
    return set;
  };
  PatchSet train = make_set(config.train_count, 0x7121, "slide");
  PatchSet test = make_set(config.test_count, 0x7e57, "test-slide");
  for (auto& rec : test.records) rec.mask.clear();
  return {std::move(train), std::move(test)};
}

struct SyntheticRegion {
  Tensor he_image;                 // [3,H,W]
  std::vector<std::uint8_t> mask;  // H*W classes
  std::size_t width = 0, height = 0;
};

// A region whose left half is packed tumour nests and right half stroma;
// ground truth for classification-map rendering.
inline SyntheticRegion generate_half_tumour_region(const SynthConfig& config, std::size_t width,
                                                   std::size_t height, std::uint64_t seed) {
  using namespace synth_detail;
  SyntheticRegion region;
  region.width = width;
  region.height = height;
  TissueField field;
  field.init(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width / 2; ++x) field.classes[y * width + x] = 2;
  }
  const auto style = slide_style(hash_seed(seed, 0x4e9), 0, config.appearance_jitter);
  // carve pale microlumen slits into the tumour half (color only)
  Rng rng(hash_seed(seed, 0x4ea));
  const double scale = static_cast<double>(config.patch_size);
  for (int k = 0; k < static_cast<int>(width * height / (scale * scale) * 6); ++k) {
    const double cx = rng.uniform(0.0, static_cast<double>(width) / 2.0);
    const double cy = rng.uniform(0.0, static_cast<double>(height));
    const double r = scale * rng.uniform(0.015, 0.04);
    for (std::size_t y = static_cast<std::size_t>(std::max(0.0, cy - r));
         y < std::min<std::size_t>(height, static_cast<std::size_t>(cy + r + 1)); ++y) {
      for (std::size_t x = static_cast<std::size_t>(std::max(0.0, cx - r));
           x < std::min<std::size_t>(width, static_cast<std::size_t>(cx + r + 1)); ++x) {
        if (std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy) < r) {
          field.lumen[y * width + x] = 1;
        }
      }
    }
  }
  const std::uint64_t texture_seed = hash_seed(seed, 0x7e8);
  const std::size_t dot_cell = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(style.dot_cell_scale * scale / 64.0)));
  region.he_image = Tensor::zeros({3, height, width});
  const std::size_t plane = height * width;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double r, g, b;
      he_pixel(field, x, y, texture_seed, style, dot_cell, r, g, b);
      apply_palette(r, g, b, style);
      region.he_image.data()[y * width + x] = r;
      region.he_image.data()[plane + y * width + x] = g;
      region.he_image.data()[2 * plane + y * width + x] = b;
    }
  }
  region.mask = field.classes;
  return region;
}

}  // namespace latentpath
