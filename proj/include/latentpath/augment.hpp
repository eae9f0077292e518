#pragma once

// Training-time augmentation: flips applied to both stains so the pair stays
// registered; color jitter applied to the H&E input only, since the pair
// image serves as a regression target.

#include <algorithm>
#include <cstdint>

#include "latentpath/color.hpp"
#include "latentpath/data.hpp"
#include "latentpath/rng.hpp"
#include "latentpath/tensor.hpp"

namespace latentpath {

struct AugmentRanges {
  double hue_degrees = 20.0;        // shift in [-x, x]
  double saturation = 0.25;         // scale in [1-x, 1+x]
  double brightness = 0.15;         // add in [-x, x]
  double contrast = 0.25;           // scale in [1-x, 1+x]
};

struct AugmentParams {
  bool flip_h = false;
  bool flip_v = false;
  double hue_shift = 0.0;           // degrees
  double saturation_scale = 1.0;
  double brightness_delta = 0.0;
  double contrast_scale = 1.0;

  static AugmentParams identity() { return {}; }
};

inline AugmentParams sample_augment_params(const AugmentRanges& ranges, std::uint64_t seed) {
  Rng rng(hash_seed(seed));
  AugmentParams p;
  p.flip_h = rng.next_double() < 0.5;
  p.flip_v = rng.next_double() < 0.5;
  p.hue_shift = rng.uniform(-ranges.hue_degrees, ranges.hue_degrees);
  p.saturation_scale = rng.uniform(1.0 - ranges.saturation, 1.0 + ranges.saturation);
  p.brightness_delta = rng.uniform(-ranges.brightness, ranges.brightness);
  p.contrast_scale = rng.uniform(1.0 - ranges.contrast, 1.0 + ranges.contrast);
  return p;
}

namespace detail {

inline void flip_plane(double* plane, std::size_t h, std::size_t w, bool flip_h, bool flip_v) {
  if (flip_h) {
    for (std::size_t y = 0; y < h; ++y) {
      double* row = plane + y * w;
      std::reverse(row, row + w);
    }
  }
  if (flip_v) {
    for (std::size_t y = 0; y < h / 2; ++y) {
      std::swap_ranges(plane + y * w, plane + (y + 1) * w, plane + (h - 1 - y) * w);
    }
  }
}

inline void flip_image(Tensor& img, bool flip_h, bool flip_v) {
  const std::size_t h = img.extent(1), w = img.extent(2);
  for (std::size_t c = 0; c < 3; ++c) flip_plane(img.data() + c * h * w, h, w, flip_h, flip_v);
}

inline void color_jitter(Tensor& img, const AugmentParams& p) {
  const std::size_t plane = img.extent(1) * img.extent(2);
  double* r = img.data();
  double* g = img.data() + plane;
  double* b = img.data() + 2 * plane;
  const bool do_hsv = p.hue_shift != 0.0 || p.saturation_scale != 1.0;
  const bool do_rgb = p.contrast_scale != 1.0 || p.brightness_delta != 0.0;
  if (!do_hsv && !do_rgb) return;
  for (std::size_t i = 0; i < plane; ++i) {
    Rgb px{r[i], g[i], b[i]};
    if (do_hsv) {
      Hsv hsv = rgb_to_hsv(px);
      hsv.h = std::fmod(hsv.h + p.hue_shift + 360.0, 360.0);
      hsv.s = std::clamp(hsv.s * p.saturation_scale, 0.0, 1.0);
      px = hsv_to_rgb(hsv);
    }
    if (do_rgb) {
      // contrast about mid-gray, then brightness
      px.r = (px.r - 0.5) * p.contrast_scale + 0.5 + p.brightness_delta;
      px.g = (px.g - 0.5) * p.contrast_scale + 0.5 + p.brightness_delta;
      px.b = (px.b - 0.5) * p.contrast_scale + 0.5 + p.brightness_delta;
    }
    r[i] = std::clamp(px.r, 0.0, 1.0);
    g[i] = std::clamp(px.g, 0.0, 1.0);
    b[i] = std::clamp(px.b, 0.0, 1.0);
  }
}

}  // namespace detail

// Geometric flip only, no jitter; for building flip-matched targets.
inline Tensor flipped_copy(const Tensor& img, bool flip_h, bool flip_v) {
  Tensor out = img.detach();
  detail::flip_image(out, flip_h, flip_v);
  return out;
}

// Label and metadata pass through unchanged; outputs stay in [0,1]. The mask,
// when present, is flipped along with the images.
inline PatchRecord augment(const PatchRecord& record, const AugmentParams& params) {
  PatchRecord out = record;
  out.he_image = record.he_image.detach();
  detail::flip_image(out.he_image, params.flip_h, params.flip_v);
  detail::color_jitter(out.he_image, params);
  if (record.has_ihc()) {
    out.ihc_image = record.ihc_image.detach();
    detail::flip_image(out.ihc_image, params.flip_h, params.flip_v);
  }
  if (record.has_mask() && (params.flip_h || params.flip_v)) {
    const std::size_t s = record.patch_size();
    std::vector<double> tmp(out.mask.begin(), out.mask.end());
    detail::flip_plane(tmp.data(), s, s, params.flip_h, params.flip_v);
    for (std::size_t i = 0; i < tmp.size(); ++i) out.mask[i] = static_cast<std::uint8_t>(tmp[i]);
  }
  return out;
}

}  // namespace latentpath
