#pragma once

// Sliding-window classification maps: transparent = stroma, green = benign
// epithelium, red = tumour. Each window's predicted color fills the
// stride-sized block at the window center.

#include <cstdint>
#include <functional>
#include <vector>

#include "latentpath/common.hpp"
#include "latentpath/data.hpp"
#include "latentpath/image.hpp"
#include "latentpath/tensor.hpp"

namespace latentpath {

using BatchPredictFn = std::function<std::vector<Label>(const Tensor&)>;  // [N,3,S,S] -> labels

struct ClassificationMap {
  ImageU8 map_rgba;                   // same extent as the region
  std::vector<Label> window_labels;   // row-major over window grid
  std::size_t windows_x = 0;
  std::size_t windows_y = 0;

  Label window_at(std::size_t wy, std::size_t wx) const {
    return window_labels[wy * windows_x + wx];
  }
};

inline void class_color(Label label, std::uint8_t color[4]) {
  switch (label) {
    case Label::Stroma:
      color[0] = color[1] = color[2] = color[3] = 0;  // transparent
      break;
    case Label::BenignEpithelium:
      color[0] = 0; color[1] = 255; color[2] = 0; color[3] = 255;  // green
      break;
    case Label::Tumour:
      color[0] = 255; color[1] = 0; color[2] = 0; color[3] = 255;  // red
      break;
  }
}

inline ClassificationMap render_classification_map(const BatchPredictFn& predict,
                                                   const Tensor& region, std::size_t patch,
                                                   std::size_t stride,
                                                   std::size_t batch_size = 32) {
  if (region.shape().size() != 3 || region.extent(0) != 3) {
    throw InputError("render_classification_map: region must be [3,H,W]");
  }
  const std::size_t height = region.extent(1), width = region.extent(2);
  if (height < patch || width < patch) {
    throw InputError("render_classification_map: region smaller than the patch size");
  }
  if (stride < 1) throw InputError("render_classification_map: stride must be >= 1");

  ClassificationMap out;
  out.windows_y = (height - patch) / stride + 1;
  out.windows_x = (width - patch) / stride + 1;
  out.window_labels.resize(out.windows_y * out.windows_x);
  out.map_rgba.width = width;
  out.map_rgba.height = height;
  out.map_rgba.channels = 4;
  out.map_rgba.pixels.assign(width * height * 4, 0);

  const std::size_t plane = height * width;
  std::vector<std::pair<std::size_t, std::size_t>> origins;
  origins.reserve(out.window_labels.size());
  for (std::size_t wy = 0; wy < out.windows_y; ++wy) {
    for (std::size_t wx = 0; wx < out.windows_x; ++wx) {
      origins.emplace_back(wy * stride, wx * stride);
    }
  }

  std::size_t window = 0;
  for (std::size_t start = 0; start < origins.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, origins.size() - start);
    Tensor batch = Tensor::zeros({count, 3, patch, patch});
    for (std::size_t i = 0; i < count; ++i) {
      const auto [oy, ox] = origins[start + i];
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < patch; ++y) {
          const double* src = region.data() + c * plane + (oy + y) * width + ox;
          double* dst = batch.data() + ((i * 3 + c) * patch + y) * patch;
          std::copy(src, src + patch, dst);
        }
      }
    }
    const std::vector<Label> labels = predict(batch);
    if (labels.size() != count) {
      throw InputError("render_classification_map: predictor returned wrong count");
    }
    for (std::size_t i = 0; i < count; ++i, ++window) {
      out.window_labels[window] = labels[i];
      std::uint8_t color[4];
      class_color(labels[i], color);
      const auto [oy, ox] = origins[start + i];
      // stride x stride block centered on the window center
      const std::size_t cy = oy + patch / 2, cx = ox + patch / 2;
      const std::size_t y0 = cy >= stride / 2 ? cy - stride / 2 : 0;
      const std::size_t x0 = cx >= stride / 2 ? cx - stride / 2 : 0;
      const std::size_t y1 = std::min(height, y0 + stride);
      const std::size_t x1 = std::min(width, x0 + stride);
      for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) {
          std::uint8_t* px = out.map_rgba.pixels.data() + (y * width + x) * 4;
          px[0] = color[0];
          px[1] = color[1];
          px[2] = color[2];
          px[3] = color[3];
        }
      }
    }
  }
  return out;
}

// H&E region with the map alpha-blended on top.
inline ImageU8 overlay_on_region(const Tensor& region, const ImageU8& map_rgba,
                                 double blend = 0.5) {
  ImageU8 out = tensor_to_image(region);
  for (std::size_t i = 0; i < out.width * out.height; ++i) {
    const std::uint8_t* map_px = map_rgba.pixels.data() + i * 4;
    if (map_px[3] == 0) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      const double mixed = (1.0 - blend) * out.pixels[i * 3 + c] + blend * map_px[c];
      out.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(mixed));
    }
  }
  return out;
}

}  // namespace latentpath
