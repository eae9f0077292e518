#pragma once

// Binary netpbm codecs: P6 (PPM, RGB), P5 (PGM, gray), P7 (PAM, RGBA out
// only). 8-bit, maxval 255. Header comments (#) are accepted anywhere in
// the token stream per the format spec.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "latentpath/common.hpp"
#include "latentpath/tensor.hpp"

namespace latentpath {

struct ImageU8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1, 3 or 4, interleaved
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
};

namespace detail {

inline int next_pnm_token(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments, returns a non-negative integer token.
  int ch = in.get();
  while (in) {
    if (ch == '#') {
      while (in && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  if (!in) throw IoError("pnm: truncated header in " + path);
  int value = 0;
  bool any = false;
  while (in && std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    any = true;
    ch = in.get();
  }
  if (!any) throw IoError("pnm: malformed header token in " + path);
  return value;
}

inline ImageU8 read_pnm_binary(const std::filesystem::path& path, char want_kind,
                               std::size_t channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("pnm: cannot open " + path.string());
  char p = 0, kind = 0;
  in.get(p);
  in.get(kind);
  if (p != 'P' || kind != want_kind) {
    throw IoError("pnm: " + path.string() + " is not a P" + std::string(1, want_kind) + " file");
  }
  ImageU8 img;
  img.width = static_cast<std::size_t>(next_pnm_token(in, path.string()));
  img.height = static_cast<std::size_t>(next_pnm_token(in, path.string()));
  const int maxval = next_pnm_token(in, path.string());
  if (maxval != 255) {
    throw IoError("pnm: " + path.string() + " has maxval " + std::to_string(maxval) +
                  "; only 8-bit (255) is supported");
  }
  // Exactly one whitespace byte separates the header from the raster.
  img.channels = channels;
  img.pixels.resize(img.width * img.height * channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
    throw IoError("pnm: truncated raster in " + path.string());
  }
  return img;
}

}  // namespace detail

inline ImageU8 read_ppm(const std::filesystem::path& path) {
  return detail::read_pnm_binary(path, '6', 3);
}

inline ImageU8 read_pgm(const std::filesystem::path& path) {
  return detail::read_pnm_binary(path, '5', 1);
}

inline void write_ppm(const std::filesystem::path& path, const ImageU8& img) {
  if (img.channels != 3) throw UsageError("write_ppm: image must have 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pnm: cannot open " + path.string() + " for writing");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("pnm: write failed for " + path.string());
}

inline void write_pgm(const std::filesystem::path& path, const ImageU8& img) {
  if (img.channels != 1) throw UsageError("write_pgm: image must have 1 channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pnm: cannot open " + path.string() + " for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("pnm: write failed for " + path.string());
}

inline void write_pam_rgba(const std::filesystem::path& path, const ImageU8& img) {
  if (img.channels != 4) throw UsageError("write_pam_rgba: image must have 4 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pnm: cannot open " + path.string() + " for writing");
  out << "P7\nWIDTH " << img.width << "\nHEIGHT " << img.height
      << "\nDEPTH 4\nMAXVAL 255\nTUPLTYPE RGB_ALPHA\nENDHDR\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("pnm: write failed for " + path.string());
}

// 8-bit RGB -> planar [3,H,W] tensor in [0,1].
inline Tensor image_to_tensor(const ImageU8& img) {
  if (img.channels != 3) throw UsageError("image_to_tensor: expected RGB");
  Tensor t = Tensor::zeros({3, img.height, img.width});
  const std::size_t plane = img.height * img.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      t.data()[c * plane + i] = static_cast<double>(img.pixels[i * 3 + c]) / 255.0;
    }
  }
  return t;
}

// Planar [3,H,W] in [0,1] -> 8-bit RGB, clamped and rounded.
inline ImageU8 tensor_to_image(const Tensor& t) {
  if (t.shape().size() != 3 || t.extent(0) != 3) {
    throw UsageError("tensor_to_image: expected [3,H,W]");
  }
  ImageU8 img;
  img.height = t.extent(1);
  img.width = t.extent(2);
  img.channels = 3;
  img.pixels.resize(img.height * img.width * 3);
  const std::size_t plane = img.height * img.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(t.data()[c * plane + i], 0.0, 1.0);
      img.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return img;
}

}  // namespace latentpath
