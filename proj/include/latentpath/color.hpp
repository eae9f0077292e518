#pragma once

#include <algorithm>
#include <cmath>

namespace latentpath {

struct Hsv {
  double h;  // degrees in [0, 360)
  double s;  // [0, 1]
  double v;  // [0, 1]
};

struct Rgb {
  double r, g, b;  // [0, 1]
};

// Hexagonal-model conversion; gray pixels take hue 0 by convention.
inline Hsv rgb_to_hsv(const Rgb& c) {
  const double max_c = std::max({c.r, c.g, c.b});
  const double min_c = std::min({c.r, c.g, c.b});
  const double delta = max_c - min_c;
  Hsv out{0.0, 0.0, max_c};
  if (delta > 0.0) {
    if (max_c == c.r) {
      out.h = 60.0 * std::fmod((c.g - c.b) / delta, 6.0);
    } else if (max_c == c.g) {
      out.h = 60.0 * ((c.b - c.r) / delta + 2.0);
    } else {
      out.h = 60.0 * ((c.r - c.g) / delta + 4.0);
    }
    if (out.h < 0.0) out.h += 360.0;
    if (max_c > 0.0) out.s = delta / max_c;
  }
  return out;
}

inline Rgb hsv_to_rgb(const Hsv& c) {
  const double chroma = c.v * c.s;
  const double hp = c.h / 60.0;
  const double x = chroma * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0.0, g = 0.0, b = 0.0;
  if (hp < 1.0) {
    r = chroma; g = x;
  } else if (hp < 2.0) {
    r = x; g = chroma;
  } else if (hp < 3.0) {
    g = chroma; b = x;
  } else if (hp < 4.0) {
    g = x; b = chroma;
  } else if (hp < 5.0) {
    r = x; b = chroma;
  } else {
    r = chroma; b = x;
  }
  const double m = c.v - chroma;
  return {r + m, g + m, b + m};
}

}  // namespace latentpath
