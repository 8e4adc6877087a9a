#include "baforge/mask.hpp"

#include <algorithm>
#include <cmath>

#include "baforge/errors.hpp"
#include "baforge/ppm.hpp"

namespace baforge {

Mask complement(const Mask& m) {
  Mask out(m.height, m.width, m.channels);
  for (size_t i = 0; i < m.size(); ++i) out.data[i] = 1.0f - m.data[i];
  return out;
}

Mask ones_mask(int height, int width, int channels) {
  return Mask(height, width, channels, 1.0f);
}

Mask zeros_mask(int height, int width, int channels) {
  return Mask(height, width, channels, 0.0f);
}

Mask rect_mask(int height, int width, int r0, int r1, int c0, int c1, int channels) {
  if (height <= 0 || width <= 0) throw ShapeError("rect_mask: non-positive dimensions");
  if (r0 < 0 || c0 < 0 || r0 > r1 || c0 > c1 || r1 > height || c1 > width) {
    throw ValidationError("rect_mask: bounds must satisfy 0 <= r0 <= r1 <= height, "
                          "0 <= c0 <= c1 <= width");
  }
  Mask m(height, width, channels, 0.0f);
  for (int y = r0; y < r1; ++y)
    for (int x = c0; x < c1; ++x)
      for (int c = 0; c < channels; ++c) m.at(y, x, c) = 1.0f;
  return m;
}

RectBounds random_rect_bounds(int height, int width, Rng& rng, float f_lo, float f_hi) {
  if (height <= 0 || width <= 0) throw ShapeError("random_rect_bounds: non-positive dimensions");
  if (!(f_lo > 0.0f) || f_lo > f_hi || f_hi > 1.0f) {
    throw ValidationError("random_rect_bounds: need 0 < f_lo <= f_hi <= 1");
  }
  const double area = rng.uniform(f_lo, f_hi) * height * width;
  // Aspect ratio drawn uniformly, then sides rounded to fit; the height is
  // lower-clamped so a full-area request always yields the full rectangle.
  const double aspect = rng.uniform(0.5, 2.0);  // rh / rw
  int rh = static_cast<int>(std::lround(std::sqrt(area * aspect)));
  rh = std::clamp(rh, std::max(1, static_cast<int>(std::ceil(area / width))), height);
  int rw = static_cast<int>(std::lround(area / rh));
  rw = std::clamp(rw, 1, width);
  const int r0 = rng.uniform_int(0, height - rh);
  const int c0 = rng.uniform_int(0, width - rw);
  return {r0, r0 + rh, c0, c0 + rw};
}

Mask random_rect_mask(int height, int width, Rng& rng, float f_lo, float f_hi) {
  const RectBounds b = random_rect_bounds(height, width, rng, f_lo, f_hi);
  return rect_mask(height, width, b.r0, b.r1, b.c0, b.c1);
}

Mask eyeglass_mask(int height, int width) {
  // Horizontal band across the eye row: rows [0.34H, 0.50H), cols [0.125W, 0.906W).
  const int r0 = static_cast<int>(std::lround(0.34 * height));
  const int r1 = static_cast<int>(std::lround(0.50 * height));
  const int c0 = static_cast<int>(std::lround(0.125 * width));
  const int c1 = static_cast<int>(std::lround(0.906 * width));
  return rect_mask(height, width, r0, r1, c0, c1);
}

Mask sticker_mask(int height, int width) {
  // Square sticker on the forehead: rows [0.0625H, 0.3125H), cols [0.375W, 0.625W).
  const int r0 = static_cast<int>(std::lround(0.0625 * height));
  const int r1 = static_cast<int>(std::lround(0.3125 * height));
  const int c0 = static_cast<int>(std::lround(0.375 * width));
  const int c1 = static_cast<int>(std::lround(0.625 * width));
  return rect_mask(height, width, r0, r1, c0, c1);
}

Mask load_mask(const std::string& path) {
  ImageTensor img = read_ppm(path);
  Mask m(img.height, img.width, img.channels);
  for (size_t i = 0; i < img.size(); ++i) m.data[i] = img.data[i] >= 0.5f ? 1.0f : 0.0f;
  return m;
}

double mask_area_fraction(const Mask& m) {
  double acc = 0.0;
  for (float v : m.data) acc += v;
  return acc / static_cast<double>(m.size());
}

}  // namespace baforge
