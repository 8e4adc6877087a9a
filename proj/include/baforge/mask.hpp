#pragma once

#include <string>

#include "baforge/rng.hpp"
#include "baforge/tensor.hpp"

namespace baforge {

// Element-wise 1 - m. Involution on binary masks.
Mask complement(const Mask& m);

// All-ones / all-zeros helpers.
Mask ones_mask(int height, int width, int channels = 3);
Mask zeros_mask(int height, int width, int channels = 3);

// Half-open rectangle bounds: rows [r0, r1), cols [c0, c1).
struct RectBounds {
  int r0 = 0, r1 = 0, c0 = 0, c1 = 0;
};

// Uniformly placed axis-aligned rectangle covering a fraction of the image
// area drawn from [f_lo, f_hi] (up to integer rounding of side lengths).
RectBounds random_rect_bounds(int height, int width, Rng& rng, float f_lo, float f_hi);

// Mask whose 1-region is one such rectangle, replicated across channels.
Mask random_rect_mask(int height, int width, Rng& rng, float f_lo, float f_hi);

// Rectangle with explicit bounds [r0, r1) x [c0, c1), all channels.
Mask rect_mask(int height, int width, int r0, int r1, int c0, int c1, int channels = 3);

// The two reference patch shapes shipped with the repo: a band across the
// eye row ("eyeglass", ~12% of a 64x64 image) and a square on the forehead
// ("sticker", ~6%).
Mask eyeglass_mask(int height, int width);
Mask sticker_mask(int height, int width);

// Reads a mask from a PPM: any channel value >= 0.5 maps to 1, else 0.
Mask load_mask(const std::string& path);

// Fraction of entries equal to 1.
double mask_area_fraction(const Mask& m);

}  // namespace baforge
