#pragma once

#include "baforge/mask.hpp"
#include "baforge/rng.hpp"
#include "baforge/tensor.hpp"

namespace baforge {

// Parameters of the random brightness transform family: the in-patch scale
// gate fires with probability p and draws its scale from U(l, h); the global
// scale Y is drawn from N(mu, sigma).
struct BrightnessParams {
  double p = 0.0;
  double l = 1.0;
  double h = 1.0;
  double mu = 1.0;
  double sigma = 0.0;

  void validate() const;
};

// Realized random draws of one transform application, recorded so a frozen
// transform can be replayed exactly (finite-difference checks, logging).
struct TransformDraws {
  bool bt_fired = false;   // BT probability gate
  double bt_scale = 1.0;   // U(l,h) scale applied inside the BT region
  double y = 1.0;          // global Gaussian scale
  double rect_scale = 1.0; // U(l,h) scale on the rectangle term (patch form)
};

// One transform application. The output is affine in the input:
// transformed[i] = coeff[i] * input[i] exactly, which makes gradient
// chaining a single element-wise product with coeff.
struct TransformSample {
  ImageTensor transformed;
  ImageTensor coeff;
  TransformDraws draws;
};

// Whole-image brightness gate: coeff = s * ones with s ~ U(l,h) with
// probability p, identity otherwise. Never clips.
TransformSample bt(const ImageTensor& image, const BrightnessParams& params, Rng& rng);

// Patch-mode composite transform: BT on the patch region, identity on the
// rest, a global Gaussian scale Y, and an independent uniform scale on a
// rectangle region:
//   (Y * (BT(x * M_p) + x * M_p')) * (M_b * X_u + M_b')
TransformSample cnbt_patch(const ImageTensor& x, const Mask& m_p, const Mask& m_b,
                           const BrightnessParams& params, Rng& rng);

// Imperceptible-mode composite: BT inside the random rectangle, identity
// outside, global Gaussian scale:
//   Y * (BT(x * M_b) + x * M_b')
TransformSample cnbt_imperceptible(const ImageTensor& x, const Mask& m_b,
                                   const BrightnessParams& params, Rng& rng);

// Baseline linear transform: one whole-image scale s ~ U(a,b) every call
// (no probability gate, no regions).
TransformSample linear_brightness(const ImageTensor& x, double a, double b, Rng& rng);

// Replay: rebuild a sample from recorded draws (same coeff, bit-exact).
TransformSample replay_cnbt_patch(const ImageTensor& x, const Mask& m_p, const Mask& m_b,
                                  const TransformDraws& draws);
TransformSample replay_cnbt_imperceptible(const ImageTensor& x, const Mask& m_b,
                                          const TransformDraws& draws);

}  // namespace baforge
