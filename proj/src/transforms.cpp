#include "baforge/transforms.hpp"

#include "baforge/errors.hpp"

namespace baforge {

void BrightnessParams::validate() const {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("brightness params: p must lie in [0,1]");
  if (!(l >= 0.0 && l <= h)) throw ValidationError("brightness params: need 0 <= l <= h");
  if (!(sigma >= 0.0)) throw ValidationError("brightness params: sigma must be >= 0");
}

namespace {

// coeff per pixel is one of four combined scales selected by mask membership;
// computing the combinations once in double and casting keeps the whole
// transform a single float multiply per element.
TransformSample apply_two_mask(const ImageTensor& x, const Mask& in_region,
                               const Mask& rect_region, const TransformDraws& draws) {
  require_same_shape(x, in_region, "transform mask");
  require_same_shape(x, rect_region, "transform rectangle mask");
  const double s = draws.bt_fired ? draws.bt_scale : 1.0;
  const float c_none = static_cast<float>(draws.y);
  const float c_in = static_cast<float>(draws.y * s);
  const float c_rect = static_cast<float>(draws.y * draws.rect_scale);
  const float c_both = static_cast<float>(draws.y * s * draws.rect_scale);
  TransformSample out;
  out.draws = draws;
  out.coeff = ImageTensor(x.height, x.width, x.channels);
  out.transformed = ImageTensor(x.height, x.width, x.channels);
  for (size_t i = 0; i < x.size(); ++i) {
    const bool in_p = in_region.data[i] != 0.0f;
    const bool in_b = rect_region.data[i] != 0.0f;
    const float c = in_p ? (in_b ? c_both : c_in) : (in_b ? c_rect : c_none);
    out.coeff.data[i] = c;
    out.transformed.data[i] = c * x.data[i];
  }
  return out;
}

TransformSample apply_constant(const ImageTensor& x, double scale, const TransformDraws& draws) {
  TransformSample out;
  out.draws = draws;
  const float c = static_cast<float>(scale);
  out.coeff = ImageTensor(x.height, x.width, x.channels, c);
  out.transformed = ImageTensor(x.height, x.width, x.channels);
  for (size_t i = 0; i < x.size(); ++i) out.transformed.data[i] = c * x.data[i];
  return out;
}

}  // namespace

TransformSample bt(const ImageTensor& image, const BrightnessParams& params, Rng& rng) {
  params.validate();
  TransformDraws d;
  d.bt_fired = rng.bernoulli(params.p);
  if (d.bt_fired) d.bt_scale = rng.uniform(params.l, params.h);
  return apply_constant(image, d.bt_fired ? d.bt_scale : 1.0, d);
}

TransformSample cnbt_patch(const ImageTensor& x, const Mask& m_p, const Mask& m_b,
                           const BrightnessParams& params, Rng& rng) {
  params.validate();
  TransformDraws d;
  d.bt_fired = rng.bernoulli(params.p);
  if (d.bt_fired) d.bt_scale = rng.uniform(params.l, params.h);
  d.y = rng.gaussian(params.mu, params.sigma);
  d.rect_scale = rng.uniform(params.l, params.h);  // independent of the BT draw
  return apply_two_mask(x, m_p, m_b, d);
}

TransformSample cnbt_imperceptible(const ImageTensor& x, const Mask& m_b,
                                   const BrightnessParams& params, Rng& rng) {
  params.validate();
  TransformDraws d;
  d.bt_fired = rng.bernoulli(params.p);
  if (d.bt_fired) d.bt_scale = rng.uniform(params.l, params.h);
  d.y = rng.gaussian(params.mu, params.sigma);
  d.rect_scale = 1.0;  // no separate rectangle term in this form
  return apply_two_mask(x, m_b, zeros_mask(x.height, x.width, x.channels), d);
}

TransformSample linear_brightness(const ImageTensor& x, double a, double b, Rng& rng) {
  if (!(a >= 0.0 && a <= b)) throw ValidationError("linear brightness: need 0 <= a <= b");
  TransformDraws d;
  d.bt_fired = true;
  d.bt_scale = rng.uniform(a, b);
  return apply_constant(x, d.bt_scale, d);
}

TransformSample replay_cnbt_patch(const ImageTensor& x, const Mask& m_p, const Mask& m_b,
                                  const TransformDraws& draws) {
  return apply_two_mask(x, m_p, m_b, draws);
}

TransformSample replay_cnbt_imperceptible(const ImageTensor& x, const Mask& m_b,
                                          const TransformDraws& draws) {
  TransformDraws d = draws;
  d.rect_scale = 1.0;
  return apply_two_mask(x, m_b, zeros_mask(x.height, x.width, x.channels), d);
}

}  // namespace baforge
