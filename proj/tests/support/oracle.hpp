#pragma once

// Double-precision reference implementations used as independent oracles in
// gradient and transform tests. Everything here recomputes results from
// first principles (no calls into the library's float kernels) so that a
// finite-difference comparison actually checks the production code.

#include <cmath>
#include <cstdint>
#include <vector>

#include "baforge/extractor.hpp"

namespace oracle {

struct Net {
  baforge::Architecture arch;
  std::vector<std::vector<double>> w, b;

  static Net from(const baforge::FeatureExtractor& fx) {
    Net net;
    net.arch = fx.architecture();
    for (const baforge::ParamBlock& p : fx.params()) {
      net.w.emplace_back(p.w.begin(), p.w.end());
      net.b.emplace_back(p.b.begin(), p.b.end());
    }
    return net;
  }

  // Forward pass on a flat HWC image. When relu_signs is non-null, each ReLU
  // appends one sign flag per element, so two evaluations can be compared to
  // detect a kink straddling the finite-difference interval.
  std::vector<double> forward(const std::vector<double>& image,
                              std::vector<int8_t>* relu_signs) const {
    std::vector<double> cur = image;
    int h = arch.input_height, wdt = arch.input_width, c = arch.input_channels;
    for (size_t li = 0; li < arch.layers.size(); ++li) {
      const baforge::LayerSpec& l = arch.layers[li];
      switch (l.kind) {
        case baforge::LayerKind::kConv: {
          const int k = l.kernel, s = l.stride;
          const int oh = (h - k) / s + 1, ow = (wdt - k) / s + 1;
          std::vector<double> out(static_cast<size_t>(oh) * ow * l.out_ch, 0.0);
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
              for (int o = 0; o < l.out_ch; ++o) {
                double acc = b[li][o];
                for (int ky = 0; ky < k; ++ky)
                  for (int kx = 0; kx < k; ++kx)
                    for (int ic = 0; ic < l.in_ch; ++ic) {
                      const size_t wi =
                          ((static_cast<size_t>(o) * k + ky) * k + kx) * l.in_ch + ic;
                      const size_t xi =
                          (static_cast<size_t>(oy * s + ky) * wdt + (ox * s + kx)) * c + ic;
                      acc += w[li][wi] * cur[xi];
                    }
                out[(static_cast<size_t>(oy) * ow + ox) * l.out_ch + o] = acc;
              }
          cur = std::move(out);
          h = oh;
          wdt = ow;
          c = l.out_ch;
          break;
        }
        case baforge::LayerKind::kRelu:
          for (double& v : cur) {
            if (relu_signs) relu_signs->push_back(v > 0.0 ? 1 : 0);
            if (v < 0.0) v = 0.0;
          }
          break;
        case baforge::LayerKind::kGlobalAvgPool: {
          std::vector<double> out(static_cast<size_t>(c), 0.0);
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < wdt; ++x)
              for (int ch = 0; ch < c; ++ch)
                out[ch] += cur[(static_cast<size_t>(y) * wdt + x) * c + ch];
          for (double& v : out) v /= static_cast<double>(h) * wdt;
          cur = std::move(out);
          h = 1;
          wdt = 1;
          break;
        }
        case baforge::LayerKind::kDense: {
          std::vector<double> out(static_cast<size_t>(l.out_ch), 0.0);
          for (int o = 0; o < l.out_ch; ++o) {
            double acc = b[li][o];
            for (int i = 0; i < l.in_ch; ++i) acc += w[li][static_cast<size_t>(o) * l.in_ch + i] * cur[i];
            out[o] = acc;
          }
          cur = std::move(out);
          c = l.out_ch;
          break;
        }
        case baforge::LayerKind::kL2Normalize: {
          double sq = 0.0;
          for (double v : cur) sq += v * v;
          const double n = std::sqrt(sq);
          if (n <= 1e-12) {
            std::fill(cur.begin(), cur.end(), 0.0);
            cur[0] = 1.0;
          } else {
            for (double& v : cur) v /= n;
          }
          break;
        }
      }
    }
    return cur;
  }
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return dot(a, b) / (std::sqrt(dot(a, a)) * std::sqrt(dot(b, b)));
}

// j_adv in double: impersonation 1 - cos, dodging cos.
inline double adv_loss(const std::vector<double>& probe, const std::vector<double>& reference,
                       bool impersonation) {
  const double c = cosine(probe, reference);
  return impersonation ? 1.0 - c : c;
}

// Central finite difference of scalar(x) over component i, step hstep.
// Returns false (skip) when a ReLU kink straddles the interval.
template <typename ScalarFn>
bool central_diff(const ScalarFn& scalar, std::vector<double> x, size_t i, double hstep,
                  double* out) {
  std::vector<int8_t> sp, sm;
  x[i] += hstep;
  const double fp = scalar(x, &sp);
  x[i] -= 2.0 * hstep;
  const double fm = scalar(x, &sm);
  if (sp != sm) return false;  // kink between the two evaluations
  *out = (fp - fm) / (2.0 * hstep);
  return true;
}

}  // namespace oracle
