#include "baforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "baforge/errors.hpp"

namespace baforge {

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                     std::to_string(b.channels) + ")");
  }
}

ImageTensor hadamard(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "hadamard");
  ImageTensor out(a.height, a.width, a.channels);
  for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

ImageTensor add(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "add");
  ImageTensor out(a.height, a.width, a.channels);
  for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

ImageTensor scale(const ImageTensor& a, float s) {
  ImageTensor out(a.height, a.width, a.channels);
  for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * s;
  return out;
}

ImageTensor clip01(const ImageTensor& a) {
  ImageTensor out(a.height, a.width, a.channels);
  for (size_t i = 0; i < a.size(); ++i) out.data[i] = std::clamp(a.data[i], 0.0f, 1.0f);
  return out;
}

ImageTensor quantize8(const ImageTensor& a) {
  ImageTensor out(a.height, a.width, a.channels);
  for (size_t i = 0; i < a.size(); ++i) {
    const float v = std::clamp(a.data[i], 0.0f, 1.0f);
    out.data[i] = std::round(v * 255.0f) / 255.0f;
  }
  return out;
}

float max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  float m = 0.0f;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace baforge
