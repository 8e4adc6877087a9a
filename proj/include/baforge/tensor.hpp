#pragma once

#include <cstddef>
#include <vector>

namespace baforge {

// Dense H x W x C image tensor, row-major with channels interleaved.
// Values are unitless intensities; they are guaranteed to lie in [0,1] only
// after a clip operation (transforms deliberately do not clip).
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        data(static_cast<size_t>(h) * w * c, fill) {}

  size_t size() const { return data.size(); }

  float& at(int h, int w, int c) {
    return data[(static_cast<size_t>(h) * width + w) * channels + c];
  }
  const float& at(int h, int w, int c) const {
    return data[(static_cast<size_t>(h) * width + w) * channels + c];
  }

  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

// Masks share the tensor representation; entries are exactly 0.0f or 1.0f.
using Mask = ImageTensor;

struct EmbeddingVector {
  std::vector<float> values;

  EmbeddingVector() = default;
  explicit EmbeddingVector(size_t dim) : values(dim, 0.0f) {}

  size_t dim() const { return values.size(); }
};

// Throws ShapeError unless both tensors have identical dimensions.
void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what);

ImageTensor hadamard(const ImageTensor& a, const ImageTensor& b);
ImageTensor add(const ImageTensor& a, const ImageTensor& b);
ImageTensor scale(const ImageTensor& a, float s);

// Element-wise clip to [0,1].
ImageTensor clip01(const ImageTensor& a);

// Round every element to the nearest 1/255 step and clip to [0,1]; this is
// exactly what a PPM write/read round trip does to an image.
ImageTensor quantize8(const ImageTensor& a);

float max_abs_diff(const ImageTensor& a, const ImageTensor& b);

}  // namespace baforge
