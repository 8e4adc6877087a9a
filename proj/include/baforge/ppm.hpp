#pragma once

#include <string>

#include "baforge/tensor.hpp"

namespace baforge {

// Binary PPM (P6, maxval 255). Values are quantized to 1/255 steps on write
// and mapped back by /255 on read, so write->read == quantize8.
ImageTensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageTensor& image);

}  // namespace baforge
