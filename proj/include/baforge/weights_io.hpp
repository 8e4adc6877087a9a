#pragma once

#include <string>

#include "baforge/extractor.hpp"

namespace baforge {

// Versioned little-endian weight file:
//   magic "BAF1", u32 version, architecture descriptor (name, input dims,
//   embedding dim, layer list), then per layer the raw float32 weight and
//   bias tensors in declaration order.
// load(save(x)) reproduces bit-identical forward outputs.
void save_extractor(const std::string& path, const FeatureExtractor& extractor);
FeatureExtractor load_extractor(const std::string& path);

}  // namespace baforge
