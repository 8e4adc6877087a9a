#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "baforge/tensor.hpp"

namespace baforge {

// Procedural identity dataset: each identity is a deterministic base pattern
// (base color + sinusoidal gratings + soft blobs); samples vary by sub-pixel
// shift, brightness jitter, and additive noise.
struct DatasetSpec {
  int n_identities = 32;
  int samples_per_identity = 64;
  int height = 64;
  int width = 64;
  int channels = 3;
  double max_shift = 4.0;     // pixels, each axis
  double noise_sigma = 0.02;  // additive Gaussian, per element
  double jitter_lo = 0.9;     // multiplicative brightness jitter U(lo, hi)
  double jitter_hi = 1.1;

  void validate() const;
};

struct LabeledImage {
  ImageTensor image;
  int label = 0;  // identity id
  int index = 0;  // sample index within the identity
};

struct LabeledDataset {
  int n_identities = 0;
  int samples_per_identity = 0;
  std::vector<LabeledImage> items;
};

// Deterministic per (spec, seed); every pixel lies in [0,1].
LabeledDataset generate_dataset(const DatasetSpec& spec, uint64_t seed);

// Identity-level subset: items with lo_label <= label < hi_label.
LabeledDataset filter_identities(const LabeledDataset& ds, int lo_label, int hi_label);

// Writes id<label>_<index>.ppm files plus labels.csv into dir (created if
// missing). load reads the directory back via its labels.csv.
void export_dataset_ppm(const LabeledDataset& ds, const std::string& dir);
LabeledDataset load_dataset_ppm(const std::string& dir);

}  // namespace baforge
