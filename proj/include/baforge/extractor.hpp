#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "baforge/tensor.hpp"

namespace baforge {

enum class LayerKind : uint32_t {
  kConv = 1,          // 3x3-style valid convolution with stride
  kRelu = 2,
  kGlobalAvgPool = 3,
  kDense = 4,
  kL2Normalize = 5,
};

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
  int stride = 0;

  static LayerSpec conv(int in_ch, int out_ch, int kernel, int stride) {
    return {LayerKind::kConv, in_ch, out_ch, kernel, stride};
  }
  static LayerSpec relu() { return {LayerKind::kRelu, 0, 0, 0, 0}; }
  static LayerSpec global_avg_pool() { return {LayerKind::kGlobalAvgPool, 0, 0, 0, 0}; }
  static LayerSpec dense(int in_dim, int out_dim) {
    return {LayerKind::kDense, in_dim, out_dim, 0, 0};
  }
  static LayerSpec l2_normalize() { return {LayerKind::kL2Normalize, 0, 0, 0, 0}; }
};

struct Architecture {
  std::string name;
  int input_height = 0;
  int input_width = 0;
  int input_channels = 0;
  int embedding_dim = 0;
  std::vector<LayerSpec> layers;
};

struct Shape3 {
  int h = 0, w = 0, c = 0;
};

// Shape of every stage output, stages[0] being the input. Throws
// ValidationError if the layer stack does not fit the input.
std::vector<Shape3> stage_shapes(const Architecture& arch);

// Registered reference architectures: "cnn-a" (2 conv) and "cnn-b" (3 conv),
// both ending in global average pool -> dense -> L2 normalization, D = 32.
Architecture make_architecture(const std::string& name, int input_h = 64, int input_w = 64);
std::vector<std::string> known_architectures();

// Weights and biases of one parameterized layer; empty for layers without
// parameters. Conv weights are laid out [out_ch][ky][kx][in_ch], dense
// weights [out][in].
struct ParamBlock {
  std::vector<float> w;
  std::vector<float> b;
};

// Read-only embedding model: forward pass plus the vector-Jacobian product
// with respect to the input image. Implementations must be deterministic and
// immutable so they can be shared across concurrent attack jobs.
class EmbeddingModel {
 public:
  virtual ~EmbeddingModel() = default;
  virtual int input_height() const = 0;
  virtual int input_width() const = 0;
  virtual int input_channels() const = 0;
  virtual int embedding_dim() const = 0;
  virtual EmbeddingVector forward(const ImageTensor& image) const = 0;
  virtual ImageTensor input_gradient(const ImageTensor& image,
                                     const EmbeddingVector& upstream) const = 0;
};

class FeatureExtractor final : public EmbeddingModel {
 public:
  // Randomly initialized parameters (He for weights, zero biases).
  FeatureExtractor(Architecture arch, uint64_t init_seed);
  // Parameters supplied directly, e.g. when loading a weight file.
  FeatureExtractor(Architecture arch, std::vector<ParamBlock> params);

  const Architecture& architecture() const { return arch_; }
  int input_height() const override { return arch_.input_height; }
  int input_width() const override { return arch_.input_width; }
  int input_channels() const override { return arch_.input_channels; }
  int embedding_dim() const override { return arch_.embedding_dim; }

  std::vector<ParamBlock>& params() { return params_; }
  const std::vector<ParamBlock>& params() const { return params_; }

  EmbeddingVector forward(const ImageTensor& image) const override;
  ImageTensor input_gradient(const ImageTensor& image,
                             const EmbeddingVector& upstream) const override;

  // Cached-forward path: one forward pass whose stage outputs can be reused
  // for the backward pass. stages[0] is the input image.
  using Stages = std::vector<ImageTensor>;
  EmbeddingVector forward_stages(const ImageTensor& image, Stages& stages) const;

  // Backward from the embedding. Accumulates parameter gradients into
  // `param_grads` when non-null and writes the input gradient when non-null.
  void backward(const Stages& stages, const EmbeddingVector& upstream,
                std::vector<ParamBlock>* param_grads, ImageTensor* input_grad) const;

  std::vector<ParamBlock> zero_param_grads() const;

 private:
  Architecture arch_;
  std::vector<Shape3> shapes_;
  std::vector<ParamBlock> params_;
};

}  // namespace baforge
