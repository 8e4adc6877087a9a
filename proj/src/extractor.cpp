#include "baforge/extractor.hpp"

#include <cmath>
#include <cstring>

#include "baforge/errors.hpp"
#include "baforge/rng.hpp"

namespace baforge {

std::vector<Shape3> stage_shapes(const Architecture& arch) {
  std::vector<Shape3> shapes;
  shapes.push_back({arch.input_height, arch.input_width, arch.input_channels});
  for (const LayerSpec& layer : arch.layers) {
    const Shape3 in = shapes.back();
    switch (layer.kind) {
      case LayerKind::kConv: {
        if (layer.in_ch != in.c) {
          throw ValidationError("architecture: conv in_ch " + std::to_string(layer.in_ch) +
                                " does not match incoming channels " + std::to_string(in.c));
        }
        if (layer.kernel < 1 || layer.stride < 1 || in.h < layer.kernel || in.w < layer.kernel) {
          throw ValidationError("architecture: conv kernel does not fit its input");
        }
        const int oh = (in.h - layer.kernel) / layer.stride + 1;
        const int ow = (in.w - layer.kernel) / layer.stride + 1;
        shapes.push_back({oh, ow, layer.out_ch});
        break;
      }
      case LayerKind::kRelu:
        shapes.push_back(in);
        break;
      case LayerKind::kGlobalAvgPool:
        shapes.push_back({1, 1, in.c});
        break;
      case LayerKind::kDense: {
        if (in.h != 1 || in.w != 1) {
          throw ValidationError("architecture: dense layer requires a pooled 1x1 input");
        }
        if (layer.in_ch != in.c) {
          throw ValidationError("architecture: dense in_dim does not match incoming features");
        }
        shapes.push_back({1, 1, layer.out_ch});
        break;
      }
      case LayerKind::kL2Normalize:
        if (in.h != 1 || in.w != 1) {
          throw ValidationError("architecture: L2 normalization requires a vector input");
        }
        shapes.push_back(in);
        break;
    }
  }
  const Shape3 out = shapes.back();
  if (out.h != 1 || out.w != 1 || out.c != arch.embedding_dim) {
    throw ValidationError("architecture: output shape does not match embedding_dim");
  }
  return shapes;
}

Architecture make_architecture(const std::string& name, int input_h, int input_w) {
  Architecture arch;
  arch.name = name;
  arch.input_height = input_h;
  arch.input_width = input_w;
  arch.input_channels = 3;
  arch.embedding_dim = 32;
  if (name == "cnn-a") {
    arch.layers = {
        LayerSpec::conv(3, 8, 3, 2),  LayerSpec::relu(),
        LayerSpec::conv(8, 16, 3, 2), LayerSpec::relu(),
        LayerSpec::global_avg_pool(), LayerSpec::dense(16, 32),
        LayerSpec::l2_normalize(),
    };
  } else if (name == "cnn-b") {
    arch.layers = {
        LayerSpec::conv(3, 8, 3, 2),  LayerSpec::relu(),
        LayerSpec::conv(8, 8, 3, 2),  LayerSpec::relu(),
        LayerSpec::conv(8, 16, 3, 2), LayerSpec::relu(),
        LayerSpec::global_avg_pool(), LayerSpec::dense(16, 32),
        LayerSpec::l2_normalize(),
    };
  } else {
    std::string names;
    for (const auto& n : known_architectures()) names += (names.empty() ? "" : ", ") + n;
    throw ValidationError("unknown architecture '" + name + "' (valid: " + names + ")");
  }
  stage_shapes(arch);  // validate
  return arch;
}

std::vector<std::string> known_architectures() { return {"cnn-a", "cnn-b"}; }

namespace {

constexpr float kNormFloor = 1e-12f;

size_t conv_weight_count(const LayerSpec& l) {
  return static_cast<size_t>(l.out_ch) * l.kernel * l.kernel * l.in_ch;
}

}  // namespace

FeatureExtractor::FeatureExtractor(Architecture arch, uint64_t init_seed)
    : arch_(std::move(arch)), shapes_(stage_shapes(arch_)) {
  params_.resize(arch_.layers.size());
  for (size_t li = 0; li < arch_.layers.size(); ++li) {
    const LayerSpec& l = arch_.layers[li];
    Rng rng(derive_seed(init_seed, "init", li));
    if (l.kind == LayerKind::kConv) {
      const float std = std::sqrt(2.0f / (static_cast<float>(l.kernel) * l.kernel * l.in_ch));
      params_[li].w.resize(conv_weight_count(l));
      for (float& v : params_[li].w) v = static_cast<float>(rng.gaussian(0.0, std));
      params_[li].b.assign(l.out_ch, 0.0f);
    } else if (l.kind == LayerKind::kDense) {
      const float std = std::sqrt(2.0f / static_cast<float>(l.in_ch));
      params_[li].w.resize(static_cast<size_t>(l.out_ch) * l.in_ch);
      for (float& v : params_[li].w) v = static_cast<float>(rng.gaussian(0.0, std));
      params_[li].b.assign(l.out_ch, 0.0f);
    }
  }
}

FeatureExtractor::FeatureExtractor(Architecture arch, std::vector<ParamBlock> params)
    : arch_(std::move(arch)), shapes_(stage_shapes(arch_)), params_(std::move(params)) {
  if (params_.size() != arch_.layers.size()) {
    throw ValidationError("parameter block count does not match layer count");
  }
  for (size_t li = 0; li < arch_.layers.size(); ++li) {
    const LayerSpec& l = arch_.layers[li];
    size_t want_w = 0, want_b = 0;
    if (l.kind == LayerKind::kConv) {
      want_w = conv_weight_count(l);
      want_b = static_cast<size_t>(l.out_ch);
    } else if (l.kind == LayerKind::kDense) {
      want_w = static_cast<size_t>(l.out_ch) * l.in_ch;
      want_b = static_cast<size_t>(l.out_ch);
    }
    if (params_[li].w.size() != want_w || params_[li].b.size() != want_b) {
      throw ValidationError("parameter tensor sizes do not match architecture layer " +
                            std::to_string(li));
    }
  }
}

std::vector<ParamBlock> FeatureExtractor::zero_param_grads() const {
  std::vector<ParamBlock> grads(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    grads[i].w.assign(params_[i].w.size(), 0.0f);
    grads[i].b.assign(params_[i].b.size(), 0.0f);
  }
  return grads;
}

EmbeddingVector FeatureExtractor::forward_stages(const ImageTensor& image, Stages& stages) const {
  if (image.height != arch_.input_height || image.width != arch_.input_width ||
      image.channels != arch_.input_channels) {
    throw ShapeError("forward: image dimensions do not match extractor input");
  }
  stages.assign(1, image);
  stages.reserve(arch_.layers.size() + 1);
  for (size_t li = 0; li < arch_.layers.size(); ++li) {
    const LayerSpec& l = arch_.layers[li];
    const ImageTensor& in = stages.back();
    const Shape3 os = shapes_[li + 1];
    ImageTensor out(os.h, os.w, os.c);
    switch (l.kind) {
      case LayerKind::kConv: {
        const float* wp = params_[li].w.data();
        const int k = l.kernel, s = l.stride, ic = l.in_ch, oc = l.out_ch;
        for (int oy = 0; oy < os.h; ++oy) {
          for (int ox = 0; ox < os.w; ++ox) {
            float* op = &out.at(oy, ox, 0);
            for (int o = 0; o < oc; ++o) op[o] = params_[li].b[o];
            for (int ky = 0; ky < k; ++ky) {
              const float* ip = &in.at(oy * s + ky, ox * s, 0);
              for (int kx = 0; kx < k; ++kx) {
                const float* ipix = ip + kx * ic;
                for (int o = 0; o < oc; ++o) {
                  const float* wrow = wp + ((static_cast<size_t>(o) * k + ky) * k + kx) * ic;
                  float acc = 0.0f;
                  for (int c = 0; c < ic; ++c) acc += ipix[c] * wrow[c];
                  op[o] += acc;
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::kRelu:
        for (size_t i = 0; i < in.size(); ++i) out.data[i] = in.data[i] > 0.0f ? in.data[i] : 0.0f;
        break;
      case LayerKind::kGlobalAvgPool: {
        const float inv = 1.0f / (static_cast<float>(in.height) * in.width);
        for (int c = 0; c < in.channels; ++c) {
          float acc = 0.0f;
          for (int y = 0; y < in.height; ++y)
            for (int x = 0; x < in.width; ++x) acc += in.at(y, x, c);
          out.data[c] = acc * inv;
        }
        break;
      }
      case LayerKind::kDense: {
        const float* wp = params_[li].w.data();
        for (int o = 0; o < l.out_ch; ++o) {
          float acc = params_[li].b[o];
          const float* wrow = wp + static_cast<size_t>(o) * l.in_ch;
          for (int c = 0; c < l.in_ch; ++c) acc += wrow[c] * in.data[c];
          out.data[o] = acc;
        }
        break;
      }
      case LayerKind::kL2Normalize: {
        double sq = 0.0;
        for (size_t i = 0; i < in.size(); ++i)
          sq += static_cast<double>(in.data[i]) * in.data[i];
        const float n = static_cast<float>(std::sqrt(sq));
        if (n <= kNormFloor) {
          // Degenerate pre-embedding; emit a fixed unit vector (zero gradient).
          out.data[0] = 1.0f;
        } else {
          for (size_t i = 0; i < in.size(); ++i) out.data[i] = in.data[i] / n;
        }
        break;
      }
    }
    stages.push_back(std::move(out));
  }
  EmbeddingVector e(static_cast<size_t>(arch_.embedding_dim));
  e.values = stages.back().data;
  return e;
}

EmbeddingVector FeatureExtractor::forward(const ImageTensor& image) const {
  Stages stages;
  return forward_stages(image, stages);
}

void FeatureExtractor::backward(const Stages& stages, const EmbeddingVector& upstream,
                                std::vector<ParamBlock>* param_grads,
                                ImageTensor* input_grad) const {
  if (stages.size() != arch_.layers.size() + 1) {
    throw ShapeError("backward: stage cache does not match architecture");
  }
  if (static_cast<int>(upstream.dim()) != arch_.embedding_dim) {
    throw ShapeError("backward: upstream gradient length does not match embedding dim");
  }
  const Shape3 last = shapes_.back();
  ImageTensor grad(last.h, last.w, last.c);
  grad.data = upstream.values;

  for (int li = static_cast<int>(arch_.layers.size()) - 1; li >= 0; --li) {
    const LayerSpec& l = arch_.layers[li];
    const ImageTensor& in = stages[li];
    const ImageTensor& out = stages[li + 1];
    const Shape3 is = shapes_[li];
    ImageTensor next(is.h, is.w, is.c);
    switch (l.kind) {
      case LayerKind::kConv: {
        const float* wp = params_[li].w.data();
        const int k = l.kernel, s = l.stride, ic = l.in_ch, oc = l.out_ch;
        float* dw = nullptr;
        float* db = nullptr;
        if (param_grads) {
          dw = (*param_grads)[li].w.data();
          db = (*param_grads)[li].b.data();
        }
        for (int oy = 0; oy < out.height; ++oy) {
          for (int ox = 0; ox < out.width; ++ox) {
            const float* gp = &grad.at(oy, ox, 0);
            for (int o = 0; o < oc; ++o) {
              const float g = gp[o];
              if (db) db[o] += g;
              for (int ky = 0; ky < k; ++ky) {
                float* np = &next.at(oy * s + ky, ox * s, 0);
                const float* ip = &in.at(oy * s + ky, ox * s, 0);
                const float* wrow = wp + ((static_cast<size_t>(o) * k) + ky) * k * ic;
                if (dw) {
                  float* dwrow = dw + ((static_cast<size_t>(o) * k) + ky) * k * ic;
                  for (int kc = 0; kc < k * ic; ++kc) {
                    np[kc] += g * wrow[kc];
                    dwrow[kc] += g * ip[kc];
                  }
                } else {
                  for (int kc = 0; kc < k * ic; ++kc) np[kc] += g * wrow[kc];
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::kRelu:
        for (size_t i = 0; i < in.size(); ++i)
          next.data[i] = in.data[i] > 0.0f ? grad.data[i] : 0.0f;
        break;
      case LayerKind::kGlobalAvgPool: {
        const float inv = 1.0f / (static_cast<float>(in.height) * in.width);
        for (int c = 0; c < in.channels; ++c) {
          const float g = grad.data[c] * inv;
          for (int y = 0; y < in.height; ++y)
            for (int x = 0; x < in.width; ++x) next.at(y, x, c) = g;
        }
        break;
      }
      case LayerKind::kDense: {
        const float* wp = params_[li].w.data();
        for (int o = 0; o < l.out_ch; ++o) {
          const float g = grad.data[o];
          const float* wrow = wp + static_cast<size_t>(o) * l.in_ch;
          for (int c = 0; c < l.in_ch; ++c) next.data[c] += g * wrow[c];
        }
        if (param_grads) {
          float* dw = (*param_grads)[li].w.data();
          float* db = (*param_grads)[li].b.data();
          for (int o = 0; o < l.out_ch; ++o) {
            const float g = grad.data[o];
            db[o] += g;
            float* dwrow = dw + static_cast<size_t>(o) * l.in_ch;
            for (int c = 0; c < l.in_ch; ++c) dwrow[c] += g * in.data[c];
          }
        }
        break;
      }
      case LayerKind::kL2Normalize: {
        double sq = 0.0;
        for (size_t i = 0; i < in.size(); ++i)
          sq += static_cast<double>(in.data[i]) * in.data[i];
        const float n = static_cast<float>(std::sqrt(sq));
        if (n <= kNormFloor) {
          // Output was the fixed fallback vector; gradient does not flow.
          break;
        }
        float udoty = 0.0f;
        for (size_t i = 0; i < out.size(); ++i) udoty += grad.data[i] * out.data[i];
        for (size_t i = 0; i < in.size(); ++i)
          next.data[i] = (grad.data[i] - udoty * out.data[i]) / n;
        break;
      }
    }
    grad = std::move(next);
  }
  if (input_grad) *input_grad = std::move(grad);
}

ImageTensor FeatureExtractor::input_gradient(const ImageTensor& image,
                                             const EmbeddingVector& upstream) const {
  Stages stages;
  forward_stages(image, stages);
  ImageTensor g;
  backward(stages, upstream, nullptr, &g);
  return g;
}

}  // namespace baforge
