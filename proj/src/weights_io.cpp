#include "baforge/weights_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "baforge/errors.hpp"

namespace baforge {

namespace {

constexpr char kMagic[4] = {'B', 'A', 'F', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw FormatError(path + ": truncated weight file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& in, const std::string& path) {
  const uint32_t bits = get_u32(in, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_extractor(const std::string& path, const FeatureExtractor& extractor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const Architecture& arch = extractor.architecture();
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(arch.name.size()));
  out.write(arch.name.data(), static_cast<std::streamsize>(arch.name.size()));
  put_u32(out, static_cast<uint32_t>(arch.input_height));
  put_u32(out, static_cast<uint32_t>(arch.input_width));
  put_u32(out, static_cast<uint32_t>(arch.input_channels));
  put_u32(out, static_cast<uint32_t>(arch.embedding_dim));
  put_u32(out, static_cast<uint32_t>(arch.layers.size()));
  for (const LayerSpec& l : arch.layers) {
    put_u32(out, static_cast<uint32_t>(l.kind));
    put_u32(out, static_cast<uint32_t>(l.in_ch));
    put_u32(out, static_cast<uint32_t>(l.out_ch));
    put_u32(out, static_cast<uint32_t>(l.kernel));
    put_u32(out, static_cast<uint32_t>(l.stride));
  }
  for (const ParamBlock& p : extractor.params()) {
    put_u32(out, static_cast<uint32_t>(p.w.size()));
    put_u32(out, static_cast<uint32_t>(p.b.size()));
    for (float v : p.w) put_f32(out, v);
    for (float v : p.b) put_f32(out, v);
  }
  if (!out) throw IoError("short write to " + path);
}

FeatureExtractor load_extractor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path + ": bad magic bytes (expected \"BAF1\")");
  }
  const uint32_t version = get_u32(in, path);
  if (version != kVersion) {
    throw FormatError(path + ": unsupported weight file version " + std::to_string(version));
  }
  const uint32_t name_len = get_u32(in, path);
  if (name_len > 256) throw FormatError(path + ": implausible architecture name length");
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  if (static_cast<uint32_t>(in.gcount()) != name_len) {
    throw FormatError(path + ": truncated weight file");
  }
  Architecture arch;
  arch.name = name;
  arch.input_height = static_cast<int>(get_u32(in, path));
  arch.input_width = static_cast<int>(get_u32(in, path));
  arch.input_channels = static_cast<int>(get_u32(in, path));
  arch.embedding_dim = static_cast<int>(get_u32(in, path));
  const uint32_t n_layers = get_u32(in, path);
  if (n_layers > 64) throw FormatError(path + ": implausible layer count");
  for (uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    const uint32_t kind = get_u32(in, path);
    if (kind < 1 || kind > 5) {
      throw FormatError(path + ": unknown layer kind " + std::to_string(kind));
    }
    l.kind = static_cast<LayerKind>(kind);
    l.in_ch = static_cast<int>(get_u32(in, path));
    l.out_ch = static_cast<int>(get_u32(in, path));
    l.kernel = static_cast<int>(get_u32(in, path));
    l.stride = static_cast<int>(get_u32(in, path));
    arch.layers.push_back(l);
  }
  try {
    stage_shapes(arch);
  } catch (const ValidationError& e) {
    throw FormatError(path + ": inconsistent architecture descriptor (" + e.what() + ")");
  }
  std::vector<ParamBlock> params(n_layers);
  for (uint32_t i = 0; i < n_layers; ++i) {
    const uint32_t nw = get_u32(in, path);
    const uint32_t nb = get_u32(in, path);
    if (nw > (1u << 26) || nb > (1u << 26)) {
      throw FormatError(path + ": implausible parameter tensor size");
    }
    params[i].w.resize(nw);
    params[i].b.resize(nb);
    for (uint32_t k = 0; k < nw; ++k) params[i].w[k] = get_f32(in, path);
    for (uint32_t k = 0; k < nb; ++k) params[i].b[k] = get_f32(in, path);
  }
  try {
    return FeatureExtractor(std::move(arch), std::move(params));
  } catch (const ValidationError& e) {
    throw FormatError(path + ": parameter tensors do not match descriptor (" +
                      std::string(e.what()) + ")");
  }
}

}  // namespace baforge
