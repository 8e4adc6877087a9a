#include "baforge/ppm.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "baforge/errors.hpp"

namespace baforge {

namespace {

// Reads the next whitespace-delimited integer token, skipping '#' comments.
int next_header_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) {
    throw FormatError(path + ": malformed PPM header");
  }
  long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > 1 << 20) throw FormatError(path + ": PPM header value out of range");
    c = in.get();
  }
  if (c != EOF) in.unget();
  return static_cast<int>(v);
}

}  // namespace

ImageTensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6') {
    throw FormatError(path + ": not a binary PPM (expected magic \"P6\")");
  }
  const int w = next_header_int(in, path);
  const int h = next_header_int(in, path);
  const int maxval = next_header_int(in, path);
  if (w <= 0 || h <= 0) throw FormatError(path + ": non-positive PPM dimensions");
  if (maxval != 255) throw FormatError(path + ": unsupported PPM maxval (want 255)");
  in.get();  // single whitespace byte after maxval
  std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(in.gcount()) != raw.size()) {
    throw FormatError(path + ": truncated PPM pixel data");
  }
  ImageTensor img(h, w, 3);
  for (size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0f;
  return img;
}

void write_ppm(const std::string& path, const ImageTensor& image) {
  if (image.channels != 3) throw ShapeError("write_ppm: image must have 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.size());
  for (size_t i = 0; i < image.size(); ++i) {
    float v = image.data[i];
    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace baforge
