#include "baforge/rng.hpp"

#include <cmath>
#include <numbers>

namespace baforge {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

uint64_t derive_seed(uint64_t master, std::string_view stream_name) {
  return splitmix64(master ^ fnv1a(stream_name));
}

uint64_t derive_seed(uint64_t master, std::string_view stream_name, uint64_t index) {
  return splitmix64(derive_seed(master, stream_name) ^ splitmix64(index));
}

uint64_t derive_seed(uint64_t master, std::string_view stream_name, uint64_t a, uint64_t b) {
  return splitmix64(derive_seed(master, stream_name, a) ^ splitmix64(~b));
}

double Rng::gaussian(double mu, double sigma) {
  const double u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));  // 1-u1 in (0,1], log finite
  const double z = r * std::cos(2.0 * std::numbers::pi * u2);
  return mu + sigma * z;
}

}  // namespace baforge
