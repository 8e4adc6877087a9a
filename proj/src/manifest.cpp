#include "baforge/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "baforge/errors.hpp"
#include "baforge/version.hpp"

namespace baforge {

std::string fnv1a64_hex(std::string_view text) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string utc_timestamp_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
  nlohmann::json j;
  j["command"] = manifest.command;
  j["tool_version"] = manifest.tool_version.empty() ? kToolVersion : manifest.tool_version;
  j["seed"] = manifest.seed;
  j["config_hash"] = manifest.config_hash.empty() ? "-" : manifest.config_hash;
  j["inputs"] = manifest.inputs;
  j["outputs"] = manifest.outputs;
  j["timestamp_utc"] = manifest.timestamp_utc.empty() ? utc_timestamp_now()
                                                      : manifest.timestamp_utc;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("short write to " + path);
}

}  // namespace baforge
