#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace baforge {

// Written next to every artifact-producing command's outputs so any output
// can be re-derived from its inputs, config, and seed.
struct RunManifest {
  std::string command;
  std::string tool_version;
  uint64_t seed = 0;
  std::string config_hash;  // fnv1a64 hex of the effective config text, "-" if none
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string timestamp_utc;
};

std::string fnv1a64_hex(std::string_view text);
std::string utc_timestamp_now();

void write_manifest(const std::string& path, const RunManifest& manifest);

}  // namespace baforge
