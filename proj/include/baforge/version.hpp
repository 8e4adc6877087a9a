#pragma once

namespace baforge {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace baforge
