#pragma once

namespace pgpr {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace pgpr
