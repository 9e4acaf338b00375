#pragma once

#include <string>

namespace vssl {

inline constexpr const char* kVersion = "0.1.0";

// git-describe style identifier embedded in reports; kept constant so report
// emission is byte-stable for identical inputs.
inline std::string version_string() { return std::string("vssl-v") + kVersion; }

} // namespace vssl
