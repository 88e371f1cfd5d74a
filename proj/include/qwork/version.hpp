#pragma once

namespace qwork {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qwork
