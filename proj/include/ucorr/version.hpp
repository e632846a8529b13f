#pragma once

namespace ucorr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ucorr
