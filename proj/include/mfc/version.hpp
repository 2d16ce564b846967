#pragma once

namespace mfc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mfc
