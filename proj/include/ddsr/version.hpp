#pragma once

namespace ddsr {

inline constexpr const char* kVersionString = "ddsr 0.1.0";

}  // namespace ddsr
