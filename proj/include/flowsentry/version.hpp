#pragma once

namespace flowsentry {

inline constexpr const char* kVersion = "0.1.0";

} // namespace flowsentry
