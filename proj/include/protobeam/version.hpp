#pragma once

namespace protobeam {

inline constexpr const char* kVersion = "0.1.0";

} // namespace protobeam
