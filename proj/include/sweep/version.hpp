#pragma once

namespace sweep {

inline constexpr const char* tool_name = "sweepcli";
inline constexpr const char* version_string = "0.1.0";

} // namespace sweep
