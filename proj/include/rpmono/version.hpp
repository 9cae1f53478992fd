#pragma once

namespace rpmono {

inline constexpr const char* version = "0.1.0";

} // namespace rpmono
