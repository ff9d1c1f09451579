#pragma once

namespace fracwave {
inline constexpr const char* version = "0.1.0";
}
