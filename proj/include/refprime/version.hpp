#pragma once

namespace refprime {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace refprime
