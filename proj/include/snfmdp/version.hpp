#pragma once

namespace snfmdp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace snfmdp
