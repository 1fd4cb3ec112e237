#pragma once

namespace sair {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kCsvSchema = "sair-sweep-csv/1";

}  // namespace sair
