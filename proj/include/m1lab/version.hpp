#pragma once

namespace m1lab {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kPathCsvFormat = 1;
inline constexpr int kCoefficientCsvFormat = 1;
inline constexpr int kManifestFormat = 1;

}  // namespace m1lab
