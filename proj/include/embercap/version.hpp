#pragma once

namespace embercap {

inline constexpr const char* kVersion = "0.1.0";

// Schema tags stamped into every machine-readable output.
inline constexpr const char* kSchemaPartitionReport = "embercap/partition-report/1";
inline constexpr const char* kSchemaOepResult = "embercap/oep-result/1";
inline constexpr const char* kSchemaSpectrumReport = "embercap/spectrum-report/1";
inline constexpr const char* kSchemaSpectrumDiff = "embercap/spectrum-diff/1";
inline constexpr const char* kSchemaErrorRecord = "embercap/error/1";

}  // namespace embercap
