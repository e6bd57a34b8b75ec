#pragma once

#include <string>
#include <string_view>

namespace coach {

/// Whole-file read; throws DataError when the file cannot be opened.
std::string read_file(const std::string& path);

/// Writes via `<path>.tmp.<pid>` and rename, so readers never see a partial file.
void write_file_atomic(const std::string& path, std::string_view content);

/// FNV-1a 64 of the bytes, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string file_fingerprint(const std::string& path);

enum class LogLevel { kDebug, kInfo, kWarn, kError, kQuiet };
void set_log_level(LogLevel level);
void log_info(std::string_view msg);
void log_warn(std::string_view msg);

}  // namespace coach
