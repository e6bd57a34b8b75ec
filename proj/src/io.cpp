#include "coach/io.hpp"

#include "coach/errors.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include <unistd.h>

namespace coach {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view content) {
    const std::string tmp = path + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write '" + path + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            out.close();
            std::remove(tmp.c_str());
            throw DataError("write failed for '" + path + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::remove(tmp.c_str());
        throw DataError("cannot rename into '" + path + "': " + ec.message());
    }
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_fingerprint(const std::string& path) { return fnv1a_hex(read_file(path)); }

namespace {
std::atomic<LogLevel> g_level{LogLevel::kInfo};
std::mutex g_log_mutex;

void emit(LogLevel level, const char* tag, std::string_view msg) {
    if (level < g_level.load()) return;
    std::lock_guard lock(g_log_mutex);
    std::cerr << tag << msg << '\n';
}
}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
void log_info(std::string_view msg) { emit(LogLevel::kInfo, "", msg); }
void log_warn(std::string_view msg) { emit(LogLevel::kWarn, "warning: ", msg); }

}  // namespace coach
