#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace varmion {

// Error taxonomy; the CLI maps each type to a fixed exit code.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FrameError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LogLevel { error = 0, info = 1, debug = 2 };

// Level comes from VARMION_LOG in {error, info, debug}; default info.
LogLevel log_level();

template <typename... Args>
void log_at(LogLevel lvl, const char* fmt, Args... args) {
    if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
    const char* tag = lvl == LogLevel::error ? "error" : lvl == LogLevel::info ? "info" : "debug";
    std::fprintf(stderr, "[%s] ", tag);
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
}

inline void log_msg(LogLevel lvl, const std::string& msg) { log_at(lvl, "%s", msg.c_str()); }

#define VARMION_INFO(...) ::varmion::log_at(::varmion::LogLevel::info, __VA_ARGS__)
#define VARMION_DEBUG(...) ::varmion::log_at(::varmion::LogLevel::debug, __VA_ARGS__)
#define VARMION_ERROR(...) ::varmion::log_at(::varmion::LogLevel::error, __VA_ARGS__)

// FNV-1a, used for content hashes recorded in dataset metadata.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v);

}  // namespace varmion
