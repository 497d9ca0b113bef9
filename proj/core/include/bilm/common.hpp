#pragma once

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bilm {

// Error taxonomy. The CLI maps ConfigError to exit code 2 and everything
// else to exit code 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad arguments or malformed data handed to an operation.
struct InputError : Error {
    using Error::Error;
};

// Invalid run configuration; carries the offending keys.
struct ConfigError : Error {
    std::vector<std::string> keys;
    explicit ConfigError(const std::string& msg, std::vector<std::string> bad_keys = {})
        : Error(msg), keys(std::move(bad_keys)) {}
};

// Non-finite value encountered during training.
struct DivergenceError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// printf-style formatting into a std::string (libstdc++ 11 has no <format>).
std::string strfmt(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

// Fixed-point decimal rendering used by all table/CSV output, e.g. fmt_fixed(58.0, 1) == "58.0".
std::string fmt_fixed(double v, int decimals);

// FNV-1a 64-bit, the content hash used for vocab fingerprints.
inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

// Little-endian scalar IO helpers for the checkpoint format.
void put_u32le(std::string& out, std::uint32_t v);
void put_u64le(std::string& out, std::uint64_t v);
void put_f32le(std::string& out, float v);
std::uint32_t get_u32le(const unsigned char* p);
std::uint64_t get_u64le(const unsigned char* p);
float get_f32le(const unsigned char* p);

// Whole-file helpers.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);
std::vector<std::string> read_lines(const std::string& path);

// Splits on runs of spaces/tabs; never returns empty tokens.
std::vector<std::string> split_ws(std::string_view line);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace bilm
