#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lithoroute {

// Errors carry a short machine-parsable class string; the CLI prints
// "error: <class>: <message>" on a single line and exits nonzero.
class Error : public std::runtime_error {
public:
    Error(std::string cls, const std::string& msg)
        : std::runtime_error(msg), cls_(std::move(cls)) {}
    const std::string& error_class() const { return cls_; }

private:
    std::string cls_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};
struct SchemaError : Error {
    explicit SchemaError(const std::string& msg) : Error("schema", msg) {}
};
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("data", msg) {}
};
struct LabelError : Error {
    explicit LabelError(const std::string& msg) : Error("label", msg) {}
};
struct ArtifactError : Error {
    explicit ArtifactError(const std::string& msg) : Error("artifact", msg) {}
};
struct BackendError : Error {
    explicit BackendError(const std::string& msg) : Error("backend", msg) {}
};
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io", msg) {}
};

// FNV-1a, used for content hashes in manifests and completion-cache keys.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 14695981039346656037ull) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string to_hex(std::uint64_t value);

// Shortest decimal text that reloads to the identical double.
std::string format_full(double v);
std::string format_fixed(double v, int precision);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string lower(std::string_view s);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace lithoroute
