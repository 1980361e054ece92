#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace steerbench {

// Validation failures: bad sizes, unknown keys, malformed configs. CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad or insufficient input data (empty corpus, non-parallel question set, ...). CLI exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A backend or adapter lacks a required capability. CLI exit code 2.
class CapabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A downstream command was run before its producer. CLI exit code 3.
class MissingArtifactError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Compensated (Kahan) accumulator in double precision.
class KahanSum {
public:
    void add(double x) {
        const double y = x - comp_;
        const double t = sum_ + y;
        comp_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// FNV-1a over raw bytes; used for determinism checks (weight/output checksums).
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 1469598103934665603ull);

inline std::uint64_t checksum_floats(std::span<const float> v) {
    return fnv1a(v.data(), v.size() * sizeof(float));
}

// Little-endian float32 array files (the only binary payload format used on disk).
void write_f32(const std::filesystem::path& path, std::span<const float> data);
std::vector<float> read_f32(const std::filesystem::path& path);

// Writes to a sibling temp file then renames, so rerunning commands overwrites atomically.
void atomic_write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

// Deterministic parallel map: fn(i) for i in [0, n). Each index writes only its own
// outputs, so results do not depend on thread count or interleaving.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

std::vector<std::string> split(const std::string& s, char sep);
std::string join(const std::vector<std::string>& parts, const std::string& sep);
std::string trim(const std::string& s);

// Fixed-point float formatting used by all CSV exports (6 decimals).
std::string format_fixed(double v, int decimals = 6);

}  // namespace steerbench
