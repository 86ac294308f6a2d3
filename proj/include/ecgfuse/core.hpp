#ifndef ECGFUSE_CORE_HPP
#define ECGFUSE_CORE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ecgfuse {

/// Lead-major signal matrix: one row per lead, one column per time sample.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr int kLeads = 12;
inline constexpr int kSamples = 5000;
inline constexpr double kSamplingRateHz = 500.0;

// ---------------------------------------------------------------------------
// Errors. The CLI maps each family onto an exit code.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (bad number, ragged rows, wrong shape).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Well-formed input with unusable values (non-finite, zero power, empty class).
class DataError : public Error {
public:
    using Error::Error;
};

/// Caller passed arguments outside an operation's domain.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Failure reading or writing the filesystem.
class IoError : public Error {
public:
    IoError(const std::string& what, bool output) : Error(what), output_(output) {}
    bool is_output() const noexcept { return output_; }

private:
    bool output_;
};

/// An invariant the library itself guarantees was violated.
class InternalError : public Error {
public:
    using Error::Error;
};

inline void log_warning(std::string_view msg) { std::cerr << "warning: " << msg << '\n'; }

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct ClassId {
    int index = -1;
    std::string name;

    friend bool operator==(const ClassId& a, const ClassId& b) {
        return a.index == b.index && a.name == b.name;
    }
};

/// The nine rhythm classes used by the CPSC-style presets.
inline const std::vector<std::string>& cpsc_class_names() {
    static const std::vector<std::string> names{"Normal", "AF",  "I-AVB", "LBBB", "RBBB",
                                                "PAC",    "PVC", "STD",   "STE"};
    return names;
}

struct EcgRecord {
    Matrix leads;
    ClassId label;
    std::string id;

    Eigen::Index rows() const noexcept { return leads.rows(); }
    Eigen::Index cols() const noexcept { return leads.cols(); }
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_finite(const Matrix& m, std::string_view what) {
    if (!m.allFinite()) throw DataError(std::string(what) + ": non-finite value");
}

/// Floor of a product that should land on an integer, tolerant of one-ulp
/// representation error (e.g. 100 * 0.29 = 28.999999999999996).
inline long long floor_product(double a, double b) {
    return static_cast<long long>(std::floor(a * b + 1e-9));
}

// ---------------------------------------------------------------------------
// Randomness
//
// Engines are std::mt19937_64, whose output sequence is fixed by the
// standard. The std:: distributions are implementation-defined, so the
// helpers below derive uniforms, indices and normals directly from raw
// engine output to keep draws identical across toolchains.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// A named, reproducible random stream. Child streams are derived by name so
/// each pipeline stage draws independently of how much the others consumed.
class RngStream {
public:
    RngStream() = default;
    explicit RngStream(std::uint64_t seed, std::string stream = "root")
        : seed_(seed), stream_(std::move(stream)) {}

    std::uint64_t seed() const noexcept { return seed_; }
    const std::string& stream() const noexcept { return stream_; }

    RngStream child(std::string_view name) const {
        return RngStream(seed_, stream_ + "/" + std::string(name));
    }
    RngStream child(std::size_t index) const { return child(std::to_string(index)); }

    std::mt19937_64 engine() const {
        return std::mt19937_64(splitmix64(seed_ ^ splitmix64(fnv1a(stream_))));
    }

private:
    std::uint64_t seed_ = 0;
    std::string stream_ = "root";
};

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
    return lo + (hi - lo) * uniform01(g);
}

/// Unbiased integer in [0, n) by rejection.
inline std::uint64_t uniform_index(std::mt19937_64& g, std::uint64_t n) {
    if (n == 0) throw ArgumentError("uniform_index: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
        v = g();
    } while (v >= limit);
    return v % n;
}

/// Standard normal via Box-Muller (one draw per call, the pair is not cached).
inline double normal(std::mt19937_64& g) {
    double u1;
    do {
        u1 = uniform01(g);
    } while (u1 <= 0.0);
    const double u2 = uniform01(g);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& g) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(g, i));
        std::swap(v[i - 1], v[j]);
    }
}

/// k distinct indices from [0, n), in draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                           std::mt19937_64& g) {
    if (k > n) throw ArgumentError("sample_without_replacement: k > n");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(g, n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace ecgfuse

#endif
