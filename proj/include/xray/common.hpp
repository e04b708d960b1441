#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace xray {

using cd = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Thrown for points outside the domain (plus collar).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad grid sizes, bad parameters, precondition violations.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Ray tracing failed to find the boundary, conjugate points, etc.
struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline double wrap_angle(double t) {
    double r = std::fmod(t, kTwoPi);
    if (r < 0) r += kTwoPi;
    return r;
}

}  // namespace xray
