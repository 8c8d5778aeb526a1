// Shared error types and small numeric helpers used across the library.
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace alts {

inline constexpr const char* kVersion = "0.1.0";

class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File access or on-disk format violations (missing file, bad magic,
// truncation, malformed JSON).
class io_error : public error {
public:
    using error::error;
};

// Contract violations: out-of-range arguments, mismatched shapes,
// non-finite values where finite ones are required.
class precondition_error : public error {
public:
    using error::error;
};

// Number of items selected by a fractional cut: ceil(fraction * n), with
// products within 1e-6 of an integer snapped to that integer first so that
// decimal fractions like 0.05 of round pool sizes cut exactly.
inline std::size_t fraction_count(double fraction, std::size_t n) {
    double raw = fraction * static_cast<double>(n);
    const double nearest = std::round(raw);
    if (nearest > 0.0 && std::abs(raw - nearest) < 1e-6) {
        raw = nearest;
    }
    const double up = std::ceil(raw);
    if (up <= 0.0) {
        return 0;
    }
    const auto count = static_cast<std::size_t>(up);
    return count < n ? count : n;
}

}  // namespace alts
