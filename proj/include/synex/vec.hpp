#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace synex {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Cosine similarity clamped into [-1, 1]; 0 if either vector is zero.
inline double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    const double c = dot(a, b) / (na * nb);
    if (c > 1.0) return 1.0;
    if (c < -1.0) return -1.0;
    return c;
}

} // namespace synex
