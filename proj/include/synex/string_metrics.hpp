#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

// String similarity primitives for surface-name comparison.
//
// jaro() uses match window floor(max(|s1|,|s2|)/2) rather than the more
// common floor(max/2)-1. With the tighter window the characters of short
// abbreviated forms stop matching their counterparts in long forms at all
// (e.g. jaro("Arizona","Texas") would be 0); the wider window keeps those
// alignments and is the variant whose values this library standardizes on.

namespace synex {

// Levenshtein distance over raw characters (case-sensitive).
inline std::size_t edit_distance(std::string_view s1, std::string_view s2) {
    if (s1.size() > s2.size()) std::swap(s1, s2);
    const std::size_t n = s1.size(), m = s2.size();
    if (n == 0) return m;

    std::vector<std::size_t> row(n + 1);
    std::iota(row.begin(), row.end(), std::size_t{0});
    for (std::size_t j = 1; j <= m; ++j) {
        std::size_t prev_diag = row[0];
        row[0] = j;
        for (std::size_t i = 1; i <= n; ++i) {
            const std::size_t del = row[i] + 1;
            const std::size_t ins = row[i - 1] + 1;
            const std::size_t sub = prev_diag + (s1[i - 1] == s2[j - 1] ? 0 : 1);
            prev_diag = row[i];
            row[i] = std::min({del, ins, sub});
        }
    }
    return row[n];
}

namespace detail {

inline double jaro_impl(std::string_view s1, std::string_view s2) {
    if (s1 == s2) return 1.0;
    const std::size_t l1 = s1.size(), l2 = s2.size();
    if (l1 == 0 || l2 == 0) return 0.0;

    const std::size_t window = std::max(l1, l2) / 2;
    std::vector<bool> matched1(l1, false), matched2(l2, false);

    std::size_t matches = 0;
    for (std::size_t i = 0; i < l1; ++i) {
        const std::size_t lo = i > window ? i - window : 0;
        const std::size_t hi = std::min(l2 - 1, i + window);
        for (std::size_t j = lo; j <= hi; ++j) {
            if (!matched2[j] && s1[i] == s2[j]) {
                matched1[i] = matched2[j] = true;
                ++matches;
                break;
            }
        }
    }
    if (matches == 0) return 0.0;

    std::size_t transpositions = 0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < l1; ++i) {
        if (!matched1[i]) continue;
        while (!matched2[k]) ++k;
        if (s1[i] != s2[k]) ++transpositions;
        ++k;
    }
    transpositions /= 2;

    const double m = static_cast<double>(matches);
    return (m / static_cast<double>(l1) + m / static_cast<double>(l2) +
            (m - static_cast<double>(transpositions)) / m) / 3.0;
}

} // namespace detail

// Jaro similarity in [0,1], symmetric. Arguments are canonicalized so the
// result is bit-identical under swapping.
inline double jaro(std::string_view s1, std::string_view s2) {
    if (std::make_pair(s1.size(), s1) > std::make_pair(s2.size(), s2)) std::swap(s1, s2);
    return detail::jaro_impl(s1, s2);
}

// Jaro plus the standard Winkler boost: prefix scale 0.1, prefix capped at 4.
inline double jaro_winkler(std::string_view s1, std::string_view s2) {
    const double j = jaro(s1, s2);
    std::size_t prefix = 0;
    const std::size_t cap = std::min({s1.size(), s2.size(), std::size_t{4}});
    while (prefix < cap && s1[prefix] == s2[prefix]) ++prefix;
    return j + static_cast<double>(prefix) * 0.1 * (1.0 - j);
}

} // namespace synex
