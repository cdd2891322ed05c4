#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace synex {

// Dense vocabulary index, assigned in file order by the vocabulary loader.
using TermId = std::int32_t;

// Raised for malformed inputs and configuration problems (bad file, bad
// field, unresolvable surface). The CLI maps this to exit code 1; every
// other exception maps to exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace synex
