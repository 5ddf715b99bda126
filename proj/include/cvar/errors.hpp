#pragma once

#include <stdexcept>
#include <string>

namespace cvar {

// Malformed or inconsistent model input (bad probabilities, unknown names,
// schema violations). Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A configured resource cap was hit (segment counts, policy enumeration,
// grid sizes). The computation is abandoned, never silently truncated.
// Maps to CLI exit code 3.
class GuardError : public std::runtime_error {
public:
    explicit GuardError(const std::string& what) : std::runtime_error(what) {}
};

// A requested trajectory is impossible under the model dynamics.
// Maps to CLI exit code 4.
class TraceError : public std::runtime_error {
public:
    explicit TraceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cvar
