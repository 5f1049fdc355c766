#pragma once

#include <stdexcept>
#include <string>

namespace tailhawk {

/// Bad user input: malformed files, out-of-range settings, violated preconditions.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input file could not be read or parsed.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parameters outside the admissible set (explosive, negative scales, ...).
class ParameterError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace tailhawk
