#ifndef FPCONV_ERRORS_HPP
#define FPCONV_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fpconv {

/// Bad input: malformed measure, out-of-range config value, dimension mismatch.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine could not deliver a result within its contract.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace fpconv

#endif
