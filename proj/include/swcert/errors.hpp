#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace swcert {

// Domain violations (bad arguments, out-of-range values) are reported with
// std::domain_error directly. The types below cover the remaining failure
// classes the library distinguishes.

class unsupported_operation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class parse_error : public std::runtime_error {
public:
    parse_error(const std::string& what, std::size_t row)
        : std::runtime_error("row " + std::to_string(row) + ": " + what), row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class size_error : public std::length_error {
public:
    using std::length_error::length_error;
};

class validation_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class training_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace swcert
