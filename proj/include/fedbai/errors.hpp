// errors.hpp
#pragma once
#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedbai {

// Bad argument or malformed instance (non-finite means, out-of-range index, ...).
class input_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// CSV / JSON ingestion failure. Row and column are one-based; 0 means "not applicable".
class parse_error : public std::runtime_error {
public:
    parse_error(const std::string& what, std::size_t row, std::size_t col = 0)
        : std::runtime_error(what), row_(row), col_(col) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t col() const noexcept { return col_; }

private:
    std::size_t row_;
    std::size_t col_;
};

// Experiment configuration rejected; `field` names the offending JSON key.
class config_error : public std::invalid_argument {
public:
    config_error(const std::string& field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(field) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace fedbai
