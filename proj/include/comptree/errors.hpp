#pragma once

#include <stdexcept>
#include <string>

namespace comptree {

// Malformed or inconsistent input data (CSV files, model files).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Text parse failure with source position (1-based line/column).
struct ParseError : std::runtime_error {
    int line;
    int col;
    ParseError(int line_, int col_, const std::string& msg)
        : std::runtime_error("parse error at " + std::to_string(line_) + ":" +
                             std::to_string(col_) + ": " + msg),
          line(line_),
          col(col_) {}
};

// Enumeration refused because the a-priori size estimate exceeds the guard.
struct GuardError : std::runtime_error {
    double estimate;
    GuardError(double estimate_, const std::string& msg)
        : std::runtime_error(msg), estimate(estimate_) {}
};

}  // namespace comptree
