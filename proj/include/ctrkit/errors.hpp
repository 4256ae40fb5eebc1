#pragma once

#include <stdexcept>
#include <string>

namespace ctrkit {

// Error taxonomy maps onto CLI exit codes:
//   ConfigError -> 1 (usage), DataError -> 2 (data),
//   DimensionError / NumericError -> 3 (numeric failure).

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ctrkit
