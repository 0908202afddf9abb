#pragma once

#include <stdexcept>
#include <string>

namespace reportdpo {

/// Bad input data: empty corpora, mismatched lengths, unreadable files.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration values.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace reportdpo
