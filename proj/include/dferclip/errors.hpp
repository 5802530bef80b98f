#pragma once

#include <stdexcept>
#include <string>

namespace dfer {

// Error taxonomy. Validation-type errors (bad shapes, configs, inputs) map to
// CLI exit code 1, runtime-type errors (numeric blowups, I/O, training aborts)
// map to exit code 2.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};
struct UsageError : Error {
    using Error::Error;
};
struct ProtocolError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};
struct TrainingError : Error {
    using Error::Error;
};
struct OracleError : Error {
    using Error::Error;
};
struct IntegrityError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

inline bool is_validation_error(const Error& e) {
    return dynamic_cast<const ShapeError*>(&e) != nullptr ||
           dynamic_cast<const ConfigError*>(&e) != nullptr ||
           dynamic_cast<const DataError*>(&e) != nullptr ||
           dynamic_cast<const UsageError*>(&e) != nullptr ||
           dynamic_cast<const ProtocolError*>(&e) != nullptr;
}

}  // namespace dfer
