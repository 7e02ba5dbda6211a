#pragma once

#include <stdexcept>
#include <string>

namespace cellscan {

// Base for all library errors. `module_name` identifies which subsystem
// threw (tensor, image, dataset, canny, nn, trainer, cli) so the CLI can
// report "module: cause" without unwinding type info.
class Error : public std::runtime_error {
public:
    Error(std::string module_name, const std::string& message)
        : std::runtime_error(module_name + ": " + message),
          module_(std::move(module_name)) {}

    const std::string& module_name() const { return module_; }

private:
    std::string module_;
};

// Incompatible tensor/image dimensions.
struct ShapeError : Error {
    using Error::Error;
};

// Out-of-range or otherwise invalid argument value.
struct ParamError : Error {
    using Error::Error;
};

// Malformed input stream (PNG chunks, model files, ...).
struct DecodeError : Error {
    using Error::Error;
};

// Valid stream but a feature this codec does not handle.
struct UnsupportedFormatError : Error {
    using Error::Error;
};

// Dataset directory tree does not match the expected layout.
struct LayoutError : Error {
    using Error::Error;
};

// A file could not be read/decoded while assembling batches.
struct LoadError : Error {
    using Error::Error;
};

// Serialized model file failed validation.
struct FormatError : Error {
    using Error::Error;
};

// Operation called in the wrong order (e.g. backward without forward).
struct StateError : Error {
    using Error::Error;
};

// Filesystem-level failure.
struct IoError : Error {
    using Error::Error;
};

// Inconsistent model/training configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Batch too small for the requested operation (batch norm needs >= 2).
struct BatchSizeError : Error {
    using Error::Error;
};

} // namespace cellscan
