#pragma once

#include <stdexcept>
#include <string>

namespace dirl {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/pyramid geometry violations (wrong rank, size, divisibility).
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("ShapeError: " + msg) {}
};

// Bad ModelConfig/TrainConfig values or checkpoint/model mismatch.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("ConfigError: " + msg) {}
};

struct InvalidConfig : Error {
    explicit InvalidConfig(const std::string& msg) : Error("InvalidConfig: " + msg) {}
};

// Filesystem failures (missing file, unwritable path).
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("IOError: " + msg) {}
};

// Structurally broken on-disk data (truncated manifest, bad magic).
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error("FormatError: " + msg) {}
};

// Average precision is undefined when the ground truth has no positives.
struct EmptyGroundTruth : Error {
    explicit EmptyGroundTruth(const std::string& msg) : Error("EmptyGroundTruth: " + msg) {}
};

struct LengthError : Error {
    explicit LengthError(const std::string& msg) : Error("LengthError: " + msg) {}
};

}  // namespace dirl
