// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace nbf {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes do not conform (matrix/vector dims, pooling requirements, ...).
class ShapeError : public Error {
public:
    using Error::Error;
};

// Out-of-range index: class label, epoch, token id.
class IndexError : public Error {
public:
    using Error::Error;
};

// Value outside its mathematical domain (alpha not in [0,1], noise level, ...).
class ValueError : public Error {
public:
    using Error::Error;
};

// Invalid or inconsistent configuration, including header-vs-config mismatches.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed file: bad magic, unknown version, garbled metadata.
class FormatError : public Error {
public:
    using Error::Error;
};

// File ends before the declared payload does.
class TruncationError : public Error {
public:
    using Error::Error;
};

// Numeric evaluation failed: non-finite loss, undefined metric.
class EvalError : public Error {
public:
    using Error::Error;
};

// I/O failure opening or writing a file.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace nbf
