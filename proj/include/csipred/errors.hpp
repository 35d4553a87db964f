// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#ifndef CSIPRED_ERRORS_HPP
#define CSIPRED_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace csipred {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A value outside the mathematical domain of an operation.
struct DomainError : Error {
    using Error::Error;
};

// Matrix/vector dimensions inconsistent with the declared layout.
struct ShapeError : Error {
    using Error::Error;
};

// A persisted file that is not what it claims to be (bad magic, garbage).
struct FormatError : Error {
    using Error::Error;
};

// A persisted file with a recognized magic but unsupported layout version.
struct VersionError : FormatError {
    using FormatError::FormatError;
};

// A persisted file that ends early or fails internal consistency checks.
struct CorruptError : FormatError {
    using FormatError::FormatError;
};

// Invalid or mutually inconsistent run configuration.
struct ConfigError : Error {
    using Error::Error;
};

// API misuse (stale cache, mismatched forward/backward pairing).
struct UsageError : Error {
    using Error::Error;
};

} // namespace csipred

#endif
