// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace streamedit {

/// Precondition on a call was not met (shape mismatch, bad range, empty set).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A serialized artifact (latent file, mask file, config file) could not be decoded.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Internal bookkeeping went out of sync (caches, registries, counters).
class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A metric was requested over an empty domain.
class UndefinedMetric : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Bad command line or configuration key.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Wraps any failure raised while editing one chunk. The original exception is
/// available through std::rethrow_if_nested.
class ChunkFailure : public std::runtime_error {
public:
    ChunkFailure(std::size_t chunk_index, const std::string& what)
        : std::runtime_error("chunk " + std::to_string(chunk_index) + ": " + what), chunk_index_(chunk_index) {}

    std::size_t chunk_index() const noexcept { return chunk_index_; }

private:
    std::size_t chunk_index_;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

inline void ensure(bool cond, const std::string& msg) {
    if (!cond) throw InvariantViolation(msg);
}

}  // namespace detail
}  // namespace streamedit
