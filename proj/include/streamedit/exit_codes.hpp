// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <exception>
#include <ostream>

#include "streamedit/errors.hpp"

namespace streamedit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitFormat = 3;
inline constexpr int kExitInvariant = 4;

/// Process exit code for a failure, with a one-line diagnostic on `log`.
/// Chunk failures are classified by the exception they wrap.
inline int exit_code_for(const std::exception_ptr& ep, std::ostream& log) {
    try {
        std::rethrow_exception(ep);
    } catch (const ChunkFailure& e) {
        log << "error: " << e.what() << '\n';
        try {
            std::rethrow_if_nested(e);
        } catch (...) {
            return exit_code_for(std::current_exception(), log);
        }
        return kExitInvariant;
    } catch (const UsageError& e) {
        log << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const InvalidArgument& e) {
        log << "invalid input: " << e.what() << '\n';
        return kExitUsage;
    } catch (const FormatError& e) {
        log << "format error: " << e.what() << '\n';
        return kExitFormat;
    } catch (const UndefinedMetric& e) {
        log << "metric undefined: " << e.what() << '\n';
        return kExitFormat;
    } catch (const InvariantViolation& e) {
        log << "invariant violation: " << e.what() << '\n';
        return kExitInvariant;
    } catch (const NumericalFailure& e) {
        log << "numerical failure: " << e.what() << '\n';
        return kExitInvariant;
    } catch (const std::exception& e) {
        log << "internal error: " << e.what() << '\n';
        return kExitInvariant;
    } catch (...) {
        log << "internal error: unknown exception\n";
        return kExitInvariant;
    }
}

}  // namespace streamedit
