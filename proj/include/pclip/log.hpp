// Copyright (C) 2026 The pclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string_view>

namespace pclip {

enum class LogLevel { kDebug, kInfo, kWarning, kError };

std::string_view to_string(LogLevel level) noexcept;

using LogSink = std::function<void(LogLevel, std::string_view)>;

/// Replaces the process-wide sink. An empty sink restores the default, which
/// writes warnings and errors to stderr and drops the rest.
void set_log_sink(LogSink sink);

/// Thread-safe; messages from concurrent callers are not interleaved.
void log(LogLevel level, std::string_view message);

inline void log_warning(std::string_view message) { log(LogLevel::kWarning, message); }
inline void log_info(std::string_view message) { log(LogLevel::kInfo, message); }

}  // namespace pclip
