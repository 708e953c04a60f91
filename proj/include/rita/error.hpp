// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rita {

enum class Errc {
    invalid_argument,
    dimension,
    parse,
    io,
    corrupt,
    unsupported_version,
    config,
    backend,
    network,
    auth,
    timeout,
    protocol,
};

std::string_view to_string(Errc code) noexcept;

/// Single exception type for the library; `code()` drives CLI exit codes and
/// the `code` field of wire error events.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& message);

} // namespace rita
