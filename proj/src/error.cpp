// SPDX-License-Identifier: Apache-2.0
#include "rita/error.hpp"

namespace rita {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::dimension: return "dimension";
    case Errc::parse: return "parse";
    case Errc::io: return "io";
    case Errc::corrupt: return "corrupt";
    case Errc::unsupported_version: return "unsupported_version";
    case Errc::config: return "config";
    case Errc::backend: return "backend";
    case Errc::network: return "network";
    case Errc::auth: return "auth";
    case Errc::timeout: return "timeout";
    case Errc::protocol: return "protocol";
    }
    return "unknown";
}

void fail(Errc code, const std::string& message) { throw Error(code, message); }

} // namespace rita
