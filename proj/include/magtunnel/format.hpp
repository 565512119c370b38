#pragma once

#include <cstdio>
#include <optional>
#include <string>

namespace magtunnel {

/// Round-trip decimal form with 17 significant digits.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Empty field for a missing value.
inline std::string fmt17(const std::optional<double>& v) { return v ? fmt17(*v) : std::string(); }

}  // namespace magtunnel
