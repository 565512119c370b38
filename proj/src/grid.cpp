#include "magtunnel/grid.hpp"

#include <algorithm>
#include <string>

#include "magtunnel/error.hpp"

namespace magtunnel {

namespace {
constexpr int kMinPoints = 16;
}

Grid2D::Grid2D(double half_width, int n) : half_width_(half_width), n_(n), h_(0.0) {
    if (!(half_width > 0.0)) throw InvalidArgument("grid half-width must be positive");
    if (n < kMinPoints) throw InvalidArgument("grid needs at least 16 points per axis, got " + std::to_string(n));
    h_ = 2.0 * half_width / (n - 1);
}

double Grid2D::distance_to_boundary(int k) const {
    const Point p = point(k);
    return half_width_ - std::max(std::abs(p.x1), std::abs(p.x2));
}

int Grid2D::nearest_index(Point p) const {
    auto axis = [&](double x) {
        const int i = static_cast<int>(std::lround(x / h_ + 0.5 * (n_ - 1)));
        return std::clamp(i, 0, n_ - 1);
    };
    return index(axis(p.x1), axis(p.x2));
}

Grid2D build_grid(double half_width, int n) { return Grid2D(half_width, n); }

}  // namespace magtunnel
