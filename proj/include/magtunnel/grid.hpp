#pragma once

#include <cmath>

namespace magtunnel {

struct Point {
    double x1 = 0.0;
    double x2 = 0.0;

    friend Point operator+(Point a, Point b) { return {a.x1 + b.x1, a.x2 + b.x2}; }
    friend Point operator-(Point a, Point b) { return {a.x1 - b.x1, a.x2 - b.x2}; }
    friend Point operator-(Point a) { return {-a.x1, -a.x2}; }
    friend Point operator*(double s, Point a) { return {s * a.x1, s * a.x2}; }
    friend bool operator==(Point a, Point b) = default;

    double norm2() const { return x1 * x1 + x2 * x2; }
    double norm() const { return std::hypot(x1, x2); }
};

/// 2D wedge product a1*b2 - a2*b1.
inline double wedge(Point a, Point b) { return a.x1 * b.x2 - a.x2 * b.x1; }

enum class Boundary { Dirichlet };

/// Uniform square grid on [-L, L]^2 with Dirichlet boundary.
///
/// Coordinates are computed as (i - (n-1)/2) * h so that the grid is bit-exactly
/// symmetric under x -> -x; the inversion partner of flat index k is N-1-k.
class Grid2D {
public:
    Grid2D(double half_width, int n);

    int nx() const { return n_; }
    int ny() const { return n_; }
    int size() const { return n_ * n_; }
    double half_width() const { return half_width_; }
    double spacing() const { return h_; }
    Boundary boundary() const { return Boundary::Dirichlet; }

    double coord(int i) const { return (static_cast<double>(i) - 0.5 * (n_ - 1)) * h_; }
    int index(int i, int j) const { return i + n_ * j; }
    int col(int k) const { return k % n_; }
    int row(int k) const { return k / n_; }
    Point point(int i, int j) const { return {coord(i), coord(j)}; }
    Point point(int k) const { return point(col(k), row(k)); }
    int mirror_index(int k) const { return size() - 1 - k; }

    /// Distance from point k to the nearest box edge.
    double distance_to_boundary(int k) const;

    /// Grid index nearest to p (clamped to the box).
    int nearest_index(Point p) const;

    /// Cell area h^2, the quadrature weight of the grid inner product.
    double cell_area() const { return h_ * h_; }

    friend bool operator==(const Grid2D&, const Grid2D&) = default;

private:
    double half_width_;
    int n_;
    double h_;
};

Grid2D build_grid(double half_width, int n);

}  // namespace magtunnel
