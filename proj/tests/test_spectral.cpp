#include <doctest.h>

#include <cmath>
#include <numbers>

#include "magtunnel/error.hpp"
#include "magtunnel/spectral.hpp"

using namespace magtunnel;

namespace {

SolverOptions opts(int k, double tol = 1e-11, std::uint64_t seed = 0) {
    SolverOptions o;
    o.k = k;
    o.tol = tol;
    o.seed = seed;
    return o;
}

double residual_norm(const DiscreteOperator& op, double e, const ComplexVector& v) {
    return (apply_operator(op, v) - e * v).norm() / v.norm();
}

}  // namespace

TEST_CASE("sparse solver matches the dense oracle over a parameter sweep") {
    const Grid2D g(4.0, 32);
    for (auto p : {MagneticParams{8, 1}, MagneticParams{4, 0.25}, MagneticParams{6, 0.0}, MagneticParams{2, 3}}) {
        const PotentialSpec v = double_well(DoubleWellConfig::symmetric(radial_bump(1.0, 1.0), 2.0));
        const DiscreteOperator op = assemble_operator(g, v, p);
        const auto res = solve_lowest(op, opts(6));
        const Eigen::VectorXd dense = dense_oracle(op);
        for (int i = 0; i < 6; ++i) {
            CHECK(std::abs(res.eigenvalues[i] - dense[i]) <= 1e-8 * std::abs(dense[i]));
            CHECK(std::abs(res.eigenvalues[i] - dense[i]) <= res.eigenvalue_errors[i] + 1e-12 * op.row_sum_norm());
        }
    }
}

TEST_CASE("eigenvectors are grid orthonormal with small residuals") {
    const Grid2D g(4.0, 48);
    const DiscreteOperator op = assemble_operator(g, radial_bump(1.2, 1.0, {0.4, 0.0}), {6.0, 0.5});
    const auto res = solve_lowest(op, opts(4));
    REQUIRE(res.size() == 4);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            const Complex ip = grid_inner(res.eigenvectors[i], res.eigenvectors[j], g);
            CHECK(std::abs(ip - (i == j ? 1.0 : 0.0)) < 1e-10);
        }
        CHECK(residual_norm(op, res.eigenvalues[i], res.eigenvectors[i]) <= 1e-9 * op.row_sum_norm());
        if (i > 0) CHECK(res.eigenvalues[i] >= res.eigenvalues[i - 1]);
    }
    CHECK(res.cell_area == g.cell_area());
}

TEST_CASE("same seed reproduces bit for bit; another seed agrees within tolerance") {
    const DiscreteOperator op = assemble_operator(Grid2D(4.0, 40), radial_bump(1.0, 1.0), {8.0, 1.0});
    const auto a = solve_lowest(op, opts(3, 1e-11, 7));
    const auto b = solve_lowest(op, opts(3, 1e-11, 7));
    const auto c = solve_lowest(op, opts(3, 1e-11, 8));
    for (int i = 0; i < 3; ++i) {
        CHECK(a.eigenvalues[i] == b.eigenvalues[i]);
        CHECK((a.eigenvectors[i] - b.eigenvectors[i]).norm() == 0.0);
        CHECK(std::abs(a.eigenvalues[i] - c.eigenvalues[i]) <= a.eigenvalue_errors[i] + c.eigenvalue_errors[i]);
    }
}

TEST_CASE("harmonic oscillator ground energy") {
    // -Lap + lambda^2 omega0^2 |x|^2 / 2 at b = 0 has E0 = sqrt(2) lambda omega0.
    const double lam = 2.0;
    const Grid2D g(5.0, 161);
    const DiscreteOperator op = assemble_operator(g, harmonic_global(1.0), {lam, 0.0});
    const auto res = solve_lowest(op, opts(3));
    const double e0 = std::numbers::sqrt2 * lam;
    CHECK(res.eigenvalues[0] == doctest::Approx(e0).epsilon(2e-3));
    // First excited level is doubly degenerate at 2 E0.
    CHECK(res.eigenvalues[1] == doctest::Approx(2 * e0).epsilon(5e-3));
    CHECK(res.eigenvalues[2] == doctest::Approx(2 * e0).epsilon(5e-3));
    CHECK(std::abs(res.eigenvalues[2] - res.eigenvalues[1]) < 1e-8);
}

TEST_CASE("lowest Landau level") {
    const Grid2D g(2.5, 64);
    const DiscreteOperator op = assemble_operator(g, PotentialSpec{}, {8.0, 1.0});
    const auto res = solve_lowest(op, opts(1));
    CHECK(res.eigenvalues[0] == doctest::Approx(8.0).epsilon(1e-2));
}

TEST_CASE("parity sectors reproduce the full spectrum") {
    const Grid2D g(4.0, 40);
    const PotentialSpec v = double_well(DoubleWellConfig::symmetric(radial_bump(1.0, 1.0), 1.3));
    const DiscreteOperator op = assemble_operator(g, v, {4.0, 0.25});
    const auto full = solve_lowest(op, opts(2, 1e-12));
    const auto ps = parity_split(op, opts(1, 1e-12));
    const double lo = std::min(ps.e_even, ps.e_odd);
    const double hi = std::max(ps.e_even, ps.e_odd);
    CHECK(std::abs(lo - full.eigenvalues[0]) <= 1e-9 * std::abs(full.eigenvalues[0]));
    CHECK(std::abs(hi - full.eigenvalues[1]) <= 1e-9 * std::abs(full.eigenvalues[1]));
    CHECK(ps.ground_parity == Parity::even);

    // Sector vectors transform as claimed.
    const int n = g.size();
    double even_defect = 0, odd_defect = 0;
    for (int k = 0; k < n; ++k) {
        even_defect = std::max(even_defect, std::abs(ps.even_vector[k] - ps.even_vector[n - 1 - k]));
        odd_defect = std::max(odd_defect, std::abs(ps.odd_vector[k] + ps.odd_vector[n - 1 - k]));
    }
    CHECK(even_defect < 1e-12);
    CHECK(odd_defect < 1e-12);
    CHECK(std::abs(grid_inner(ps.even_vector, ps.even_vector, g) - 1.0) < 1e-10);
    CHECK(residual_norm(op, ps.e_even, ps.even_vector) < 1e-9 * op.row_sum_norm());
    CHECK(residual_norm(op, ps.e_odd, ps.odd_vector) < 1e-9 * op.row_sum_norm());
}

TEST_CASE("parity split refuses asymmetric potentials") {
    const DiscreteOperator op = assemble_operator(Grid2D(4.0, 32), radial_bump(1.0, 1.0, {0.5, 0.0}), {4.0, 0.25});
    CHECK_THROWS_AS(parity_split(op), SymmetryError);
}

TEST_CASE("decay fit recovers a Gaussian exponent") {
    const Grid2D g(4.0, 64);
    ComplexVector psi(g.size());
    const Point c{0.5, -0.25};
    for (int k = 0; k < g.size(); ++k) psi[k] = std::polar(std::exp(-0.7 * (g.point(k) - c).norm2()), 0.3 * k);
    const DecayFit fit = decay_fit(psi, c, g, 1.0);
    CHECK(fit.c_fit == doctest::Approx(0.7).epsilon(1e-10));
    CHECK(fit.r2_fit == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(fit.samples > 100);
    CHECK_THROWS_AS(decay_fit(psi, c, g, 10.0), InvalidArgument);
}

TEST_CASE("phase canonicalization") {
    ComplexVector v(3);
    v << Complex(0.1, 0.2), Complex(-3.0, 4.0), Complex(0.0, 1.0);
    const ComplexVector orig = v;
    canonicalize_phase(v);
    CHECK(v[1].imag() == doctest::Approx(0.0));
    CHECK(v[1].real() == doctest::Approx(5.0));
    CHECK(v.norm() == doctest::Approx(orig.norm()));
    CHECK(std::abs(v[0] / v[2] - orig[0] / orig[2]) < 1e-14);
}

TEST_CASE("gap isolation and argument checks") {
    SpectralResult r;
    r.eigenvalues = {1.0, 1.5, 4.0};
    CHECK(gap_isolation(r, 2) == 2.5);
    CHECK_THROWS_AS(gap_isolation(r, 3), InvalidArgument);

    const DiscreteOperator op = assemble_operator(Grid2D(2.0, 16), PotentialSpec{}, {1.0, 0.0});
    CHECK_THROWS_AS(solve_lowest(op, opts(0)), InvalidArgument);
    CHECK_THROWS_AS(solve_lowest(op, opts(300)), InvalidArgument);
    CHECK_THROWS_AS(solve_lowest(op, opts(1, 0.0)), InvalidArgument);
    SolverOptions bad = opts(1);
    bad.shift = 1e6;
    CHECK_THROWS_AS(solve_lowest(op, bad), InvalidArgument);
    CHECK_THROWS_AS(dense_oracle(assemble_operator(Grid2D(2.0, 80), PotentialSpec{}, {1.0, 0.0})), InvalidArgument);
}

TEST_CASE("iteration cap raises ConvergenceError") {
    const DiscreteOperator op = assemble_operator(Grid2D(4.0, 48), radial_bump(1.0, 1.0), {8.0, 1.0});
    SolverOptions o = opts(4, 1e-14);
    o.max_iterations = 1;
    o.guard_vectors = 0;
    CHECK_THROWS_AS(solve_lowest(op, o), ConvergenceError);
}
