#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "magtunnel/error.hpp"
#include "magtunnel/field_operator.hpp"
#include "magtunnel/spectral.hpp"

using namespace magtunnel;

namespace {

Eigen::VectorXd random_gauge(int dim, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
    Eigen::VectorXd chi(dim);
    for (auto& c : chi) c = u(rng);
    return chi;
}

double max_rel_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double worst = 0;
    for (int i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
    return worst;
}

}  // namespace

TEST_CASE("stencil entries follow the Peierls rule") {
    const Grid2D g(3.0, 20);
    const MagneticParams p{5.0, 0.7};
    const PotentialSpec v = radial_bump(1.0, 1.0);
    const DiscreteOperator op = assemble_operator(g, v, p);
    const double h = g.spacing();
    const double B2 = 0.5 * p.lambda * p.b;
    for (int j = 0; j < g.ny(); ++j) {
        for (int i = 0; i < g.nx(); ++i) {
            const int k = g.index(i, j);
            const Point x = g.point(k);
            CHECK(op.entry(k, k).real() == doctest::Approx(4 / (h * h) + 25.0 * v(x)).epsilon(1e-14));
            CHECK(op.entry(k, k).imag() == 0.0);
            if (i + 1 < g.nx()) {
                // A(mid) . (h, 0) with A = (B/2)(x2, -x1): only x2 enters.
                const double theta = B2 * x.x2 * h;
                const Complex e = op.entry(k, g.index(i + 1, j));
                CHECK(std::abs(e - (-std::exp(Complex(0, -theta)) / (h * h))) < 1e-12 / (h * h));
            }
            if (j + 1 < g.ny()) {
                const double theta = -B2 * x.x1 * h;
                const Complex e = op.entry(k, g.index(i, j + 1));
                CHECK(std::abs(e - (-std::exp(Complex(0, -theta)) / (h * h))) < 1e-12 / (h * h));
            }
        }
    }
    CHECK(op.matrix().nonZeros() == 5 * 400 - 4 * 20);
    CHECK(op.row_sum_norm() == doctest::Approx(8 / (h * h)).epsilon(1e-12));
}

TEST_CASE("link phase is antisymmetric bit for bit") {
    const MagneticParams p{8.0, 1.0};
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-4, 4);
    for (int t = 0; t < 200; ++t) {
        const Point a{u(rng), u(rng)}, b{u(rng), u(rng)};
        CHECK(link_phase(a, b, p) == -link_phase(b, a, p));
    }
}

TEST_CASE("operator is exactly Hermitian") {
    for (auto p : {MagneticParams{8, 1}, MagneticParams{3, 0.25}, MagneticParams{6, 0.0}}) {
        const DiscreteOperator op = assemble_operator(Grid2D(4.0, 64), radial_bump(1.0, 1.0, {0.3, 0.2}), p);
        CHECK(hermiticity_defect(op.matrix()) == 0.0);
    }
}

TEST_CASE("plaquette flux is constant") {
    const Grid2D g(4.0, 48);
    const MagneticParams p{8.0, 1.0};
    const DiscreteOperator op = assemble_operator(g, radial_bump(1.0, 1.0), p);
    const double expected = p.field() * g.spacing() * g.spacing();
    double worst = 0;
    for (int j = 0; j + 1 < g.ny(); ++j)
        for (int i = 0; i + 1 < g.nx(); ++i) worst = std::max(worst, std::abs(plaquette_flux(op, i, j) - expected));
    CHECK(worst <= 1e-12);

    // Gauge transforms leave every loop product alone.
    const DiscreteOperator gop = gauge_transform(op, random_gauge(g.size(), 9));
    for (int j = 0; j + 1 < g.ny(); j += 5)
        for (int i = 0; i + 1 < g.nx(); i += 5) CHECK(std::abs(plaquette_flux(gop, i, j) - expected) <= 1e-12);
    CHECK_THROWS_AS(plaquette_flux(op, g.nx() - 1, 0), InvalidArgument);
}

TEST_CASE("zero field, zero potential: discrete Dirichlet Laplacian") {
    const int n = 24;
    const Grid2D g(2.0, n);
    const DiscreteOperator op = assemble_operator(g, PotentialSpec{}, {4.0, 0.0});
    const Eigen::VectorXd ev = dense_oracle(op);
    const double h = g.spacing();
    std::vector<double> exact;
    for (int a = 1; a <= n; ++a) {
        for (int c = 1; c <= n; ++c) {
            const double sa = std::sin(a * std::numbers::pi / (2.0 * (n + 1)));
            const double sc = std::sin(c * std::numbers::pi / (2.0 * (n + 1)));
            exact.push_back(4.0 / (h * h) * (sa * sa + sc * sc));
        }
    }
    std::sort(exact.begin(), exact.end());
    REQUIRE(ev.size() == static_cast<int>(exact.size()));
    CHECK(max_rel_diff(ev, Eigen::Map<Eigen::VectorXd>(exact.data(), exact.size())) < 1e-11);
}

TEST_CASE("zero field operator is real symmetric") {
    const DiscreteOperator op = assemble_operator(Grid2D(3.0, 32), radial_bump(1.0, 1.0), {7.0, 0.0});
    for (int c = 0; c < op.matrix().outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(op.matrix(), c); it; ++it) CHECK(it.value().imag() == 0.0);
}

TEST_CASE("gauge transform conjugates entries and keeps the spectrum") {
    const Grid2D g(4.0, 28);
    const DiscreteOperator op = assemble_operator(g, radial_bump(1.0, 1.0, {1.0, 0.0}), {8.0, 1.0});
    for (unsigned seed : {1u, 2u, 3u}) {
        const Eigen::VectorXd chi = random_gauge(g.size(), seed);
        const DiscreteOperator gop = gauge_transform(op, chi);
        CHECK(hermiticity_defect(gop.matrix()) == 0.0);
        for (int k = 0; k + 1 < g.size(); k += 13) {
            const Complex expected = std::exp(Complex(0, -chi[k])) * op.entry(k, k + 1) * std::exp(Complex(0, chi[k + 1]));
            CHECK(std::abs(gop.entry(k, k + 1) - expected) <= 1e-12 * std::abs(expected));
        }
        CHECK(max_rel_diff(dense_oracle(gop), dense_oracle(op)) < 1e-9);
    }
    CHECK_THROWS_AS(gauge_transform(op, Eigen::VectorXd::Zero(5)), InvalidArgument);
}

TEST_CASE("apply_operator agrees with the sparse product") {
    const DiscreteOperator op = assemble_operator(Grid2D(3.0, 20), radial_bump(1.0, 1.0), {8.0, 1.0});
    ComplexVector psi = ComplexVector::Random(op.dimension());
    const ComplexVector y = apply_operator(op, psi);
    // Row-by-row oracle from the entries.
    for (int k = 0; k < op.dimension(); k += 17) {
        Complex acc = 0;
        for (int m = 0; m < op.dimension(); ++m) acc += op.entry(k, m) * psi[m];
        CHECK(std::abs(y[k] - acc) < 1e-9);
    }
    CHECK_THROWS_AS(apply_operator(op, ComplexVector::Zero(3)), InvalidArgument);
}

TEST_CASE("edge warning and metadata") {
    const Grid2D g(1.2, 32);
    const DiscreteOperator close = assemble_operator(g, radial_bump(1.5, 1.0), {8.0, 1.0});
    CHECK(close.warnings().size() == 1);
    const DiscreteOperator inside = assemble_operator(g, radial_bump(0.5, 1.0), {8.0, 1.0});
    CHECK(inside.warnings().empty());
    const auto m = inside.metadata();
    CHECK(m["n"] == 32);
    CHECK(m["boundary"] == "dirichlet");
    CHECK(m["dimension"] == 1024);
    CHECK(m["potential_hash"].get<std::string>().size() == 16);
}

TEST_CASE("invalid magnetic parameters") {
    CHECK_THROWS_AS(assemble_operator(Grid2D(2.0, 16), PotentialSpec{}, {0.0, 1.0}), InvalidArgument);
    CHECK_THROWS_AS(assemble_operator(Grid2D(2.0, 16), PotentialSpec{}, {-1.0, 1.0}), InvalidArgument);
}

TEST_CASE("triplet dump is sorted and deterministic") {
    const DiscreteOperator op = assemble_operator(Grid2D(2.0, 16), radial_bump(1.0, 1.0), {8.0, 1.0});
    std::ostringstream a, b;
    write_triplets(a, op);
    write_triplets(b, assemble_operator(Grid2D(2.0, 16), radial_bump(1.0, 1.0), {8.0, 1.0}));
    CHECK(a.str() == b.str());
    std::istringstream in(a.str());
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("# {", 0) == 0);
    int prev_r = -1, prev_c = -1, count = 0;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        int r, c;
        double re, im;
        ls >> r >> c >> re >> im;
        CHECK(std::pair(r, c) > std::pair(prev_r, prev_c));
        CHECK(std::abs(Complex(re, im) - op.entry(r, c)) == 0.0);
        prev_r = r;
        prev_c = c;
        ++count;
    }
    CHECK(count == op.matrix().nonZeros());
}
