#include "magtunnel/field_operator.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <tuple>

#include "magtunnel/error.hpp"

namespace magtunnel {

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

}  // namespace

void MagneticParams::validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be positive and finite");
    if (!(b >= 0.0) || !std::isfinite(b)) throw InvalidArgument("b must be nonnegative and finite");
}

double link_phase(Point x, Point xp, const MagneticParams& params) {
    const Point mid = 0.5 * (x + xp);
    const Point dx = xp - x;
    return 0.5 * params.field() * (mid.x2 * dx.x1 - mid.x1 * dx.x2);
}

DiscreteOperator::DiscreteOperator(Grid2D grid, MagneticParams params, SparseMatrix matrix,
                                   Eigen::VectorXd potential, std::uint64_t potential_hash,
                                   std::vector<std::string> warnings)
    : grid_(grid),
      params_(params),
      matrix_(std::move(matrix)),
      potential_(std::move(potential)),
      potential_hash_(potential_hash),
      warnings_(std::move(warnings)) {}

double DiscreteOperator::row_sum_norm() const {
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(matrix_.rows());
    for (int c = 0; c < matrix_.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(matrix_, c); it; ++it) sums[it.row()] += std::abs(it.value());
    }
    return sums.size() ? sums.maxCoeff() : 0.0;
}

nlohmann::json DiscreteOperator::metadata() const {
    return {{"n", grid_.nx()},
            {"half_width", grid_.half_width()},
            {"h", grid_.spacing()},
            {"boundary", "dirichlet"},
            {"lambda", params_.lambda},
            {"b", params_.b},
            {"dimension", dimension()},
            {"nonzeros", matrix_.nonZeros()},
            {"potential_hash", hex64(potential_hash_)}};
}

DiscreteOperator assemble_operator(const Grid2D& grid, const PotentialSpec& v, const MagneticParams& params) {
    params.validate();
    const int n = grid.nx();
    const int dim = grid.size();
    const double h = grid.spacing();
    const double inv_h2 = 1.0 / (h * h);
    const double scale = params.lambda * params.lambda;

    Eigen::VectorXd pot(dim);
    std::vector<std::string> warnings;
    bool near_edge = false;
    for (int k = 0; k < dim; ++k) {
        const double val = v(grid.point(k));
        pot[k] = scale * val;
        if (val != 0.0 && grid.distance_to_boundary(k) < 2.0 * h) near_edge = true;
    }
    if (near_edge) warnings.emplace_back("potential is nonzero within 2h of the box edge");

    std::vector<Eigen::Triplet<Complex>> triplets;
    triplets.reserve(static_cast<std::size_t>(dim) * 5);
    auto link = [&](int a, int c) {
        const double theta = link_phase(grid.point(a), grid.point(c), params);
        const Complex e = -std::polar(inv_h2, -theta);
        triplets.emplace_back(a, c, e);
        triplets.emplace_back(c, a, std::conj(e));
    };
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const int k = grid.index(i, j);
            triplets.emplace_back(k, k, Complex(4.0 * inv_h2 + pot[k], 0.0));
            if (i + 1 < n) link(k, grid.index(i + 1, j));
            if (j + 1 < n) link(k, grid.index(i, j + 1));
        }
    }
    SparseMatrix m(dim, dim);
    m.setFromTriplets(triplets.begin(), triplets.end());
    m.makeCompressed();
    return {grid, params, std::move(m), std::move(pot), v.hash(), std::move(warnings)};
}

DiscreteOperator gauge_transform(const DiscreteOperator& op, const Eigen::VectorXd& chi) {
    if (chi.size() != op.dimension()) throw InvalidArgument("gauge function has the wrong length");
    SparseMatrix m = op.matrix();
    // Upper triangle first, then mirror into the lower one so the result stays exactly Hermitian.
    for (int c = 0; c < m.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(m, c); it; ++it) {
            if (it.row() < it.col()) it.valueRef() *= std::polar(1.0, chi[it.col()] - chi[it.row()]);
        }
    }
    for (int c = 0; c < m.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(m, c); it; ++it) {
            if (it.row() > it.col()) it.valueRef() = std::conj(m.coeff(it.col(), it.row()));
        }
    }
    return {op.grid(), op.params(), std::move(m), op.potential(), op.potential_hash(), op.warnings()};
}

ComplexVector apply_operator(const DiscreteOperator& op, const ComplexVector& psi) {
    if (psi.size() != op.dimension()) {
        throw InvalidArgument("vector length " + std::to_string(psi.size()) + " does not match operator dimension " +
                              std::to_string(op.dimension()));
    }
    return op.matrix() * psi;
}

double plaquette_flux(const DiscreteOperator& op, int i, int j) {
    const Grid2D& g = op.grid();
    if (i < 0 || j < 0 || i + 1 >= g.nx() || j + 1 >= g.ny()) throw InvalidArgument("plaquette out of range");
    const int a = g.index(i, j);
    const int b = g.index(i + 1, j);
    const int c = g.index(i + 1, j + 1);
    const int d = g.index(i, j + 1);
    const Complex loop = op.entry(a, b) * op.entry(b, c) * op.entry(c, d) * op.entry(d, a);
    return std::arg(loop);
}

double hermiticity_defect(const SparseMatrix& m) {
    double worst = 0.0;
    for (int c = 0; c < m.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(m, c); it; ++it) {
            worst = std::max(worst, std::abs(it.value() - std::conj(m.coeff(it.col(), it.row()))));
        }
    }
    return worst;
}

void write_triplets(std::ostream& out, const DiscreteOperator& op) {
    std::vector<std::tuple<int, int, Complex>> entries;
    const SparseMatrix& m = op.matrix();
    entries.reserve(static_cast<std::size_t>(m.nonZeros()));
    for (int c = 0; c < m.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(m, c); it; ++it) entries.emplace_back(it.row(), it.col(), it.value());
    }
    std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) {
        return std::tie(std::get<0>(x), std::get<1>(x)) < std::tie(std::get<0>(y), std::get<1>(y));
    });
    out << "# " << op.metadata().dump() << '\n';
    char buf[96];
    for (const auto& [r, c, v] : entries) {
        std::snprintf(buf, sizeof buf, "%d %d %.17g %.17g\n", r, c, v.real(), v.imag());
        out << buf;
    }
}

}  // namespace magtunnel
