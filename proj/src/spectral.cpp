#include "magtunnel/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "magtunnel/error.hpp"

namespace magtunnel {

namespace {

using DenseMatrix = Eigen::MatrixXcd;
using Factor = Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower>;

constexpr double kEps = std::numeric_limits<double>::epsilon();

double row_sum_norm(const SparseMatrix& h) {
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(h.rows());
    for (int c = 0; c < h.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(h, c); it; ++it) sums[it.row()] += std::abs(it.value());
    }
    return sums.size() ? sums.maxCoeff() : 0.0;
}

double gershgorin_lower(const SparseMatrix& h) {
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(h.rows());
    Eigen::VectorXd off = Eigen::VectorXd::Zero(h.rows());
    for (int c = 0; c < h.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(h, c); it; ++it) {
            if (it.row() == it.col()) {
                diag[it.row()] = it.value().real();
            } else {
                off[it.row()] += std::abs(it.value());
            }
        }
    }
    return (diag - off).minCoeff();
}

SparseMatrix shifted(const SparseMatrix& h, double sigma) {
    SparseMatrix id(h.rows(), h.cols());
    id.setIdentity();
    return h - Complex(sigma, 0.0) * id;
}

// Factor H - sigma; succeeds only if every pivot is positive, i.e. sigma lies below the spectrum.
// The ordering depends only on the pattern, so it is computed once per slot.
bool factor_below(Factor& f, bool& analyzed, const SparseMatrix& h, double sigma) {
    const SparseMatrix a = shifted(h, sigma);
    if (!analyzed) {
        f.analyzePattern(a);
        analyzed = true;
    }
    f.factorize(a);
    if (f.info() != Eigen::Success) return false;
    const auto& d = f.vectorD();
    for (int i = 0; i < d.size(); ++i) {
        if (!(std::real(d[i]) > 0.0)) return false;
    }
    return true;
}

DenseMatrix random_block(int n, int p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    DenseMatrix x(n, p);
    for (int j = 0; j < p; ++j) {
        for (int i = 0; i < n; ++i) {
            const double re = normal(rng);
            const double im = normal(rng);
            x(i, j) = Complex(re, im);
        }
    }
    return x;
}

DenseMatrix orthonormalize(const DenseMatrix& y) {
    Eigen::HouseholderQR<DenseMatrix> qr(y);
    return qr.householderQ() * DenseMatrix::Identity(y.rows(), y.cols());
}

struct Ritz {
    Eigen::VectorXd theta;
    DenseMatrix x;
    Eigen::VectorXd residual;
};

Ritz rayleigh_ritz(const SparseMatrix& h, const DenseMatrix& q) {
    const DenseMatrix hq = h * q;
    DenseMatrix small = q.adjoint() * hq;
    small = 0.5 * (small + small.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(small);
    Ritz out;
    out.theta = es.eigenvalues();
    out.x = q * es.eigenvectors();
    const DenseMatrix r = hq * es.eigenvectors() - out.x * out.theta.asDiagonal();
    out.residual = r.colwise().norm().transpose();
    return out;
}

// Quadratic residual bound ||R_C||^2 / gap for the cluster C of Ritz values containing i.
// Values closer than their residuals are lumped together; the gap is measured to the rest.
double eigenvalue_bound(const Ritz& ritz, int i, double norm) {
    const auto p = static_cast<int>(ritz.theta.size());
    int lo = i;
    int hi = i;
    auto joined = [&](int a, int b) {
        return ritz.theta[b] - ritz.theta[a] <= 10.0 * (ritz.residual[a] + ritz.residual[b]);
    };
    while (lo > 0 && joined(lo - 1, lo)) --lo;
    while (hi + 1 < p && joined(hi, hi + 1)) ++hi;
    double r2 = 0.0;
    for (int j = lo; j <= hi; ++j) r2 += ritz.residual[j] * ritz.residual[j];
    // Nothing is known about the spectrum beyond the last Ritz value.
    double gap = hi + 1 < p ? std::numeric_limits<double>::infinity() : 0.0;
    if (lo > 0) gap = std::min(gap, ritz.theta[lo] - ritz.theta[lo - 1] - ritz.residual[lo - 1]);
    if (hi + 1 < p) gap = std::min(gap, ritz.theta[hi + 1] - ritz.theta[hi] - ritz.residual[hi + 1]);
    const double r = std::sqrt(r2);
    const double quad = gap > 0.0 ? r2 / gap : r;
    // Single-value bound: a badly converged neighbour should not inflate a converged value.
    const double ri = ritz.residual[i];
    double gi = i + 1 < p ? std::numeric_limits<double>::infinity() : 0.0;
    if (i > 0) gi = std::min(gi, ritz.theta[i] - ritz.theta[i - 1] - ritz.residual[i - 1]);
    if (i + 1 < p) gi = std::min(gi, ritz.theta[i + 1] - ritz.theta[i] - ritz.residual[i + 1]);
    const double single = gi > 0.0 ? std::min(ri, ri * ri / gi) : ri;
    return std::min({r, quad, single}) + 4.0 * kEps * norm;
}

SpectralResult solve_impl(const SparseMatrix& h, const SolverOptions& options) {
    const int n = static_cast<int>(h.rows());
    if (h.rows() != h.cols()) throw InvalidArgument("operator must be square");
    if (options.k < 1) throw InvalidArgument("k must be at least 1");
    if (options.k > n) {
        throw InvalidArgument("k = " + std::to_string(options.k) + " exceeds the dimension " + std::to_string(n));
    }
    if (!(options.tol > 0.0)) throw InvalidArgument("tol must be positive");
    if (options.guard_vectors < 0 || options.max_iterations < 1) throw InvalidArgument("bad solver limits");

    const int k = options.k;
    const int p = std::min(n, k + options.guard_vectors);
    const double norm = row_sum_norm(h);
    const double tol_abs = options.tol * std::max(norm, 1.0);

    // Two factor slots so an accepted trial shift does not need refactoring.
    Factor slots[2];
    bool analyzed[2] = {false, false};
    int cur = 0;
    double sigma = 0.0;
    if (options.shift) {
        sigma = *options.shift;
        if (!factor_below(slots[cur], analyzed[cur], h, sigma)) {
            throw InvalidArgument("shift " + std::to_string(sigma) + " is not below the spectrum");
        }
    } else {
        sigma = gershgorin_lower(h) - 1e-3 * std::max(norm, 1.0);
        if (!factor_below(slots[cur], analyzed[cur], h, sigma)) throw Error("factorization failed below the Gershgorin bound");
    }

    DenseMatrix q = orthonormalize(random_block(n, p, options.seed));
    Ritz ritz = rayleigh_ritz(h, q);
    Eigen::VectorXd best = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::infinity());
    // Shift updates: pull sigma up under the lowest Ritz value a few times; inertia decides if it is still below.
    int refinements = options.shift ? 3 : 0;
    int it = 0;
    for (; it < options.max_iterations; ++it) {
        const bool done = (ritz.residual.head(k).array() <= tol_abs).all();
        best = best.cwiseMin(ritz.residual.head(k));
        if (done) break;

        if (refinements < 3 && it == 3 + 5 * refinements) {
            ++refinements;
            const double spread = ritz.theta[std::min(k, p - 1)] - ritz.theta[0];
            double step = std::max({0.05 * spread, 1.1 * ritz.residual[0], 1e-8 * std::max(norm, 1.0)});
            while (ritz.theta[0] - step > sigma) {
                if (factor_below(slots[1 - cur], analyzed[1 - cur], h, ritz.theta[0] - step)) {
                    sigma = ritz.theta[0] - step;
                    cur = 1 - cur;
                    break;
                }
                step *= 4.0;
            }
        }

        DenseMatrix y(n, p);
        for (int j = 0; j < p; ++j) y.col(j) = slots[cur].solve(ritz.x.col(j));
        q = orthonormalize(y);
        ritz = rayleigh_ritz(h, q);
    }
    if (it == options.max_iterations && !(ritz.residual.head(k).array() <= tol_abs).all()) {
        best = best.cwiseMin(ritz.residual.head(k));
        throw ConvergenceError("eigensolver did not converge in " + std::to_string(options.max_iterations) +
                                   " iterations",
                               std::vector<double>(best.data(), best.data() + best.size()));
    }

    SpectralResult out;
    out.info = {it, sigma, tol_abs, norm};
    for (int i = k; i < p; ++i) out.ritz_tail.push_back(ritz.theta[i]);
    for (int i = 0; i < k; ++i) {
        ComplexVector v = ritz.x.col(i);
        canonicalize_phase(v);
        out.eigenvalues.push_back(ritz.theta[i]);
        out.eigenvectors.push_back(std::move(v));
        out.residuals.push_back(ritz.residual[i]);
        out.eigenvalue_errors.push_back(eigenvalue_bound(ritz, i, norm));
    }
    return out;
}

}  // namespace

double SpectralResult::eigenvalue_uncertainty() const {
    double m = 0.0;
    for (double e : eigenvalue_errors) m = std::max(m, e);
    return m;
}

nlohmann::json SpectralResult::summary() const {
    return {{"eigenvalues", eigenvalues},
            {"residuals", residuals},
            {"eigenvalue_errors", eigenvalue_errors},
            {"iterations", info.iterations},
            {"shift", info.shift},
            {"tolerance", info.tolerance},
            {"operator_norm", info.operator_norm}};
}

SpectralResult solve_lowest(const SparseMatrix& h, const SolverOptions& options) { return solve_impl(h, options); }

SpectralResult solve_lowest(const DiscreteOperator& op, const SolverOptions& options) {
    SpectralResult out = solve_impl(op.matrix(), options);
    const double h = op.grid().spacing();
    for (auto& v : out.eigenvectors) v /= h;
    out.cell_area = op.grid().cell_area();
    return out;
}

Eigen::VectorXd dense_oracle(const SparseMatrix& h) {
    if (h.rows() > kDenseOracleMaxDimension) {
        throw InvalidArgument("dense oracle limited to dimension " + std::to_string(kDenseOracleMaxDimension) +
                              ", got " + std::to_string(h.rows()));
    }
    const DenseMatrix dense(h);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(dense, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

Eigen::VectorXd dense_oracle(const DiscreteOperator& op) { return dense_oracle(op.matrix()); }

const char* to_string(Parity p) {
    switch (p) {
        case Parity::even: return "even";
        case Parity::odd: return "odd";
        case Parity::degenerate: return "degenerate";
    }
    return "degenerate";
}

namespace {

// Sector basis: one vector per inversion orbit {r, P r}; coefficient of e_j is coef[j].
struct Sector {
    std::vector<int> slot;     // orbit slot of grid index j, -1 if j has no component
    std::vector<double> coef;  // coefficient of e_j in its basis vector
    int dim = 0;
};

Sector make_sector(int n, bool even) {
    Sector s;
    s.slot.assign(static_cast<std::size_t>(n), -1);
    s.coef.assign(static_cast<std::size_t>(n), 0.0);
    const double c = 1.0 / std::sqrt(2.0);
    for (int j = 0; j < n; ++j) {
        const int pj = n - 1 - j;
        if (j < pj) {
            s.slot[j] = s.slot[pj] = s.dim++;
            s.coef[j] = c;
            s.coef[pj] = even ? c : -c;
        } else if (j == pj && even) {
            s.slot[j] = s.dim++;
            s.coef[j] = 1.0;
        }
    }
    return s;
}

SparseMatrix restrict_to(const SparseMatrix& h, const Sector& s) {
    std::vector<Eigen::Triplet<Complex>> t;
    t.reserve(static_cast<std::size_t>(h.nonZeros()));
    for (int c = 0; c < h.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(h, c); it; ++it) {
            const auto r = static_cast<std::size_t>(it.row());
            const auto col = static_cast<std::size_t>(it.col());
            if (s.slot[r] < 0 || s.slot[col] < 0) continue;
            t.emplace_back(s.slot[r], s.slot[col], s.coef[r] * it.value() * s.coef[col]);
        }
    }
    SparseMatrix m(s.dim, s.dim);
    m.setFromTriplets(t.begin(), t.end());
    SparseMatrix herm = SparseMatrix(m.adjoint());
    m = (0.5 * (m + herm)).eval();
    m.makeCompressed();
    return m;
}

ComplexVector lift(const ComplexVector& x, const Sector& s) {
    ComplexVector out = ComplexVector::Zero(static_cast<Eigen::Index>(s.slot.size()));
    for (std::size_t j = 0; j < s.slot.size(); ++j) {
        if (s.slot[j] >= 0) out[static_cast<Eigen::Index>(j)] = s.coef[j] * x[s.slot[j]];
    }
    return out;
}

}  // namespace

ParitySplit parity_split(const DiscreteOperator& op, const SolverOptions& options) {
    const auto& pot = op.potential();
    const int n = op.dimension();
    const double lam2 = op.params().lambda * op.params().lambda;
    const double tol = 1e-14 * std::max(1.0, lam2);
    for (int j = 0; j < n; ++j) {
        if (std::abs(pot[j] - pot[n - 1 - j]) > tol) {
            throw SymmetryError("potential is not inversion symmetric; parity does not commute with the operator");
        }
    }

    SolverOptions sector_opts = options;
    sector_opts.k = 1;
    const double h = op.grid().spacing();
    ParitySplit out;
    const Sector even = make_sector(n, true);
    const Sector odd = make_sector(n, false);
    const auto re = solve_lowest(restrict_to(op.matrix(), even), sector_opts);
    const auto ro = solve_lowest(restrict_to(op.matrix(), odd), sector_opts);
    out.e_even = re.eigenvalues[0];
    out.e_odd = ro.eigenvalues[0];
    out.even_vector = lift(re.eigenvectors[0], even) / h;
    out.odd_vector = lift(ro.eigenvectors[0], odd) / h;
    canonicalize_phase(out.even_vector);
    canonicalize_phase(out.odd_vector);
    out.even_residual = re.residuals[0];
    out.odd_residual = ro.residuals[0];
    out.uncertainty = re.eigenvalue_errors[0] + ro.eigenvalue_errors[0];
    const double gap = out.e_even - out.e_odd;
    if (std::abs(gap) <= out.uncertainty) {
        out.ground_parity = Parity::degenerate;
    } else {
        out.ground_parity = gap < 0.0 ? Parity::even : Parity::odd;
    }
    return out;
}

DecayFit decay_fit(const ComplexVector& psi, Point center, const Grid2D& grid, double r_inner) {
    if (psi.size() != grid.size()) throw InvalidArgument("vector length does not match the grid");
    const double h = grid.spacing();
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    int m = 0;
    for (int k = 0; k < grid.size(); ++k) {
        const double r2 = (grid.point(k) - center).norm2();
        if (r2 < r_inner * r_inner || grid.distance_to_boundary(k) < 3.0 * h) continue;
        const double a = std::abs(psi[k]);
        if (!(a > 1e-140)) continue;
        const double y = std::log(a);
        sx += r2;
        sy += y;
        sxx += r2 * r2;
        sxy += r2 * y;
        syy += y * y;
        ++m;
    }
    if (m < 3) throw InvalidArgument("decay-fit annulus is empty");
    const double vx = sxx - sx * sx / m;
    const double vy = syy - sy * sy / m;
    const double cxy = sxy - sx * sy / m;
    if (!(vx > 0.0)) throw InvalidArgument("decay-fit annulus has no radial spread");
    DecayFit out;
    out.c_fit = -cxy / vx;
    out.r2_fit = vy > 0.0 ? cxy * cxy / (vx * vy) : 1.0;
    out.samples = m;
    return out;
}

double gap_isolation(const SpectralResult& result, int cluster_size) {
    if (cluster_size < 1 || result.size() < cluster_size + 1) {
        throw InvalidArgument("gap isolation needs at least cluster_size + 1 eigenvalues");
    }
    return result.eigenvalues[static_cast<std::size_t>(cluster_size)] -
           result.eigenvalues[static_cast<std::size_t>(cluster_size - 1)];
}

void canonicalize_phase(ComplexVector& v) {
    if (v.size() == 0) return;
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    const double a = std::abs(v[imax]);
    if (a == 0.0) return;
    v *= std::conj(v[imax]) / a;
}

Complex grid_inner(const ComplexVector& u, const ComplexVector& v, const Grid2D& grid) {
    if (u.size() != v.size() || u.size() != grid.size()) throw InvalidArgument("vector length does not match the grid");
    return grid.cell_area() * u.dot(v);
}

}  // namespace magtunnel
