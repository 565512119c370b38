#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <json.hpp>

#include "magtunnel/grid.hpp"
#include "magtunnel/potential.hpp"

namespace magtunnel {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using SparseMatrix = Eigen::SparseMatrix<Complex>;

struct MagneticParams {
    double lambda = 8.0;
    double b = 1.0;

    /// Constant field strength B = lambda * b.
    double field() const { return lambda * b; }
    void validate() const;

    friend bool operator==(const MagneticParams&, const MagneticParams&) = default;
};

/// Symmetric-gauge link phase: A((x+x')/2) . (x' - x) with A(x) = (lambda b / 2)(x2, -x1).
/// Antisymmetric in its two arguments bit-for-bit.
double link_phase(Point x, Point xp, const MagneticParams& params);

/// Sparse Hermitian discretization of (P + A)^2 + lambda^2 v on a Dirichlet box.
///
/// Five-point Peierls stencil: diagonal 4/h^2 + lambda^2 v(x_j), off-diagonal
/// entry(j,k) = -exp(-i link_phase(x_j, x_k)) / h^2 for nearest neighbours. The
/// lower triangle is written as the exact conjugate of the upper one.
class DiscreteOperator {
public:
    DiscreteOperator(Grid2D grid, MagneticParams params, SparseMatrix matrix, Eigen::VectorXd potential,
                     std::uint64_t potential_hash, std::vector<std::string> warnings = {});

    const Grid2D& grid() const { return grid_; }
    const MagneticParams& params() const { return params_; }
    const SparseMatrix& matrix() const { return matrix_; }
    /// lambda^2 v sampled on the grid (the potential part of the diagonal).
    const Eigen::VectorXd& potential() const { return potential_; }
    std::uint64_t potential_hash() const { return potential_hash_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    int dimension() const { return static_cast<int>(matrix_.rows()); }
    Complex entry(int j, int k) const { return matrix_.coeff(j, k); }
    /// Max absolute row sum (infinity norm).
    double row_sum_norm() const;

    nlohmann::json metadata() const;

private:
    Grid2D grid_;
    MagneticParams params_;
    SparseMatrix matrix_;
    Eigen::VectorXd potential_;
    std::uint64_t potential_hash_;
    std::vector<std::string> warnings_;
};

/// Assemble the operator. Adds a warning when v is nonzero within 2h of the box edge.
DiscreteOperator assemble_operator(const Grid2D& grid, const PotentialSpec& v, const MagneticParams& params);

/// U* H U with U = diag(exp(i chi)).
DiscreteOperator gauge_transform(const DiscreteOperator& op, const Eigen::VectorXd& chi);

/// y = H psi.
ComplexVector apply_operator(const DiscreteOperator& op, const ComplexVector& psi);

/// Phase of the product of hopping entries around the plaquette with lower-left
/// corner (i, j), traversed counter-clockwise. Equals lambda b h^2 for this stencil.
double plaquette_flux(const DiscreteOperator& op, int i, int j);

/// Largest |entry(j,k) - conj(entry(k,j))| over all stored entries.
double hermiticity_defect(const SparseMatrix& m);

/// Sorted (row, col, re, im) lines preceded by a "# {json}" metadata line.
void write_triplets(std::ostream& out, const DiscreteOperator& op);

}  // namespace magtunnel
