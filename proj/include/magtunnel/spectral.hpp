#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "magtunnel/field_operator.hpp"

namespace magtunnel {

struct SolverOptions {
    int k = 1;
    /// Residual tolerance relative to the row-sum norm of H.
    double tol = 1e-10;
    /// Shift for the shift-invert iteration; must lie below the target eigenvalues.
    /// Defaults to a Gershgorin lower bound refined once the Ritz values settle.
    std::optional<double> shift;
    std::uint64_t seed = 0;
    int max_iterations = 400;
    /// Extra block vectors beyond k; they set the convergence rate.
    int guard_vectors = 4;
};

struct SolverInfo {
    int iterations = 0;
    double shift = 0;
    /// Absolute residual tolerance used (tol * row-sum norm).
    double tolerance = 0;
    double operator_norm = 0;
};

/// Lowest eigenpairs. Vectors are unit in the grid inner product h^2 sum conj(u) v.
struct SpectralResult {
    std::vector<double> eigenvalues;
    std::vector<ComplexVector> eigenvectors;
    std::vector<double> residuals;
    /// A posteriori eigenvalue error bounds: r^2/gap plus a rounding term.
    std::vector<double> eigenvalue_errors;
    SolverInfo info;
    double cell_area = 1.0;
    /// Ritz values of the guard vectors; uncertified upper estimates of the next eigenvalues.
    std::vector<double> ritz_tail;

    int size() const { return static_cast<int>(eigenvalues.size()); }
    /// Largest eigenvalue error bound among the returned pairs.
    double eigenvalue_uncertainty() const;
    nlohmann::json summary() const;
};

SpectralResult solve_lowest(const DiscreteOperator& op, const SolverOptions& options);
/// Same solver on a bare Hermitian matrix; vectors are returned l2-unit (cell_area = 1).
SpectralResult solve_lowest(const SparseMatrix& h, const SolverOptions& options);

constexpr int kDenseOracleMaxDimension = 4096;

/// All eigenvalues by dense Hermitian diagonalization, ascending.
Eigen::VectorXd dense_oracle(const DiscreteOperator& op);
Eigen::VectorXd dense_oracle(const SparseMatrix& h);

enum class Parity { even, odd, degenerate };

const char* to_string(Parity p);

struct ParitySplit {
    double e_even = 0;
    double e_odd = 0;
    Parity ground_parity = Parity::degenerate;
    ComplexVector even_vector;
    ComplexVector odd_vector;
    double even_residual = 0;
    double odd_residual = 0;
    /// Combined eigenvalue error bound of the two sector ground energies.
    double uncertainty = 0;

    double signed_gap() const { return e_even - e_odd; }
};

/// Ground energies in the even and odd sectors of the grid inversion x -> -x.
/// Throws SymmetryError if the operator's potential is not inversion symmetric.
ParitySplit parity_split(const DiscreteOperator& op, const SolverOptions& options = {});

struct DecayFit {
    double c_fit = 0;
    double r2_fit = 0;
    int samples = 0;
};

/// Least-squares fit of log|psi| = const - c |x - center|^2 over the annulus
/// r_inner <= |x - center| with at least 3h clearance to the box edge.
DecayFit decay_fit(const ComplexVector& psi, Point center, const Grid2D& grid, double r_inner);

/// E[cluster_size] - E[cluster_size - 1].
double gap_isolation(const SpectralResult& result, int cluster_size);

/// Rotate v so its largest-modulus component is real positive.
void canonicalize_phase(ComplexVector& v);

/// Grid inner product h^2 sum conj(u) v.
Complex grid_inner(const ComplexVector& u, const ComplexVector& v, const Grid2D& grid);

}  // namespace magtunnel
