#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "magtunnel/field_operator.hpp"
#include "magtunnel/spectral.hpp"

namespace magtunnel {

enum class Side { left, right };

/// A one-well state moved to one of the two well positions (+-d1, 0).
struct TranslatedState {
    ComplexVector values;
    std::string source;
    /// Signed horizontal shift: -d1 for the left copy, +d1 for the right one.
    double displacement = 0;
    MagneticParams params;
    bool interpolated = false;
    /// 1 - ||translated|| / ||source|| (grid norm).
    double norm_loss = 0;
};

/// phi^L(x) = exp(+i lambda b d1 x2 / 2) phi(x + d),  phi^R(x) = exp(-i lambda b d1 x2 / 2) phi(x - d).
///
/// d1 must be a whole number of grid steps unless interpolate is set, in which
/// case phi is linearly interpolated along x1. Throws InvalidArgument when more
/// than 1e-8 of the norm is pushed out of the box.
TranslatedState magnetic_translate(const ComplexVector& phi, Side side, double d1, const MagneticParams& params,
                                   const Grid2D& grid, bool interpolate = false, std::string source = "phi");

/// rho = h^2 sum conj(phi^L) lambda^2 v^R phi^R over the support of v^R.
/// v_right is the displaced right well in unscaled units.
Complex compute_rho(const TranslatedState& phi_left, const TranslatedState& phi_right, const PotentialSpec& v_right,
                    const Grid2D& grid, const MagneticParams& params);

struct Splitting {
    double delta = 0;
    double e0 = 0;
    double e1 = 0;
    double e2 = 0;
    double uncertainty = 0;
    double gap_isolation = 0;
    bool below_floor = false;
    SpectralResult spectrum;
};

/// Resolution floor for splittings and hoppings, as a multiple of the eigenvalue uncertainty.
constexpr double kFloorFactor = 100.0;

/// Delta = E1 - E0 from the three lowest eigenvalues. Throws Error if E2 - E1 does not exceed E1 - E0.
Splitting compute_splitting(const DiscreteOperator& op, const SolverOptions& options = {});

/// Lowest eigenpair of a one-well operator with its phase fixed so that
/// sum(-v * phi) is real and positive (continuous in the well parameters).
struct OneWellState {
    double energy = 0;
    double gap = 0;
    double residual = 0;
    double uncertainty = 0;
    ComplexVector phi;
};

OneWellState solve_one_well(const PotentialSpec& well, const Grid2D& grid, const MagneticParams& params,
                            const SolverOptions& options = {});

struct HoppingOptions {
    SolverOptions solver;
    /// Three lowest eigenvalues of the two-well operator (Delta, gap isolation, principal angles).
    bool full_solve = true;
    /// Even/odd sector solves; only done for inversion-symmetric configurations.
    bool parity_solve = true;
    bool interpolate = false;
};

struct HoppingReport {
    MagneticParams params;
    double d1 = 0;
    Complex rho;
    double e_lambda = 0;
    double one_well_gap = 0;
    double one_well_uncertainty = 0;

    // Present when the two-well problem was solved.
    std::optional<double> delta;
    std::optional<double> e0;
    std::optional<double> e1;
    std::optional<double> gap_isolation;
    std::optional<double> splitting_uncertainty;

    // Present for inversion-symmetric configurations.
    std::optional<double> e_even;
    std::optional<double> e_odd;
    std::optional<Parity> ground_parity;
    std::optional<double> parity_uncertainty;

    double im_rho_over_abs_rho = 0;
    bool rho_below_floor = false;
    bool delta_below_floor = false;
    /// Largest principal angle between span{phi^L, phi^R} and the two lowest eigenvectors.
    std::optional<double> principal_angle;
    /// |E_even - E_odd - 2 rho| / |2 rho|.
    std::optional<double> two_level_error;
    std::vector<std::string> warnings;

    /// Delta / (2 |rho|).
    double ratio() const;
    bool floor_flag() const { return rho_below_floor || delta_below_floor; }
    nlohmann::json to_json() const;
};

constexpr double kImRhoFloor = 1e-200;

HoppingReport analyze_double_well(const DoubleWellConfig& cfg, const Grid2D& grid, const MagneticParams& params,
                                  const HoppingOptions& options = {});

/// Per-lambda reports for a radial configuration; lambdas must be ascending.
std::vector<HoppingReport> theorem1_ratio(const DoubleWellConfig& cfg, const std::vector<double>& lambdas,
                                          const MagneticParams& params_template, const Grid2D& grid,
                                          const HoppingOptions& options = {});

/// Column header and one row per report: lambda,b,d1,Re_rho,Im_rho,delta,E_even,E_odd,ratio,gap_isolation,floor_flag
void write_hopping_csv(std::ostream& out, const std::vector<HoppingReport>& rows);

/// Grid sized so that d1 is a whole number of steps and the box reaches
/// 2 d1 + reach + margin (the translated states sample phi that far out).
Grid2D aligned_grid(double d1, double reach, double margin, int n);

}  // namespace magtunnel
