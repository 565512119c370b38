#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "magtunnel/hopping.hpp"

namespace magtunnel {

/// |T(mu, nu)| estimates between the centers of the left and right dressed wells.
/// Index 0 is the planet, 1.. the sophons in layout order.
struct InteractionTable {
    std::vector<Point> left_centers;
    std::vector<Point> right_centers;
    /// exponent(mu, nu) = -(lambda b / 4) |x_mu^L - x_nu^R|^2
    std::vector<std::vector<double>> exponent;
    /// 1 for planet-planet, |tau| for one sophon index, tau^2 for two.
    std::vector<std::vector<double>> prefactor;

    double magnitude(int mu, int nu) const;
    /// Entry with the largest magnitude.
    std::pair<int, int> dominant() const;
    nlohmann::json to_json() const;
};

InteractionTable predict_interactions(const SophonDressing& left, const SophonDressing& right, double d1,
                                      const MagneticParams& params);

struct AsymptoticPrediction {
    /// min over sophons mu of |x_mu^L - x_0^R|.
    double D = 0;
    double theta_model = 0;
    double rho_pred = 0;
    /// Largest sophon-carrying |T| over |T(0,0)|.
    double dominance_margin = 0;
    bool advisory_only = false;
};

/// rho_pred = tau exp(-lambda b D^2 / 4) cos(lambda b d1 s), s the height of the nearest sophon.
AsymptoticPrediction predict_rho(const SophonDressing& left, const SophonDressing& right, double d1,
                                 const MagneticParams& params, double tau);

enum class SweepParameter { s, dx, tau };

const char* to_string(SweepParameter p);
SweepParameter parse_sweep_parameter(const std::string& name);

/// Inversion-symmetric family: the right well is a planet dressed with four sophons
/// at (+-dx, +-s) (eight with the quarter-turn copies when flat_band is set); the left
/// well is its mirror image.
struct SophonFamily {
    RadialBump planet{{0.0, 0.0}, 1.0, 1.0};
    double d1 = 2.0;
    double dx = 1.4;
    double s = 0.5;
    double r = 0.25;
    double tau = -2.0;
    bool flat_band = false;

    SophonDressing dressing() const;
    DoubleWellConfig config() const;
    /// The undressed planet pair at the same separation.
    DoubleWellConfig bare_config() const;
    SophonFamily with(SweepParameter p, double value) const;
    double get(SweepParameter p) const;

    nlohmann::json to_json() const;
    static SophonFamily from_json(const nlohmann::json& j);
};

/// Non-symmetric family: both wells carry the same dressing, sophons at (+-dx, s1)
/// with amplitude tau_up and (+-dx, -s2) with amplitude tau_down. With s1 != s2 or
/// tau_up != tau_down the double well is not inversion symmetric.
struct AsymmetricFamily {
    RadialBump planet{{0.0, 0.0}, 1.0, 1.0};
    double d1 = 2.0;
    double dx = 1.4;
    double r = 0.25;
    double tau_up = -2.0;
    double tau_down = -1.5;

    SophonDressing dressing(double s1, double s2) const;
    DoubleWellConfig config(double s1, double s2) const;
    DoubleWellConfig bare_config() const;

    nlohmann::json to_json() const;
    static AsymmetricFamily from_json(const nlohmann::json& j);
};

struct TuneSettings {
    MagneticParams params{6.0, 0.25};
    Grid2D grid = aligned_grid(2.0, 1.0, 1.5, 256);
    SolverOptions solver = [] {
        SolverOptions o;
        o.tol = 1e-12;
        return o;
    }();
};

struct SweepRow {
    double value = 0;
    Complex rho;
    double e_even = 0;
    double e_odd = 0;
    double uncertainty = 0;
    Parity parity = Parity::degenerate;
    double rho_pred = 0;
    double theta_model = 0;
    double dominance_margin = 0;
    double im_rho_over_abs_rho = 0;

    double signed_gap() const { return e_even - e_odd; }
    double delta() const { return std::abs(e_even - e_odd); }
};

/// One row per value (sorted ascending): one-well solve, rho, and the two parity solves.
std::vector<SweepRow> sweep(const SophonFamily& family, SweepParameter parameter, const std::vector<double>& values,
                            const TuneSettings& settings);

std::vector<double> linspace(double lo, double hi, int steps);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, SweepParameter parameter);
nlohmann::json sweep_json(const std::vector<SweepRow>& rows, SweepParameter parameter);

struct PredictionAgreement {
    int eligible = 0;
    int agreeing = 0;
    double fraction() const { return eligible ? static_cast<double>(agreeing) / eligible : 0.0; }
};

/// Rows with dominance_margin > min_margin and |cos theta_model| > min_cos, compared by sign.
PredictionAgreement prediction_agreement(const std::vector<SweepRow>& rows, double min_margin = 10.0,
                                         double min_cos = 0.3);

/// Indices i where the tracked E_even - E_odd changes sign between rows i and i + 1.
std::vector<int> sign_change_cells(const std::vector<SweepRow>& rows);

struct TuneResult {
    SweepParameter parameter = SweepParameter::s;
    std::string tracked = "E_even - E_odd";
    double root = 0;
    /// Bracket with opposite signs of the tracked quantity, stored as evidence.
    double bracket_lo = 0;
    double bracket_hi = 0;
    double value_lo = 0;
    double value_hi = 0;
    Parity parity_lo = Parity::degenerate;
    Parity parity_hi = Parity::degenerate;
    /// |tracked| at the root.
    double achieved = 0;
    double baseline = 0;
    int evaluations = 0;
    std::vector<std::array<double, 2>> trace;

    double relative() const { return baseline > 0 ? achieved / baseline : std::numeric_limits<double>::infinity(); }
    nlohmann::json to_json() const;
};

/// Bisection on sign(E_even - E_odd) down to width 1e-4, then regula falsi inside the
/// final bracket until |Delta| <= 1e-3 x the bare splitting.
TuneResult find_zero_splitting(const SophonFamily& family, SweepParameter parameter, double lo, double hi,
                               const TuneSettings& settings, double width = 1e-4);

/// Same sign function, but the bracket must show different ground-state parities.
TuneResult find_parity_transition(const SophonFamily& family, SweepParameter parameter, double lo, double hi,
                                  const TuneSettings& settings, double width = 1e-4);

/// Bisection plus regula falsi on Re rho (real for these symmetric families); achieved and
/// baseline hold |rho| rather than the splitting.
TuneResult find_zero_rho(const SophonFamily& family, SweepParameter parameter, double lo, double hi,
                         const TuneSettings& settings, double width = 1e-4);

/// Splitting of the bare planet pair at the same lambda, b, d1.
double baseline_splitting(const SophonFamily& family, const TuneSettings& settings);

struct AsymmetricRoot {
    double s1 = 0;
    double s2 = 0;
    Complex rho;
    Complex rho_baseline;
    /// Corners of a scan cell where both Re rho and Im rho change sign (if one was found).
    std::optional<std::array<double, 4>> cell;
    std::array<Complex, 4> cell_values{};
    bool inversion_symmetric = true;
    double max_asymmetry = 0;
    std::optional<double> delta;
    int evaluations = 0;
    int newton_steps = 0;
    /// (s1, s2, Re rho, Im rho) per evaluation.
    std::vector<std::array<double, 4>> trace;

    double relative() const { return std::abs(rho) / std::abs(rho_baseline); }
    nlohmann::json to_json() const;
};

struct AsymmetricSearch {
    double s1_lo = 0.3, s1_hi = 0.9;
    double s2_lo = 0.3, s2_hi = 0.9;
    int scan_steps = 5;
    int max_newton = 12;
    double fd_step = 1e-4;
    /// Stop once |rho| <= target x |rho_baseline|.
    double target = 1e-4;
    bool solve_delta = true;
};

/// Coarse scan for a cell where Re rho and Im rho both change sign, then damped Newton
/// on (s1, s2) -> (Re rho, Im rho) with a forward-difference Jacobian.
AsymmetricRoot find_zero_rho_asymmetric(const AsymmetricFamily& family, const AsymmetricSearch& search,
                                        const TuneSettings& settings);

/// rho of the configuration; requires a non-symmetric double well.
Complex asymmetric_rho(const AsymmetricFamily& family, double s1, double s2, const TuneSettings& settings);

struct FamilyProximity {
    double sup_deviation = 0;
    double deviation_area = 0;
};

/// Sup-norm of dressed - bare on the grid, and cell count x h^2 of the set where they differ.
FamilyProximity family_proximity_report(const PotentialSpec& dressed, const PotentialSpec& bare, const Grid2D& grid);

}  // namespace magtunnel
