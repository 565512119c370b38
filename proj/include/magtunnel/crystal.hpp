#pragma once

#include <array>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "magtunnel/hopping.hpp"

namespace magtunnel {

enum class PhaseRule {
    /// entry(n, m) = rho exp(i (b lambda / 2) n ^ m) for the forward bond m = n + D' e_k.
    symmetric,
    /// Same plaquette flux, all of it carried by the vertical bonds: rho exp(i b lambda D'^2 i1).
    landau,
};

/// Nearest-neighbour model on an N x N patch of D' Z^2 with open boundary.
/// Forward bonds (+D' e1, +D' e2) carry the phase rule; backward bonds are their conjugates.
struct TightBindingModel {
    double spacing = 1.0;
    int n = 4;
    Complex rho;
    MagneticParams params;
    double e_ref = 0.0;
    PhaseRule rule = PhaseRule::symmetric;
    Eigen::MatrixXcd matrix;

    int site(int i1, int i2) const { return i1 + n * i2; }
    /// Product of the four forward/backward entries around the plaquette with lower-left corner (i1, i2).
    Complex plaquette(int i1, int i2) const;
    /// exp(-lambda ((sqrt 2 D'/2)^2 - (D'/2)^2)): relative size of the dropped diagonal bonds.
    double next_nearest_estimate() const;
};

TightBindingModel build_crystal_tb(Complex rho, const MagneticParams& params, double spacing, int n,
                                   double e_ref = 0.0, PhaseRule rule = PhaseRule::symmetric);

/// Sorted eigenvalues of the patch matrix.
std::vector<double> patch_spectrum(const TightBindingModel& model);

struct Flux {
    int p = 0;
    int q = 1;
    /// |requested - p/q|
    double snap_error = 0.0;

    double value() const { return static_cast<double>(p) / q; }
};

/// Flux quanta per plaquette, b lambda D'^2 / (2 pi).
double plaquette_flux_quanta(const MagneticParams& params, double spacing);

/// Best rational approximation with denominator <= q_max (continued fractions).
Flux snap_flux(double phi, int q_max = 64);

struct BandReport {
    std::string mode;
    /// Patch mode: sorted eigenvalues.
    std::vector<double> spectrum;
    /// Bloch mode: k points and bands[band][k].
    std::vector<std::array<double, 2>> k_points;
    std::vector<std::vector<double>> bands;
    std::vector<std::array<double, 2>> band_ranges;
    Flux flux;
    double e_ref = 0.0;
    double bandwidth = 0.0;
    double rho_reference = 0.0;
    std::string rho_provenance = "analytic";

    double flatness() const { return rho_reference != 0.0 ? bandwidth / rho_reference : 0.0; }
    nlohmann::json to_json() const;
};

/// q x q magnetic Bloch matrix of the Landau-gauge model at (k1, k2); the magnetic cell spans q sites along x1.
Eigen::MatrixXcd harper_matrix(Complex rho, Flux flux, double k1, double k2, double e_ref = 0.0);

/// Harper reduction at rational flux p/q: q x q Bloch matrices over a k_grid x k_grid mesh of the full
/// Brillouin zone. Depends on |rho| only. Throws if gcd(p, q) != 1 or q > 64.
BandReport bloch_bands(Complex rho, Flux flux, int k_grid, double e_ref = 0.0);

/// Requested flux must already equal a p/q with q <= 64 (to 1e-12); snap it first otherwise.
BandReport bloch_bands(Complex rho, double flux, int k_grid, double e_ref = 0.0);

/// Spectrum of the N x N torus in the Landau gauge; N must be a multiple of q.
std::vector<double> torus_spectrum(Complex rho, Flux flux, int n, double e_ref = 0.0);

/// W = max - min of the spectrum (or band union) and W / rho_reference.
BandReport flatness_report(const TightBindingModel& model, double rho_reference);
BandReport flatness_report(BandReport bands, double rho_reference);

struct BandContainment {
    int total = 0;
    int outside = 0;
    double worst_excess = 0.0;
};

/// Counts eigenvalues farther than tol from every band range.
BandContainment contained_in_bands(const std::vector<double>& spectrum, const BandReport& bands, double tol);

struct LatticeHopping {
    Complex rho;
    HoppingReport report;
    double d1 = 0.0;
};

/// Nearest-neighbour hopping of a crystal of copies of `well`, from the continuum double well
/// at d1 = D'/2. The well must be invariant under a quarter turn.
LatticeHopping numeric_lattice_hopping(const PotentialSpec& well, double spacing, const MagneticParams& params,
                                       const Grid2D& grid, const HoppingOptions& options = {});

void write_bands_csv(std::ostream& out, const BandReport& bands);
void write_spectrum_csv(std::ostream& out, const std::vector<double>& spectrum);

}  // namespace magtunnel
