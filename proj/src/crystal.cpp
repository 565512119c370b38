#include "magtunnel/crystal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "magtunnel/error.hpp"
#include "magtunnel/format.hpp"

namespace magtunnel {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> hermitian_eigenvalues(const Eigen::MatrixXcd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw ConvergenceError("dense Hermitian eigensolver failed");
    std::vector<double> out(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    std::sort(out.begin(), out.end());
    return out;
}

void check_flux(const Flux& f) {
    if (f.q < 1 || f.q > 64) throw InvalidArgument("flux denominator must lie in [1, 64], got " + std::to_string(f.q));
    if (std::gcd(f.p, f.q) != 1) {
        throw InvalidArgument("flux " + std::to_string(f.p) + "/" + std::to_string(f.q) + " is not in lowest terms");
    }
}

}  // namespace

Complex TightBindingModel::plaquette(int i1, int i2) const {
    if (i1 < 0 || i2 < 0 || i1 + 1 >= n || i2 + 1 >= n) throw InvalidArgument("plaquette out of range");
    const int a = site(i1, i2), b = site(i1 + 1, i2), c = site(i1 + 1, i2 + 1), d = site(i1, i2 + 1);
    return matrix(a, b) * matrix(b, c) * matrix(c, d) * matrix(d, a);
}

double TightBindingModel::next_nearest_estimate() const {
    const double half = 0.5 * spacing;
    return std::exp(-params.lambda * (2.0 * half * half - half * half));
}

TightBindingModel build_crystal_tb(Complex rho, const MagneticParams& params, double spacing, int n, double e_ref,
                                   PhaseRule rule) {
    if (n < 4) throw InvalidArgument("patch needs N >= 4");
    if (!(spacing > 0.0)) throw InvalidArgument("lattice spacing must be positive");
    params.validate();
    TightBindingModel m;
    m.spacing = spacing;
    m.n = n;
    m.rho = rho;
    m.params = params;
    m.e_ref = e_ref;
    m.rule = rule;
    m.matrix = Eigen::MatrixXcd::Zero(n * n, n * n);
    m.matrix.diagonal().setConstant(e_ref);
    const double half_field = 0.5 * params.field();
    auto bond = [&](int i1, int i2, int j1, int j2) {
        double phase = 0.0;
        if (rule == PhaseRule::symmetric) {
            phase = half_field * wedge(Point{spacing * i1, spacing * i2}, Point{spacing * j1, spacing * j2});
        } else if (j2 != i2) {
            phase = params.field() * spacing * spacing * i1;
        }
        const Complex e = rho * std::polar(1.0, phase);
        m.matrix(m.site(i1, i2), m.site(j1, j2)) = e;
        m.matrix(m.site(j1, j2), m.site(i1, i2)) = std::conj(e);
    };
    for (int i2 = 0; i2 < n; ++i2) {
        for (int i1 = 0; i1 < n; ++i1) {
            if (i1 + 1 < n) bond(i1, i2, i1 + 1, i2);
            if (i2 + 1 < n) bond(i1, i2, i1, i2 + 1);
        }
    }
    return m;
}

std::vector<double> patch_spectrum(const TightBindingModel& model) { return hermitian_eigenvalues(model.matrix); }

double plaquette_flux_quanta(const MagneticParams& params, double spacing) {
    return params.field() * spacing * spacing / kTwoPi;
}

Flux snap_flux(double phi, int q_max) {
    if (!std::isfinite(phi)) throw InvalidArgument("flux must be finite");
    if (q_max < 1) throw InvalidArgument("q_max must be positive");
    // Convergents h_k / k_k of the continued fraction of phi.
    long long h_prev = 1, h = static_cast<long long>(std::floor(phi));
    long long k_prev = 0, k = 1;
    double rest = phi - std::floor(phi);
    while (rest > 1e-15) {
        const double inv = 1.0 / rest;
        const long long a = static_cast<long long>(std::floor(inv));
        const long long h_next = a * h + h_prev;
        const long long k_next = a * k + k_prev;
        if (k_next > q_max) break;
        h_prev = h;
        h = h_next;
        k_prev = k;
        k = k_next;
        rest = inv - a;
    }
    Flux f{static_cast<int>(h), static_cast<int>(k), 0.0};
    f.snap_error = std::abs(phi - f.value());
    return f;
}

Eigen::MatrixXcd harper_matrix(Complex rho, Flux flux, double k1, double k2, double e_ref) {
    check_flux(flux);
    const int q = flux.q;
    const double t = std::abs(rho);
    const double alpha = kTwoPi * flux.value();
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(q, q);
    for (int i = 0; i < q; ++i) {
        h(i, i) += e_ref + 2.0 * t * std::cos(k2 + alpha * i);
        const int j = (i + 1) % q;
        const Complex hop = i + 1 == q ? std::polar(t, k1) : Complex(t, 0.0);
        h(i, j) += hop;
        h(j, i) += std::conj(hop);
    }
    return h;
}

BandReport bloch_bands(Complex rho, Flux flux, int k_grid, double e_ref) {
    check_flux(flux);
    if (k_grid < 1) throw InvalidArgument("k grid needs at least one point per axis");
    const int q = flux.q;
    BandReport out;
    out.mode = "bloch";
    out.flux = flux;
    out.e_ref = e_ref;
    out.bands.assign(q, {});
    for (int a = 0; a < k_grid; ++a) {
        for (int c = 0; c < k_grid; ++c) {
            const double k1 = kTwoPi * a / k_grid;
            const double k2 = kTwoPi * c / k_grid;
            const Eigen::MatrixXcd h = harper_matrix(rho, flux, k1, k2, e_ref);
            const auto ev = hermitian_eigenvalues(h);
            out.k_points.push_back({k1, k2});
            for (int b = 0; b < q; ++b) out.bands[b].push_back(ev[b]);
        }
    }
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& band : out.bands) {
        const auto [mn, mx] = std::minmax_element(band.begin(), band.end());
        out.band_ranges.push_back({*mn, *mx});
        lo = std::min(lo, *mn);
        hi = std::max(hi, *mx);
    }
    out.bandwidth = hi - lo;
    out.rho_reference = std::abs(rho);
    return out;
}

BandReport bloch_bands(Complex rho, double flux, int k_grid, double e_ref) {
    const Flux f = snap_flux(flux);
    if (f.snap_error > 1e-12) {
        throw InvalidArgument("flux " + fmt17(flux) + " is not a rational p/q with q <= 64; nearest is " +
                              std::to_string(f.p) + "/" + std::to_string(f.q) + " (error " + fmt17(f.snap_error) +
                              "), snap it first");
    }
    return bloch_bands(rho, f, k_grid, e_ref);
}

std::vector<double> torus_spectrum(Complex rho, Flux flux, int n, double e_ref) {
    check_flux(flux);
    if (n < flux.q || n % flux.q != 0) throw InvalidArgument("torus size must be a multiple of q");
    const double t = std::abs(rho);
    const double alpha = kTwoPi * flux.value();
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n * n, n * n);
    m.diagonal().setConstant(e_ref);
    auto site = [n](int i1, int i2) { return (i1 % n) + n * (i2 % n); };
    for (int i2 = 0; i2 < n; ++i2) {
        for (int i1 = 0; i1 < n; ++i1) {
            const Complex hx(t, 0.0);
            const Complex hy = std::polar(t, alpha * i1);
            m(site(i1, i2), site(i1 + 1, i2)) += hx;
            m(site(i1 + 1, i2), site(i1, i2)) += std::conj(hx);
            m(site(i1, i2), site(i1, i2 + 1)) += hy;
            m(site(i1, i2 + 1), site(i1, i2)) += std::conj(hy);
        }
    }
    return hermitian_eigenvalues(m);
}

BandReport flatness_report(const TightBindingModel& model, double rho_reference) {
    BandReport out;
    out.mode = "patch";
    out.spectrum = patch_spectrum(model);
    out.e_ref = model.e_ref;
    out.flux = snap_flux(plaquette_flux_quanta(model.params, model.spacing));
    out.bandwidth = out.spectrum.back() - out.spectrum.front();
    out.rho_reference = rho_reference;
    return out;
}

BandReport flatness_report(BandReport bands, double rho_reference) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    if (!bands.spectrum.empty()) {
        lo = bands.spectrum.front();
        hi = bands.spectrum.back();
    }
    for (const auto& r : bands.band_ranges) {
        lo = std::min(lo, r[0]);
        hi = std::max(hi, r[1]);
    }
    if (!(hi >= lo)) throw InvalidArgument("flatness report needs a computed spectrum");
    bands.bandwidth = hi - lo;
    bands.rho_reference = rho_reference;
    return bands;
}

BandContainment contained_in_bands(const std::vector<double>& spectrum, const BandReport& bands, double tol) {
    BandContainment out;
    out.total = static_cast<int>(spectrum.size());
    for (double e : spectrum) {
        double dist = std::numeric_limits<double>::infinity();
        for (const auto& r : bands.band_ranges) {
            dist = std::min(dist, e < r[0] ? r[0] - e : (e > r[1] ? e - r[1] : 0.0));
        }
        if (dist > tol) {
            ++out.outside;
            out.worst_excess = std::max(out.worst_excess, dist - tol);
        }
    }
    return out;
}

nlohmann::json BandReport::to_json() const {
    nlohmann::json ranges = nlohmann::json::array();
    for (const auto& r : band_ranges) ranges.push_back({{"min", r[0]}, {"max", r[1]}, {"width", r[1] - r[0]}});
    return {{"mode", mode},
            {"flux", {{"p", flux.p}, {"q", flux.q}, {"snap_error", flux.snap_error}}},
            {"e_ref", e_ref},
            {"bandwidth", bandwidth},
            {"rho_reference", rho_reference},
            {"flatness", flatness()},
            {"rho_provenance", rho_provenance},
            {"bands", ranges},
            {"spectrum_size", spectrum.size()}};
}

LatticeHopping numeric_lattice_hopping(const PotentialSpec& well, double spacing, const MagneticParams& params,
                                       const Grid2D& grid, const HoppingOptions& options) {
    if (!(spacing > 0.0)) throw InvalidArgument("lattice spacing must be positive");
    if (!well.rotated90().same_wells(well)) {
        throw SymmetryError("well is not invariant under a quarter turn; horizontal and vertical hoppings differ");
    }
    LatticeHopping out;
    out.d1 = 0.5 * spacing;
    out.report = analyze_double_well(DoubleWellConfig::symmetric(well, out.d1), grid, params, options);
    out.rho = out.report.rho;
    return out;
}

void write_bands_csv(std::ostream& out, const BandReport& bands) {
    out << "k1,k2,band,energy\n";
    for (std::size_t b = 0; b < bands.bands.size(); ++b) {
        for (std::size_t k = 0; k < bands.k_points.size(); ++k) {
            out << fmt17(bands.k_points[k][0]) << ',' << fmt17(bands.k_points[k][1]) << ',' << b << ','
                << fmt17(bands.bands[b][k]) << '\n';
        }
    }
}

void write_spectrum_csv(std::ostream& out, const std::vector<double>& spectrum) {
    out << "index,energy\n";
    for (std::size_t i = 0; i < spectrum.size(); ++i) out << i << ',' << fmt17(spectrum[i]) << '\n';
}

}  // namespace magtunnel
