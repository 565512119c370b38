#include "magtunnel/hopping.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "magtunnel/error.hpp"
#include "magtunnel/format.hpp"

namespace magtunnel {

namespace {

bool is_single_bump(const PotentialSpec& v) {
    return v.wells().size() == 1 && std::holds_alternative<RadialBump>(v.wells().front());
}

ComplexVector mirrored_state(const ComplexVector& phi) { return phi.reverse(); }

// Largest principal angle between span{a0, a1} and span{b0, b1}.
double principal_angle(const ComplexVector& a0, const ComplexVector& a1, const ComplexVector& b0,
                       const ComplexVector& b1) {
    Eigen::MatrixXcd a(a0.size(), 2);
    a << a0, a1;
    Eigen::MatrixXcd b(b0.size(), 2);
    b << b0, b1;
    const Eigen::MatrixXcd qa = Eigen::HouseholderQR<Eigen::MatrixXcd>(a).householderQ() *
                                Eigen::MatrixXcd::Identity(a.rows(), 2);
    const Eigen::MatrixXcd qb = Eigen::HouseholderQR<Eigen::MatrixXcd>(b).householderQ() *
                                Eigen::MatrixXcd::Identity(b.rows(), 2);
    const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(qa.adjoint() * qb);
    const double smallest = std::clamp(svd.singularValues().minCoeff(), 0.0, 1.0);
    return std::acos(smallest);
}

}  // namespace

TranslatedState magnetic_translate(const ComplexVector& phi, Side side, double d1, const MagneticParams& params,
                                   const Grid2D& grid, bool interpolate, std::string source) {
    if (phi.size() != grid.size()) throw InvalidArgument("state length does not match the grid");
    const int n = grid.nx();
    const double h = grid.spacing();
    const double steps = d1 / h;
    const double whole = std::round(steps);
    const bool aligned = std::abs(steps - whole) <= 1e-9 * std::max(1.0, std::abs(steps));
    if (!aligned && !interpolate) {
        throw InvalidArgument("d1 = " + fmt17(d1) + " is not a whole number of grid steps (h = " + fmt17(h) +
                              "); snap d1 or request interpolation");
    }
    // phi^L samples phi at x + d, phi^R at x - d.
    const double offset = side == Side::left ? steps : -steps;
    const double d_eff = aligned ? whole * h : d1;
    const double k_phase = (side == Side::left ? 0.5 : -0.5) * params.field() * d_eff;

    TranslatedState out;
    out.values = ComplexVector::Zero(phi.size());
    out.source = std::move(source);
    out.displacement = side == Side::left ? -d1 : d1;
    out.params = params;
    out.interpolated = !aligned;
    for (int j = 0; j < n; ++j) {
        const Complex phase = std::polar(1.0, k_phase * grid.coord(j));
        for (int i = 0; i < n; ++i) {
            Complex val;
            if (aligned) {
                const int src = i + static_cast<int>(side == Side::left ? whole : -whole);
                if (src < 0 || src >= n) continue;
                val = phi[grid.index(src, j)];
            } else {
                const double x = i + offset;
                const int i0 = static_cast<int>(std::floor(x));
                const double t = x - i0;
                if (i0 < 0 || i0 + 1 >= n) continue;
                val = (1.0 - t) * phi[grid.index(i0, j)] + t * phi[grid.index(i0 + 1, j)];
            }
            out.values[grid.index(i, j)] = phase * val;
        }
    }
    const double source_norm = phi.norm();
    out.norm_loss = source_norm > 0.0 ? 1.0 - out.values.norm() / source_norm : 0.0;
    if (aligned && out.norm_loss > 1e-8) {
        throw InvalidArgument("translated state leaves the box (norm loss " + fmt17(out.norm_loss) + ")");
    }
    return out;
}

Complex compute_rho(const TranslatedState& phi_left, const TranslatedState& phi_right, const PotentialSpec& v_right,
                    const Grid2D& grid, const MagneticParams& params) {
    if (phi_left.values.size() != grid.size() || phi_right.values.size() != grid.size()) {
        throw InvalidArgument("state length does not match the grid");
    }
    if (v_right.empty()) return {0.0, 0.0};
    const double h = grid.spacing();
    if (v_right.smallest_feature_radius() < 2.0 * h) {
        throw InvalidArgument("right-well feature of radius " + fmt17(v_right.smallest_feature_radius()) +
                              " spans fewer than 4 grid cells");
    }
    const double scale = params.lambda * params.lambda * grid.cell_area();
    Complex sum = 0.0;
    for (int k = 0; k < grid.size(); ++k) {
        const double v = v_right(grid.point(k));
        if (v == 0.0) continue;
        sum += std::conj(phi_left.values[k]) * v * phi_right.values[k];
    }
    return scale * sum;
}

Splitting compute_splitting(const DiscreteOperator& op, const SolverOptions& options) {
    SolverOptions opts = options;
    opts.k = std::max(3, options.k);
    Splitting out;
    out.spectrum = solve_lowest(op, opts);
    const auto& e = out.spectrum.eigenvalues;
    out.e0 = e[0];
    out.e1 = e[1];
    out.e2 = e[2];
    out.delta = e[1] - e[0];
    out.gap_isolation = gap_isolation(out.spectrum, 2);
    out.uncertainty = out.spectrum.eigenvalue_errors[0] + out.spectrum.eigenvalue_errors[1];
    out.below_floor = out.delta < kFloorFactor * out.uncertainty;
    if (!(out.gap_isolation > out.delta)) {
        throw Error("lowest pair is not isolated: E2 - E1 = " + fmt17(out.gap_isolation) + " <= E1 - E0 = " +
                    fmt17(out.delta));
    }
    return out;
}

OneWellState solve_one_well(const PotentialSpec& well, const Grid2D& grid, const MagneticParams& params,
                            const SolverOptions& options) {
    const auto op = assemble_operator(grid, well, params);
    SolverOptions opts = options;
    opts.k = std::max(1, options.k);
    const auto res = solve_lowest(op, opts);
    OneWellState out;
    out.energy = res.eigenvalues[0];
    const double next = res.size() > 1 ? res.eigenvalues[1]
                        : res.ritz_tail.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                : res.ritz_tail.front();
    out.gap = next - res.eigenvalues[0];
    out.residual = res.residuals[0];
    out.uncertainty = res.eigenvalue_errors[0];
    out.phi = res.eigenvectors[0];
    const Complex anchor = -op.potential().cast<Complex>().dot(out.phi);
    if (std::abs(anchor) > 0.0) out.phi *= std::conj(anchor) / std::abs(anchor);
    return out;
}

double HoppingReport::ratio() const {
    const double a = std::abs(rho);
    if (!delta || a == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return *delta / (2.0 * a);
}

nlohmann::json HoppingReport::to_json() const {
    auto opt = [](const std::optional<double>& v) -> nlohmann::json { return v ? nlohmann::json(*v) : nlohmann::json(); };
    const double r = ratio();
    return {{"lambda", params.lambda},
            {"b", params.b},
            {"d1", d1},
            {"Re_rho", rho.real()},
            {"Im_rho", rho.imag()},
            {"abs_rho", std::abs(rho)},
            {"e_lambda", e_lambda},
            {"one_well_gap", one_well_gap},
            {"one_well_uncertainty", one_well_uncertainty},
            {"delta", opt(delta)},
            {"E0", opt(e0)},
            {"E1", opt(e1)},
            {"gap_isolation", opt(gap_isolation)},
            {"splitting_uncertainty", opt(splitting_uncertainty)},
            {"E_even", opt(e_even)},
            {"E_odd", opt(e_odd)},
            {"ground_parity", ground_parity ? nlohmann::json(to_string(*ground_parity)) : nlohmann::json()},
            {"parity_uncertainty", opt(parity_uncertainty)},
            {"ratio", std::isnan(r) ? nlohmann::json() : nlohmann::json(r)},
            {"im_rho_over_abs_rho", im_rho_over_abs_rho},
            {"rho_below_floor", rho_below_floor},
            {"delta_below_floor", delta_below_floor},
            {"principal_angle", opt(principal_angle)},
            {"two_level_error", opt(two_level_error)},
            {"warnings", warnings}};
}

HoppingReport analyze_double_well(const DoubleWellConfig& cfg, const Grid2D& grid, const MagneticParams& params,
                                  const HoppingOptions& options) {
    const PotentialSpec v = double_well(cfg);
    const bool symmetric = cfg.mode == SymmetryMode::inversion_symmetric;

    HoppingReport rep;
    rep.params = params;
    rep.d1 = cfg.d1;

    const OneWellState right = solve_one_well(cfg.right_well, grid, params, options.solver);
    OneWellState left;
    if (symmetric) {
        left = right;
        left.phi = mirrored_state(right.phi);
    } else if (cfg.left_well == cfg.right_well) {
        left = right;
    } else {
        left = solve_one_well(cfg.left_well, grid, params, options.solver);
    }
    rep.e_lambda = right.energy;
    rep.one_well_gap = std::min(left.gap, right.gap);
    rep.one_well_uncertainty = std::max(left.uncertainty, right.uncertainty);

    const auto phi_l = magnetic_translate(left.phi, Side::left, cfg.d1, params, grid, options.interpolate, "left");
    const auto phi_r = magnetic_translate(right.phi, Side::right, cfg.d1, params, grid, options.interpolate, "right");
    rep.rho = compute_rho(phi_l, phi_r, cfg.right_displaced(), grid, params);
    rep.im_rho_over_abs_rho = std::abs(rep.rho.imag()) / std::max(std::abs(rep.rho), kImRhoFloor);
    rep.rho_below_floor = std::abs(rep.rho) < kFloorFactor * rep.one_well_uncertainty;

    if (!options.full_solve && !(options.parity_solve && symmetric)) return rep;

    const auto op = assemble_operator(grid, v, params);
    rep.warnings = op.warnings();
    if (options.full_solve) {
        const Splitting s = compute_splitting(op, options.solver);
        rep.delta = s.delta;
        rep.e0 = s.e0;
        rep.e1 = s.e1;
        rep.gap_isolation = s.gap_isolation;
        rep.splitting_uncertainty = s.uncertainty;
        rep.delta_below_floor = s.below_floor;
        rep.principal_angle =
            principal_angle(phi_l.values, phi_r.values, s.spectrum.eigenvectors[0], s.spectrum.eigenvectors[1]);
        if (s.gap_isolation < 10.0 * s.delta) rep.warnings.emplace_back("two-level cluster is weakly isolated");
    }
    if (options.parity_solve && symmetric) {
        const ParitySplit p = parity_split(op, options.solver);
        rep.e_even = p.e_even;
        rep.e_odd = p.e_odd;
        rep.ground_parity = p.ground_parity;
        rep.parity_uncertainty = p.uncertainty;
        if (!rep.delta) {
            rep.delta = std::abs(p.signed_gap());
            rep.splitting_uncertainty = p.uncertainty;
            rep.delta_below_floor = *rep.delta < kFloorFactor * p.uncertainty;
        }
        if (std::abs(rep.rho) > 0.0) {
            rep.two_level_error = std::abs(Complex(p.signed_gap()) - 2.0 * rep.rho) / std::abs(2.0 * rep.rho);
        }
    }
    return rep;
}

std::vector<HoppingReport> theorem1_ratio(const DoubleWellConfig& cfg, const std::vector<double>& lambdas,
                                          const MagneticParams& params_template, const Grid2D& grid,
                                          const HoppingOptions& options) {
    if (!is_single_bump(cfg.left_well) || !is_single_bump(cfg.right_well)) {
        throw InvalidArgument("the ratio table needs bare radial wells");
    }
    if (!std::is_sorted(lambdas.begin(), lambdas.end())) throw InvalidArgument("lambdas must be ascending");
    std::vector<HoppingReport> rows;
    for (double lam : lambdas) {
        MagneticParams p = params_template;
        p.lambda = lam;
        rows.push_back(analyze_double_well(cfg, grid, p, options));
    }
    return rows;
}

void write_hopping_csv(std::ostream& out, const std::vector<HoppingReport>& rows) {
    out << "lambda,b,d1,Re_rho,Im_rho,delta,E_even,E_odd,ratio,gap_isolation,floor_flag\n";
    for (const auto& r : rows) {
        const double ratio = r.ratio();
        out << fmt17(r.params.lambda) << ',' << fmt17(r.params.b) << ',' << fmt17(r.d1) << ',' << fmt17(r.rho.real())
            << ',' << fmt17(r.rho.imag()) << ',' << fmt17(r.delta) << ',' << fmt17(r.e_even) << ','
            << fmt17(r.e_odd) << ',' << (std::isnan(ratio) ? std::string() : fmt17(ratio)) << ','
            << fmt17(r.gap_isolation) << ',' << (r.floor_flag() ? 1 : 0) << '\n';
    }
}

Grid2D aligned_grid(double d1, double reach, double margin, int n) {
    if (!(d1 > 0.0)) throw InvalidArgument("d1 must be positive");
    if (n < 16) throw InvalidArgument("grid needs at least 16 points per axis");
    const double l_min = 2.0 * d1 + reach + margin;
    const double h_min = 2.0 * l_min / (n - 1);
    const double m = std::floor(d1 / h_min);
    if (m < 1.0) throw InvalidArgument("grid too coarse to place d1 on a grid line");
    const double h = d1 / m;
    return Grid2D(0.5 * h * (n - 1), n);
}

}  // namespace magtunnel
