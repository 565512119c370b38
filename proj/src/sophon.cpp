#include "magtunnel/sophon.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

#include "magtunnel/error.hpp"
#include "magtunnel/format.hpp"

namespace magtunnel {

namespace {

SophonDressing mirrored(const SophonDressing& d) {
    SophonDressing out = d;
    for (auto& s : out.sophons) s.offset = -1.0 * s.offset;
    return out;
}

RadialBump planet_from_json(const nlohmann::json& j) {
    return RadialBump{{0.0, 0.0}, j.value("radius", 1.0), j.value("depth", 1.0)};
}

nlohmann::json planet_json(const RadialBump& p) { return {{"radius", p.radius}, {"depth", p.depth}}; }

HoppingOptions parity_only(const TuneSettings& settings) {
    HoppingOptions o;
    o.solver = settings.solver;
    o.full_solve = false;
    o.parity_solve = true;
    return o;
}

HoppingOptions rho_only(const TuneSettings& settings) {
    HoppingOptions o = parity_only(settings);
    o.parity_solve = false;
    return o;
}

int sign(double x) { return (x > 0.0) - (x < 0.0); }

struct SignSample {
    double x = 0;
    double f = 0;
    double uncertainty = 0;
    Parity parity = Parity::degenerate;
};

// Bisection on sign(f) to the given width, then regula falsi (Illinois) inside the
// final bracket. The bisection bracket is kept as the sign-change evidence.
TuneResult bracketed_root(const std::function<SignSample(double)>& eval, SignSample lo, SignSample hi, double width,
                          double polish_target, int& evaluations, std::vector<std::array<double, 2>>& trace) {
    if (hi.x < lo.x) std::swap(lo, hi);
    TuneResult out;
    auto record = [&](const SignSample& s) { trace.push_back({s.x, s.f}); };
    if (sign(lo.f) == 0 || sign(hi.f) == 0) {
        const SignSample& z = sign(lo.f) == 0 ? lo : hi;
        out.root = z.x;
        out.achieved = 0.0;
        out.bracket_lo = lo.x;
        out.bracket_hi = hi.x;
        out.value_lo = lo.f;
        out.value_hi = hi.f;
        out.parity_lo = lo.parity;
        out.parity_hi = hi.parity;
        return out;
    }
    while (hi.x - lo.x > width) {
        const SignSample mid = eval(0.5 * (lo.x + hi.x));
        ++evaluations;
        record(mid);
        if (sign(mid.f) == 0) {
            lo = hi = mid;
            break;
        }
        (sign(mid.f) == sign(lo.f) ? lo : hi) = mid;
    }
    out.bracket_lo = lo.x;
    out.bracket_hi = hi.x;
    out.value_lo = lo.f;
    out.value_hi = hi.f;
    out.parity_lo = lo.parity;
    out.parity_hi = hi.parity;

    SignSample best = std::abs(lo.f) < std::abs(hi.f) ? lo : hi;
    SignSample a = lo, b = hi;
    int side = 0;
    for (int it = 0; it < 40 && std::abs(best.f) > polish_target && a.x != b.x; ++it) {
        if (std::abs(best.f) <= 2.0 * best.uncertainty) break;
        const double x = (a.x * b.f - b.x * a.f) / (b.f - a.f);
        if (!(x > std::min(a.x, b.x) && x < std::max(a.x, b.x))) break;
        const SignSample c = eval(x);
        ++evaluations;
        record(c);
        if (std::abs(c.f) < std::abs(best.f)) best = c;
        if (sign(c.f) == 0) break;
        if (sign(c.f) == sign(b.f)) {
            b = c;
            if (side == -1) a.f *= 0.5;
            side = -1;
        } else {
            a = c;
            if (side == 1) b.f *= 0.5;
            side = 1;
        }
    }
    out.root = best.x;
    out.achieved = std::abs(best.f);
    return out;
}

Complex evaluate_rho(const AsymmetricFamily& family, double s1, double s2, const TuneSettings& settings) {
    return analyze_double_well(family.config(s1, s2), settings.grid, settings.params, rho_only(settings)).rho;
}

}  // namespace

double InteractionTable::magnitude(int mu, int nu) const {
    return prefactor.at(mu).at(nu) * std::exp(exponent.at(mu).at(nu));
}

std::pair<int, int> InteractionTable::dominant() const {
    std::pair<int, int> best{0, 0};
    double m = -1.0;
    for (std::size_t i = 0; i < exponent.size(); ++i) {
        for (std::size_t j = 0; j < exponent[i].size(); ++j) {
            const double v = magnitude(static_cast<int>(i), static_cast<int>(j));
            if (v > m) {
                m = v;
                best = {static_cast<int>(i), static_cast<int>(j)};
            }
        }
    }
    return best;
}

nlohmann::json InteractionTable::to_json() const {
    nlohmann::json mags = nlohmann::json::array();
    for (std::size_t i = 0; i < exponent.size(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < exponent[i].size(); ++j) {
            row.push_back(magnitude(static_cast<int>(i), static_cast<int>(j)));
        }
        mags.push_back(row);
    }
    const auto [mu, nu] = dominant();
    return {{"exponent", exponent}, {"prefactor", prefactor}, {"magnitude", mags}, {"dominant", {mu, nu}}};
}

InteractionTable predict_interactions(const SophonDressing& left, const SophonDressing& right, double d1,
                                      const MagneticParams& params) {
    left.validate();
    right.validate();
    params.validate();
    InteractionTable t;
    auto centers = [](const SophonDressing& d, Point origin, std::vector<Point>& out, std::vector<double>& amp) {
        out.push_back(origin);
        amp.push_back(1.0);
        for (const auto& s : d.sophons) {
            out.push_back(origin + s.offset);
            amp.push_back(std::abs(s.amplitude));
        }
    };
    std::vector<double> amp_l, amp_r;
    centers(left, {-d1, 0.0}, t.left_centers, amp_l);
    centers(right, {d1, 0.0}, t.right_centers, amp_r);
    const double k = 0.25 * params.field();
    for (std::size_t i = 0; i < t.left_centers.size(); ++i) {
        std::vector<double> e, p;
        for (std::size_t j = 0; j < t.right_centers.size(); ++j) {
            const double dist = (t.left_centers[i] - t.right_centers[j]).norm();
            e.push_back(-k * dist * dist);
            p.push_back(amp_l[i] * amp_r[j]);
        }
        t.exponent.push_back(std::move(e));
        t.prefactor.push_back(std::move(p));
    }
    return t;
}

AsymptoticPrediction predict_rho(const SophonDressing& left, const SophonDressing& right, double d1,
                                 const MagneticParams& params, double tau) {
    const InteractionTable t = predict_interactions(left, right, d1, params);
    AsymptoticPrediction out;
    out.D = std::numeric_limits<double>::infinity();
    double height = 0.0;
    for (std::size_t mu = 1; mu < t.left_centers.size(); ++mu) {
        const double dist = (t.left_centers[mu] - t.right_centers[0]).norm();
        if (dist < out.D) {
            out.D = dist;
            height = std::abs(left.sophons[mu - 1].offset.x2);
        }
    }
    out.theta_model = params.field() * d1 * height;
    out.rho_pred = tau * std::exp(-0.25 * params.field() * out.D * out.D) * std::cos(out.theta_model);
    const auto [mu, nu] = t.dominant();
    out.dominance_margin = t.magnitude(mu, nu) / t.magnitude(0, 0);
    out.advisory_only = !(out.dominance_margin > 1.0);
    return out;
}

const char* to_string(SweepParameter p) {
    switch (p) {
        case SweepParameter::s: return "s";
        case SweepParameter::dx: return "dx";
        case SweepParameter::tau: return "tau";
    }
    return "?";
}

SweepParameter parse_sweep_parameter(const std::string& name) {
    if (name == "s") return SweepParameter::s;
    if (name == "dx") return SweepParameter::dx;
    if (name == "tau") return SweepParameter::tau;
    throw InvalidArgument("unknown sweep parameter '" + name + "' (expected s, dx or tau)");
}

SophonDressing SophonFamily::dressing() const {
    return flat_band ? flat_band_layout(planet, dx, s, r, tau) : rectangle_layout(planet, dx, s, r, tau);
}

DoubleWellConfig SophonFamily::config() const {
    return DoubleWellConfig::symmetric(sophon_dress(dressing()).potential, d1);
}

DoubleWellConfig SophonFamily::bare_config() const { return DoubleWellConfig::symmetric(PotentialSpec({planet}), d1); }

SophonFamily SophonFamily::with(SweepParameter p, double value) const {
    SophonFamily out = *this;
    switch (p) {
        case SweepParameter::s: out.s = value; break;
        case SweepParameter::dx: out.dx = value; break;
        case SweepParameter::tau: out.tau = value; break;
    }
    return out;
}

double SophonFamily::get(SweepParameter p) const {
    switch (p) {
        case SweepParameter::s: return s;
        case SweepParameter::dx: return dx;
        case SweepParameter::tau: return tau;
    }
    return 0.0;
}

nlohmann::json SophonFamily::to_json() const {
    return {{"planet", planet_json(planet)}, {"d1", d1},   {"dx", dx},
            {"s", s},                        {"r", r},     {"tau", tau},
            {"layout", flat_band ? "flat_band" : "rectangle"}};
}

SophonFamily SophonFamily::from_json(const nlohmann::json& j) {
    SophonFamily f;
    if (j.contains("planet")) f.planet = planet_from_json(j.at("planet"));
    f.d1 = j.value("d1", f.d1);
    f.dx = j.value("dx", f.dx);
    f.s = j.value("s", f.s);
    f.r = j.value("r", f.r);
    f.tau = j.value("tau", f.tau);
    const std::string layout = j.value("layout", std::string("rectangle"));
    if (layout != "rectangle" && layout != "flat_band") {
        throw InvalidArgument("layout must be 'rectangle' or 'flat_band', got '" + layout + "'");
    }
    f.flat_band = layout == "flat_band";
    return f;
}

SophonDressing AsymmetricFamily::dressing(double s1, double s2) const {
    SophonDressing out{planet,
                       {Sophon{{dx, s1}, r, tau_up}, Sophon{{dx, -s2}, r, tau_down}, Sophon{{-dx, s1}, r, tau_up},
                        Sophon{{-dx, -s2}, r, tau_down}}};
    out.validate();
    return out;
}

DoubleWellConfig AsymmetricFamily::config(double s1, double s2) const {
    const PotentialSpec w = sophon_dress(dressing(s1, s2)).potential;
    return DoubleWellConfig::asymmetric(w, w, d1);
}

DoubleWellConfig AsymmetricFamily::bare_config() const {
    return DoubleWellConfig::symmetric(PotentialSpec({planet}), d1);
}

nlohmann::json AsymmetricFamily::to_json() const {
    return {{"planet", planet_json(planet)}, {"d1", d1},           {"dx", dx},
            {"r", r},                        {"tau_up", tau_up}, {"tau_down", tau_down}};
}

AsymmetricFamily AsymmetricFamily::from_json(const nlohmann::json& j) {
    AsymmetricFamily f;
    if (j.contains("planet")) f.planet = planet_from_json(j.at("planet"));
    f.d1 = j.value("d1", f.d1);
    f.dx = j.value("dx", f.dx);
    f.r = j.value("r", f.r);
    f.tau_up = j.value("tau_up", f.tau_up);
    f.tau_down = j.value("tau_down", f.tau_down);
    return f;
}

std::vector<double> linspace(double lo, double hi, int steps) {
    if (steps < 2) throw InvalidArgument("a sweep needs at least 2 steps");
    std::vector<double> out(steps);
    for (int i = 0; i < steps; ++i) out[i] = lo + (hi - lo) * i / (steps - 1);
    return out;
}

std::vector<SweepRow> sweep(const SophonFamily& family, SweepParameter parameter, const std::vector<double>& values,
                            const TuneSettings& settings) {
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    std::vector<SweepRow> rows;
    rows.reserve(sorted.size());
    for (double v : sorted) {
        const SophonFamily f = family.with(parameter, v);
        const SophonDressing right = f.dressing();
        right.validate_resolution(settings.grid, 2.0);
        const auto rep = analyze_double_well(f.config(), settings.grid, settings.params, parity_only(settings));
        const auto pred = predict_rho(mirrored(right), right, f.d1, settings.params, f.tau);
        SweepRow row;
        row.value = v;
        row.rho = rep.rho;
        row.e_even = *rep.e_even;
        row.e_odd = *rep.e_odd;
        row.uncertainty = *rep.parity_uncertainty;
        row.parity = *rep.ground_parity;
        row.rho_pred = pred.rho_pred;
        row.theta_model = pred.theta_model;
        row.dominance_margin = pred.dominance_margin;
        row.im_rho_over_abs_rho = rep.im_rho_over_abs_rho;
        rows.push_back(row);
    }
    return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, SweepParameter parameter) {
    out << to_string(parameter)
        << ",Re_rho,Im_rho,delta,E_even_minus_E_odd,E_even,E_odd,ground_parity,rho_pred,theta_model,dominance_margin\n";
    for (const auto& r : rows) {
        out << fmt17(r.value) << ',' << fmt17(r.rho.real()) << ',' << fmt17(r.rho.imag()) << ',' << fmt17(r.delta())
            << ',' << fmt17(r.signed_gap()) << ',' << fmt17(r.e_even) << ',' << fmt17(r.e_odd) << ','
            << to_string(r.parity) << ',' << fmt17(r.rho_pred) << ',' << fmt17(r.theta_model) << ','
            << fmt17(r.dominance_margin) << '\n';
    }
}

nlohmann::json sweep_json(const std::vector<SweepRow>& rows, SweepParameter parameter) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back({{to_string(parameter), r.value},
                       {"Re_rho", r.rho.real()},
                       {"Im_rho", r.rho.imag()},
                       {"delta", r.delta()},
                       {"E_even_minus_E_odd", r.signed_gap()},
                       {"E_even", r.e_even},
                       {"E_odd", r.e_odd},
                       {"ground_parity", to_string(r.parity)},
                       {"rho_pred", r.rho_pred},
                       {"theta_model", r.theta_model},
                       {"dominance_margin", r.dominance_margin}});
    }
    return arr;
}

PredictionAgreement prediction_agreement(const std::vector<SweepRow>& rows, double min_margin, double min_cos) {
    PredictionAgreement a;
    for (const auto& r : rows) {
        if (!(r.dominance_margin > min_margin) || !(std::abs(std::cos(r.theta_model)) > min_cos)) continue;
        ++a.eligible;
        if (sign(r.rho_pred) == sign(r.rho.real())) ++a.agreeing;
    }
    return a;
}

std::vector<int> sign_change_cells(const std::vector<SweepRow>& rows) {
    std::vector<int> cells;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        if (sign(rows[i].signed_gap()) * sign(rows[i + 1].signed_gap()) < 0) cells.push_back(static_cast<int>(i));
    }
    return cells;
}

nlohmann::json TuneResult::to_json() const {
    nlohmann::json tr = nlohmann::json::array();
    for (const auto& t : trace) tr.push_back({t[0], t[1]});
    return {{"parameter", magtunnel::to_string(parameter)},
            {"root", root},
            {"bracket", {bracket_lo, bracket_hi}},
            {"bracket_values", {value_lo, value_hi}},
            {"bracket_parity", {magtunnel::to_string(parity_lo), magtunnel::to_string(parity_hi)}},
            {"tracked", tracked},
            {"achieved", achieved},
            {"baseline", baseline},
            {"relative", relative()},
            {"evaluations", evaluations},
            {"trace", tr}};
}

double baseline_splitting(const SophonFamily& family, const TuneSettings& settings) {
    const auto rep = analyze_double_well(family.bare_config(), settings.grid, settings.params, parity_only(settings));
    return std::abs(*rep.e_even - *rep.e_odd);
}

namespace {

TuneResult tune_splitting(const SophonFamily& family, SweepParameter parameter, double lo, double hi,
                          const TuneSettings& settings, double width, bool need_parity_change) {
    if (!(hi > lo)) throw InvalidArgument("bracket must satisfy lo < hi");
    if (!(width > 0.0)) throw InvalidArgument("bracket width must be positive");
    auto eval = [&](double x) {
        const auto rep =
            analyze_double_well(family.with(parameter, x).config(), settings.grid, settings.params, parity_only(settings));
        return SignSample{x, *rep.e_even - *rep.e_odd, *rep.parity_uncertainty, *rep.ground_parity};
    };
    int evaluations = 2;
    std::vector<std::array<double, 2>> trace;
    const SignSample a = eval(lo);
    const SignSample b = eval(hi);
    trace.push_back({a.x, a.f});
    trace.push_back({b.x, b.f});
    if (need_parity_change) {
        if (a.parity == b.parity || a.parity == Parity::degenerate || b.parity == Parity::degenerate) {
            throw InvalidArgument("no parity change in [" + fmt17(lo) + ", " + fmt17(hi) + "]: ground parity " +
                                  to_string(a.parity) + " at both ends");
        }
    } else if (sign(a.f) * sign(b.f) > 0) {
        throw InvalidArgument("no sign change of E_even - E_odd in [" + fmt17(lo) + ", " + fmt17(hi) + "]");
    }
    const double baseline = baseline_splitting(family, settings);
    ++evaluations;
    TuneResult out = bracketed_root(eval, a, b, width, 1e-4 * baseline, evaluations, trace);
    out.parameter = parameter;
    out.baseline = baseline;
    out.evaluations = evaluations;
    out.trace = std::move(trace);
    return out;
}

}  // namespace

TuneResult find_zero_splitting(const SophonFamily& family, SweepParameter parameter, double lo, double hi,
                               const TuneSettings& settings, double width) {
    return tune_splitting(family, parameter, lo, hi, settings, width, false);
}

TuneResult find_parity_transition(const SophonFamily& family, SweepParameter parameter, double lo, double hi,
                                  const TuneSettings& settings, double width) {
    return tune_splitting(family, parameter, lo, hi, settings, width, true);
}

TuneResult find_zero_rho(const SophonFamily& family, SweepParameter parameter, double lo, double hi,
                         const TuneSettings& settings, double width) {
    if (!(hi > lo)) throw InvalidArgument("bracket must satisfy lo < hi");
    auto eval = [&](double x) {
        const auto rep =
            analyze_double_well(family.with(parameter, x).config(), settings.grid, settings.params, rho_only(settings));
        return SignSample{x, rep.rho.real(), rep.one_well_uncertainty, Parity::degenerate};
    };
    int evaluations = 2;
    std::vector<std::array<double, 2>> trace;
    const SignSample a = eval(lo);
    const SignSample b = eval(hi);
    trace.push_back({a.x, a.f});
    trace.push_back({b.x, b.f});
    if (sign(a.f) * sign(b.f) > 0) {
        throw InvalidArgument("no sign change of rho in [" + fmt17(lo) + ", " + fmt17(hi) + "]");
    }
    const double baseline =
        std::abs(analyze_double_well(family.bare_config(), settings.grid, settings.params, rho_only(settings)).rho);
    ++evaluations;
    TuneResult out = bracketed_root(eval, a, b, width, 1e-4 * baseline, evaluations, trace);
    out.parameter = parameter;
    out.tracked = "Re rho";
    out.baseline = baseline;
    out.evaluations = evaluations;
    out.trace = std::move(trace);
    return out;
}

Complex asymmetric_rho(const AsymmetricFamily& family, double s1, double s2, const TuneSettings& settings) {
    const auto sym = check_inversion_symmetric(double_well(family.config(s1, s2)), settings.grid);
    if (sym.is_symmetric) {
        throw InvalidArgument("configuration is inversion symmetric; the asymmetric root-find needs free mode");
    }
    return evaluate_rho(family, s1, s2, settings);
}

nlohmann::json AsymmetricRoot::to_json() const {
    nlohmann::json tr = nlohmann::json::array();
    for (const auto& t : trace) tr.push_back({t[0], t[1], t[2], t[3]});
    nlohmann::json cell_json;
    if (cell) {
        nlohmann::json vals = nlohmann::json::array();
        for (const auto& v : cell_values) vals.push_back({v.real(), v.imag()});
        cell_json = {{"s1", {(*cell)[0], (*cell)[1]}}, {"s2", {(*cell)[2], (*cell)[3]}}, {"rho_corners", vals}};
    }
    return {{"s1", s1},
            {"s2", s2},
            {"Re_rho", rho.real()},
            {"Im_rho", rho.imag()},
            {"abs_rho", std::abs(rho)},
            {"Re_rho_baseline", rho_baseline.real()},
            {"Im_rho_baseline", rho_baseline.imag()},
            {"relative", relative()},
            {"inversion_symmetric", inversion_symmetric},
            {"max_asymmetry", max_asymmetry},
            {"delta", delta ? nlohmann::json(*delta) : nlohmann::json()},
            {"sign_change_cell", cell_json},
            {"evaluations", evaluations},
            {"newton_steps", newton_steps},
            {"trace", tr}};
}

AsymmetricRoot find_zero_rho_asymmetric(const AsymmetricFamily& family, const AsymmetricSearch& search,
                                        const TuneSettings& settings) {
    if (search.scan_steps < 2) throw InvalidArgument("scan needs at least 2 steps per axis");
    AsymmetricRoot out;
    auto f = [&](double s1, double s2) {
        const Complex r = out.evaluations == 0 ? asymmetric_rho(family, s1, s2, settings)
                                               : evaluate_rho(family, s1, s2, settings);
        ++out.evaluations;
        out.trace.push_back({s1, s2, r.real(), r.imag()});
        return r;
    };

    const auto base = analyze_double_well(family.bare_config(), settings.grid, settings.params, rho_only(settings));
    out.rho_baseline = base.rho;
    const double target = search.target * std::abs(out.rho_baseline);

    // Coarse scan.
    const auto g1 = linspace(search.s1_lo, search.s1_hi, search.scan_steps);
    const auto g2 = linspace(search.s2_lo, search.s2_hi, search.scan_steps);
    const int m = search.scan_steps;
    std::vector<Complex> grid(static_cast<std::size_t>(m) * m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) grid[i * m + j] = f(g1[i], g2[j]);
    }
    auto straddles = [](const std::array<Complex, 4>& c) {
        auto changes = [&](auto part) {
            bool pos = false, neg = false;
            for (const auto& z : c) (part(z) > 0.0 ? pos : neg) = true;
            return pos && neg;
        };
        return changes([](Complex z) { return z.real(); }) && changes([](Complex z) { return z.imag(); });
    };
    double best_cell = std::numeric_limits<double>::infinity();
    double x1 = g1[0], x2 = g2[0];
    double best_point = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            const double a = std::abs(grid[i * m + j]);
            if (!out.cell && a < best_point) {
                best_point = a;
                x1 = g1[i];
                x2 = g2[j];
            }
            if (i + 1 == m || j + 1 == m) continue;
            const std::array<Complex, 4> c{grid[i * m + j], grid[i * m + j + 1], grid[(i + 1) * m + j],
                                           grid[(i + 1) * m + j + 1]};
            if (!straddles(c)) continue;
            double size = 0.0;
            for (const auto& z : c) size = std::max(size, std::abs(z));
            if (size < best_cell) {
                best_cell = size;
                out.cell = std::array<double, 4>{g1[i], g1[i + 1], g2[j], g2[j + 1]};
                out.cell_values = c;
            }
        }
    }
    if (out.cell) {
        x1 = 0.5 * ((*out.cell)[0] + (*out.cell)[1]);
        x2 = 0.5 * ((*out.cell)[2] + (*out.cell)[3]);
    }
    const double max_step = std::max(g1[1] - g1[0], g2[1] - g2[0]);

    // Damped Newton on (Re rho, Im rho).
    Complex fx = f(x1, x2);
    for (int it = 0; it < search.max_newton && std::abs(fx) > target; ++it) {
        const double hstep = search.fd_step;
        const Complex f1 = f(x1 + hstep, x2);
        const Complex f2 = f(x1, x2 + hstep);
        Eigen::Matrix2d jac;
        jac << (f1 - fx).real() / hstep, (f2 - fx).real() / hstep, (f1 - fx).imag() / hstep,
            (f2 - fx).imag() / hstep;
        const double scale = jac.cwiseAbs().maxCoeff();
        // TODO: fall back to bisecting the sign-change cell when the Jacobian degenerates.
        if (!(std::abs(jac.determinant()) > 1e-10 * scale * scale)) {
            throw Error("Jacobian of (Re rho, Im rho) is singular at (" + fmt17(x1) + ", " + fmt17(x2) + ") after " +
                        std::to_string(out.evaluations) + " evaluations");
        }
        Eigen::Vector2d step = -jac.inverse() * Eigen::Vector2d(fx.real(), fx.imag());
        if (step.norm() > max_step) step *= max_step / step.norm();
        bool improved = false;
        for (int halve = 0; halve < 6; ++halve) {
            const double y1 = x1 + step[0], y2 = x2 + step[1];
            const Complex fy = f(y1, y2);
            if (std::abs(fy) < std::abs(fx)) {
                x1 = y1;
                x2 = y2;
                fx = fy;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        ++out.newton_steps;
        if (!improved) break;
    }
    out.s1 = x1;
    out.s2 = x2;
    out.rho = fx;
    const auto sym = check_inversion_symmetric(double_well(family.config(x1, x2)), settings.grid);
    out.inversion_symmetric = sym.is_symmetric;
    out.max_asymmetry = sym.max_asymmetry;
    if (search.solve_delta) {
        HoppingOptions o = rho_only(settings);
        o.full_solve = true;
        out.delta = analyze_double_well(family.config(x1, x2), settings.grid, settings.params, o).delta;
    }
    return out;
}

FamilyProximity family_proximity_report(const PotentialSpec& dressed, const PotentialSpec& bare, const Grid2D& grid) {
    FamilyProximity out;
    int count = 0;
    for (int k = 0; k < grid.size(); ++k) {
        const Point p = grid.point(k);
        const double d = std::abs(dressed(p) - bare(p));
        out.sup_deviation = std::max(out.sup_deviation, d);
        if (d != 0.0) ++count;
    }
    out.deviation_area = count * grid.cell_area();
    return out;
}

}  // namespace magtunnel
