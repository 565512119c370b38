#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "magtunnel/error.hpp"
#include "magtunnel/sophon.hpp"

using namespace magtunnel;

namespace {

// Coarser than the calibrated default; enough to keep sophons resolved on two cells.
TuneSettings small_settings() {
    TuneSettings t;
    t.grid = aligned_grid(2.0, 1.0, 1.5, 160);
    return t;
}

SweepRow row(double value, double gap, double rho, double pred, double theta, double margin) {
    SweepRow r;
    r.value = value;
    r.e_even = gap;
    r.e_odd = 0.0;
    r.rho = {rho, 0.0};
    r.rho_pred = pred;
    r.theta_model = theta;
    r.dominance_margin = margin;
    return r;
}

}  // namespace

TEST_CASE("interaction table against hand-computed distances") {
    const RadialBump planet{{0, 0}, 1.0, 1.0};
    const SophonDressing right = rectangle_layout(planet, 1.4, 0.5, 0.25, -2.0);
    const SophonDressing left = rectangle_layout(planet, 1.4, 0.5, 0.25, -2.0);
    const MagneticParams p{6.0, 0.25};
    const InteractionTable t = predict_interactions(left, right, 2.0, p);
    REQUIRE(t.left_centers.size() == 5);
    // Index of the inversion image of each center (planet maps to planet).
    std::vector<int> image(5, 0);
    for (int a = 1; a < 5; ++a)
        for (int c = 1; c < 5; ++c)
            if (right.sophons[c - 1].offset == -right.sophons[a - 1].offset) image[a] = c;
    for (int mu = 0; mu < 5; ++mu) {
        const Point xl = mu == 0 ? Point{-2.0, 0} : Point{-2.0, 0} + right.sophons[mu - 1].offset;
        for (int nu = 0; nu < 5; ++nu) {
            const Point xr = nu == 0 ? Point{2.0, 0} : Point{2.0, 0} + right.sophons[nu - 1].offset;
            const double pref = (mu ? 2.0 : 1.0) * (nu ? 2.0 : 1.0);
            const double oracle = pref * std::exp(-(6.0 * 0.25 / 4.0) * (xl - xr).norm2());
            CHECK(t.magnitude(mu, nu) == doctest::Approx(oracle).epsilon(1e-13));
            // Inversion maps the pair (mu on the left, nu on the right) to (image nu, image mu).
            CHECK(t.magnitude(mu, nu) == doctest::Approx(t.magnitude(image[nu], image[mu])).epsilon(1e-13));
        }
    }
    const auto [mu, nu] = t.dominant();
    CHECK(mu > 0);
    CHECK(nu > 0);
    CHECK(t.to_json()["magnitude"].size() == 5);
}

TEST_CASE("zero amplitude leaves only the planet term") {
    const RadialBump planet{{0, 0}, 1.0, 1.0};
    const SophonDressing d = rectangle_layout(planet, 1.4, 0.5, 0.25, 0.0);
    const InteractionTable t = predict_interactions(d, d, 2.0, {6.0, 0.25});
    CHECK(t.dominant() == std::pair(0, 0));
    for (int mu = 1; mu < 5; ++mu) CHECK(t.magnitude(mu, 0) == 0.0);
    const auto pr = predict_rho(d, d, 2.0, {6.0, 0.25}, 0.0);
    CHECK(pr.rho_pred == 0.0);
    CHECK(pr.dominance_margin == 1.0);
    CHECK(pr.advisory_only);
}

TEST_CASE("sophon term overtakes the planet term past the crossover amplitude") {
    const RadialBump planet{{0, 0}, 1.0, 1.0};
    const MagneticParams p{6.0, 0.25};
    const double k = p.field() / 4;
    // Nearest left sophon to the right planet sits at distance D with |x^L_0 - x^R_0| = 4.
    const double D2 = std::pow(4.0 - 1.4, 2) + 0.25;
    const double tau_star = std::exp(-k * (16.0 - D2));
    for (double f : {0.9, 1.1}) {
        const auto d = rectangle_layout(planet, 1.4, 0.5, 0.25, -f * tau_star);
        const auto t = predict_interactions(d, d, 2.0, p);
        // Sophon-sophon terms carry tau^2 and stay below here.
        const double best_single = std::max({t.magnitude(1, 0), t.magnitude(2, 0), t.magnitude(3, 0), t.magnitude(4, 0)});
        CHECK((best_single > t.magnitude(0, 0)) == (f > 1.0));
    }
}

TEST_CASE("asymptotic prediction closed form") {
    const RadialBump planet{{0, 0}, 1.0, 1.0};
    const MagneticParams p{6.0, 0.25};
    for (double s : {0.3, 0.5, 0.8}) {
        const auto d = rectangle_layout(planet, 1.4, s, 0.25, -2.0);
        const auto pr = predict_rho(d, d, 2.0, p, -2.0);
        const double D = std::hypot(4.0 - 1.4, s);
        CHECK(pr.D == doctest::Approx(D).epsilon(1e-14));
        CHECK(pr.theta_model == doctest::Approx(p.field() * 2.0 * s).epsilon(1e-14));
        CHECK(pr.rho_pred == doctest::Approx(-2.0 * std::exp(-p.field() * D * D / 4) * std::cos(p.field() * 2.0 * s)).epsilon(1e-12));
        CHECK_FALSE(pr.advisory_only);
    }
    // theta = pi/2 kills the prediction.
    const double s_half = std::numbers::pi / 2 / (p.field() * 2.0);
    const auto d = rectangle_layout(planet, 1.4, 0.4, 0.25, -2.0);
    SophonDressing q = d;
    for (auto& so : q.sophons) so.offset.x2 = so.offset.x2 > 0 ? s_half : -s_half;
    CHECK(std::abs(predict_rho(q, q, 2.0, p, -2.0).rho_pred) < 1e-15);
}

TEST_CASE("family plumbing") {
    SophonFamily f;
    CHECK(f.with(SweepParameter::s, 0.7).s == 0.7);
    CHECK(f.with(SweepParameter::dx, 1.5).get(SweepParameter::dx) == 1.5);
    CHECK(f.with(SweepParameter::tau, -1.0).get(SweepParameter::tau) == -1.0);
    CHECK(parse_sweep_parameter(to_string(SweepParameter::dx)) == SweepParameter::dx);
    CHECK_THROWS_AS(parse_sweep_parameter("radius"), InvalidArgument);

    const auto cfg = f.config();
    CHECK(cfg.mode == SymmetryMode::inversion_symmetric);
    CHECK(cfg.left_well.same_wells(cfg.right_well.mirrored()));
    CHECK(f.bare_config().right_well.same_wells(PotentialSpec({f.planet})));

    SophonFamily fb = f;
    fb.flat_band = true;
    CHECK(fb.dressing().sophons.size() == 8);
    const auto back = SophonFamily::from_json(fb.to_json());
    CHECK(back.flat_band);
    CHECK(back.to_json() == fb.to_json());

    AsymmetricFamily a;
    CHECK(AsymmetricFamily::from_json(a.to_json()).to_json() == a.to_json());
    const auto ac = a.config(0.6, 0.4);
    CHECK(ac.mode == SymmetryMode::free);
    CHECK(ac.left_well == ac.right_well);
    const Grid2D g = aligned_grid(2.0, 1.0, 1.5, 128);
    CHECK_FALSE(check_inversion_symmetric(double_well(ac), g).is_symmetric);
}

TEST_CASE("zero amplitude family reproduces the bare hopping") {
    SophonFamily f;
    f.tau = 0.0;
    const TuneSettings t = small_settings();
    HoppingOptions o;
    o.solver = t.solver;
    o.full_solve = false;
    o.parity_solve = false;
    const auto dressed = analyze_double_well(f.config(), t.grid, t.params, o);
    const auto bare = analyze_double_well(f.bare_config(), t.grid, t.params, o);
    CHECK(dressed.rho == bare.rho);
}

TEST_CASE("family proximity: zero, sup and area scaling") {
    const RadialBump planet{{0, 0}, 1.0, 1.0};
    const Grid2D g(2.5, 501);  // h = 0.01, sophon centers on grid points
    const PotentialSpec bare({planet});
    const auto zero = family_proximity_report(sophon_dress(rectangle_layout(planet, 1.4, 0.5, 0.25, 0.0)).potential, bare, g);
    CHECK(zero.sup_deviation == 0.0);
    CHECK(zero.deviation_area == 0.0);

    const double r = 0.1;
    const auto big = family_proximity_report(sophon_dress(rectangle_layout(planet, 1.4, 0.5, r, -0.3)).potential, bare, g);
    CHECK(big.sup_deviation == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(big.deviation_area == doctest::Approx(4 * std::numbers::pi * r * r).epsilon(0.05));
    const auto small = family_proximity_report(sophon_dress(rectangle_layout(planet, 1.4, 0.5, r / 2, -0.3)).potential, bare, g);
    CHECK(small.deviation_area / big.deviation_area == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("sweep bookkeeping on synthetic rows") {
    const std::vector<SweepRow> rows = {
        row(0.3, -1e-5, -5e-6, -0.1, 0.9, 900),   // agrees
        row(0.4, -1e-6, -5e-7, 0.2, 1.2, 900),    // disagrees
        row(0.5, 2e-6, 1e-6, 0.1, 1.5, 900),      // |cos| < 0.3, skipped
        row(0.6, 3e-6, 1.5e-6, 0.3, 1.8, 5),      // weak dominance, skipped
        row(0.7, -1e-6, -5e-7, -0.2, 2.1, 900),   // sign flips back, agrees
    };
    const auto agree = prediction_agreement(rows);
    CHECK(agree.eligible == 3);
    CHECK(agree.agreeing == 2);
    CHECK(agree.fraction() == doctest::Approx(2.0 / 3.0));
    CHECK(sign_change_cells(rows) == std::vector<int>{1, 3});
    CHECK(prediction_agreement({}).fraction() == 0.0);

    CHECK(linspace(0.3, 1.0, 8).front() == 0.3);
    CHECK(linspace(0.3, 1.0, 8).back() == 1.0);
    CHECK(linspace(0.0, 1.0, 5)[1] == 0.25);
    CHECK_THROWS_AS(linspace(0, 1, 1), InvalidArgument);

    std::ostringstream empty;
    write_sweep_csv(empty, {}, SweepParameter::s);
    const std::string header = empty.str();
    CHECK(std::count(header.begin(), header.end(), '\n') == 1);
    CHECK(header.rfind("s,", 0) == 0);
    CHECK(sweep_json({}, SweepParameter::s).empty());
}

TEST_CASE("sweep rows are internally consistent") {
    const TuneSettings t = small_settings();
    const auto rows = sweep(SophonFamily{}, SweepParameter::s, {0.7, 0.35}, t);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].value == 0.35);
    for (const auto& r : rows) {
        CHECK(r.delta() == std::abs(r.signed_gap()));
        CHECK(r.theta_model == doctest::Approx(t.params.field() * 2.0 * r.value));
        if (r.parity != Parity::degenerate) CHECK((r.parity == Parity::even) == (r.signed_gap() < 0));
        CHECK(r.im_rho_over_abs_rho < 1e-4);
    }
    // Coarse grids are refused before any solve.
    TuneSettings coarse = t;
    coarse.grid = aligned_grid(2.0, 1.0, 1.5, 64);
    CHECK_THROWS_AS(sweep(SophonFamily{}, SweepParameter::s, {0.5}, coarse), InvalidArgument);
}

TEST_CASE("bracketed zero splitting and parity transition") {
    const TuneSettings t = small_settings();
    const TuneResult r = find_zero_splitting(SophonFamily{}, SweepParameter::s, 0.4, 0.7, t);
    CHECK(r.bracket_lo < r.bracket_hi);
    CHECK(r.bracket_hi - r.bracket_lo <= 1e-4 * 1.0001);
    CHECK(r.root >= r.bracket_lo);
    CHECK(r.root <= r.bracket_hi);
    CHECK(r.value_lo * r.value_hi < 0.0);
    CHECK(r.parity_lo != r.parity_hi);
    CHECK(r.achieved <= 1e-3 * r.baseline);
    CHECK(r.evaluations == static_cast<int>(r.trace.size()) + 1);
    const auto j = r.to_json();
    CHECK(j["parameter"] == "s");
    CHECK(j["relative"].get<double>() == r.relative());

    const TuneResult pt = find_parity_transition(SophonFamily{}, SweepParameter::s, 0.4, 0.7, t);
    CHECK(pt.root == doctest::Approx(r.root).epsilon(1e-9));
}

TEST_CASE("root finders refuse brackets without a sign change") {
    const TuneSettings t = small_settings();
    CHECK_THROWS_AS(find_zero_splitting(SophonFamily{}, SweepParameter::s, 0.6, 0.5, t), InvalidArgument);
    CHECK_THROWS_AS(find_zero_splitting(SophonFamily{}, SweepParameter::s, 0.3, 0.4, t), InvalidArgument);
    // At zero field nothing can flip the ground-state parity.
    TuneSettings zero_field = t;
    zero_field.params.b = 0.0;
    CHECK_THROWS_AS(find_parity_transition(SophonFamily{}, SweepParameter::s, 0.3, 0.9, zero_field), InvalidArgument);
    CHECK_THROWS_AS(find_zero_rho(SophonFamily{}, SweepParameter::s, 0.3, 0.9, zero_field), InvalidArgument);
}

TEST_CASE("asymmetric rho needs a non-symmetric configuration") {
    AsymmetricFamily f;
    f.tau_down = f.tau_up;
    CHECK_THROWS_AS(asymmetric_rho(f, 0.5, 0.5, small_settings()), InvalidArgument);
    AsymmetricSearch s;
    s.scan_steps = 1;
    CHECK_THROWS_AS(find_zero_rho_asymmetric(AsymmetricFamily{}, s, small_settings()), InvalidArgument);
}
