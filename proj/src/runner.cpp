#include "magtunnel/runner.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "magtunnel/format.hpp"

namespace magtunnel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr Scenario kScenarios[] = {Scenario::onewell, Scenario::doublewell, Scenario::theorem1, Scenario::sweep,
                                   Scenario::tune2,   Scenario::tune3,      Scenario::crystal,  Scenario::validate};

// Strict reader over one JSON object: every key must be consumed.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "(root)" : path_, "expected an object");
    }

    std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key, double def) {
        if (!has(key)) return mark(key), def;
        const json& v = raw(key);
        if (!v.is_number()) throw ConfigError(path(key), "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(path(key), "must be finite");
        return x;
    }

    int integer(const std::string& key, int def) {
        if (!has(key)) return mark(key), def;
        const json& v = raw(key);
        if (!v.is_number_integer()) throw ConfigError(path(key), "expected an integer");
        return v.get<int>();
    }

    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) {
        if (!has(key)) return mark(key), def;
        const json& v = raw(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            throw ConfigError(path(key), "expected a nonnegative integer");
        }
        return v.get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool def) {
        if (!has(key)) return mark(key), def;
        const json& v = raw(key);
        if (!v.is_boolean()) throw ConfigError(path(key), "expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key, const std::string& def) {
        if (!has(key)) return mark(key), def;
        const json& v = raw(key);
        if (!v.is_string()) throw ConfigError(path(key), "expected a string");
        return v.get<std::string>();
    }

    std::array<double, 2> pair(const std::string& key, std::array<double, 2> def) {
        if (!has(key)) return mark(key), def;
        const json& v = raw(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
            throw ConfigError(path(key), "expected [number, number]");
        }
        return {v[0].get<double>(), v[1].get<double>()};
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!used_.count(it.key())) throw ConfigError(path(it.key()), "unknown field");
        }
    }

private:
    void mark(const std::string& key) { used_.insert(key); }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

template <class F>
auto wrap(const std::string& field, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(field, e.what());
    }
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void dump17_into(std::string& out, const json& j, int indent, int depth) {
    const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
    const std::string close_pad(static_cast<std::size_t>(indent * depth), ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ",\n";
                first = false;
                out += pad + json(it.key()).dump() + ": ";
                dump17_into(out, it.value(), indent, depth + 1);
            }
            out += "\n" + close_pad + "}";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            out += "[\n";
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) out += ",\n";
                out += pad;
                dump17_into(out, j[i], indent, depth + 1);
            }
            out += "\n" + close_pad + "]";
            return;
        }
        case json::value_t::number_float: {
            // -0 would read back as the integer 0 and change the config hash.
            const double v = j.get<double>() == 0.0 ? 0.0 : j.get<double>();
            out += std::isfinite(v) ? fmt17(v) : "null";
            return;
        }
        default: out += j.dump();
    }
}

// Removes the lock file on scope exit.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".magtunnel.lock") {
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            throw Error("output directory " + dir.string() + " is locked by another run (" + path_.string() + ")");
        }
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
};

class Emitter {
public:
    Emitter(fs::path dir, const RunConfig& cfg) : dir_(std::move(dir)), cfg_(cfg), hash_(cfg.hash_hex()) {}

    void csv(const std::string& name, const std::function<void(std::ostream&)>& body) {
        std::ostringstream ss;
        ss << "# tool=" << kToolName << " version=" << kToolVersion << " schema=" << kSchemaVersion
           << " config_hash=" << hash_ << '\n';
        body(ss);
        write(name + ".csv", ss.str());
    }

    void json_file(const std::string& name, const json& result) {
        json doc = {{"tool", kToolName},
                    {"version", kToolVersion},
                    {"schema", kSchemaVersion},
                    {"config_hash", hash_},
                    {"config", cfg_.to_json()},
                    {"result", result}};
        write(name + ".json", dump17(doc) + "\n");
    }

    std::vector<fs::path> files;

private:
    void write(const std::string& name, const std::string& text) {
        const fs::path p = dir_ / name;
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write " + p.string());
        f << text;
        if (!f) throw Error("failed while writing " + p.string());
        files.push_back(p);
    }

    fs::path dir_;
    const RunConfig& cfg_;
    std::string hash_;
};

TuneSettings tune_settings(const RunConfig& cfg, double d1) {
    TuneSettings s;
    s.params = cfg.params;
    s.grid = cfg.grid.build(d1);
    s.solver = cfg.solver;
    return s;
}

json rows_json(const std::vector<HoppingReport>& rows) {
    json arr = json::array();
    for (const auto& r : rows) arr.push_back(r.to_json());
    return arr;
}

RunOutcome run_onewell(const RunConfig& cfg, Emitter& out) {
    const Grid2D grid = cfg.grid.build(std::nullopt);
    const auto op = assemble_operator(grid, cfg.potential, cfg.params);
    const auto res = solve_lowest(op, cfg.solver);
    json decay;
    if (!cfg.potential.empty() && cfg.potential.compactly_supported()) {
        const Point c = well_center(cfg.potential.wells().front());
        const auto fit = decay_fit(res.eigenvectors[0], c, grid, cfg.potential.support_radius());
        decay = {{"c_fit", fit.c_fit}, {"r2", fit.r2_fit}, {"samples", fit.samples}};
    }
    out.csv("onewell", [&](std::ostream& os) {
        os << "index,eigenvalue,residual,error_bound\n";
        for (int i = 0; i < res.size(); ++i) {
            os << i << ',' << fmt17(res.eigenvalues[i]) << ',' << fmt17(res.residuals[i]) << ','
               << fmt17(res.eigenvalue_errors[i]) << '\n';
        }
    });
    json result = {{"spectrum", res.summary()}, {"operator", op.metadata()}, {"warnings", op.warnings()},
                   {"decay_fit", decay}};
    out.json_file("onewell", result);
    return {0, "onewell: E0 = " + fmt17(res.eigenvalues[0]) + " (" + std::to_string(res.size()) + " eigenvalues)", {},
            result};
}

RunOutcome run_doublewell(const RunConfig& cfg, Emitter& out) {
    const Grid2D grid = cfg.grid.build(cfg.double_well.d1);
    HoppingOptions o;
    o.solver = cfg.solver;
    const auto rep = analyze_double_well(cfg.double_well, grid, cfg.params, o);
    out.csv("doublewell", [&](std::ostream& os) { write_hopping_csv(os, {rep}); });
    json result = rep.to_json();
    out.json_file("doublewell", result);
    return {0,
            "doublewell: rho = " + fmt17(rep.rho.real()) + " + " + fmt17(rep.rho.imag()) + "i, delta = " +
                fmt17(rep.delta),
            {},
            result};
}

RunOutcome run_theorem1(const RunConfig& cfg, Emitter& out) {
    const Grid2D grid = cfg.grid.build(cfg.double_well.d1);
    HoppingOptions o;
    o.solver = cfg.solver;
    o.full_solve = false;
    const auto rows = theorem1_ratio(cfg.double_well, cfg.lambdas, cfg.params, grid, o);
    bool decreasing = true, negative = true, real = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        negative = negative && rows[i].rho.real() < 0.0;
        real = real && rows[i].im_rho_over_abs_rho <= 1e-6;
        if (i > 0) decreasing = decreasing && std::abs(rows[i].ratio() - 1) < std::abs(rows[i - 1].ratio() - 1);
    }
    out.csv("theorem1", [&](std::ostream& os) { write_hopping_csv(os, rows); });
    json result = {{"rows", rows_json(rows)},
                   {"ratio_error_decreasing", decreasing},
                   {"rho_negative", negative},
                   {"rho_real", real}};
    out.json_file("theorem1", result);
    std::string last = rows.empty() ? "none" : fmt17(rows.back().ratio());
    return {0, "theorem1: " + std::to_string(rows.size()) + " rows, last ratio " + last, {}, result};
}

json sweep_summary(const std::vector<SweepRow>& rows, SweepParameter p) {
    const auto agree = prediction_agreement(rows);
    return {{"rows", sweep_json(rows, p)},
            {"sign_change_cells", sign_change_cells(rows)},
            {"prediction_agreement", {{"eligible", agree.eligible}, {"agreeing", agree.agreeing},
                                      {"fraction", agree.fraction()}}}};
}

RunOutcome run_sweep(const RunConfig& cfg, Emitter& out) {
    const auto settings = tune_settings(cfg, cfg.family.d1);
    const auto values = linspace(cfg.sweep.lo, cfg.sweep.hi, cfg.sweep.steps);
    const auto rows = sweep(cfg.family, cfg.sweep.parameter, values, settings);
    out.csv("sweep", [&](std::ostream& os) { write_sweep_csv(os, rows, cfg.sweep.parameter); });
    json result = sweep_summary(rows, cfg.sweep.parameter);
    out.json_file("sweep", result);
    return {0, "sweep: " + std::to_string(rows.size()) + " rows, " +
                   std::to_string(result["sign_change_cells"].size()) + " sign change(s)",
            {}, result};
}

RunOutcome run_tune2(const RunConfig& cfg, Emitter& out) {
    const auto settings = tune_settings(cfg, cfg.family.d1);
    const auto p = cfg.sweep.parameter;
    const auto rows = sweep(cfg.family, p, linspace(cfg.sweep.lo, cfg.sweep.hi, cfg.sweep.steps), settings);
    out.csv("tune2_sweep", [&](std::ostream& os) { write_sweep_csv(os, rows, p); });
    const auto cells = sign_change_cells(rows);
    if (cells.empty()) throw Error("sweep shows no sign change of E_even - E_odd; widen sweep.lo/sweep.hi");
    const auto& a = rows[cells.front()];
    const auto& b = rows[cells.front() + 1];
    const auto zero = find_zero_splitting(cfg.family, p, a.value, b.value, settings);
    const auto parity = find_parity_transition(cfg.family, p, a.value, b.value, settings);
    out.csv("tune2", [&](std::ostream& os) {
        os << "search,root,bracket_lo,bracket_hi,parity_lo,parity_hi,achieved,baseline,relative\n";
        for (const auto* r : {&zero, &parity}) {
            os << (r == &zero ? "zero_splitting" : "parity_transition") << ',' << fmt17(r->root) << ','
               << fmt17(r->bracket_lo) << ',' << fmt17(r->bracket_hi) << ',' << to_string(r->parity_lo) << ','
               << to_string(r->parity_hi) << ',' << fmt17(r->achieved) << ',' << fmt17(r->baseline) << ','
               << fmt17(r->relative()) << '\n';
        }
    });
    json result = sweep_summary(rows, p);
    result["zero_splitting"] = zero.to_json();
    result["parity_transition"] = parity.to_json();
    result["roots_agree"] = std::abs(zero.root - parity.root) <= 1e-4;
    out.json_file("tune2", result);
    return {0, "tune2: root " + std::string(to_string(p)) + " = " + fmt17(zero.root) + ", |delta|/baseline = " +
                   fmt17(zero.relative()) + ", parity " + to_string(parity.parity_lo) + " -> " +
                   to_string(parity.parity_hi),
            {}, result};
}

RunOutcome run_tune3(const RunConfig& cfg, Emitter& out) {
    const auto settings = tune_settings(cfg, cfg.asymmetric.d1);
    const auto root = find_zero_rho_asymmetric(cfg.asymmetric, cfg.search, settings);
    out.csv("tune3", [&](std::ostream& os) {
        os << "s1,s2,Re_rho,Im_rho\n";
        for (const auto& t : root.trace) {
            os << fmt17(t[0]) << ',' << fmt17(t[1]) << ',' << fmt17(t[2]) << ',' << fmt17(t[3]) << '\n';
        }
    });
    json result = root.to_json();
    out.json_file("tune3", result);
    return {0, "tune3: root (" + fmt17(root.s1) + ", " + fmt17(root.s2) + "), |rho|/|rho_baseline| = " +
                   fmt17(root.relative()),
            {}, result};
}

RunOutcome run_crystal(const RunConfig& cfg, Emitter& out) {
    const double spacing = 2.0 * cfg.family.d1;
    const auto& cs = cfg.crystal;
    json result;
    Complex rho_tuned, rho_untuned;
    std::string provenance;
    if (cs.rho) {
        rho_tuned = rho_untuned = *cs.rho;
        provenance = "analytic";
    } else {
        provenance = "continuum";
        const auto settings = tune_settings(cfg, cfg.family.d1);
        HoppingOptions o;
        o.solver = settings.solver;
        o.full_solve = false;
        o.parity_solve = false;
        SophonFamily fam = cfg.family;
        fam.flat_band = true;
        const auto untuned = numeric_lattice_hopping(PotentialSpec({fam.planet}), spacing, settings.params,
                                                     settings.grid, o);
        const auto tune = find_zero_rho(fam, cfg.sweep.parameter, cs.tune_lo, cs.tune_hi, settings);
        const SophonFamily tuned_family = fam.with(cfg.sweep.parameter, tune.root);
        const auto tuned = numeric_lattice_hopping(sophon_dress(tuned_family.dressing()).potential, spacing,
                                                   settings.params, settings.grid, o);
        rho_untuned = untuned.rho;
        rho_tuned = tuned.rho;
        result["tuning"] = tune.to_json();
        result["tuned_family"] = tuned_family.to_json();
        result["rho_ratio"] = std::abs(rho_tuned) / std::abs(rho_untuned);
    }
    result["rho_tuned"] = {rho_tuned.real(), rho_tuned.imag()};
    result["rho_untuned"] = {rho_untuned.real(), rho_untuned.imag()};

    const auto model_t = build_crystal_tb(rho_tuned, cfg.params, spacing, cs.patch_n);
    const auto model_u = build_crystal_tb(rho_untuned, cfg.params, spacing, cs.patch_n);
    auto flat_t = flatness_report(model_t, std::abs(rho_untuned));
    auto flat_u = flatness_report(model_u, std::abs(rho_untuned));
    flat_t.rho_provenance = flat_u.rho_provenance = provenance;
    result["patch_tuned"] = flat_t.to_json();
    result["patch_untuned"] = flat_u.to_json();
    result["bandwidth_ratio"] = flat_u.bandwidth > 0.0 ? json(flat_t.bandwidth / flat_u.bandwidth) : json();
    result["next_nearest_estimate"] = model_t.next_nearest_estimate();

    const Flux flux = snap_flux(plaquette_flux_quanta(cfg.params, spacing));
    auto bands = flatness_report(bloch_bands(rho_tuned, flux, cs.k_grid), std::abs(rho_untuned));
    bands.rho_provenance = provenance;
    result["bloch_tuned"] = bands.to_json();

    // Bloch/patch consistency at the check flux with unit hopping.
    const MagneticParams check_params{2.0 * std::numbers::pi * cs.check_flux.value(), 1.0};
    const auto check_patch = patch_spectrum(build_crystal_tb(1.0, check_params, 1.0, cs.patch_n));
    const auto check_bands = bloch_bands(1.0, cs.check_flux, cs.k_grid);
    const double fatten = 4.0 / cs.patch_n;
    const auto open = contained_in_bands(check_patch, check_bands, fatten);
    json consistency = {{"flux", {cs.check_flux.p, cs.check_flux.q}},
                        {"open_patch", {{"total", open.total}, {"outside", open.outside},
                                        {"worst_excess", open.worst_excess}, {"tolerance", fatten}}}};
    if (cs.patch_n % cs.check_flux.q == 0) {
        const auto torus = torus_spectrum(1.0, cs.check_flux, cs.patch_n);
        const auto t = contained_in_bands(torus, check_bands, 1e-9);
        consistency["torus"] = {{"total", t.total}, {"outside", t.outside}, {"worst_excess", t.worst_excess}};
    }
    result["bloch_patch_consistency"] = consistency;

    out.csv("crystal_bands", [&](std::ostream& os) { write_bands_csv(os, bands); });
    out.csv("crystal_patch", [&](std::ostream& os) {
        os << "index,untuned,tuned\n";
        for (std::size_t i = 0; i < flat_t.spectrum.size(); ++i) {
            os << i << ',' << fmt17(flat_u.spectrum[i]) << ',' << fmt17(flat_t.spectrum[i]) << '\n';
        }
    });
    out.json_file("crystal", result);
    return {0, "crystal: W_tuned/W_untuned = " + (flat_u.bandwidth > 0.0 ? fmt17(flat_t.bandwidth / flat_u.bandwidth)
                                                                        : std::string("n/a")),
            {}, result};
}

RunOutcome run_validate(const RunConfig& cfg, Emitter& out) {
    const auto checks = validate_suite(cfg.seed);
    json arr = json::array();
    bool all = true;
    for (const auto& c : checks) {
        arr.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}, {"data", c.data}});
        all = all && c.pass;
    }
    out.csv("validate", [&](std::ostream& os) {
        os << "check,pass,detail\n";
        for (const auto& c : checks) os << c.name << ',' << (c.pass ? 1 : 0) << ",\"" << c.detail << "\"\n";
    });
    json result = {{"checks", arr}, {"all_pass", all}};
    out.json_file("validate", result);
    int passed = static_cast<int>(std::count_if(checks.begin(), checks.end(), [](const auto& c) { return c.pass; }));
    return {all ? 0 : 1,
            "validate: " + std::to_string(passed) + "/" + std::to_string(checks.size()) + " checks pass", {}, result};
}

}  // namespace

std::string dump17(const json& j) {
    std::string out;
    dump17_into(out, j, 2, 0);
    return out;
}

const char* to_string(Scenario s) {
    switch (s) {
        case Scenario::onewell: return "onewell";
        case Scenario::doublewell: return "doublewell";
        case Scenario::theorem1: return "theorem1";
        case Scenario::sweep: return "sweep";
        case Scenario::tune2: return "tune2";
        case Scenario::tune3: return "tune3";
        case Scenario::crystal: return "crystal";
        case Scenario::validate: return "validate";
    }
    return "?";
}

Scenario parse_scenario(const std::string& name) {
    for (Scenario s : kScenarios) {
        if (name == to_string(s)) return s;
    }
    throw ConfigError("scenario", "unknown scenario '" + name + "'");
}

Grid2D GridSpec::build(std::optional<double> d1) const {
    if (n < 16) throw ConfigError("grid.n", "needs at least 16 points per axis");
    if (half_width) return Grid2D(*half_width, n);
    if (!d1) return Grid2D(4.0, n);
    return aligned_grid(*d1, reach, margin, n);
}

RunConfig default_config(Scenario s) {
    RunConfig c;
    c.scenario = s;
    c.potential = radial_bump(1.0, 1.0);
    c.double_well = DoubleWellConfig::symmetric(radial_bump(1.0, 1.0), 2.0);
    c.lambdas = {4.0, 6.0, 8.0};
    switch (s) {
        case Scenario::onewell:
            c.grid.n = 128;
            c.grid.half_width = 4.0;
            c.solver.k = 4;
            break;
        case Scenario::doublewell:
            c.grid.n = 128;
            c.solver.k = 3;
            break;
        case Scenario::theorem1:
            c.grid.n = 256;
            c.params = {8.0, 0.25};
            c.double_well = DoubleWellConfig::symmetric(radial_bump(1.0, 1.0), 1.3);
            c.solver.tol = 1e-13;
            break;
        case Scenario::sweep:
        case Scenario::tune2:
        case Scenario::tune3:
        case Scenario::crystal: {
            const TuneSettings t;
            c.grid.n = t.grid.nx();
            c.params = t.params;
            c.solver = t.solver;
            c.family.flat_band = s == Scenario::crystal;
            break;
        }
        case Scenario::validate: break;
    }
    return c;
}

json RunConfig::to_json() const {
    return {{"scenario", to_string(scenario)},
            {"seed", seed},
            {"output_dir", output_dir},
            {"grid",
             {{"n", grid.n},
              {"half_width", grid.half_width ? json(*grid.half_width) : json()},
              {"reach", grid.reach},
              {"margin", grid.margin}}},
            {"params", {{"lambda", params.lambda}, {"b", params.b}}},
            {"lambdas", lambdas},
            {"solver",
             {{"k", solver.k},
              {"tol", solver.tol},
              {"max_iterations", solver.max_iterations},
              {"guard_vectors", solver.guard_vectors}}},
            {"potential", potential.to_json()},
            {"double_well", double_well.to_json()},
            {"family", family.to_json()},
            {"asymmetric_family", asymmetric.to_json()},
            {"sweep", {{"parameter", to_string(sweep.parameter)}, {"lo", sweep.lo}, {"hi", sweep.hi},
                       {"steps", sweep.steps}}},
            {"search",
             {{"s1", {search.s1_lo, search.s1_hi}},
              {"s2", {search.s2_lo, search.s2_hi}},
              {"scan_steps", search.scan_steps},
              {"max_newton", search.max_newton},
              {"fd_step", search.fd_step},
              {"target", search.target},
              {"solve_delta", search.solve_delta}}},
            {"crystal",
             {{"patch_n", crystal.patch_n},
              {"k_grid", crystal.k_grid},
              {"rho", crystal.rho ? json({crystal.rho->real(), crystal.rho->imag()}) : json()},
              {"tune", {crystal.tune_lo, crystal.tune_hi}},
              {"check_flux", {crystal.check_flux.p, crystal.check_flux.q}}}}};
}

RunConfig RunConfig::from_json(const json& j) {
    Fields root(j, "");
    if (!root.has("scenario")) throw ConfigError("scenario", "missing required field");
    const std::string scenario = root.string("scenario", "");
    RunConfig c = default_config(parse_scenario(scenario));
    c.seed = root.unsigned_integer("seed", c.seed);
    c.output_dir = root.string("output_dir", c.output_dir);
    if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");

    if (root.has("grid")) {
        Fields g(root.raw("grid"), "grid");
        c.grid.n = g.integer("n", c.grid.n);
        if (c.grid.n < 16) throw ConfigError("grid.n", "needs at least 16 points per axis");
        if (g.has("half_width")) {
            c.grid.half_width = g.number("half_width", 0.0);
            if (!(*c.grid.half_width > 0.0)) throw ConfigError("grid.half_width", "must be positive");
        } else {
            g.number("half_width", 0.0);
        }
        c.grid.reach = g.number("reach", c.grid.reach);
        c.grid.margin = g.number("margin", c.grid.margin);
        g.finish();
    }
    if (root.has("params")) {
        Fields p(root.raw("params"), "params");
        c.params.lambda = p.number("lambda", c.params.lambda);
        c.params.b = p.number("b", c.params.b);
        p.finish();
    }
    if (!(c.params.lambda > 0.0) || !std::isfinite(c.params.lambda)) {
        throw ConfigError("params.lambda", "must be positive and finite");
    }
    if (!(c.params.b >= 0.0) || !std::isfinite(c.params.b)) throw ConfigError("params.b", "must be nonnegative and finite");
    if (root.has("lambdas")) {
        const json& l = root.raw("lambdas");
        if (!l.is_array() || l.empty()) throw ConfigError("lambdas", "expected a nonempty array of numbers");
        c.lambdas.clear();
        for (std::size_t i = 0; i < l.size(); ++i) {
            if (!l[i].is_number() || !(l[i].get<double>() > 0.0)) {
                throw ConfigError("lambdas[" + std::to_string(i) + "]", "expected a positive number");
            }
            c.lambdas.push_back(l[i].get<double>());
        }
        if (!std::is_sorted(c.lambdas.begin(), c.lambdas.end())) throw ConfigError("lambdas", "must be ascending");
    }
    if (root.has("solver")) {
        Fields s(root.raw("solver"), "solver");
        c.solver.k = s.integer("k", c.solver.k);
        c.solver.tol = s.number("tol", c.solver.tol);
        c.solver.max_iterations = s.integer("max_iterations", c.solver.max_iterations);
        c.solver.guard_vectors = s.integer("guard_vectors", c.solver.guard_vectors);
        s.finish();
        if (c.solver.k < 1) throw ConfigError("solver.k", "must be at least 1");
        if (!(c.solver.tol > 0.0)) throw ConfigError("solver.tol", "must be positive");
        if (c.solver.max_iterations < 1) throw ConfigError("solver.max_iterations", "must be at least 1");
        if (c.solver.guard_vectors < 0) throw ConfigError("solver.guard_vectors", "must be nonnegative");
    }
    c.solver.seed = c.seed;
    if (root.has("potential")) {
        c.potential = wrap("potential", [&] { return PotentialSpec::from_json(root.raw("potential")); });
    }
    if (root.has("double_well")) {
        c.double_well = wrap("double_well", [&] { return DoubleWellConfig::from_json(root.raw("double_well")); });
        wrap("double_well", [&] { return magtunnel::double_well(c.double_well); });
    }
    if (root.has("family")) {
        c.family = wrap("family", [&] { return SophonFamily::from_json(root.raw("family")); });
    }
    wrap("family", [&] { return c.family.dressing(); });
    if (root.has("asymmetric_family")) {
        c.asymmetric =
            wrap("asymmetric_family", [&] { return AsymmetricFamily::from_json(root.raw("asymmetric_family")); });
    }
    if (root.has("sweep")) {
        Fields s(root.raw("sweep"), "sweep");
        c.sweep.parameter =
            wrap("sweep.parameter", [&] { return parse_sweep_parameter(s.string("parameter", "s")); });
        c.sweep.lo = s.number("lo", c.sweep.lo);
        c.sweep.hi = s.number("hi", c.sweep.hi);
        c.sweep.steps = s.integer("steps", c.sweep.steps);
        s.finish();
        if (!(c.sweep.hi > c.sweep.lo)) throw ConfigError("sweep.hi", "must exceed sweep.lo");
        if (c.sweep.steps < 2) throw ConfigError("sweep.steps", "must be at least 2");
    }
    if (root.has("search")) {
        Fields s(root.raw("search"), "search");
        const auto s1 = s.pair("s1", {c.search.s1_lo, c.search.s1_hi});
        const auto s2 = s.pair("s2", {c.search.s2_lo, c.search.s2_hi});
        c.search.s1_lo = s1[0];
        c.search.s1_hi = s1[1];
        c.search.s2_lo = s2[0];
        c.search.s2_hi = s2[1];
        c.search.scan_steps = s.integer("scan_steps", c.search.scan_steps);
        c.search.max_newton = s.integer("max_newton", c.search.max_newton);
        c.search.fd_step = s.number("fd_step", c.search.fd_step);
        c.search.target = s.number("target", c.search.target);
        c.search.solve_delta = s.boolean("solve_delta", c.search.solve_delta);
        s.finish();
        if (c.search.scan_steps < 2) throw ConfigError("search.scan_steps", "must be at least 2");
        if (!(c.search.fd_step > 0.0)) throw ConfigError("search.fd_step", "must be positive");
    }
    if (root.has("crystal")) {
        Fields s(root.raw("crystal"), "crystal");
        c.crystal.patch_n = s.integer("patch_n", c.crystal.patch_n);
        c.crystal.k_grid = s.integer("k_grid", c.crystal.k_grid);
        if (s.has("rho")) {
            const auto r = s.pair("rho", {0.0, 0.0});
            c.crystal.rho = Complex(r[0], r[1]);
        } else {
            s.number("rho", 0.0);
        }
        const auto t = s.pair("tune", {c.crystal.tune_lo, c.crystal.tune_hi});
        c.crystal.tune_lo = t[0];
        c.crystal.tune_hi = t[1];
        const auto f = s.pair("check_flux", {1.0 * c.crystal.check_flux.p, 1.0 * c.crystal.check_flux.q});
        c.crystal.check_flux = Flux{static_cast<int>(f[0]), static_cast<int>(f[1]), 0.0};
        s.finish();
        if (c.crystal.patch_n < 4) throw ConfigError("crystal.patch_n", "must be at least 4");
        if (c.crystal.k_grid < 1) throw ConfigError("crystal.k_grid", "must be at least 1");
        if (!(c.crystal.tune_hi > c.crystal.tune_lo)) throw ConfigError("crystal.tune", "expected [lo, hi] with lo < hi");
        if (c.crystal.check_flux.q < 1 || c.crystal.check_flux.q > 64) {
            throw ConfigError("crystal.check_flux", "denominator must lie in [1, 64]");
        }
    }
    root.finish();
    return c;
}

std::uint64_t RunConfig::hash() const {
    json j = to_json();
    // The output location does not change any result.
    j.erase("output_dir");
    return fnv1a(dump17(j));
}

std::string RunConfig::hash_hex() const { return hex64(hash()); }

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &config;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError(key, "empty path component in override");
        if (!node->is_object()) throw ConfigError(key, "override path crosses a non-object value");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

json error_record(const std::exception& e) {
    json err = {{"message", e.what()}};
    if (const auto* ce = dynamic_cast<const ConfigError*>(&e)) {
        err["type"] = "config";
        err["field"] = ce->field();
    } else if (dynamic_cast<const SymmetryError*>(&e)) {
        err["type"] = "symmetry";
    } else if (dynamic_cast<const ConvergenceError*>(&e)) {
        err["type"] = "convergence";
    } else if (dynamic_cast<const InvalidArgument*>(&e)) {
        err["type"] = "invalid_argument";
    } else {
        err["type"] = "pipeline";
    }
    return {{"tool", kToolName}, {"version", kToolVersion}, {"error", err}};
}

RunOutcome run(const RunConfig& config) {
    const fs::path dir(config.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
    DirLock lock(dir);
    Emitter out(dir, config);
    RunOutcome res;
    switch (config.scenario) {
        case Scenario::onewell: res = run_onewell(config, out); break;
        case Scenario::doublewell: res = run_doublewell(config, out); break;
        case Scenario::theorem1: res = run_theorem1(config, out); break;
        case Scenario::sweep: res = run_sweep(config, out); break;
        case Scenario::tune2: res = run_tune2(config, out); break;
        case Scenario::tune3: res = run_tune3(config, out); break;
        case Scenario::crystal: res = run_crystal(config, out); break;
        case Scenario::validate: res = run_validate(config, out); break;
    }
    res.files = out.files;
    return res;
}

std::vector<CheckResult> validate_suite(std::uint64_t seed) {
    std::vector<CheckResult> checks;
    SolverOptions solver;
    solver.seed = seed;
    solver.tol = 1e-12;

    // A check that throws is recorded as a failure instead of aborting the suite.
    auto guarded = [&](std::initializer_list<const char*> names, const std::function<void()>& f) {
        try {
            f();
        } catch (const std::exception& e) {
            for (const char* n : names) checks.push_back({n, false, std::string("threw: ") + e.what(), json()});
        }
    };

    // Oracle equivalence on a small radial double well.
    guarded({"oracle_equivalence"}, [&] {
        const Grid2D grid(4.0, 32);
        const auto op = assemble_operator(grid, double_well(DoubleWellConfig::symmetric(radial_bump(1.0, 1.0), 2.0)),
                                          {8.0, 1.0});
        SolverOptions o = solver;
        o.k = 6;
        const auto sparse = solve_lowest(op, o);
        const auto dense = dense_oracle(op);
        double worst = 0.0;
        for (int i = 0; i < 6; ++i) {
            worst = std::max(worst, std::abs(sparse.eigenvalues[i] - dense[i]) / std::abs(dense[i]));
        }
        checks.push_back({"oracle_equivalence", worst <= 1e-8, "max relative difference " + fmt17(worst),
                          {{"max_relative", worst}}});
    });
    // Gauge invariance and exact hermiticity.
    guarded({"gauge_invariance", "hermiticity", "plaquette_flux"}, [&] {
        const Grid2D grid(3.0, 24);
        const auto op = assemble_operator(grid, radial_bump(1.0, 1.0), {4.0, 0.5});
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
        Eigen::VectorXd chi(op.dimension());
        for (int i = 0; i < chi.size(); ++i) chi[i] = u(rng);
        const auto a = dense_oracle(op);
        const auto b = dense_oracle(gauge_transform(op, chi));
        double worst = 0.0;
        for (int i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / std::abs(a[i]));
        checks.push_back({"gauge_invariance", worst <= 1e-9, "max relative difference " + fmt17(worst),
                          {{"max_relative", worst}}});

        const Grid2D big(4.0, 64);
        const auto op2 = assemble_operator(big, radial_bump(1.0, 1.0), {8.0, 1.0});
        const double defect = hermiticity_defect(op2.matrix());
        checks.push_back({"hermiticity", defect == 0.0, "max |H - H*| = " + fmt17(defect), {{"defect", defect}}});

        const double expected = std::remainder(op2.params().field() * big.cell_area(), 2.0 * std::numbers::pi);
        double dev = 0.0;
        for (int j = 0; j + 1 < big.ny(); ++j) {
            for (int i = 0; i + 1 < big.nx(); ++i) {
                dev = std::max(dev, std::abs(std::remainder(plaquette_flux(op2, i, j) - expected,
                                                            2.0 * std::numbers::pi)));
            }
        }
        checks.push_back({"plaquette_flux", dev <= 1e-12, "max deviation " + fmt17(dev), {{"max_deviation", dev}}});
    });
    // Parity/splitting equivalence and rho reality on a resolvable double well.
    guarded({"parity_splitting", "rho_reality"}, [&] {
        const double d1 = 1.3;
        const Grid2D grid = aligned_grid(d1, 1.0, 1.5, 96);
        const MagneticParams params{4.0, 0.25};
        HoppingOptions o;
        o.solver = solver;
        const auto rep = analyze_double_well(DoubleWellConfig::symmetric(radial_bump(1.0, 1.0), d1), grid, params, o);
        const auto op = assemble_operator(grid, radial_bump(1.0, 1.0), params);
        const double tol_abs = 10.0 * solver.tol * op.row_sum_norm();
        const double diff = std::abs(*rep.delta - std::abs(*rep.e_even - *rep.e_odd));
        checks.push_back({"parity_splitting", diff <= tol_abs,
                          "|delta - |E_even - E_odd|| = " + fmt17(diff) + " (limit " + fmt17(tol_abs) + ")",
                          {{"difference", diff}, {"limit", tol_abs}}});

        SophonFamily fam;
        fam.d1 = 2.0;
        fam.s = 0.4;
        const Grid2D g2 = aligned_grid(fam.d1, 1.0, 1.5, 160);
        HoppingOptions o2 = o;
        o2.full_solve = false;
        o2.parity_solve = false;
        const auto rep2 = analyze_double_well(fam.config(), g2, params, o2);
        const bool real = rep.im_rho_over_abs_rho <= 1e-6 && rep2.im_rho_over_abs_rho <= 1e-6;
        checks.push_back({"rho_reality", real,
                          "|Im rho|/|rho| = " + fmt17(rep.im_rho_over_abs_rho) + " (radial), " +
                              fmt17(rep2.im_rho_over_abs_rho) + " (sophons)",
                          {{"radial", rep.im_rho_over_abs_rho}, {"sophons", rep2.im_rho_over_abs_rho}}});
    });
    // Byte-identical reruns.
    guarded({"reproducibility"}, [&] {
        RunConfig c = default_config(Scenario::doublewell);
        c.grid.n = 48;
        c.seed = seed;
        c.solver.seed = seed;
        const fs::path base = fs::temp_directory_path() / ("magtunnel-validate-" + std::to_string(::getpid()));
        std::error_code ec;
        fs::remove_all(base, ec);
        c.output_dir = base.string();
        auto contents = [](const std::vector<fs::path>& files) {
            std::vector<std::string> out;
            for (const auto& f : files) {
                std::ifstream in(f, std::ios::binary);
                std::stringstream ss;
                ss << in.rdbuf();
                out.push_back(ss.str());
            }
            return out;
        };
        const auto first = run(c);
        const auto a = contents(first.files);
        const auto second = run(c);
        const auto b = contents(second.files);
        const bool same = !a.empty() && a == b;
        fs::remove_all(base, ec);
        checks.push_back({"reproducibility", same,
                          same ? "reruns byte-identical" : "rerun outputs differ", {{"files", first.files.size()}}});
    });
    return checks;
}

}  // namespace magtunnel
