#include "magtunnel/potential.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "magtunnel/error.hpp"

namespace magtunnel {

namespace {

double smooth_step(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double f0 = std::exp(-1.0 / t);
    const double f1 = std::exp(-1.0 / (1.0 - t));
    return f0 / (f0 + f1);
}

double bump_value(const RadialBump& w, Point x) {
    const Point y = x - w.center;
    const double t = y.norm2() / (w.radius * w.radius);
    if (t >= 1.0) return 0.0;
    return -w.depth * std::exp(1.0 - 1.0 / (1.0 - t));
}

double patch_value(const HarmonicPatch& w, Point x) {
    const Point y = x - w.center;
    const double r2 = y.norm2();
    if (r2 >= w.radius * w.radius) return 0.0;
    const double core = -w.depth + 0.5 * r2 + w.cubic_asymmetry * y.x1 * y.x1 * y.x1;
    const double inner = 0.5 * w.radius;
    const double r = std::sqrt(r2);
    if (r <= inner) return core;
    return core * (1.0 - smooth_step((r - inner) / (w.radius - inner)));
}

nlohmann::json point_json(Point p) { return nlohmann::json::array({p.x1, p.x2}); }

Point point_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2) throw InvalidArgument("point must be a two-element array");
    return {j.at(0).get<double>(), j.at(1).get<double>()};
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(a)); }
bool close(Point a, Point b, double tol) { return close(a.x1, b.x1, tol) && close(a.x2, b.x2, tol); }

bool same_well(const Well& a, const Well& b, double tol) {
    if (a.index() != b.index()) return false;
    return std::visit(
        [&](const auto& wa) {
            using T = std::decay_t<decltype(wa)>;
            const auto& wb = std::get<T>(b);
            if constexpr (std::is_same_v<T, RadialBump>) {
                return close(wa.center, wb.center, tol) && close(wa.radius, wb.radius, tol) &&
                       close(wa.depth, wb.depth, tol);
            } else if constexpr (std::is_same_v<T, HarmonicPatch>) {
                return close(wa.center, wb.center, tol) && close(wa.radius, wb.radius, tol) &&
                       close(wa.depth, wb.depth, tol) && close(wa.cubic_asymmetry, wb.cubic_asymmetry, tol);
            } else {
                return close(wa.center, wb.center, tol) && close(wa.omega0, wb.omega0, tol);
            }
        },
        a);
}

bool same_sophon(const Sophon& a, const Sophon& b, double tol) {
    return close(a.offset, b.offset, tol) && close(a.radius, b.radius, tol) && close(a.amplitude, b.amplitude, tol);
}

}  // namespace

double evaluate(const Well& well, Point x) {
    return std::visit(
        [&](const auto& w) -> double {
            using T = std::decay_t<decltype(w)>;
            if constexpr (std::is_same_v<T, RadialBump>) {
                return bump_value(w, x);
            } else if constexpr (std::is_same_v<T, HarmonicPatch>) {
                return patch_value(w, x);
            } else {
                return 0.5 * w.omega0 * w.omega0 * (x - w.center).norm2();
            }
        },
        well);
}

Point well_center(const Well& well) {
    return std::visit([](const auto& w) { return w.center; }, well);
}

double well_radius(const Well& well) {
    return std::visit(
        [](const auto& w) -> double {
            using T = std::decay_t<decltype(w)>;
            if constexpr (std::is_same_v<T, HarmonicGlobal>) {
                return std::numeric_limits<double>::infinity();
            } else {
                return w.radius;
            }
        },
        well);
}

double PotentialSpec::operator()(Point x) const {
    double v = 0.0;
    for (const auto& w : wells_) v += evaluate(w, x);
    return v;
}

PotentialSpec& PotentialSpec::add(const PotentialSpec& other) {
    wells_.insert(wells_.end(), other.wells_.begin(), other.wells_.end());
    return *this;
}

PotentialSpec PotentialSpec::translated(Point d) const {
    PotentialSpec out = *this;
    for (auto& w : out.wells_) std::visit([&](auto& x) { x.center = x.center + d; }, w);
    return out;
}

PotentialSpec PotentialSpec::mirrored() const {
    PotentialSpec out = *this;
    for (auto& w : out.wells_) {
        std::visit(
            [](auto& x) {
                x.center = -x.center;
                if constexpr (std::is_same_v<std::decay_t<decltype(x)>, HarmonicPatch>) {
                    x.cubic_asymmetry = -x.cubic_asymmetry;
                }
            },
            w);
    }
    return out;
}

PotentialSpec PotentialSpec::rotated90() const {
    PotentialSpec out = *this;
    for (auto& w : out.wells_) {
        std::visit(
            [](auto& x) {
                if constexpr (std::is_same_v<std::decay_t<decltype(x)>, HarmonicPatch>) {
                    if (x.cubic_asymmetry != 0.0) {
                        throw InvalidArgument("quarter turn of an asymmetric harmonic patch is not representable");
                    }
                }
                x.center = {-x.center.x2, x.center.x1};
            },
            w);
    }
    return out;
}

bool PotentialSpec::compactly_supported() const {
    return std::none_of(wells_.begin(), wells_.end(),
                        [](const Well& w) { return std::holds_alternative<HarmonicGlobal>(w); });
}

double PotentialSpec::support_radius() const {
    double r = 0.0;
    for (const auto& w : wells_) r = std::max(r, well_center(w).norm() + well_radius(w));
    return r;
}

double PotentialSpec::min_value() const {
    double m = 0.0;
    for (const auto& w : wells_) m = std::min(m, (*this)(well_center(w)));
    return m;
}

double PotentialSpec::smallest_feature_radius() const {
    double r = std::numeric_limits<double>::infinity();
    for (const auto& w : wells_) r = std::min(r, well_radius(w));
    return r;
}

std::vector<double> PotentialSpec::sample(const Grid2D& grid) const {
    std::vector<double> out(static_cast<std::size_t>(grid.size()));
    for (int k = 0; k < grid.size(); ++k) out[static_cast<std::size_t>(k)] = (*this)(grid.point(k));
    return out;
}

nlohmann::json PotentialSpec::to_json() const {
    nlohmann::json wells = nlohmann::json::array();
    for (const auto& w : wells_) {
        std::visit(
            [&](const auto& x) {
                using T = std::decay_t<decltype(x)>;
                nlohmann::json j;
                if constexpr (std::is_same_v<T, RadialBump>) {
                    j = {{"type", "radial_bump"}, {"center", point_json(x.center)},
                         {"radius", x.radius}, {"depth", x.depth}};
                } else if constexpr (std::is_same_v<T, HarmonicPatch>) {
                    j = {{"type", "harmonic_patch"}, {"center", point_json(x.center)}, {"radius", x.radius},
                         {"depth", x.depth}, {"cubic_asymmetry", x.cubic_asymmetry}};
                } else {
                    j = {{"type", "harmonic_global"}, {"center", point_json(x.center)}, {"omega0", x.omega0}};
                }
                wells.push_back(std::move(j));
            },
            w);
    }
    return {{"wells", wells}};
}

PotentialSpec PotentialSpec::from_json(const nlohmann::json& j) {
    if (j.contains("dressing")) return sophon_dress(SophonDressing::from_json(j.at("dressing"))).potential;
    const nlohmann::json& wells = j.is_array() ? j : j.at("wells");
    PotentialSpec out;
    for (const auto& w : wells) {
        const auto type = w.at("type").get<std::string>();
        const Point c = w.contains("center") ? point_from_json(w.at("center")) : Point{};
        if (type == "radial_bump") {
            out.add(RadialBump{c, w.at("radius").get<double>(), w.at("depth").get<double>()});
        } else if (type == "harmonic_patch") {
            out.add(HarmonicPatch{c, w.at("radius").get<double>(), w.at("depth").get<double>(),
                                  w.value("cubic_asymmetry", 0.0)});
        } else if (type == "harmonic_global") {
            out.add(HarmonicGlobal{c, w.at("omega0").get<double>()});
        } else {
            throw InvalidArgument("unknown well type '" + type + "'");
        }
    }
    return out;
}

std::uint64_t PotentialSpec::hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : to_json().dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

bool PotentialSpec::same_wells(const PotentialSpec& other, double tol) const {
    if (wells_.size() != other.wells_.size()) return false;
    std::vector<bool> used(other.wells_.size(), false);
    for (const auto& w : wells_) {
        bool found = false;
        for (std::size_t i = 0; i < other.wells_.size(); ++i) {
            if (!used[i] && same_well(w, other.wells_[i], tol)) {
                used[i] = found = true;
                break;
            }
        }
        if (!found) return false;
    }
    return true;
}

PotentialSpec radial_bump(double radius, double depth, Point center) {
    if (!(radius > 0.0)) throw InvalidArgument("radial bump radius must be positive");
    if (!(depth > 0.0)) throw InvalidArgument("radial bump depth must be positive");
    return PotentialSpec({RadialBump{center, radius, depth}});
}

PotentialSpec theorem4_well(double radius, double depth, double cubic_asymmetry, Point center) {
    if (!(radius > 0.0)) throw InvalidArgument("well radius must be positive");
    if (!(depth > 0.0)) throw InvalidArgument("well depth must be positive");
    // Nonpositive on the support.
    const double ceiling = 0.5 * radius * radius + std::abs(cubic_asymmetry) * radius * radius * radius;
    if (depth <= ceiling) {
        throw InvalidArgument("well depth must exceed r^2/2 + |c| r^3 = " + std::to_string(ceiling));
    }
    const HarmonicPatch patch{center, radius, depth, cubic_asymmetry};

    // Unique minimum: every sampled point away from the center lies strictly above it.
    const double vmin = patch_value(patch, center);
    constexpr int kRadial = 64;
    constexpr int kAngular = 128;
    for (int ir = 1; ir <= kRadial; ++ir) {
        const double r = radius * ir / kRadial;
        for (int ia = 0; ia < kAngular; ++ia) {
            const double a = 2.0 * std::numbers::pi * ia / kAngular;
            const Point p = center + Point{r * std::cos(a), r * std::sin(a)};
            if (!(patch_value(patch, p) > vmin)) {
                throw InvalidArgument("cubic asymmetry too large: minimum is not unique");
            }
        }
    }
    return PotentialSpec({patch});
}

PotentialSpec harmonic_global(double omega0, Point center) {
    if (!(omega0 > 0.0)) throw InvalidArgument("omega0 must be positive");
    return PotentialSpec({HarmonicGlobal{center, omega0}});
}

void SophonDressing::validate() const {
    if (!(planet.radius > 0.0) || !(planet.depth > 0.0)) throw InvalidArgument("planet needs positive radius and depth");
    if (sophons.size() != 4 && sophons.size() != 8) {
        throw InvalidArgument("a sophon layout has 4 or 8 sophons, got " + std::to_string(sophons.size()));
    }
    for (std::size_t i = 0; i < sophons.size(); ++i) {
        const auto& s = sophons[i];
        if (!(s.radius > 0.0)) throw InvalidArgument("sophon radius must be positive");
        if (s.amplitude > 0.0) throw InvalidArgument("sophon amplitude must be nonpositive");
        if (s.offset.norm() < planet.radius + s.radius) {
            throw InvalidArgument("sophon " + std::to_string(i) + " overlaps the planet");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if ((s.offset - sophons[j].offset).norm() < s.radius + sophons[j].radius) {
                throw InvalidArgument("sophons " + std::to_string(j) + " and " + std::to_string(i) + " overlap");
            }
        }
    }
}

void SophonDressing::validate_resolution(const Grid2D& grid, double min_cells) const {
    for (const auto& s : sophons) {
        if (s.radius < min_cells * grid.spacing()) {
            throw InvalidArgument("sophon radius " + std::to_string(s.radius) + " spans fewer than " +
                                  std::to_string(min_cells) + " grid cells (h = " + std::to_string(grid.spacing()) +
                                  ")");
        }
    }
}

bool SophonDressing::is_inversion_symmetric(double tol) const {
    for (const auto& s : sophons) {
        const Sophon image{-s.offset, s.radius, s.amplitude};
        if (std::none_of(sophons.begin(), sophons.end(),
                         [&](const Sophon& t) { return same_sophon(image, t, tol); })) {
            return false;
        }
    }
    return true;
}

double SophonDressing::deviation_area() const {
    double area = 0.0;
    for (const auto& s : sophons) {
        if (s.amplitude != 0.0) area += std::numbers::pi * s.radius * s.radius;
    }
    return area;
}

double SophonDressing::sup_deviation() const {
    double m = 0.0;
    for (const auto& s : sophons) m = std::max(m, std::abs(s.amplitude));
    return m;
}

nlohmann::json SophonDressing::to_json() const {
    nlohmann::json table = nlohmann::json::array();
    for (const auto& s : sophons) {
        table.push_back({{"offset", point_json(s.offset)}, {"radius", s.radius}, {"amplitude", s.amplitude}});
    }
    return {{"planet", {{"center", point_json(planet.center)}, {"radius", planet.radius}, {"depth", planet.depth}}},
            {"sophons", table}};
}

SophonDressing SophonDressing::from_json(const nlohmann::json& j) {
    SophonDressing out;
    const auto& p = j.at("planet");
    out.planet = RadialBump{p.contains("center") ? point_from_json(p.at("center")) : Point{},
                            p.at("radius").get<double>(), p.at("depth").get<double>()};
    for (const auto& s : j.at("sophons")) {
        out.sophons.push_back(
            Sophon{point_from_json(s.at("offset")), s.at("radius").get<double>(), s.at("amplitude").get<double>()});
    }
    out.validate();
    return out;
}

SophonDressing rectangle_layout(const RadialBump& planet, double dx, double s, double r, double tau) {
    SophonDressing out{planet,
                       {Sophon{{dx, s}, r, tau}, Sophon{{dx, -s}, r, tau}, Sophon{{-dx, s}, r, tau},
                        Sophon{{-dx, -s}, r, tau}}};
    out.validate();
    return out;
}

SophonDressing flat_band_layout(const RadialBump& planet, double dx, double s, double r, double tau) {
    SophonDressing out{planet,
                       {Sophon{{dx, s}, r, tau}, Sophon{{dx, -s}, r, tau}, Sophon{{-dx, s}, r, tau},
                        Sophon{{-dx, -s}, r, tau}, Sophon{{s, dx}, r, tau}, Sophon{{-s, dx}, r, tau},
                        Sophon{{s, -dx}, r, tau}, Sophon{{-s, -dx}, r, tau}}};
    out.validate();
    return out;
}

DressedWell sophon_dress(const SophonDressing& layout) {
    layout.validate();
    PotentialSpec v({layout.planet});
    for (const auto& s : layout.sophons) {
        if (s.amplitude == 0.0) continue;
        v.add(RadialBump{layout.planet.center + s.offset, s.radius, -s.amplitude});
    }
    return {std::move(v), layout.deviation_area(), layout.sup_deviation()};
}

DoubleWellConfig DoubleWellConfig::symmetric(const PotentialSpec& well, double d1) {
    return {well.mirrored(), well, d1, SymmetryMode::inversion_symmetric};
}

DoubleWellConfig DoubleWellConfig::asymmetric(const PotentialSpec& left, const PotentialSpec& right, double d1) {
    return {left, right, d1, SymmetryMode::free};
}

nlohmann::json DoubleWellConfig::to_json() const {
    return {{"left_well", left_well.to_json()},
            {"right_well", right_well.to_json()},
            {"d1", d1},
            {"symmetry_mode", mode == SymmetryMode::inversion_symmetric ? "inversion_symmetric" : "free"}};
}

DoubleWellConfig DoubleWellConfig::from_json(const nlohmann::json& j) {
    DoubleWellConfig cfg;
    cfg.d1 = j.at("d1").get<double>();
    const auto mode = j.value("symmetry_mode", std::string("inversion_symmetric"));
    if (mode == "inversion_symmetric") {
        cfg.mode = SymmetryMode::inversion_symmetric;
    } else if (mode == "free") {
        cfg.mode = SymmetryMode::free;
    } else {
        throw InvalidArgument("unknown symmetry_mode '" + mode + "'");
    }
    cfg.right_well = PotentialSpec::from_json(j.at("right_well"));
    cfg.left_well = j.contains("left_well") ? PotentialSpec::from_json(j.at("left_well")) : cfg.right_well.mirrored();
    return cfg;
}

PotentialSpec double_well(const DoubleWellConfig& cfg) {
    if (!cfg.left_well.compactly_supported() || !cfg.right_well.compactly_supported()) {
        throw InvalidArgument("double well needs compactly supported one-well potentials");
    }
    const double reach = std::max(cfg.left_well.support_radius(), cfg.right_well.support_radius());
    if (!(cfg.d1 > reach)) {
        throw InvalidArgument("d1 = " + std::to_string(cfg.d1) + " does not exceed the support radius " +
                              std::to_string(reach) + "; the wells would overlap");
    }
    if (cfg.mode == SymmetryMode::inversion_symmetric && !cfg.left_well.same_wells(cfg.right_well.mirrored())) {
        throw InvalidArgument("inversion_symmetric mode needs left_well(x) = right_well(-x)");
    }
    PotentialSpec v = cfg.left_displaced();
    v.add(cfg.right_displaced());
    return v;
}

SymmetryCheck check_inversion_symmetric(const PotentialSpec& v, const Grid2D& grid) {
    constexpr double kTolerance = 1e-14;
    const auto samples = v.sample(grid);
    double worst = 0.0;
    for (int k = 0; k < grid.size(); ++k) {
        const auto a = samples[static_cast<std::size_t>(k)];
        const auto b = samples[static_cast<std::size_t>(grid.mirror_index(k))];
        worst = std::max(worst, std::abs(a - b));
    }
    return {worst <= kTolerance, worst};
}

}  // namespace magtunnel
