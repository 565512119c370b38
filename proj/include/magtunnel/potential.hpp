#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include <json.hpp>

#include "magtunnel/grid.hpp"

namespace magtunnel {

/// Smooth compactly supported bump: -depth * exp(1 - 1/(1 - |x-c|^2/a^2)) inside B_a(c).
struct RadialBump {
    Point center;
    double radius = 1.0;
    double depth = 1.0;

    friend bool operator==(const RadialBump&, const RadialBump&) = default;
};

/// Well with identity Hessian at its unique minimum:
/// (-depth + |y|^2/2 + cubic_asymmetry * y1^3) * cutoff(|y|), y = x - c.
/// The cutoff is 1 on |y| <= radius/2 and falls smoothly to 0 at |y| = radius.
struct HarmonicPatch {
    Point center;
    double radius = 1.0;
    double depth = 1.0;
    double cubic_asymmetry = 0.0;

    friend bool operator==(const HarmonicPatch&, const HarmonicPatch&) = default;
};

/// omega0^2 |x - c|^2 / 2. Not compactly supported; validation only.
struct HarmonicGlobal {
    Point center;
    double omega0 = 1.0;

    friend bool operator==(const HarmonicGlobal&, const HarmonicGlobal&) = default;
};

using Well = std::variant<RadialBump, HarmonicPatch, HarmonicGlobal>;

double evaluate(const Well& well, Point x);
Point well_center(const Well& well);
/// Support radius about the well's own center; infinity for HarmonicGlobal.
double well_radius(const Well& well);

/// A potential as a sum of primitive wells. Values are in units where the
/// operator multiplies by lambda^2.
class PotentialSpec {
public:
    PotentialSpec() = default;
    explicit PotentialSpec(std::vector<Well> wells) : wells_(std::move(wells)) {}

    double operator()(Point x) const;

    const std::vector<Well>& wells() const { return wells_; }
    bool empty() const { return wells_.empty(); }

    PotentialSpec& add(const Well& w) {
        wells_.push_back(w);
        return *this;
    }
    PotentialSpec& add(const PotentialSpec& other);

    PotentialSpec translated(Point d) const;
    /// x -> -x about the origin.
    PotentialSpec mirrored() const;
    /// Exact quarter turn (x1, x2) -> (-x2, x1) about the origin.
    PotentialSpec rotated90() const;

    bool compactly_supported() const;
    /// Radius of the smallest origin-centered disc containing every support.
    double support_radius() const;
    /// Minimum value over the well centers (a lower bound for bumps, exact at their centers).
    double min_value() const;
    /// Smallest primitive support radius; used for resolvability checks.
    double smallest_feature_radius() const;

    /// Sample on every grid point.
    std::vector<double> sample(const Grid2D& grid) const;

    nlohmann::json to_json() const;
    static PotentialSpec from_json(const nlohmann::json& j);
    /// FNV-1a hash of the canonical JSON form.
    std::uint64_t hash() const;

    /// Same multiset of wells, to within tol in every parameter.
    bool same_wells(const PotentialSpec& other, double tol = 1e-12) const;

    friend bool operator==(const PotentialSpec&, const PotentialSpec&) = default;

private:
    std::vector<Well> wells_;
};

PotentialSpec radial_bump(double radius, double depth, Point center = {});
PotentialSpec theorem4_well(double radius, double depth, double cubic_asymmetry, Point center = {});
PotentialSpec harmonic_global(double omega0, Point center = {});

struct Sophon {
    Point offset;          ///< relative to the planet center
    double radius = 0.2;
    double amplitude = 0;  ///< tau <= 0; the sophon bump has depth |tau|

    friend bool operator==(const Sophon&, const Sophon&) = default;
};

struct SophonDressing {
    RadialBump planet;
    std::vector<Sophon> sophons;

    /// Throws InvalidArgument on overlapping discs, positive amplitudes or a bad count.
    void validate() const;
    /// Every sophon radius spans at least min_cells grid cells.
    void validate_resolution(const Grid2D& grid, double min_cells = 4.0) const;
    bool is_inversion_symmetric(double tol = 1e-12) const;

    double deviation_area() const;
    double sup_deviation() const;

    nlohmann::json to_json() const;
    static SophonDressing from_json(const nlohmann::json& j);
};

/// Four sophons at (+-dx, +-s) about the planet, all with radius r and amplitude tau.
SophonDressing rectangle_layout(const RadialBump& planet, double dx, double s, double r, double tau);
/// Eight sophons: the rectangle layout plus its quarter-turn image (+-s, +-dx).
SophonDressing flat_band_layout(const RadialBump& planet, double dx, double s, double r, double tau);

struct DressedWell {
    PotentialSpec potential;
    double deviation_area = 0;
    double sup_deviation = 0;
};

DressedWell sophon_dress(const SophonDressing& layout);

enum class SymmetryMode { inversion_symmetric, free };

/// Two one-well potentials, each centered at the origin, displaced to (-d1, 0) and (+d1, 0).
struct DoubleWellConfig {
    PotentialSpec left_well;
    PotentialSpec right_well;
    double d1 = 2.0;
    SymmetryMode mode = SymmetryMode::inversion_symmetric;

    /// Left well is the mirror image of `well`, so the sum is even.
    static DoubleWellConfig symmetric(const PotentialSpec& well, double d1);
    static DoubleWellConfig asymmetric(const PotentialSpec& left, const PotentialSpec& right, double d1);

    PotentialSpec left_displaced() const { return left_well.translated({-d1, 0.0}); }
    PotentialSpec right_displaced() const { return right_well.translated({d1, 0.0}); }

    nlohmann::json to_json() const;
    static DoubleWellConfig from_json(const nlohmann::json& j);
};

/// v^L + v^R. Throws InvalidArgument if the displaced supports overlap or the
/// inversion-symmetric mirror relation is violated.
PotentialSpec double_well(const DoubleWellConfig& cfg);

struct SymmetryCheck {
    bool is_symmetric = false;
    double max_asymmetry = 0;
};

SymmetryCheck check_inversion_symmetric(const PotentialSpec& v, const Grid2D& grid);

}  // namespace magtunnel
