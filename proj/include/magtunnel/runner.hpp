#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "magtunnel/crystal.hpp"
#include "magtunnel/error.hpp"
#include "magtunnel/sophon.hpp"

namespace magtunnel {

inline constexpr const char* kToolName = "magtunnel";
inline constexpr const char* kToolVersion = "0.1.0";
/// Bumped when CSV columns or JSON keys change.
inline constexpr int kSchemaVersion = 1;

enum class Scenario { onewell, doublewell, theorem1, sweep, tune2, tune3, crystal, validate };

const char* to_string(Scenario s);
Scenario parse_scenario(const std::string& name);

/// Schema violation; `field` is the dotted path of the offending entry.
class ConfigError : public InvalidArgument {
public:
    ConfigError(std::string field, const std::string& what)
        : InvalidArgument(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct GridSpec {
    int n = 128;
    /// Explicit box half-width; otherwise the box is aligned to d1 (double-well scenarios).
    std::optional<double> half_width;
    double reach = 1.0;
    double margin = 1.5;

    Grid2D build(std::optional<double> d1) const;
};

struct SweepSpec {
    SweepParameter parameter = SweepParameter::s;
    double lo = 0.3;
    double hi = 1.0;
    int steps = 8;
};

struct CrystalSpec {
    int patch_n = 24;
    int k_grid = 24;
    /// Analytic hopping; when absent the tuned and untuned hoppings come from the continuum pipeline.
    std::optional<Complex> rho;
    /// Bracket in the family's sweep parameter for the zero-hopping search.
    double tune_lo = 0.5;
    double tune_hi = 0.6;
    /// Flux used for the Bloch/patch comparison.
    Flux check_flux{1, 3, 0.0};
};

struct RunConfig {
    Scenario scenario = Scenario::onewell;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    GridSpec grid;
    MagneticParams params{8.0, 1.0};
    std::vector<double> lambdas;
    SolverOptions solver;
    PotentialSpec potential;
    DoubleWellConfig double_well;
    SophonFamily family;
    AsymmetricFamily asymmetric;
    SweepSpec sweep;
    AsymmetricSearch search;
    CrystalSpec crystal;

    /// Canonical, fully resolved form (every default written out).
    nlohmann::json to_json() const;
    /// Strict: unknown keys and wrong types raise ConfigError naming the field.
    static RunConfig from_json(const nlohmann::json& j);
    std::uint64_t hash() const;
    std::string hash_hex() const;
};

RunConfig default_config(Scenario s);

/// key=value with a dotted key; value is parsed as JSON, falling back to a plain string.
void apply_override(nlohmann::json& config, const std::string& assignment);

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    nlohmann::json data;
};

/// Oracle equivalence, gauge, hermiticity, plaquette flux, parity, rho reality and
/// reproducibility checks on small grids.
std::vector<CheckResult> validate_suite(std::uint64_t seed);

struct RunOutcome {
    int exit_code = 0;
    std::string summary;
    std::vector<std::filesystem::path> files;
    nlohmann::json result;
};

/// Runs one scenario into config.output_dir (guarded by a lock file). Throws on error.
RunOutcome run(const RunConfig& config);

/// JSON with every float written as %.17g; keys in sorted order.
std::string dump17(const nlohmann::json& j);

/// Machine-readable error record.
nlohmann::json error_record(const std::exception& e);

}  // namespace magtunnel
