#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "magtunnel/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace magtunnel;

namespace {

json load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config", "cannot open " + path);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config", path + " is not valid JSON");
    return j;
}

int report_error(const std::exception& e, const std::optional<std::string>& output_dir) {
    const json rec = error_record(e);
    std::cerr << dump17(rec) << '\n';
    if (output_dir) {
        std::error_code ec;
        fs::create_directories(*output_dir, ec);
        std::ofstream f(fs::path(*output_dir) / "error.json");
        if (f) f << dump17(rec) << '\n';
    }
    return dynamic_cast<const ConfigError*>(&e) ? 2 : 1;
}

int execute(json cfg_json, const std::optional<std::string>& output_dir, const std::optional<std::uint64_t>& seed,
            const std::optional<int>& grid_n, const std::vector<std::string>& overrides) {
    std::optional<std::string> out_dir = output_dir;
    try {
        if (output_dir) cfg_json["output_dir"] = *output_dir;
        if (seed) cfg_json["seed"] = *seed;
        if (grid_n) cfg_json["grid"]["n"] = *grid_n;
        for (const auto& o : overrides) apply_override(cfg_json, o);
        if (!out_dir && cfg_json.is_object() && cfg_json.contains("output_dir") && cfg_json["output_dir"].is_string()) {
            out_dir = cfg_json["output_dir"].get<std::string>();
        }
        const RunConfig cfg = RunConfig::from_json(cfg_json);
        out_dir = cfg.output_dir;
        const RunOutcome res = run(cfg);
        std::cout << res.summary << '\n';
        for (const auto& f : res.files) std::cout << "  wrote " << f.string() << '\n';
        return res.exit_code;
    } catch (const std::exception& e) {
        return report_error(e, out_dir);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Magnetic double-well tunneling: spectra, hoppings, sophon tuning and flat-band crystals"};
    app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
    app.require_subcommand(1);

    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> grid_n;
    std::vector<std::string> overrides;

    auto* run_cmd = app.add_subcommand("run", "Run the scenario described by a JSON config");
    std::string config_path;
    run_cmd->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--output-dir", output_dir, "Directory for CSV/JSON outputs");
    run_cmd->add_option("--seed", seed, "Seed for solver start vectors");
    run_cmd->add_option("--grid-n", grid_n, "Grid points per axis");
    run_cmd->add_option("--override", overrides, "key=value with a dotted key, e.g. params.lambda=6");

    auto* validate_cmd = app.add_subcommand("validate", "Run the invariant suite; exit 0 iff every check passes");
    validate_cmd->add_option("--output-dir", output_dir, "Directory for CSV/JSON outputs");
    validate_cmd->add_option("--seed", seed, "Seed for random gauges and solver start vectors");

    auto* defaults_cmd = app.add_subcommand("defaults", "Print the fully resolved default config of a scenario");
    std::string scenario;
    defaults_cmd->add_option("scenario", scenario, "Scenario name")->required();

    CLI11_PARSE(app, argc, argv);

    if (*run_cmd) {
        json cfg;
        try {
            cfg = load_config(config_path);
        } catch (const std::exception& e) {
            return report_error(e, output_dir);
        }
        return execute(std::move(cfg), output_dir, seed, grid_n, overrides);
    }
    if (*validate_cmd) {
        json cfg = {{"scenario", "validate"}, {"output_dir", output_dir.value_or("validate_out")}};
        return execute(std::move(cfg), output_dir, seed, std::nullopt, {});
    }
    try {
        std::cout << dump17(default_config(parse_scenario(scenario)).to_json()) << '\n';
    } catch (const std::exception& e) {
        return report_error(e, std::nullopt);
    }
    return 0;
}
