#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "magtunnel/runner.hpp"

using namespace magtunnel;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("magtunnel_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string config_error_field(const json& j) {
    try {
        RunConfig::from_json(j);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

RunConfig small_onewell(const fs::path& dir) {
    RunConfig c = default_config(Scenario::onewell);
    c.grid.n = 48;
    c.solver.k = 3;
    c.output_dir = dir.string();
    return c;
}

}  // namespace

TEST_CASE("scenario names round trip") {
    for (auto s : {Scenario::onewell, Scenario::doublewell, Scenario::theorem1, Scenario::sweep, Scenario::tune2,
                   Scenario::tune3, Scenario::crystal, Scenario::validate}) {
        CHECK(parse_scenario(to_string(s)) == s);
    }
    CHECK_THROWS_AS(parse_scenario("tune4"), InvalidArgument);
}

TEST_CASE("default configs survive a JSON round trip with the same hash") {
    for (auto s : {Scenario::onewell, Scenario::doublewell, Scenario::theorem1, Scenario::sweep, Scenario::tune2,
                   Scenario::tune3, Scenario::crystal, Scenario::validate}) {
        const RunConfig c = default_config(s);
        const RunConfig back = RunConfig::from_json(c.to_json());
        CHECK(back.to_json() == c.to_json());
        CHECK(back.hash() == c.hash());
        CHECK(c.hash_hex().size() == 16);
    }
}

TEST_CASE("hash ignores the output directory but not the physics") {
    RunConfig a = default_config(Scenario::doublewell);
    RunConfig b = a;
    b.output_dir = "elsewhere";
    CHECK(a.hash() == b.hash());
    b.params.lambda += 1e-12;
    CHECK(a.hash() != b.hash());
}

TEST_CASE("partial configs fill in scenario defaults") {
    const RunConfig c = RunConfig::from_json(json::parse(R"({"scenario": "theorem1", "lambdas": [4, 6]})"));
    CHECK(c.lambdas == std::vector<double>{4, 6});
    CHECK(c.grid.n == default_config(Scenario::theorem1).grid.n);
    CHECK(c.double_well.d1 == 1.3);
}

TEST_CASE("malformed configs name the offending field") {
    CHECK(config_error_field(json::parse(R"({"grid": {"n": 64}})")) == "scenario");
    CHECK(config_error_field(json::parse(R"({"scenario": "onewell", "gird": {}})")) == "gird");
    CHECK(config_error_field(json::parse(R"({"scenario": "onewell", "grid": {"n": "many"}})")) == "grid.n");
    CHECK(config_error_field(json::parse(R"({"scenario": "onewell", "grid": {"n": 4}})")) == "grid.n");
    CHECK(config_error_field(json::parse(R"({"scenario": "onewell", "params": {"lambda": -1}})")) == "params.lambda");
    CHECK(config_error_field(json::parse(R"({"scenario": "onewell", "solver": {"tol": "x"}})")) == "solver.tol");
    CHECK(config_error_field(json::parse(R"({"scenario": "onewell", "solver": {"kk": 2}})")) == "solver.kk");
    CHECK(config_error_field(json::parse(R"({"scenario": "theorem1", "lambdas": [8, 4]})")) == "lambdas");
    CHECK(config_error_field(json::parse(R"({"scenario": "sweep", "sweep": {"parameter": "q"}})")) == "sweep.parameter");
    CHECK(config_error_field(json::parse(R"([1, 2])")) != "");
}

TEST_CASE("overrides edit dotted paths") {
    json cfg = {{"scenario", "onewell"}};
    apply_override(cfg, "params.lambda=6");
    apply_override(cfg, "grid.n=64");
    apply_override(cfg, "output_dir=some/dir");
    apply_override(cfg, "lambdas=[4,6]");
    CHECK(cfg["params"]["lambda"] == 6);
    CHECK(cfg["grid"]["n"] == 64);
    CHECK(cfg["output_dir"] == "some/dir");
    CHECK(cfg["lambdas"].size() == 2);
    const RunConfig c = RunConfig::from_json(cfg);
    CHECK(c.params.lambda == 6.0);
    CHECK_THROWS_AS(apply_override(cfg, "no_equals_sign"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "=3"), ConfigError);
}

TEST_CASE("dump17 writes round-trip floats in sorted key order") {
    const std::string s = dump17(json{{"b", 0.1}, {"a", 1.0 / 3.0}});
    CHECK(s.find("0.10000000000000001") != std::string::npos);
    CHECK(s.find("0.33333333333333331") != std::string::npos);
    CHECK(s.find("\"a\"") < s.find("\"b\""));
    CHECK(json::parse(s)["b"].get<double>() == 0.1);
}

TEST_CASE("error records carry a type") {
    const json r = error_record(ConfigError("grid.n", "bad"));
    CHECK(r["error"]["type"] == "config");
    CHECK(r["error"]["field"] == "grid.n");
    CHECK(error_record(SymmetryError("x"))["error"]["type"] == "symmetry");
    CHECK(error_record(ConvergenceError("x"))["error"]["type"] == "convergence");
    CHECK(error_record(Error("x"))["error"]["type"] == "pipeline");
    CHECK(r["version"] == kToolVersion);
}

TEST_CASE("onewell run writes stamped CSV and JSON that agree") {
    const fs::path dir = fresh_dir("onewell");
    const RunConfig c = small_onewell(dir);
    const RunOutcome res = run(c);
    CHECK(res.exit_code == 0);
    REQUIRE(res.files.size() == 2);
    const std::string csv = slurp(dir / "onewell.csv");
    CHECK(csv.rfind("# tool=magtunnel version=0.1.0 schema=1 config_hash=" + c.hash_hex() + "\n", 0) == 0);
    const json doc = json::parse(slurp(dir / "onewell.json"));
    CHECK(doc["config_hash"] == c.hash_hex());
    CHECK(doc["schema"] == kSchemaVersion);
    CHECK(RunConfig::from_json(doc["config"]).hash() == c.hash());

    // Each CSV eigenvalue equals the JSON one bit for bit.
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    CHECK(line == "index,eigenvalue,residual,error_bound");
    const auto& ev = doc["result"]["spectrum"]["eigenvalues"];
    int i = 0;
    while (std::getline(in, line)) {
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        CHECK(std::stod(line.substr(c1 + 1, c2 - c1 - 1)) == ev[i].get<double>());
        ++i;
    }
    CHECK(i == 3);
    CHECK_FALSE(fs::exists(dir / ".magtunnel.lock"));
}

TEST_CASE("reruns are byte identical") {
    const fs::path dir = fresh_dir("rerun");
    RunConfig c = default_config(Scenario::doublewell);
    c.grid.n = 48;
    c.output_dir = dir.string();
    run(c);
    const std::string csv = slurp(dir / "doublewell.csv");
    const std::string js = slurp(dir / "doublewell.json");
    run(c);
    CHECK(slurp(dir / "doublewell.csv") == csv);
    CHECK(slurp(dir / "doublewell.json") == js);
}

TEST_CASE("a locked output directory is refused") {
    const fs::path dir = fresh_dir("locked");
    fs::create_directories(dir);
    std::ofstream(dir / ".magtunnel.lock") << "other run\n";
    CHECK_THROWS_AS(run(small_onewell(dir)), Error);
    CHECK_FALSE(fs::exists(dir / "onewell.csv"));
    fs::remove(dir / ".magtunnel.lock");
    CHECK_NOTHROW(run(small_onewell(dir)));
}

TEST_CASE("ratio table scenario on a small grid") {
    const fs::path dir = fresh_dir("theorem1");
    RunConfig c = default_config(Scenario::theorem1);
    c.grid.n = 80;
    c.lambdas = {4.0, 6.0};
    c.output_dir = dir.string();
    const RunOutcome res = run(c);
    const json& r = res.result;
    CHECK(r["rows"].size() == 2);
    CHECK(r["rho_negative"] == true);
    const std::string csv = slurp(dir / "theorem1.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("validate suite passes") {
    const auto checks = validate_suite(0);
    CHECK(checks.size() == 7);
    for (const auto& ch : checks) {
        INFO(ch.name << ": " << ch.detail);
        CHECK(ch.pass);
    }
}
