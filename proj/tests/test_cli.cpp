#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "schema_check.hpp"
#include "schema_embed.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("xraylab_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct Result {
    int code;
    std::string out;
};

Result run(const std::string& args, const fs::path& log) {
    std::string cmd = std::string(XRAYLAB_PATH) + " " + args + " > " + log.string() + " 2>&1";
    int st = std::system(cmd.c_str());
    std::ifstream is(log);
    std::stringstream ss;
    ss << is.rdbuf();
    return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

const json& schema() {
    static const json s = json::parse(xray::kConfigSchema);
    return s;
}

}  // namespace

TEST_CASE("schema subset validator") {
    json ok = {{"surface", {{"kind", "poincare_disc"}, {"radius", 0.7}}}, {"grid", {{"n", 64}, {"nth", 32}}},
               {"tolerances", {{"pestov", 1e-3}}}, {"params", {{"anything", {1, 2}}}}};
    CHECK(xray::schema_errors(schema(), ok).empty());
    CHECK(xray::schema_errors(schema(), json::object()).empty());
    CHECK_FALSE(xray::schema_errors(schema(), {{"surface", {{"kind", "sphere"}}}}).empty());
    CHECK_FALSE(xray::schema_errors(schema(), {{"surface", {{"radius", 1.0}}}}).empty());
    CHECK_FALSE(xray::schema_errors(schema(), {{"grid", {{"n", 4}}}}).empty());
    CHECK_FALSE(xray::schema_errors(schema(), {{"grid", {{"n", 64.5}}}}).empty());
    CHECK_FALSE(xray::schema_errors(schema(), {{"surface", {{"kind", "euclidean_disc"}, {"radius", 0}}}}).empty());
    CHECK_FALSE(xray::schema_errors(schema(), {{"tolerances", {{"x", -1}}}}).empty());
    CHECK_FALSE(xray::schema_errors(schema(), {{"bogus", 1}}).empty());
    auto e = xray::schema_errors(schema(), {{"grid", {{"nth", "many"}}}});
    REQUIRE(e.size() == 1);
    CHECK(e[0].find("grid") != std::string::npos);
}

TEST_CASE("usage and configuration errors exit with 2") {
    fs::path d = scratch("errors");
    CHECK(run("frobnicate --out " + d.string(), d / "log").code == 2);
    CHECK(run("", d / "log").code == 2);
    CHECK(run("pestov --out " + d.string() + " --set grid.n=4", d / "log").code == 2);
    CHECK(run("pestov --out " + d.string() + " --set nosuchkey=1", d / "log").code == 2);
    CHECK(run("pestov --out " + d.string() + " --config " + (d / "missing.json").string(), d / "log").code == 2);
    std::ofstream(d / "bad.json") << R"({"surface": {"kind": "sphere"}})";
    Result r = run("pestov --out " + d.string() + " --config " + (d / "bad.json").string(), d / "log");
    CHECK(r.code == 2);
    std::ofstream(d / "broken.json") << "{ not json";
    CHECK(run("pestov --out " + d.string() + " --config " + (d / "broken.json").string(), d / "log").code == 2);
    CHECK_FALSE(fs::exists(d / "pestov" / "report.json"));
}

TEST_CASE("weights command") {
    fs::path d = scratch("weights");
    Result r = run("weights --d 2 --s 0..4 --out " + d.string(), d / "log");
    CHECK(r.code == 0);
    CHECK(fs::exists(d / "weights" / "weights.csv"));
    json rep = json::parse(slurp(d / "weights" / "report.json"));
    CHECK(rep["pass"].get<bool>());
    CHECK(rep["command"] == "weights");
    CHECK(rep["config"]["params"]["d"] == 2);
    CHECK(rep["config"]["params"]["s"].size() == 5);
    CHECK(fs::exists(d / "weights" / "meta.json"));
}

TEST_CASE("reports are deterministic and independent of --threads") {
    fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
    const std::string args = "pestov --set grid.n=33 --set grid.nth=16 --set count=2 --out ";
    REQUIRE(run(args + a.string() + " --threads 1", a / "log").code == 0);
    REQUIRE(run(args + b.string() + " --threads 1", b / "log").code == 0);
    REQUIRE(run(args + c.string() + " --threads 3", c / "log").code == 0);
    std::string ra = slurp(a / "pestov" / "report.json");
    CHECK(!ra.empty());
    CHECK(ra == slurp(b / "pestov" / "report.json"));
    CHECK(ra == slurp(c / "pestov" / "report.json"));
}

TEST_CASE("a failed check exits with 1 and names the report") {
    fs::path d = scratch("fail");
    Result r = run("pestov --set grid.n=33 --set grid.nth=16 --set count=1 --set tolerances.pestov=1e-30 --out " +
                       d.string(),
                   d / "log");
    CHECK(r.code == 1);
    CHECK(r.out.find("FAIL ") != std::string::npos);
    CHECK(r.out.find("report.json") != std::string::npos);
    json rep = json::parse(slurp(d / "pestov" / "report.json"));
    CHECK_FALSE(rep["pass"].get<bool>());
}

TEST_CASE("config file, --set precedence and output location") {
    fs::path d = scratch("config");
    std::ofstream(d / "cfg.json") << json({{"grid", {{"n", 33}, {"nth", 8}}}, {"count", 1}, {"output_dir", (d / "fromfile").string()}}).dump();
    Result r = run("pestov --config " + (d / "cfg.json").string() + " --set grid.nth=16", d / "log");
    CHECK(r.code == 0);
    json rep = json::parse(slurp(d / "fromfile" / "pestov" / "report.json"));
    CHECK(rep["config"]["grid"]["n"] == 33);
    CHECK(rep["config"]["grid"]["nth"] == 16);
    CHECK_FALSE(rep["config"].contains("output_dir"));
    std::string env = "XRAY_OUT_DIR=" + (d / "env").string() + " ";
    std::string cmd = env + XRAYLAB_PATH + " weights --d 3 --s 1 > " + (d / "log").string() + " 2>&1";
    CHECK(std::system(cmd.c_str()) == 0);
    CHECK(fs::exists(d / "env" / "weights" / "report.json"));
}

TEST_CASE("carleman-log defaults pass with ratios at most one") {
    fs::path d = scratch("carleman");
    Result r = run("carleman-log --out " + d.string(), d / "log");
    CHECK(r.code == 0);
    json rep = json::parse(slurp(d / "carleman-log" / "report.json"));
    CHECK(rep["pass"].get<bool>());
    CHECK(rep["results"]["worst_ratio"].get<double>() <= 1);
    CHECK(fs::exists(d / "carleman-log" / "carleman_log.csv"));
}

TEST_CASE("riccati command") {
    fs::path d = scratch("riccati");
    Result r = run("riccati --set params.rays=10 --out " + d.string(), d / "log");
    CHECK(r.code == 0);
    json rep = json::parse(slurp(d / "riccati" / "report.json"));
    CHECK(rep["pass"].get<bool>());
    fs::remove_all(d.parent_path());
}
