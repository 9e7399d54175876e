#include <doctest.h>

#include "nlad/lab.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace nlad;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("nladlab_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json flip_config(const fs::path& out) {
    return Json{{"kind", "simulate"},
                {"model", {{"name", "two_level_flip"}, {"params", {{"gamma", {{"kind", "sinusoid"}, {"c", {1.0, 0.5, 1.0}}}}}}}},
                {"numeric", {{"epsilon", 0.1}, {"t_range", {0.0, 1.0}}, {"initial_state", {0.8, 0.6}}}},
                {"output", {{"directory", out.string()}}}};
}

int cli(const std::vector<std::string>& args) {
    std::vector<std::string> a{"nlad"};
    a.insert(a.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : a) argv.push_back(s.data());
    return run_cli(int(argv.size()), argv.data());
}

ErrorKind kind_of(const Json& j) {
    try {
        parse_config(j);
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::IoFailure; // sentinel: no error
}

} // namespace

TEST_CASE("number formatting round-trips doubles") {
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) CHECK(std::stod(format_number(x)) == x);
}

TEST_CASE("plot data writes a CSV and its axes sidecar") {
    fs::path d = scratch("plot");
    Series s;
    s.columns = {"eps", "err"};
    s.add({0.1, 1e-3});
    s.add({0.05, 5e-4});
    std::string csv = (d / "fit.csv").string();
    emit_plot_data(s, csv, "loglog", Json{{"slope", 1.0}});
    CHECK(slurp(csv).rfind("eps,err\n", 0) == 0);
    CHECK(sidecar_path(csv) == (d / "fit.axes.json").string());
    Json side = read_json(sidecar_path(csv));
    CHECK(side["x"] == "eps");
    CHECK(side["y"] == Json::array({"err"}));
    CHECK(side["scale"] == "loglog");
    CHECK(side["rows"] == 2);
    CHECK(side["slope"] == 1.0);
    try {
        emit_plot_data(Series{{"a"}, {}}, (d / "empty.csv").string());
        FAIL("expected IoFailure");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::IoFailure);
    }
}

TEST_CASE("config validation names the problem") {
    fs::path d = scratch("cfg");
    Json ok = flip_config(d);
    CHECK(parse_config(ok).kind == "simulate");
    Json j = ok;
    j["numeric"].erase("epsilon");
    CHECK(kind_of(j) == ErrorKind::ConfigInvalid);
    j = ok;
    j["kind"] = "teleport";
    CHECK(kind_of(j) == ErrorKind::ConfigInvalid);
    j = ok;
    j["model"]["name"] = "no_such_model";
    CHECK(kind_of(j) == ErrorKind::ConfigInvalid);
    j = ok;
    j["numeric"]["epsilon"] = -0.1;
    CHECK(kind_of(j) == ErrorKind::ConfigInvalid);
    j = ok;
    j["kind"] = "bifurcate";
    CHECK(kind_of(j) == ErrorKind::ConfigInvalid);
    j = ok;
    j["output"]["formats"] = {"xml"};
    CHECK(kind_of(j) == ErrorKind::ConfigInvalid);
    CHECK_THROWS_AS(model_from_config("truncated_anharmonic", Json{{"b", 1.0}, {"delta", 0.05}, {"truncation", 8}}),
                    Error);
    CHECK(scalar_from_json(Json{{"kind", "polynomial"}, {"c", {1.0, 2.0}}})(0.5) == doctest::Approx(2.0));
    CHECK(scalar_from_json(Json(0.7))(3.0) == 0.7);
}

TEST_CASE("command line exit codes") {
    fs::path d = scratch("cli");
    Json bad = flip_config(d / "bad");
    bad["numeric"].erase("epsilon");
    write_json((d / "bad.json").string(), bad);
    CHECK(cli({"run", (d / "bad.json").string(), "--out", (d / "bad").string()}) == 2);
    CHECK(read_json((d / "bad" / "manifest.json").string())["status"] == "config_invalid");
    CHECK(cli({"run", (d / "missing.json").string(), "--out", (d / "missing").string()}) == 2);

    Json good = flip_config(d / "good");
    write_json((d / "good.json").string(), good);
    CHECK(cli({"run", (d / "good.json").string()}) == 0);
    Json man = read_json((d / "good" / "manifest.json").string());
    CHECK(man["status"] == "ok");
    CHECK(man["version"] == kToolVersion);
    CHECK(fs::exists(d / "good" / "trajectory.csv"));

    // an impossible tolerance is reported as an invariant failure, naming the invariant
    Json strict = flip_config(d / "strict");
    strict["numeric"]["expect"] = {{"analytic_error", 1e-30}};
    write_json((d / "strict.json").string(), strict);
    CHECK(cli({"run", (d / "strict.json").string()}) == 4);
    Json sm = read_json((d / "strict" / "manifest.json").string());
    bool named = false;
    for (const auto& c : sm["invariants"])
        if (c["name"] == "analytic_state_error") named = !c["pass"].get<bool>();
    CHECK(named);
}

TEST_CASE("identical configs give byte-identical data") {
    fs::path d = scratch("repro");
    RunManifest a = run_experiment(parse_config(flip_config(d / "a")));
    RunManifest b = run_experiment(parse_config(flip_config(d / "b")));
    CHECK(a.exit_code == 0);
    CHECK(b.exit_code == 0);
    for (const char* f : {"trajectory.csv", "energy.csv"}) {
        std::string x = slurp(d / "a" / f);
        CHECK_FALSE(x.empty());
        CHECK(x == slurp(d / "b" / f));
    }
}

TEST_CASE("discriminant runs are seeded") {
    fs::path d = scratch("seed");
    Json j{{"kind", "discriminant"}, {"seed", 7}, {"numeric", {{"dim", 5}}}, {"output", {{"directory", (d / "a").string()}}}};
    RunManifest a = run_experiment(parse_config(j));
    j["output"]["directory"] = (d / "b").string();
    RunManifest b = run_experiment(parse_config(j));
    CHECK(a.exit_code == 0);
    CHECK(slurp(d / "a" / "eigenvalues.csv") == slurp(d / "b" / "eigenvalues.csv"));
}
