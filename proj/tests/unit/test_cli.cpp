#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "enfc");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = enfc::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("enfc_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

}  // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"datagen", "--out", "x", "--bogus"}).code == 2);
    CHECK(run({"train", "--in", "x", "--model", "linear"}).code == 2);
    CHECK(run({"simulate", "--out", "x"}).code == 2);
}

TEST_CASE("help lists every flag with its default") {
    for (const char* sub : {"datagen", "encode", "train", "predict", "interval", "simulate", "fit-baseline",
                            "evaluate", "calibrate"}) {
        const auto r = run({sub, "--help"});
        INFO(sub << "\n" << r.out);
        CHECK(r.code == 0);
        CHECK(r.out.find("--") != std::string::npos);
    }
    const auto sim = run({"simulate", "--help"}).out;
    CHECK(sim.find("--replications UINT:POSITIVE [1024]") != std::string::npos);
    CHECK(sim.find("--cap-months FLOAT:POSITIVE [72]") != std::string::npos);
    CHECK(run({"interval", "--help"}).out.find("[0.1]") != std::string::npos);
    CHECK(run({"train", "--help"}).out.find("default: 200") != std::string::npos);
}

TEST_CASE("datagen is byte-identical across reruns") {
    TempDir tmp("datagen");
    REQUIRE(run({"datagen", "--trials", "120", "--seed", "7", "--out", tmp / "a"}).code == 0);
    REQUIRE(run({"datagen", "--trials", "120", "--seed", "7", "--out", tmp / "b"}).code == 0);
    for (const char* f : {"trials.jsonl", "sites.jsonl", "embeddings.bin", "latents.jsonl"}) {
        INFO(f);
        CHECK(slurp(tmp.path / "a" / f) == slurp(tmp.path / "b" / f));
        CHECK_FALSE(slurp(tmp.path / "a" / f).empty());
    }
    CHECK(slurp(tmp.path / "a" / "datagen.run.toml").find("seed=7") != std::string::npos);
}

TEST_CASE("missing embeddings is a data error naming the path") {
    TempDir tmp("missing");
    REQUIRE(run({"datagen", "--trials", "60", "--seed", "1", "--out", tmp / "d"}).code == 0);
    REQUIRE(run({"encode", "--in", tmp / "d"}).code == 0);
    const std::string bad = tmp / "absent.bin";
    const auto r = run({"train", "--in", tmp / "d", "--model", "stochastic", "--embeddings", bad});
    CHECK(r.code == 3);
    CHECK(r.err.find(bad) != std::string::npos);
}

TEST_CASE("end-to-end deterministic pipeline") {
    TempDir tmp("e2e");
    const std::string d = tmp / "d";
    REQUIRE(run({"datagen", "--trials", "300", "--seed", "3", "--out", d}).code == 0);
    REQUIRE(run({"encode", "--in", d, "--seed", "2"}).code == 0);
    for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "encoder.json"}) CHECK(fs::exists(tmp.path / "d" / f));

    // Config file values sit under explicit flags.
    {
        std::ofstream cfg(tmp / "run.toml");
        cfg << "[train]\nepochs = 4\nseed = 11\n";
    }
    const std::string model = tmp / "det.enfc";
    REQUIRE(run({"--config", tmp / "run.toml", "train", "--in", d, "--epochs", "3", "--out", model}).code == 0);
    const std::string recorded = slurp(model + ".run.toml");
    CHECK(recorded.find("epochs=3") != std::string::npos);
    CHECK(recorded.find("seed=11") != std::string::npos);

    const std::string metrics = tmp / "metrics.json";
    REQUIRE(run({"evaluate", "--checkpoint", model, "--in", d + "/test.jsonl", "--out", metrics}).code == 0);
    const auto j = nlohmann::json::parse(slurp(metrics));
    for (const char* k : {"mae", "r2", "medae", "coverage_6mo", "interval"}) CHECK(j.contains(k));
    CHECK(j["mae"].is_number());
    for (const char* k : {"level", "accuracy", "median_width"}) CHECK(j["interval"].contains(k));

    // The same run again reproduces the checkpoint and metrics bytes.
    const std::string model2 = tmp / "det2.enfc";
    REQUIRE(run({"--config", tmp / "run.toml", "train", "--in", d, "--epochs", "3", "--out", model2}).code == 0);
    CHECK(slurp(model) == slurp(model2));

    const std::string preds = tmp / "p.jsonl";
    REQUIRE(run({"predict", "--checkpoint", model, "--in", d + "/test.jsonl", "--out", preds}).code == 0);
    REQUIRE(run({"evaluate", "--predictions", preds, "--in", d + "/test.jsonl", "--out", tmp / "m2.json"}).code == 0);
    const auto j2 = nlohmann::json::parse(slurp(tmp / "m2.json"));
    CHECK(j2["mae"] == j["mae"]);

    // A deterministic model has no intervals.
    CHECK(run({"interval", "--checkpoint", model, "--in", d + "/test.jsonl", "--out", tmp / "i.jsonl"}).code == 2);
}

TEST_CASE("stochastic intervals and calibration") {
    TempDir tmp("stoch");
    const std::string d = tmp / "d";
    REQUIRE(run({"datagen", "--trials", "200", "--seed", "4", "--out", d}).code == 0);
    REQUIRE(run({"encode", "--in", d}).code == 0);
    const std::string model = tmp / "s.enfc";
    REQUIRE(run({"train", "--in", d, "--model", "stochastic", "--epochs", "3", "--out", model}).code == 0);
    const std::string test = d + "/test.jsonl";
    REQUIRE(run({"interval", "--checkpoint", model, "--in", test, "--significance", "0.2", "--out", tmp / "i.jsonl"})
                .code == 0);
    const auto first = nlohmann::json::parse(slurp(tmp / "i.jsonl").substr(0, slurp(tmp / "i.jsonl").find('\n')));
    CHECK(first["level"].get<double>() == Catch::Approx(0.8));
    CHECK(first["lower"].get<double>() <= first["upper"].get<double>());
    REQUIRE(run({"calibrate", "--checkpoint", model, "--in", test, "--grid", "0.3,0.1", "--out", tmp / "c.csv"}).code ==
            0);
    CHECK(slurp(tmp / "c.csv").rfind("significance,level,accuracy,median_width\n0.3,0.7,", 0) == 0);
    CHECK(run({"interval", "--checkpoint", model, "--in", test, "--significance", "1", "--out", tmp / "x"}).code == 2);
}

TEST_CASE("poisson-gamma pipeline and baseline") {
    TempDir tmp("pg");
    const std::string d = tmp / "d";
    REQUIRE(run({"datagen", "--trials", "150", "--seed", "5", "--profile", "poisson_gamma", "--out", d}).code == 0);
    REQUIRE(run({"encode", "--in", d, "--pg-eligible"}).code == 0);
    const std::string model = tmp / "pg.enfc";
    REQUIRE(run({"train", "--in", d, "--model", "poisson-gamma", "--epochs", "2", "--out", model}).code == 0);
    const std::string test = d + "/test.jsonl";
    REQUIRE(run({"simulate", "--checkpoint", model, "--in", test, "--replications", "64", "--out", tmp / "s.jsonl"})
                .code == 0);
    REQUIRE(run({"simulate", "--checkpoint", model, "--in", test, "--replications", "64", "--out", tmp / "s2.jsonl"})
                .code == 0);
    CHECK(slurp(tmp / "s.jsonl") == slurp(tmp / "s2.jsonl"));
    REQUIRE(run({"evaluate", "--predictions", tmp / "s.jsonl", "--in", test, "--out", tmp / "m.json"}).code == 0);
    const auto m = nlohmann::json::parse(slurp(tmp / "m.json"));
    CHECK(m["coverage_6mo"].is_number());
    CHECK(m["interval"]["level"].is_null());

    const auto r = run({"fit-baseline", "--in", test, "--corpus", d + "/train.jsonl", "--sites", d + "/sites.jsonl",
                        "--features", "phase", "--replications", "64", "--out", tmp / "b.jsonl"});
    REQUIRE(r.code == 0);
    CHECK_FALSE(slurp(tmp / "b.jsonl").empty());
    CHECK(run({"fit-baseline", "--in", test, "--corpus", d + "/train.jsonl", "--sites", d + "/sites.jsonl",
               "--features", "colour", "--out", tmp / "b2.jsonl"})
              .code == 2);

    const auto direct = run({"simulate", "--sites", "12", "--target", "100", "--rate-shape", "2", "--rate-rate", "1",
                             "--startup-shape", "2", "--startup-rate", "1", "--replications", "128", "--out",
                             tmp / "direct.json"});
    CHECK(direct.code == 0);
}
