#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

std::string binary() {
    const char* bin = std::getenv("DASTGCN_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "DASTGCN_BIN must point at the CLI binary");
    return bin;
}

int run(const std::string& args, const std::string& log = "/dev/null") {
    const std::string cmd = binary() + " " + args + " >" + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("dastgcn_cli_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

const std::string kTinyModel =
    " --set model.n_max=4 --set model.embed_dim=8 --set model.gat_heads=2"
    " --set model.gat_head_dim=4 --set model.txp_layers=3";

}  // namespace

TEST_CASE("cli: help lists subcommands and config keys") {
    TempDir tmp("help");
    const std::string log = tmp.sub("help.txt");
    CHECK(run("--help", log) == 0);
    const std::string text = slurp(log);
    for (const char* sub : {"prepare", "synth", "train", "eval", "predict", "gradcheck", "layergrid"})
        CHECK(text.find(sub) != std::string::npos);

    const std::string log2 = tmp.sub("help_train.txt");
    CHECK(run("train --help", log2) == 0);
    const std::string text2 = slurp(log2);
    CHECK(text2.find("train.lr") != std::string::npos);
    CHECK(text2.find("model.disable_gat") != std::string::npos);
}

TEST_CASE("cli: unknown flags and unknown config keys are fatal") {
    TempDir tmp("badflag");
    CHECK(run("synth --out-dir " + tmp.sub("o") + " --bogus-flag 1") != 0);
    CHECK(run("synth --out-dir " + tmp.sub("o2") + " --set nonsense.key=1") != 0);
}

TEST_CASE("cli: synth is deterministic and writes valid shards") {
    TempDir tmp("synth");
    const std::string a = tmp.sub("a"), b = tmp.sub("b");
    CHECK(run("synth --out-dir " + a + " --kind crossing --aircraft 3 --count 2 --seed 9") == 0);
    CHECK(run("synth --out-dir " + b + " --kind crossing --aircraft 3 --count 2 --seed 9") == 0);
    REQUIRE(fs::exists(fs::path(a) / "scenes_0000.json"));
    CHECK(slurp(fs::path(a) / "scenes_0000.json") == slurp(fs::path(b) / "scenes_0000.json"));
    CHECK(fs::exists(fs::path(a) / "summary.json"));
    CHECK(fs::exists(fs::path(a) / "config.resolved.txt"));

    auto doc = nlohmann::json::parse(slurp(fs::path(a) / "scenes_0000.json"));
    CHECK(doc.at("scene_count").get<int>() > 0);
    const auto& first = doc.at("scenes").at(0);
    CHECK(first.at("n").get<int>() == 3);
    CHECK(first.at("t_obs").get<int>() == 4);
    CHECK(first.at("t_pred").get<int>() == 6);
}

TEST_CASE("cli: prepare parses CSV, reports drops, and is deterministic") {
    TempDir tmp("prepare");
    const std::string raw = tmp.sub("raw");
    fs::create_directories(raw);
    {
        std::ofstream csv(fs::path(raw) / "tracks.csv");
        csv << "timestamp,aircraft_id,lon,lat,alt\n";
        for (int t = 0; t <= 100; t += 10) {
            csv << t << ",AAA," << (0.001 * t) << ",42.0," << (1000 + t) << "\n";
            csv << t << ",BBB," << (-0.001 * t) << ",42.01," << (1100 + t) << "\n";
        }
        csv << "50,AAA,0.05,42.0,1050\n";   // duplicate timestamp
        csv << "60,CCC,0.0,95.0,1000\n";    // bad latitude
    }
    const std::string out1 = tmp.sub("out1"), out2 = tmp.sub("out2");
    CHECK(run("prepare --data-dir " + raw + " --out-dir " + out1) == 0);
    CHECK(run("prepare --data-dir " + raw + " --out-dir " + out2) == 0);
    REQUIRE(fs::exists(fs::path(out1) / "scenes_0000.json"));
    CHECK(slurp(fs::path(out1) / "scenes_0000.json") == slurp(fs::path(out2) / "scenes_0000.json"));

    auto summary = nlohmann::json::parse(slurp(fs::path(out1) / "summary.json"));
    CHECK(summary.at("total_scenes").get<int>() >= 1);
    CHECK(summary.at("total_duplicates_dropped").get<int>() == 1);
    CHECK(summary.at("total_row_errors").get<int>() == 1);
}

TEST_CASE("cli: prepare on unparseable files exits 2 with reasons") {
    TempDir tmp("badprep");
    const std::string raw = tmp.sub("raw");
    fs::create_directories(raw);
    std::ofstream(fs::path(raw) / "junk.csv") << "not,a,valid,header\n1,2,3,4\n";
    const std::string log = tmp.sub("log.txt");
    CHECK(run("prepare --data-dir " + raw + " --out-dir " + tmp.sub("out"), log) == 2);
    CHECK(slurp(log).find("lacks column") != std::string::npos);
}

TEST_CASE("cli: train, eval, predict, layergrid pipeline on synthetic data") {
    TempDir tmp("pipeline");
    const std::string data = tmp.sub("data");
    CHECK(run("synth --out-dir " + data +
              " --kind crossing --aircraft 3 --count 6 --duration 12 --seed 4" + kTinyModel) == 0);

    const std::string train_out = tmp.sub("train");
    CHECK(run("train --data-dir " + data + " --out-dir " + train_out + kTinyModel +
              " --set train.epochs=3 --set train.lr_switch_epoch=2 --set train.batch_size=8"
              " --seed 11") == 0);
    const std::string ckpt = (fs::path(train_out) / "checkpoint.dastgcn").string();
    REQUIRE(fs::exists(ckpt));
    CHECK(fs::exists(fs::path(train_out) / "train_log.txt"));
    CHECK(fs::exists(fs::path(train_out) / "split_test" / "scenes_0000.json"));

    // training log: one line per epoch with the lr switch applied
    {
        std::istringstream lines(slurp(fs::path(train_out) / "train_log.txt"));
        std::string line;
        std::vector<double> lrs;
        while (std::getline(lines, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream cols(line);
            long long epoch;
            double lr, nll, secs;
            cols >> epoch >> lr >> nll >> secs;
            REQUIRE(!cols.fail());
            CHECK(std::isfinite(nll));
            lrs.push_back(lr);
        }
        REQUIRE(lrs.size() == 3);
        CHECK(lrs[0] == doctest::Approx(0.001));
        CHECK(lrs[2] == doctest::Approx(0.0002));
    }

    const std::string eval_out = tmp.sub("eval");
    const std::string eval_log = tmp.sub("eval_log.txt");
    CHECK(run("eval --data-dir " + data + " --out-dir " + eval_out + " --checkpoint " + ckpt,
              eval_log) == 0);
    auto metrics = nlohmann::json::parse(slurp(fs::path(eval_out) / "metrics.json"));
    for (const char* key : {"ade_horizontal", "ade_vertical", "fde_horizontal", "fde_vertical"}) {
        CHECK(metrics.at(key).is_number());
        CHECK(std::isfinite(metrics.at(key).get<double>()));
    }
    CHECK(metrics.at("protocol").get<std::string>() == "mean");

    const std::string pred_out = tmp.sub("pred");
    CHECK(run("predict --data-dir " + data + " --out-dir " + pred_out + " --checkpoint " + ckpt) ==
          0);
    // trajectory rows = sum over scenes of nodes * (t_obs + 2 t_pred)
    auto shard = nlohmann::json::parse(slurp(fs::path(data) / "scenes_0000.json"));
    int64_t expected_rows = 0;
    for (const auto& s : shard.at("scenes"))
        expected_rows += s.at("n").get<int64_t>() * (4 + 2 * 6);
    int64_t rows = 0;
    {
        std::istringstream lines(slurp(fs::path(pred_out) / "trajectories.txt"));
        std::string line;
        while (std::getline(lines, line))
            if (!line.empty() && line[0] != '#' && line.rfind("scene\t", 0) != 0) ++rows;
    }
    CHECK(rows == expected_rows);
    CHECK(fs::exists(fs::path(pred_out) / "forecast_dump.txt"));

    const std::string grid_out = tmp.sub("grid");
    CHECK(run("layergrid --data-dir " + data + " --out-dir " + grid_out + kTinyModel +
              " --set grid.epochs=1 --set train.batch_size=8 --seed 3") == 0);
    const std::string grid = slurp(fs::path(grid_out) / "layer_grid.txt");
    CHECK(grid.find("reduced budget") != std::string::npos);
    CHECK(grid.find("7") != std::string::npos);
}

TEST_CASE("cli: training twice with one seed reproduces the checkpoint bytes") {
    TempDir tmp("repro");
    const std::string data = tmp.sub("data");
    CHECK(run("synth --out-dir " + data + " --kind merge --aircraft 3 --count 4 --seed 21") == 0);
    const std::string o1 = tmp.sub("o1"), o2 = tmp.sub("o2");
    const std::string args = " --data-dir " + data + kTinyModel +
                             " --set train.epochs=2 --set train.lr_switch_epoch=1"
                             " --set train.batch_size=8 --seed 33";
    CHECK(run("train --out-dir " + o1 + args) == 0);
    CHECK(run("train --out-dir " + o2 + args) == 0);
    CHECK(slurp(fs::path(o1) / "checkpoint.dastgcn") == slurp(fs::path(o2) / "checkpoint.dastgcn"));
}

TEST_CASE("cli: numeric blowup aborts with exit code 3") {
    TempDir tmp("blowup");
    const std::string data = tmp.sub("data");
    CHECK(run("synth --out-dir " + data + " --kind crossing --aircraft 3 --count 2 --seed 6") == 0);
    const std::string log = tmp.sub("log.txt");
    // an absurd learning rate with clipping disabled overflows within a few steps
    const int code = run("train --data-dir " + data + " --out-dir " + tmp.sub("out") + kTinyModel +
                             " --set train.epochs=5 --set train.lr_switch_epoch=4"
                             " --set train.lr=1e18 --set train.lr_after=1e18"
                             " --set train.clip_norm=0 --seed 1",
                         log);
    CHECK(code == 3);
    CHECK(slurp(log).find("numeric abort") != std::string::npos);
}

TEST_CASE("cli: gradcheck reports a sub-tolerance error and exits 0") {
    TempDir tmp("gradcheck");
    const std::string log = tmp.sub("log.txt");
    CHECK(run("gradcheck --seed 2", log) == 0);
    const std::string text = slurp(log);
    CHECK(text.find("max relative error") != std::string::npos);
    CHECK(text.find("PASS") != std::string::npos);
}

TEST_CASE("cli: out-dir lock prevents concurrent writers") {
    TempDir tmp("lock");
    const std::string out = tmp.sub("out");
    fs::create_directories(out);
    std::ofstream(fs::path(out) / ".lock") << "";
    CHECK(run("synth --out-dir " + out) != 0);
    fs::remove(fs::path(out) / ".lock");
    CHECK(run("synth --out-dir " + out) == 0);
}

TEST_CASE("cli: config file values merge under command-line overrides") {
    TempDir tmp("config");
    const std::string cfg_path = tmp.sub("run.cfg");
    {
        std::ofstream cfg(cfg_path);
        cfg << "# comment line\n";
        cfg << "model.n_max = 4\n";
        cfg << "synth: ignored? no\n";  // malformed: no '='
    }
    CHECK(run("synth --config " + cfg_path + " --out-dir " + tmp.sub("o1")) != 0);
    {
        std::ofstream cfg(cfg_path);
        cfg << "model.n_max = 4\nmodel.embed_dim = 8\n";
    }
    CHECK(run("synth --config " + cfg_path + " --out-dir " + tmp.sub("o2") +
              " --set model.embed_dim=16") == 0);
    const std::string echoed = slurp(fs::path(tmp.sub("o2")) / "config.resolved.txt");
    CHECK(echoed.find("model.embed_dim = 16") != std::string::npos);
    CHECK(echoed.find("model.n_max = 4") != std::string::npos);
}
