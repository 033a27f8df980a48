#include "amp/cli.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"amp"};
    for (const std::string& a : args)
        argv.push_back(a.c_str());
    return amp::cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("usage errors exit with code 1") {
    CHECK(run_cli({}) == 1);
    CHECK(run_cli({"no-such-command"}) == 1);
    CHECK(run_cli({"train"}) == 1);          // missing required options
    CHECK(run_cli({"sweep", "--param", "q", "--values", "1", "--out", "/tmp/x"}) == 2);
}

TEST_CASE("missing config or data files exit with code 2") {
    TempDir tmp("amp_cli_codes");
    CHECK(run_cli({"train", "--data", (tmp.path / "none.ampd").string(), "--out",
                   tmp.path.string(), "--config", "missing.toml"}) == 2);
    CHECK(run_cli({"train", "--data", (tmp.path / "none.ampd").string(), "--out",
                   tmp.path.string()}) == 2);
    CHECK(run_cli({"eval", "--data", (tmp.path / "none.ampd").string(), "--checkpoint",
                   (tmp.path / "none.ampc").string()}) == 2);
}

TEST_CASE("gradcheck subcommand passes and honors --out") {
    TempDir tmp("amp_cli_gradcheck");
    CHECK(run_cli({"gradcheck", "--seed", "0", "--states", "5", "--out",
                   tmp.path.string()}) == 0);
    CHECK(fs::exists(tmp.path / "gradcheck.txt"));
    CHECK(fs::exists(tmp.path / "run-config.toml"));
}

TEST_CASE("gen-data then train then eval then explain round-trip") {
    TempDir tmp("amp_cli_pipeline");
    const std::string data_dir = (tmp.path / "data").string();
    const std::string run_dir = (tmp.path / "run").string();
    const std::string expl_dir = (tmp.path / "expl").string();

    CHECK(run_cli({"gen-data", "--out", data_dir, "--seed", "3", "--classes", "3",
                   "--channels", "6", "--height", "3", "--width", "3", "--parts", "2",
                   "--samples", "8"}) == 0);
    CHECK(fs::exists(fs::path(data_dir) / "train.ampd"));
    CHECK(fs::exists(fs::path(data_dir) / "test.ampd"));
    CHECK(fs::exists(fs::path(data_dir) / "run-config.toml"));

    CHECK(run_cli({"train", "--data", data_dir + "/train.ampd", "--out", run_dir,
                   "--seed", "3", "--epochs", "4", "--k", "4", "--depth", "8",
                   "--checkpoint-every", "2"}) == 0);
    CHECK(fs::exists(fs::path(run_dir) / "checkpoint.ampc"));
    CHECK(fs::exists(fs::path(run_dir) / "checkpoint_epoch_2.ampc"));
    CHECK(fs::exists(fs::path(run_dir) / "checkpoint_epoch_4.ampc"));
    CHECK(fs::exists(fs::path(run_dir) / "training_log.tsv"));

    CHECK(run_cli({"eval", "--data", data_dir + "/test.ampd", "--checkpoint",
                   run_dir + "/checkpoint.ampc"}) == 0);

    CHECK(run_cli({"explain", "--cache-data", data_dir + "/train.ampd", "--data",
                   data_dir + "/test.ampd", "--checkpoint", run_dir + "/checkpoint.ampc",
                   "--index", "0", "--out", expl_dir, "--seed", "3"}) == 0);
    CHECK(fs::exists(fs::path(expl_dir) / "explanation.json"));
}

#ifdef AMP_CLI_PATH
TEST_CASE("identical seeds produce byte-identical output files via the binary") {
    TempDir tmp("amp_cli_repro");
    const std::string binary = AMP_CLI_PATH;
    auto shell = [&](const std::string& cmd) {
        const int rc = std::system((binary + " " + cmd + " >/dev/null 2>&1").c_str());
        CHECK(rc == 0);
    };

    for (const char* run : {"a", "b"}) {
        const std::string dir = (tmp.path / run).string();
        shell("gen-data --out " + dir + "/data --seed 11 --classes 3 --channels 6 "
              "--height 3 --width 3 --parts 2 --samples 8");
        shell("train --data " + dir + "/data/train.ampd --out " + dir +
              "/run --seed 11 --epochs 4 --k 4 --depth 8");
        shell("explain --cache-data " + dir + "/data/train.ampd --checkpoint " + dir +
              "/run/checkpoint.ampc --index 2 --out " + dir + "/expl --seed 11");
    }

    const std::vector<std::string> files = {
        "data/train.ampd", "data/test.ampd",   "data/run-config.toml",
        "run/checkpoint.ampc", "run/training_log.tsv", "run/run-config.toml",
        "expl/explanation.json"};
    for (const std::string& f : files) {
        const std::string a = slurp(tmp.path / "a" / f);
        const std::string b = slurp(tmp.path / "b" / f);
        CHECK(!a.empty());
        CHECK(a == b);
    }
    // Every exported heatmap is identical too.
    for (const auto& entry : fs::directory_iterator(tmp.path / "a" / "expl")) {
        const std::string name = entry.path().filename().string();
        CHECK(slurp(entry.path()) == slurp(tmp.path / "b" / "expl" / name));
    }
}
#endif
