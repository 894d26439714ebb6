#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("partco_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int cli(const std::string& args) {
    const std::string cmd = std::string(PARTCO_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream is(p);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    return lines;
}

}  // namespace

TEST_CASE("no arguments prints usage and exits 1") { CHECK(cli("") == 1); }

TEST_CASE("unknown subcommand and bad flags exit 1") {
    CHECK(cli("frobnicate") == 1);
    CHECK(cli("gen --preset nope --out /tmp/x") == 1);
}

TEST_CASE("missing input files exit 2") {
    CHECK(cli("build-labels --features /nonexistent.ptcf --manifest /nonexistent.csv "
              "--out /tmp/x.plm") == 2);
    CHECK(cli("eval --checkpoint /nonexistent.pckp --features /nonexistent.ptcf "
              "--manifest /nonexistent.csv") == 2);
}

TEST_CASE("full pipeline completes with exit 0 and ablate sweeps emit their rows") {
    TempDir tmp;
    const std::string dir = tmp.path.string();
    const std::string small =
        " --classes 6 --old-classes 3 --images-per-class 8 --grid 8 --dim 16";

    REQUIRE(cli("gen --preset fine_grained --out " + dir + " --seed 4" + small) == 0);
    REQUIRE(fs::exists(tmp.path / "features.ptcf"));
    REQUIRE(fs::exists(tmp.path / "manifest.csv"));
    REQUIRE(fs::exists(tmp.path / "truth.truth"));

    REQUIRE(cli("build-labels --features " + dir + "/features.ptcf --manifest " + dir +
                "/manifest.csv --order both --k-candidates 2..6 --seed 4 --out " + dir +
                "/labels.plm") == 0);

    const std::string fast_train =
        " --set epochs=2 --set batch=16 --set rep_dim=8 --set part_dim=8 --set seed=4";
    REQUIRE(cli("train --features " + dir + "/features.ptcf --manifest " + dir +
                "/manifest.csv --labels " + dir + "/labels.plm" + fast_train + " --out " + dir +
                "/ckpt.pckp --history " + dir + "/history.csv") == 0);

    REQUIRE(cli("eval --checkpoint " + dir + "/ckpt.pckp --features " + dir +
                "/features.ptcf --manifest " + dir + "/manifest.csv --mode parametric --csv " +
                dir + "/eval.csv") == 0);
    const auto eval_lines = read_lines(tmp.path / "eval.csv");
    REQUIRE(eval_lines.size() == 4);
    CHECK(eval_lines[0] == "split,acc,count");
    CHECK(eval_lines[1].rfind("all,", 0) == 0);
    CHECK(eval_lines[2].rfind("old,", 0) == 0);
    CHECK(eval_lines[3].rfind("new,", 0) == 0);

    // nonparametric evaluation path
    CHECK(cli("eval --checkpoint " + dir + "/ckpt.pckp --features " + dir +
              "/features.ptcf --manifest " + dir +
              "/manifest.csv --mode nonparametric --seed 4") == 0);

    // dim sweep emits one row per projection size
    REQUIRE(cli("ablate --sweep dim --features " + dir + "/features.ptcf --manifest " + dir +
                "/manifest.csv --labels " + dir + "/labels.plm" + fast_train + " --out " + dir +
                "/dims.csv") == 0);
    const auto dim_lines = read_lines(tmp.path / "dims.csv");
    REQUIRE(dim_lines.size() == 5);
    CHECK(dim_lines[0] == "dim,acc_all,acc_old,acc_new");
    CHECK(dim_lines[1].rfind("64,", 0) == 0);
    CHECK(dim_lines[2].rfind("128,", 0) == 0);
    CHECK(dim_lines[3].rfind("256,", 0) == 0);
    CHECK(dim_lines[4].rfind("512,", 0) == 0);

    // order sweep covers 1/2/both/off
    REQUIRE(cli("ablate --sweep order --features " + dir + "/features.ptcf --manifest " + dir +
                "/manifest.csv --labels " + dir + "/labels.plm" + fast_train + " --out " + dir +
                "/orders.csv") == 0);
    const auto order_lines = read_lines(tmp.path / "orders.csv");
    REQUIRE(order_lines.size() == 5);
    CHECK(order_lines[0] == "order,acc_all,acc_old,acc_new");
    CHECK(order_lines[1].rfind("1,", 0) == 0);
    CHECK(order_lines[2].rfind("2,", 0) == 0);
    CHECK(order_lines[3].rfind("both,", 0) == 0);
    CHECK(order_lines[4].rfind("off,", 0) == 0);
}

TEST_CASE("gradcheck subcommand passes at defaults") {
    CHECK(cli("gradcheck --instances 5 --seed 2") == 0);
}

TEST_CASE("config file keys are honored and unknown keys rejected") {
    TempDir tmp;
    const std::string dir = tmp.path.string();
    {
        std::ofstream os(tmp.path / "run.cfg");
        os << "epochs=2\nbatch=16\nrep_dim=8\npart_dim=8\nseed=4\norder=off\n";
    }
    REQUIRE(cli("gen --preset fine_grained --out " + dir +
                " --seed 4 --classes 4 --old-classes 2 --images-per-class 6 --grid 8 --dim 16") ==
            0);
    CHECK(cli("train --features " + dir + "/features.ptcf --manifest " + dir +
              "/manifest.csv --config " + dir + "/run.cfg --out " + dir + "/c.pckp") == 0);

    {
        std::ofstream os(tmp.path / "bad.cfg");
        os << "not_a_key=1\n";
    }
    CHECK(cli("train --features " + dir + "/features.ptcf --manifest " + dir +
              "/manifest.csv --config " + dir + "/bad.cfg --out " + dir + "/c.pckp") == 1);
}
