#include <doctest.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "somno/cli.hpp"
#include "somno/data.hpp"
#include "somno/model.hpp"

using namespace somno;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("somno-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int n = 0;
        return n;
    }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

int count_data_lines(const fs::path& p, std::string* header = nullptr) {
    std::ifstream is(p);
    REQUIRE(is.good());
    std::string line;
    int n = 0;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (first && header) *header = line;
        if (!first) ++n;
        first = false;
    }
    return n;
}

int run(std::initializer_list<std::string> args) { return cli::run(std::vector<std::string>(args)); }

}  // namespace

TEST_CASE("synth is reproducible per seed and convert round trips bytes") {
    TempDir dir;
    const std::string a = dir / "a.edd";
    const std::string b = dir / "b.edd";
    const std::string c = dir / "c.edd";
    const std::string ann_a = dir / "a.csv";
    const std::string ann_b = dir / "b.csv";

    CHECK(run({"synth", "--out", a, "--annotations", ann_a, "--subjects", "2", "--per-class", "4",
               "--seed", "9"}) == 0);
    CHECK(run({"synth", "--out", b, "--annotations", ann_b, "--subjects", "2", "--per-class", "4",
               "--seed", "9"}) == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(ann_a) == slurp(ann_b));

    CHECK(run({"synth", "--out", c, "--subjects", "2", "--per-class", "4", "--seed", "10"}) == 0);
    CHECK(slurp(a) != slurp(c));

    // .edd -> .csv -> .edd reproduces the container byte for byte: the binary
    // values are already at text-safe precision.
    const std::string csv = dir / "round.csv";
    const std::string back = dir / "round.edd";
    CHECK(run({"convert", "--in", a, "--out", csv}) == 0);
    CHECK(run({"convert", "--in", csv, "--out", back}) == 0);
    CHECK(slurp(a) == slurp(back));

    auto set = data::load_edd(a);
    CHECK(set.samples.size() == 16);
    CHECK(count_data_lines(ann_a) == 16);
}

TEST_CASE("train writes a loadable checkpoint and a loss log, deterministically") {
    TempDir dir;
    const std::string dataset = dir / "train.edd";
    REQUIRE(run({"synth", "--out", dataset, "--subjects", "2", "--per-class", "6", "--seed",
                 "21"}) == 0);

    const std::string ckpt1 = dir / "m1.ckpt";
    const std::string ckpt2 = dir / "m2.ckpt";
    const std::string ckpt3 = dir / "m3.ckpt";
    CHECK(run({"train", "--data", dataset, "--out", ckpt1, "--epochs", "2", "--batch", "8",
               "--seed", "5"}) == 0);
    CHECK(run({"train", "--data", dataset, "--out", ckpt2, "--epochs", "2", "--batch", "8",
               "--seed", "5"}) == 0);
    CHECK(run({"train", "--data", dataset, "--out", ckpt3, "--epochs", "2", "--batch", "8",
               "--seed", "6"}) == 0);
    CHECK(slurp(ckpt1) == slurp(ckpt2));
    CHECK(slurp(ckpt1) != slurp(ckpt3));

    auto [cfg, params] = model::load_checkpoint(ckpt1);
    CHECK(cfg.variant == model::Variant::Full);

    std::string header;
    CHECK(count_data_lines(ckpt1 + ".loss.csv", &header) == 2);
    CHECK(header == "epoch,loss");
}

TEST_CASE("explain produces the csv and svg for a bundle member") {
    TempDir dir;
    const std::string dataset = dir / "d.edd";
    const std::string ckpt = dir / "m.ckpt";
    REQUIRE(run({"synth", "--out", dataset, "--subjects", "2", "--per-class", "5", "--seed",
                 "31"}) == 0);
    REQUIRE(run({"train", "--data", dataset, "--out", ckpt, "--epochs", "1", "--batch", "10",
                 "--seed", "2"}) == 0);

    const std::string out = dir / "explain";
    CHECK(run({"explain", "--data", dataset, "--ckpt", ckpt, "--out", out, "--sample", "3"}) == 0);
    // One comment line, then a row per input point.
    CHECK(count_data_lines(fs::path(out) / "explain.csv") == data::kSampleLength);
    CHECK(fs::exists(fs::path(out) / "explain.svg"));

    // Out-of-range sample index is a usage error.
    CHECK(run({"explain", "--data", dataset, "--ckpt", ckpt, "--out", out, "--sample", "99"}) ==
          1);
}

TEST_CASE("eval writes the report bundle for mixed methods") {
    TempDir dir;
    const std::string dataset = dir / "d.edd";
    REQUIRE(run({"synth", "--out", dataset, "--subjects", "2", "--per-class", "6", "--seed",
                 "41"}) == 0);

    const std::string out = dir / "results";
    CHECK(run({"eval", "--data", dataset, "--out", out, "--method", "cnn", "--method", "lda",
               "--repeats", "1", "--epochs", "1", "--batch", "8", "--seed", "3"}) == 0);

    std::string header;
    // cnn: 2 subjects x 1 repeat x 1 epoch; lda: 2 subjects.
    CHECK(count_data_lines(fs::path(out) / "report.csv", &header) == 4);
    CHECK(header == "method,variant,subject,repeat,epoch,accuracy");
    CHECK(fs::exists(fs::path(out) / "summary.json"));
    CHECK(fs::exists(fs::path(out) / "accuracy.svg"));
}

TEST_CASE("ablate pairs variants in one report") {
    TempDir dir;
    const std::string dataset = dir / "d.edd";
    REQUIRE(run({"synth", "--out", dataset, "--subjects", "2", "--per-class", "6", "--seed",
                 "51"}) == 0);

    const std::string out = dir / "ablation";
    CHECK(run({"ablate", "--data", dataset, "--out", out, "--variants", "full", "--variants",
               "no_batchnorm", "--repeats", "1", "--epochs", "1", "--batch", "8", "--seed",
               "4"}) == 0);
    std::string header;
    // Two variants x 2 subjects x 1 repeat x 1 epoch.
    CHECK(count_data_lines(fs::path(out) / "report.csv", &header) == 4);
    CHECK(fs::exists(fs::path(out) / "summary.json"));
}

TEST_CASE("bands dumps one feature row per sample") {
    TempDir dir;
    const std::string dataset = dir / "d.edd";
    REQUIRE(run({"synth", "--out", dataset, "--subjects", "2", "--per-class", "3", "--seed",
                 "61"}) == 0);
    const std::string out = dir / "bands.csv";
    CHECK(run({"bands", "--data", dataset, "--out", out}) == 0);
    std::string header;
    CHECK(count_data_lines(out, &header) == 12);
    CHECK(header == "subject_id,label,delta,theta,alpha,beta");
}

TEST_CASE("exit codes separate usage, data and format problems") {
    TempDir dir;
    // Usage errors.
    CHECK(run({}) == 1);
    CHECK(run({"frobnicate"}) == 1);
    CHECK(run({"train", "--data", dir / "x.edd"}) == 1);  // missing --out
    CHECK(run({"--help"}) == 0);

    // A dataset that is not there is a data error.
    CHECK(run({"bands", "--data", dir / "missing.edd", "--out", dir / "b.csv"}) == 2);

    // A present but malformed container is a format error.
    const std::string garbage = dir / "garbage.edd";
    {
        std::ofstream os(garbage, std::ios::binary);
        os << "this is not a container";
    }
    CHECK(run({"bands", "--data", garbage, "--out", dir / "b.csv"}) == 2);

    // Unknown extension is a usage error.
    CHECK(run({"bands", "--data", dir / "data.xyz", "--out", dir / "b.csv"}) == 1);

    // Unknown variant name is a usage error too.
    const std::string dataset = dir / "d.edd";
    REQUIRE(run({"synth", "--out", dataset, "--subjects", "2", "--per-class", "3", "--seed",
                 "71"}) == 0);
    CHECK(run({"train", "--data", dataset, "--out", dir / "m.ckpt", "--variant", "resnet",
               "--epochs", "1"}) == 1);
}

TEST_CASE("the environment supplies the default seed") {
    TempDir dir;
    const std::string a = dir / "a.edd";
    const std::string b = dir / "b.edd";
    const std::string c = dir / "c.edd";

    REQUIRE(setenv("SOMNO_SEED", "77", 1) == 0);
    CHECK(run({"synth", "--out", a, "--subjects", "2", "--per-class", "3"}) == 0);
    REQUIRE(unsetenv("SOMNO_SEED") == 0);
    CHECK(run({"synth", "--out", b, "--subjects", "2", "--per-class", "3", "--seed", "77"}) == 0);
    CHECK(slurp(a) == slurp(b));

    // An explicit flag beats the environment.
    REQUIRE(setenv("SOMNO_SEED", "123", 1) == 0);
    CHECK(run({"synth", "--out", c, "--subjects", "2", "--per-class", "3", "--seed", "77"}) == 0);
    CHECK(slurp(c) == slurp(a));

    REQUIRE(setenv("SOMNO_SEED", "not-a-number", 1) == 0);
    CHECK(run({"synth", "--out", dir / "d.edd", "--subjects", "2", "--per-class", "3"}) == 1);
    REQUIRE(unsetenv("SOMNO_SEED") == 0);
}
