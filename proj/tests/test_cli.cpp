#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"
#include "support.hpp"

using namespace msmorph;
using namespace msmorph::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args)
{
    const std::string cmd = std::string(MSMORPH_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<char> bytes(const fs::path& p) { return detail::read_file_bytes(p); }

nlohmann::ordered_json load_json(const fs::path& p)
{
    const auto b = bytes(p);
    return nlohmann::ordered_json::parse(std::string(b.begin(), b.end()));
}

/// P5 header fields and pixel bytes.
struct Pgm {
    std::size_t w = 0, h = 0;
    std::vector<unsigned char> px;
};

Pgm load_pgm(const fs::path& p)
{
    const auto b = bytes(p);
    Pgm g;
    int maxval = 0, consumed = 0;
    std::sscanf(b.data(), "P5\n%zu %zu\n%d\n%n", &g.w, &g.h, &maxval, &consumed);
    g.px.assign(b.begin() + consumed, b.end());
    return g;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir = scratch_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    }
    std::string at(const std::string& name) const { return (dir / name).string(); }
    fs::path dir;
};

} // namespace

TEST_F(Cli, SynthDeterministic)
{
    ASSERT_EQ(run("synth --size 20,18,16 --kind blobs --seed 4 --out-dir " + at("a")), 0);
    ASSERT_EQ(run("synth --size 20,18,16 --kind blobs --seed 4 --out-dir " + at("b")), 0);
    for (auto f : {"fixed.mvol", "moving.mvol", "fixed_labels.mvol", "moving_labels.mvol", "truth_field.mvol"})
        EXPECT_EQ(bytes(dir / "a" / f), bytes(dir / "b" / f)) << f;
}

TEST_F(Cli, SynthZeroAmplitude)
{
    ASSERT_EQ(run("synth --size 16,16,16 --deform-amplitude 0 --out-dir " + at("s")), 0);
    EXPECT_EQ(bytes(dir / "s/fixed.mvol"), bytes(dir / "s/moving.mvol"));
    EXPECT_EQ(bytes(dir / "s/fixed_labels.mvol"), bytes(dir / "s/moving_labels.mvol"));
}

TEST_F(Cli, SynthTruthDoesNotFold)
{
    ASSERT_EQ(run("synth --size 48,48,48 --kind spheres --seed 7 --deform-amplitude 2.4 --deform-sigma 6 --out-dir " +
                  at("s")),
              0);
    const auto f = read_mvol_as<DisplacementField>(dir / "s/truth_field.mvol");
    EXPECT_EQ(jacobian_det_stats(f).fraction_nonpositive, 0.0);
}

TEST_F(Cli, SynthUsageErrors)
{
    EXPECT_EQ(run("synth --size 4,4,4 --out-dir " + at("s")), 2);
    EXPECT_EQ(run("synth --kind cubes --out-dir " + at("s")), 2);
    EXPECT_EQ(run("synth --size 16,16 --out-dir " + at("s")), 2);
    EXPECT_EQ(run("synth"), 2);
    EXPECT_EQ(run("synth --out-dir /proc/msmorph_no_such_dir"), 1);
}

TEST_F(Cli, RegisterSelfAndErrors)
{
    ASSERT_EQ(run("synth --size 16,16,16 --seed 2 --out-dir " + at("s")), 0);
    ASSERT_EQ(run("register --fixed " + at("s/fixed.mvol") + " --moving " + at("s/fixed.mvol") +
                  " --fixed-labels " + at("s/fixed_labels.mvol") + " --moving-labels " + at("s/fixed_labels.mvol") +
                  " --levels 2 --out-field " + at("f.mvol") + " --out-warped " + at("w.mvol") + " --report " +
                  at("r.json")),
              0);
    const auto r = load_json(dir / "r.json");
    EXPECT_LT(r["registration"]["final_mean_abs_displacement"].get<double>(), 0.05);
    EXPECT_EQ(r["registration"]["stages"].size(), 3u);
    EXPECT_EQ(r["registration"]["final_dsc"].get<double>(), 1.0);
    EXPECT_EQ(r["manifest"]["command"], "register");
    EXPECT_EQ(r["manifest"]["config"]["levels"], 2);
    EXPECT_TRUE(r["manifest"]["wall_seconds"].is_null());
    EXPECT_EQ(read_mvol_as<DisplacementField>(dir / "f.mvol").dims(), (Dims{16, 16, 16}));

    EXPECT_EQ(run("register --fixed " + at("s/fixed.mvol")), 2);
    EXPECT_EQ(run("register --fixed " + at("s/fixed.mvol") + " --moving " + at("s/moving.mvol") + " --weighting x"), 2);
    EXPECT_EQ(run("register --fixed " + at("s/fixed.mvol") + " --moving " + at("s/moving.mvol") + " --levels 6"), 1);

    write_mvol(dir / "small.mvol", ScalarVolume(Dims{16, 16, 8}));
    EXPECT_EQ(run("register --fixed " + at("s/fixed.mvol") + " --moving " + at("small.mvol")), 1);
}

TEST_F(Cli, RegisterReportsStageDsc)
{
    ASSERT_EQ(run("synth --size 24,24,24 --seed 3 --deform-amplitude 2 --deform-sigma 4 --out-dir " + at("s")), 0);
    ASSERT_EQ(run("register --fixed " + at("s/fixed.mvol") + " --moving " + at("s/moving.mvol") + " --fixed-labels " +
                  at("s/fixed_labels.mvol") + " --moving-labels " + at("s/moving_labels.mvol") +
                  " --levels 3 --timings --report " + at("r.json")),
              0);
    const auto r = load_json(dir / "r.json");
    const auto& stages = r["registration"]["stages"];
    ASSERT_EQ(stages.size(), 4u);
    for (std::size_t s = 1; s < stages.size(); ++s)
        EXPECT_GE(stages[s]["mean_dsc"].get<double>(), stages[s - 1]["mean_dsc"].get<double>() - 0.01);
    EXPECT_TRUE(r["manifest"]["wall_seconds"].is_number());
}

TEST_F(Cli, Apply)
{
    ASSERT_EQ(run("synth --size 16,16,16 --seed 5 --deform-amplitude 2 --deform-sigma 4 --out-dir " + at("s")), 0);
    EXPECT_EQ(run("apply --field " + at("s/truth_field.mvol") + " --in " + at("s/fixed.mvol") + " --out " +
                  at("m.mvol")),
              0);
    EXPECT_EQ(bytes(dir / "m.mvol"), bytes(dir / "s/moving.mvol"));
    EXPECT_EQ(run("apply --labels --field " + at("s/truth_field.mvol") + " --in " + at("s/fixed_labels.mvol") +
                  " --out " + at("l.mvol")),
              0);
    EXPECT_EQ(bytes(dir / "l.mvol"), bytes(dir / "s/moving_labels.mvol"));

    write_mvol(dir / "zero.mvol", DisplacementField(Dims{16, 16, 16}));
    EXPECT_EQ(run("apply --field " + at("zero.mvol") + " --in " + at("s/moving.mvol") + " --out " + at("z.mvol")), 0);
    EXPECT_EQ(bytes(dir / "z.mvol"), bytes(dir / "s/moving.mvol"));

    EXPECT_EQ(run("apply --labels --field " + at("zero.mvol") + " --in " + at("s/fixed.mvol") + " --out " +
                  at("x.mvol")),
              1);
    write_mvol(dir / "zero8.mvol", DisplacementField(Dims{8, 16, 16}));
    EXPECT_EQ(run("apply --field " + at("zero8.mvol") + " --in " + at("s/fixed.mvol") + " --out " + at("x.mvol")), 1);
}

TEST_F(Cli, EvaluateMatchesLibrary)
{
    ASSERT_EQ(run("synth --size 20,20,20 --seed 6 --deform-amplitude 2 --deform-sigma 4 --out-dir " + at("s")), 0);
    ASSERT_EQ(run("evaluate --fixed-labels " + at("s/fixed_labels.mvol") + " --warped-labels " +
                  at("s/moving_labels.mvol") + " --field " + at("s/truth_field.mvol") + " --report " + at("e.json")),
              0);
    const auto j = load_json(dir / "e.json");
    const auto fixed = read_mvol_as<LabelVolume>(dir / "s/fixed_labels.mvol");
    const auto moving = read_mvol_as<LabelVolume>(dir / "s/moving_labels.mvol");
    const auto truth = read_mvol_as<DisplacementField>(dir / "s/truth_field.mvol");
    const auto r = evaluate_all(fixed, moving, truth);
    EXPECT_EQ(j["metrics"]["mean_dsc"].get<double>(), r.mean_dsc);
    EXPECT_EQ(j["metrics"]["mean_hd95_mm"].get<double>(), r.mean_hd95);
    EXPECT_EQ(j["metrics"]["mean_assd_mm"].get<double>(), r.mean_assd);
    for (const auto& [label, m] : r.per_label)
        EXPECT_EQ(j["metrics"]["per_label"][std::to_string(label)]["dsc"].get<double>(), m.dsc);
    // Re-serializing the parsed report reproduces it.
    const auto b = bytes(dir / "e.json");
    EXPECT_EQ(j.dump(2) + "\n", std::string(b.begin(), b.end()));
}

TEST_F(Cli, EvaluateIdentity)
{
    ASSERT_EQ(run("synth --size 16,16,16 --seed 8 --out-dir " + at("s")), 0);
    write_mvol(dir / "zero.mvol", DisplacementField(Dims{16, 16, 16}));
    ASSERT_EQ(run("evaluate --fixed-labels " + at("s/fixed_labels.mvol") + " --warped-labels " +
                  at("s/fixed_labels.mvol") + " --field " + at("zero.mvol") + " --report " + at("e.json")),
              0);
    const auto j = load_json(dir / "e.json")["metrics"];
    EXPECT_EQ(j["mean_dsc"].get<double>(), 1.0);
    EXPECT_EQ(j["mean_hd95_mm"].get<double>(), 0.0);
    EXPECT_EQ(j["mean_assd_mm"].get<double>(), 0.0);
    EXPECT_EQ(j["nonpositive_jacobian_fraction"].get<double>(), 0.0);
    EXPECT_EQ(run("evaluate --fixed-labels " + at("s/fixed_labels.mvol") + " --field " + at("zero.mvol") +
                  " --report " + at("e.json")),
              2);
}

TEST_F(Cli, Viz)
{
    ASSERT_EQ(run("synth --size 20,16,12 --seed 9 --out-dir " + at("s")), 0);
    write_mvol(dir / "zero.mvol", DisplacementField(Dims{20, 16, 12}));
    ASSERT_EQ(run("viz --fixed " + at("s/fixed.mvol") + " --moving " + at("s/fixed.mvol") + " --field " +
                  at("zero.mvol") + " --axis y --slice 5 --out " + at("v")),
              0);
    for (auto suffix : {"_fixed", "_moving", "_warped", "_weights", "_grid"}) {
        const auto g = load_pgm(dir / ("v" + std::string(suffix) + ".pgm"));
        EXPECT_EQ(g.w, 20u) << suffix;
        EXPECT_EQ(g.h, 12u) << suffix;
        EXPECT_EQ(g.px.size(), 240u) << suffix;
    }
    for (auto p : load_pgm(dir / "v_weights.pgm").px)
        EXPECT_NEAR(int(p), 128, 1);

    // Zero field: lit pixels exactly on rows and columns that are multiples of 4.
    const auto grid = load_pgm(dir / "v_grid.pgm");
    for (std::size_t v = 0; v < grid.h; ++v)
        for (std::size_t u = 0; u < grid.w; ++u)
            EXPECT_EQ(grid.px[v * grid.w + u], (u % 4 == 0 || v % 4 == 0) ? 255 : 0) << u << "," << v;

    EXPECT_EQ(run("viz --fixed " + at("s/fixed.mvol") + " --moving " + at("s/fixed.mvol") + " --axis z --slice 12 --out " +
                  at("v")),
              1);
    EXPECT_EQ(run("viz --fixed " + at("s/fixed.mvol") + " --moving " + at("s/fixed.mvol") + " --axis w --slice 1 --out " +
                  at("v")),
              2);
}
