#include <gtest/gtest.h>

#include <cstdlib>

#include "run_config.hpp"

using namespace gspde;
using namespace gspde::cli;

namespace {

std::size_t error_line(const std::string& text) {
    try {
        parse_config(text, "t.toml");
    } catch (const ConfigError& e) {
        return e.line();
    }
    ADD_FAILURE() << "no ConfigError for:\n" << text;
    return 0;
}

}  // namespace

TEST(RunConfig, DefaultsDescribeTheReferenceProblem) {
    auto c = parse_config("", "empty");
    auto p = c.problem();
    EXPECT_EQ(p.kernel.to_string(), "band:r=0.25");
    EXPECT_EQ(p.interaction.to_string(), "kuramoto_sine");
    EXPECT_EQ(p.horizon, 1.0);
    EXPECT_EQ(p.noise.s(), 2.0);
    EXPECT_EQ(c.trials, 100u);
}

TEST(RunConfig, ReadsEverySection) {
    auto c = parse_config(R"(
[problem]
kernel = "constant:c=0.5"
interaction = "zero"
drift = "zero"
initial = "sine:k=1,a=0.1"
T = 2

[noise]
family = "dirichlet"
s = 3
M = 16

[experiment]
mode = "vary_dt"
dt_list = [0.02, 0.01]
dt_star = 0.001
n = 32
trials = 7
seed = "18446744073709551615"
guard = false

[simulate]
record = "trajectory"
stride = 4

[check]
trials = 2000

[psi]
n_list = [8, 16]

[kernel_info]
resolution_factor = 4

[output]
dir = "out"
formats = ["csv"]
)",
                          "t.toml");
    EXPECT_EQ(c.T, 2.0);
    EXPECT_EQ(c.noise, "dirichlet:s=3,M=16");
    EXPECT_EQ(c.problem().noise.M(), 16u);
    EXPECT_EQ(c.mode, "vary_dt");
    EXPECT_EQ(c.dt_list, (std::vector<double>{0.02, 0.01}));
    EXPECT_EQ(c.seed, 18446744073709551615ull);
    EXPECT_FALSE(c.guard);
    EXPECT_EQ(c.record, "trajectory");
    EXPECT_EQ(c.stride, 4u);
    EXPECT_EQ(c.check_trials, 2000u);
    EXPECT_EQ(c.psi_n_list, (std::vector<std::size_t>{8, 16}));
    EXPECT_EQ(c.resolution_factor, 4u);
    EXPECT_TRUE(c.wants("csv"));
    EXPECT_FALSE(c.wants("svg"));
}

TEST(RunConfig, ErrorsNameTheLine) {
    EXPECT_EQ(error_line("[problem]\nT = 1\n\n[experiment]\nbogus = 1\n"), 5u);
    EXPECT_EQ(error_line("[nope]\n"), 1u);
    EXPECT_EQ(error_line("[experiment]\ntrials = \"many\"\n"), 2u);
    EXPECT_EQ(error_line("[experiment]\nn_list = [16,\n  -4]\n"), 3u);
    EXPECT_EQ(error_line("[problem]\n\nkernel = \"ring:r=1\"\n"), 3u);
    EXPECT_EQ(error_line("[problem]\nT = -1\n"), 2u);
    EXPECT_EQ(error_line("[noise]\nfamily = \"periodic\"\ns = 2\n"), 2u);
    EXPECT_EQ(error_line("[noise]\nspec = \"periodic:s=2,M=4\"\nM = 4\nfamily = \"periodic\"\ns = 2\n"), 2u);
    EXPECT_EQ(error_line("seed = 3\n"), 1u);
    EXPECT_EQ(error_line("[problem\n"), 1u);
    EXPECT_EQ(error_line("[output]\nformats = [\"png\"]\n"), 2u);
}

TEST(RunConfig, ExperimentValidationIsAConfigError) {
    auto c = parse_config("[experiment]\nn_list = []\n", "t.toml");
    try {
        c.experiment(StudyMode::vary_n);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 1u);
        EXPECT_NE(std::string(e.what()).find("n_list is empty"), std::string::npos);
    }
    auto alias = parse_config("[noise]\nspec = \"periodic:s=2,M=4096\"\n[experiment]\nn_star = 64\nn_list=[8,16,32]\n",
                              "t.toml");
    EXPECT_THROW(alias.experiment(StudyMode::vary_n), ConfigError);
    auto bad_dt = parse_config("[experiment]\nmode = \"vary_dt\"\ndt_list = [0.3]\n", "t.toml");
    EXPECT_THROW(bad_dt.experiment(StudyMode::vary_dt), ConfigError);
}

TEST(RunConfig, CanonicalEchoRoundTrips) {
    auto c = parse_config(R"(
[problem]
initial = "constant:c=0.3"
T = 0.5
[noise]
family = "periodic"
s = 1.5
M = 64
[experiment]
dt = 1e-3
dt_list = [4e-3, 5e-4]
seed = "12345678901234567890"
)",
                          "t.toml");
    const std::string once = to_toml(c);
    auto back = parse_config(once, "echo");
    EXPECT_EQ(to_toml(back), once);
    EXPECT_EQ(back.noise, "periodic:s=1.5,M=64");
    EXPECT_EQ(back.seed, 12345678901234567890ull);
    EXPECT_EQ(back.dt_list, c.dt_list);
    EXPECT_EQ(back.T, 0.5);
}

TEST(RunConfig, FlagsBeatFileBeatsDefault) {
    auto c = parse_config("[experiment]\nseed = 4\ntrials = 9\nthreads = 2\n[output]\ndir = \"x\"\n", "t.toml");
    Overrides none;
    apply(c, none);
    EXPECT_EQ(c.seed, 4u);
    EXPECT_EQ(c.trials, 9u);
    EXPECT_EQ(c.out_dir, "x");
    Overrides o;
    o.seed = 11;
    o.trials = 3;
    o.out = "y";
    o.threads = 5;
    o.max_error = true;
    apply(c, o);
    EXPECT_EQ(c.seed, 11u);
    EXPECT_EQ(c.trials, 3u);
    EXPECT_EQ(c.out_dir, "y");
    EXPECT_EQ(c.effective_threads(), 5u);
    EXPECT_EQ(c.checkpoints, 10u);
}

TEST(RunConfig, ThreadEnvironmentFallback) {
    auto c = parse_config("[experiment]\nthreads = 2\n", "t.toml");
    ::setenv("GRAPHON_SPDE_THREADS", "3", 1);
    apply(c, Overrides{});
    EXPECT_EQ(c.effective_threads(), 3u);
    Overrides o;
    o.threads = 6;
    apply(c, o);
    EXPECT_EQ(c.effective_threads(), 6u);
    ::unsetenv("GRAPHON_SPDE_THREADS");
    EXPECT_EQ(parse_config("", "d").effective_threads(), 1u);
}
