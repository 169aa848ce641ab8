#include "doctest.h"

#include <string>

#include "sdefit/config.hpp"

using namespace sdefit;

namespace {
const char* kCevConfig = R"(
# CEV benchmark
true_theta = [0.0, 0.0]

[model]
family = "cev"
gamma = 2.0

[grid]
points = [0.8, 0.9, 1.0, 1.1, 1.2]
radius = 0.04

[estimator]
variant = "value"
estimate = "lambda"
init = [0.5]
gain = "ratio_sign"
a = 400.0
b = 50.0
box = [[-1.0, 1.0]]

[run]
cycles = 1000
replications = 4
seed = 7
x0 = 1.0
)";
}  // namespace

TEST_CASE("parse a benchmark config") {
    const auto cfg = ExperimentConfig::parse_string(kCevConfig);
    CHECK(cfg.family == FamilyTag::CEV);
    CHECK(cfg.gamma == 2.0);
    CHECK(cfg.true_theta == Theta{0.0, 0.0});
    CHECK(cfg.grid_points.size() == 5);
    CHECK(cfg.grid_radius == 0.04);
    CHECK(cfg.variant == EstimatorVariant::Value);
    CHECK(cfg.estimate_coords == std::vector<std::string>{"lambda"});
    CHECK(cfg.init == Theta{0.5});
    CHECK(cfg.schedule_a == 400.0);
    CHECK(cfg.box.size() == 1);
    CHECK(cfg.cycles == 1000);
    CHECK(cfg.seed == 7);
    CHECK(cfg.free_indices() == std::vector<std::size_t>{0});
    CHECK(cfg.true_theta_free() == Theta{0.0});

    const auto model = cfg.make_model();
    CHECK(model.family() == FamilyTag::CEV);
    const auto grid = cfg.make_grid();
    CHECK(grid.size() == 5);
    CHECK(validate_grid(model, grid).empty());
}

TEST_CASE("round-trip parse -> serialize -> parse is the identity") {
    const auto cfg = ExperimentConfig::parse_string(kCevConfig);
    const std::string first = cfg.serialize();
    const auto reparsed = ExperimentConfig::parse_string(first);
    CHECK(reparsed.serialize() == first);
}

TEST_CASE("unknown keys are rejected with precise messages") {
    const std::string bad = std::string(kCevConfig) + "\n[model]\nbogus_key = 1.0\n";
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse_string(bad),
                         doctest::Contains("model.bogus_key"), ConfigError);
}

TEST_CASE("duplicate keys and malformed lines are rejected") {
    CHECK_THROWS_AS(ExperimentConfig::parse_string("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse_string("novalue\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse_string("[unclosed\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse_string("x = [1, 2\n"), ConfigError);
}

TEST_CASE("validation collects errors across blocks") {
    std::string broken = kCevConfig;
    broken += "\n[run]\ndt = -1.0\n";
    // dt duplicated? dt was not set before, so this extends [run].
    try {
        ExperimentConfig::parse_string(broken);
        FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("run.dt") != std::string::npos);
    }

    // Overlapping neighborhoods are reported through grid validation.
    std::string overlap = R"(
true_theta = [0.0, 0.0]
[model]
family = "cev"
[grid]
points = [1.0, 1.05]
radius = 0.04
[estimator]
variant = "value"
estimate = "lambda"
init = [0.0]
)";
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse_string(overlap),
                         doctest::Contains("overlap"), ConfigError);
}

TEST_CASE("cir neighborhoods must not straddle the reversion level") {
    const std::string straddle = R"(
true_theta = [0.0, 0.0]
[model]
family = "cir"
alpha = 1.0
[grid]
points = [0.98, 1.3]
radius = 0.05
[estimator]
variant = "time"
estimate = "sigma"
init = [0.0]
)";
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse_string(straddle),
                         doctest::Contains("straddles"), ConfigError);
}

TEST_CASE("variant-specific constraints") {
    std::string normalized_with_box = R"(
true_theta = [0.0, 0.0]
[model]
family = "cev"
[grid]
points = [1.0]
radius = 0.05
[estimator]
variant = "normalized"
estimate = "lambda"
init = [0.0]
box = [[-1.0, 1.0]]
)";
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse_string(normalized_with_box),
                         doctest::Contains("unconstrained"), ConfigError);

    std::string projected_without_k = R"(
true_theta = [0.0, 0.0]
[model]
family = "cev"
[grid]
points = [1.0]
radius = 0.05
[estimator]
variant = "projected_vector"
estimate = "lambda,sigma"
init = [0.0, 0.0]
box = [[-1.0, 1.0], [-1.0, 1.0]]
)";
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse_string(projected_without_k),
                         doctest::Contains("matrix_k"), ConfigError);
}

TEST_CASE("shipped benchmark configs parse cleanly") {
#ifdef SDEFIT_CONFIG_DIR
    for (const char* name :
         {"cev_benchmark.toml", "cir_benchmark.toml", "cev_multi_benchmark.toml",
          "cev_clt.toml"}) {
        const std::string path = std::string(SDEFIT_CONFIG_DIR) + "/" + name;
        CHECK_NOTHROW(ExperimentConfig::parse_file(path));
    }
#endif
}
