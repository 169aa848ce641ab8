// Experiment configuration: one flat TOML-style document describing the
// model, grid, true parameter, estimator, run, quadrature, and output blocks.
// Parsing either yields a fully validated runnable experiment or throws a
// ConfigError listing every problem; unknown keys are rejected.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sdefit/diffusion.hpp"
#include "sdefit/estimator.hpp"
#include "sdefit/quadrature.hpp"
#include "sdefit/simulator.hpp"

namespace sdefit {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class EstimatorVariant { Value, Time, ProjectedVector, Normalized };

std::string variant_name(EstimatorVariant v);

struct ExperimentConfig {
    // [model]
    FamilyTag family = FamilyTag::CEV;
    double gamma = 2.0;          // CEV elasticity
    double alpha = 1.0;          // CIR reversion level
    std::string link_lambda = "exp";
    std::string link_sigma = "exp";
    std::string state_space = "auto";

    // top level
    Theta true_theta;

    // [grid]
    std::vector<double> grid_points;
    std::optional<double> grid_radius;
    std::vector<std::pair<double, double>> grid_neighborhoods;

    // [estimator]
    EstimatorVariant variant = EstimatorVariant::Value;
    std::vector<std::string> estimate_coords;  // e.g. {"lambda"} or {"lambda","sigma"}
    Theta init;
    std::string gain = "constant_sign";
    double gain_sign = 1.0;
    std::vector<double> k_matrix;  // row-major, projected vector runs
    std::string schedule = "a_over_n_plus_b";
    double schedule_a = 1.0;
    double schedule_b = 10.0;
    double schedule_power = 1.0;
    std::vector<std::pair<double, double>> box;  // empty = unconstrained
    std::string channels = "both";               // projected: value|time|both
    std::string which = "value";                 // normalized: value|time
    std::string alpha_source = "true_theta";     // normalized: true_theta|pilot
    std::int64_t pilot_cycles = 0;
    std::int64_t start_index = 1;                // normalized: first 1/n index

    // [run]
    std::int64_t cycles = 10000;
    std::int64_t replications = 1;
    std::uint64_t seed = 1;
    double dt = 1e-4;
    std::int64_t burn_in = 0;
    double x0 = 1.0;
    bool bridge_correction = true;
    std::string crossing = "linear_interpolation";
    double max_path_time = 100.0;
    std::int64_t checkpoint = 0;

    // [quadrature]
    QuadratureConfig quad;

    // [output]
    std::string output_directory = "out";
    std::int64_t trajectory_stride = 0;

    // [assert] - optional acceptance thresholds checked by the commands
    std::optional<double> assert_median_error_below;
    std::optional<double> assert_gbar_norm_below;
    std::optional<double> assert_variance_ratio_low;
    std::optional<double> assert_variance_ratio_high;
    std::optional<double> assert_quantile_tolerance;
    std::optional<double> assert_occupancy_tolerance;
    bool assert_sim_3sigma = false;

    static ExperimentConfig parse_string(const std::string& text);
    static ExperimentConfig parse_file(const std::string& path);
    std::string serialize() const;

    /// Full cross-field validation; throws ConfigError listing every problem.
    void validate() const;

    ParametricDiffusion make_model() const;
    ObservationGrid make_grid() const;
    ParameterBinding make_binding() const;
    ParameterSpace make_space() const;
    StepSchedule make_schedule() const;
    PathConfig make_path_config() const;
    Theta true_theta_free() const;

    /// Index of a named coordinate within the family's parameter vector.
    std::size_t coord_index(const std::string& name) const;
    std::vector<std::size_t> free_indices() const;
};

}  // namespace sdefit
