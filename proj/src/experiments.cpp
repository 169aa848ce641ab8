#include "sdefit/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include "json.hpp"

namespace sdefit {

using nlohmann::json;

void parallel_for(std::int64_t n_tasks, int threads,
                  const std::function<void(std::int64_t)>& fn) {
    if (threads <= 1 || n_tasks <= 1) {
        for (std::int64_t i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const int n_workers = static_cast<int>(std::min<std::int64_t>(threads, n_tasks));
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) {
        pool.emplace_back([&]() {
            while (true) {
                const std::int64_t i = next.fetch_add(1);
                if (i >= n_tasks) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

double sample_quantile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double w = h - static_cast<double>(lo);
    return values[lo] * (1.0 - w) + values[hi] * w;
}

namespace {

double median(std::vector<double> values) { return sample_quantile(std::move(values), 0.5); }

Observable make_observable(const std::string& name) {
    if (name == "square") return [](double x) { return x * x; };
    return identity_observable();
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

double l2_error(const Theta& theta, const Theta& truth) {
    double acc = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double d = theta[i] - truth[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

MomentsResult run_moments(const ExperimentConfig& config) {
    const ParametricDiffusion model = config.make_model();
    const ObservationGrid grid = config.make_grid();
    const Observable f = identity_observable();
    const Observable g = identity_observable();

    MomentsResult result;
    result.table = build_moment_table(model, config.true_theta, grid, f, g, config.quad);
    result.table_json = result.table.to_json();

    json scans = json::array();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (std::size_t coord : config.free_indices()) {
            ParameterBinding scan_binding(config.true_theta, {coord});
            const double center = config.true_theta[coord];
            MonotonicityReport report =
                monotonicity_scan(model, scan_binding, grid, grid.points[i], f, center - 1.0,
                                  center + 1.0, 21, config.quad);
            json entry;
            entry["d"] = grid.points[i];
            entry["coordinate"] = coord;
            entry["applicable"] = report.applicable;
            entry["strictly_monotone"] = report.strictly_monotone;
            entry["direction"] = report.direction;
            entry["note"] = report.note;
            scans.push_back(std::move(entry));
            result.scans.push_back(std::move(report));
        }
    }
    json report;
    report["command"] = "moments";
    report["theta"] = config.true_theta;
    report["monotonicity"] = std::move(scans);
    result.report_json = report.dump(2);
    return result;
}

SimulateResult run_simulate(const ExperimentConfig& config) {
    const ParametricDiffusion model = config.make_model();
    const ObservationGrid grid = config.make_grid();
    const PathConfig path = config.make_path_config();

    Rng rng(config.seed, 0);
    SimulateResult result;
    result.records = generate_stream(model, config.true_theta, grid, config.x0, config.cycles,
                                     path, rng);

    const MomentTable table = build_moment_table(model, config.true_theta, grid,
                                                 identity_observable(), identity_observable(),
                                                 config.quad);

    json points = json::array();
    bool all_within = true;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::vector<double> elapsed;
        std::int64_t right_exits = 0;
        for (const ObservationRecord& rec : result.records) {
            if (rec.grid_point != grid.points[i]) continue;
            elapsed.push_back(rec.exit_elapsed);
            if (rec.exit_point == grid.right(i)) ++right_exits;
        }
        const double n = static_cast<double>(elapsed.size());
        json entry;
        entry["d"] = grid.points[i];
        entry["visits"] = elapsed.size();
        if (elapsed.empty()) {
            entry["note"] = "unvisited";
            points.push_back(std::move(entry));
            continue;
        }
        const MomentEntry& m = table.entries[i];
        const double freq = static_cast<double>(right_exits) / n;
        const double se_p = std::sqrt(m.exit_prob_right * (1.0 - m.exit_prob_right) / n);
        const double mean_t = std::accumulate(elapsed.begin(), elapsed.end(), 0.0) / n;
        double var_t = 0.0, m4 = 0.0;
        for (double t : elapsed) {
            const double d = t - mean_t;
            var_t += d * d;
            m4 += d * d * d * d;
        }
        var_t /= n;
        m4 /= n;
        const double se_mean = std::sqrt(m.var_time / n);
        const double se_var = std::sqrt(std::max(m4 - var_t * var_t, 0.0) / n);
        entry["right_exit_freq"] = freq;
        entry["p_model"] = m.exit_prob_right;
        entry["z_exit_prob"] = se_p > 0.0 ? (freq - m.exit_prob_right) / se_p : 0.0;
        entry["mean_exit_time"] = mean_t;
        entry["eta_time_model"] = m.eta_time;
        entry["z_exit_time"] = se_mean > 0.0 ? (mean_t - m.eta_time) / se_mean : 0.0;
        entry["var_exit_time"] = var_t;
        entry["var_time_model"] = m.var_time;
        entry["z_exit_time_var"] = se_var > 0.0 ? (var_t - m.var_time) / se_var : 0.0;
        const bool within = std::fabs(entry["z_exit_prob"].get<double>()) <= 3.0 &&
                            std::fabs(entry["z_exit_time"].get<double>()) <= 3.0 &&
                            std::fabs(entry["z_exit_time_var"].get<double>()) <= 3.0;
        entry["within_3sigma"] = within;
        all_within = all_within && within;
        points.push_back(std::move(entry));
    }

    json summary;
    summary["command"] = "simulate";
    summary["cycles"] = config.cycles;
    summary["seed"] = config.seed;
    summary["dt"] = config.dt;
    summary["points"] = std::move(points);
    summary["all_within_3sigma"] = all_within;
    if (config.assert_sim_3sigma) result.asserts_passed = all_within;
    summary["asserts_passed"] = result.asserts_passed;
    result.summary_json = summary.dump(2);
    return result;
}

namespace {

struct RunContext {
    const ExperimentConfig& config;
    ParametricDiffusion model;
    ObservationGrid grid;
    ParameterBinding binding;
    ParameterSpace space;
    PathConfig path;
    Observable f;
    Observable g;
    Theta truth_free;
    GainSpec gain;
    std::vector<double> normalized_alpha;  // normalized variant, oracle mode
    std::shared_ptr<const MomentTable> table_at_true;
    Eigen::VectorXd p_model;
};

GainSpec resolve_gain(const ExperimentConfig& config, const MomentTable* table,
                      const std::vector<std::size_t>& free) {
    if (config.gain == "constant_sign") return GainSpec::constant_sign(config.gain_sign);
    if (config.gain == "ratio_sign") return GainSpec::ratio_sign();
    if (config.gain == "matrix_k")
        return GainSpec::matrix_k(config.k_matrix, free.size());
    // table_alpha: per-point derivative gain taken from the true-theta table.
    if (table == nullptr) throw ConfigError("table_alpha gain needs a moment table");
    std::vector<double> alpha;
    const bool time_variant = config.variant == EstimatorVariant::Time;
    for (const MomentEntry& e : table->entries)
        alpha.push_back(time_variant ? e.alpha_time.at(free[0]) : e.alpha_value.at(free[0]));
    return GainSpec::table_alpha(std::move(alpha));
}

RunContext make_run_context(const ExperimentConfig& config, bool need_table) {
    RunContext ctx{config,
                   config.make_model(),
                   config.make_grid(),
                   config.make_binding(),
                   config.make_space(),
                   config.make_path_config(),
                   make_observable("identity"),
                   make_observable("identity"),
                   config.true_theta_free(),
                   GainSpec::constant_sign(1.0),
                   {},
                   nullptr,
                   {}};
    const bool table_needed = need_table || config.gain == "table_alpha" ||
                              config.variant == EstimatorVariant::Normalized ||
                              config.variant == EstimatorVariant::ProjectedVector;
    if (table_needed) {
        auto table = std::make_shared<MomentTable>(build_moment_table(
            ctx.model, config.true_theta, ctx.grid, ctx.f, ctx.g, config.quad));
        ctx.table_at_true = table;
        ctx.p_model = stationary_vector(
            model_transition_matrix(ctx.model, config.true_theta, ctx.grid, config.quad).probs);
    }
    ctx.gain = resolve_gain(config, ctx.table_at_true.get(), config.free_indices());
    if (config.variant == EstimatorVariant::Normalized &&
        config.alpha_source == "true_theta") {
        ctx.normalized_alpha =
            normalized_gains(*ctx.table_at_true, ctx.binding,
                             config.which == "time" ? EtaKind::Time : EtaKind::Value);
    }
    return ctx;
}

ResidualChannel channels_from_string(const std::string& s) {
    if (s == "value") return ResidualChannel::Value;
    if (s == "time") return ResidualChannel::Time;
    return ResidualChannel::Both;
}

}  // namespace

EstimateResult run_estimate(const ExperimentConfig& config,
                            const std::vector<ObservationRecord>* replay, int threads) {
    const RunContext ctx = make_run_context(config, config.assert_gbar_norm_below.has_value());
    const ResidualChannel channels = channels_from_string(config.channels);
    const EtaKind which = config.which == "time" ? EtaKind::Time : EtaKind::Value;

    EstimateResult result;
    result.rows.resize(static_cast<std::size_t>(config.replications));
    result.outside_proven_hypotheses =
        ctx.space.kind == ParameterSpace::Kind::Unconstrained && ctx.binding.free_dimension() > 1;

    std::vector<double> gbar_norms(static_cast<std::size_t>(config.replications), 0.0);
    const bool want_gbar = config.variant == EstimatorVariant::ProjectedVector ||
                           config.assert_gbar_norm_below.has_value();

    parallel_for(config.replications, threads, [&](std::int64_t rep) {
        const auto t0 = std::chrono::steady_clock::now();
        QuadratureMomentProvider provider(ctx.model, ctx.grid, ctx.binding, ctx.f, config.quad);
        EstimatorState state =
            EstimatorState::make(config.init, config.make_schedule(), ctx.gain, ctx.space);
        if (config.variant == EstimatorVariant::Normalized) state.n = config.start_index;
        ReplicationRow& row = result.rows[static_cast<std::size_t>(rep)];
        row.rep = rep;
        if (config.trajectory_stride > 0) {
            state.trajectory = &row.trajectory;
            state.trajectory_stride = config.trajectory_stride;
        }

        Rng rng(config.seed, static_cast<std::uint64_t>(rep));
        double current = 0.0;
        if (replay == nullptr)
            current = first_hit_grid(ctx.model, config.true_theta, config.x0, ctx.grid,
                                     ctx.path, rng).second;

        for (std::int64_t cycle = 1; cycle <= config.cycles; ++cycle) {
            ObservationRecord rec;
            if (replay) {
                if (static_cast<std::size_t>(cycle - 1) >= replay->size()) break;
                rec = (*replay)[static_cast<std::size_t>(cycle - 1)];
            } else {
                rec = run_cycle(ctx.model, config.true_theta, current, ctx.grid, ctx.path, rng,
                                cycle);
                current = rec.next_grid_point;
            }
            if (cycle <= config.burn_in) continue;
            switch (config.variant) {
                case EstimatorVariant::Value:
                    update_value(state, rec, provider, ctx.f);
                    break;
                case EstimatorVariant::Time:
                    update_time(state, rec, provider, ctx.g);
                    break;
                case EstimatorVariant::ProjectedVector:
                    update_projected_vector(state, rec, provider, ctx.f, ctx.g, channels);
                    break;
                case EstimatorVariant::Normalized:
                    update_normalized(state, rec, provider, ctx.normalized_alpha, which, ctx.f,
                                      ctx.g);
                    break;
            }
            if (cycle == config.checkpoint) {
                row.checkpoint_theta = state.theta;
                row.checkpoint_error = l2_error(state.theta, ctx.truth_free);
            }
        }

        row.final_theta = state.theta;
        row.error_norm = l2_error(state.theta, ctx.truth_free);
        row.updates = state.updates;
        row.skipped = state.skipped;
        row.skip_budget_exceeded =
            state.skipped > std::max<std::int64_t>(1, state.updates + state.skipped) / 1000;
        if (want_gbar) {
            gbar_norms[static_cast<std::size_t>(rep)] = [&] {
                std::vector<double> p(ctx.p_model.data(),
                                      ctx.p_model.data() + ctx.p_model.size());
                const Theta gbar = stationary_residual(state.theta, provider,
                                                       *ctx.table_at_true, p, channels);
                double norm = 0.0;
                for (double v : gbar) norm += v * v;
                return std::sqrt(norm);
            }();
        }
        row.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    });

    std::vector<double> errors, checkpoint_errors;
    for (const ReplicationRow& row : result.rows) {
        errors.push_back(row.error_norm);
        if (config.checkpoint > 0) checkpoint_errors.push_back(row.checkpoint_error);
        result.skip_budget_exceeded |= row.skip_budget_exceeded;
    }
    result.median_error = median(errors);
    if (!checkpoint_errors.empty()) result.median_checkpoint_error = median(checkpoint_errors);
    if (want_gbar) result.median_gbar_norm = median(gbar_norms);

    result.asserts_passed = !result.skip_budget_exceeded;
    if (config.assert_median_error_below)
        result.asserts_passed &= result.median_error < *config.assert_median_error_below;
    if (config.assert_gbar_norm_below)
        result.asserts_passed &= result.median_gbar_norm < *config.assert_gbar_norm_below;

    json rows = json::array();
    for (const ReplicationRow& row : result.rows) {
        json r;
        r["rep"] = row.rep;
        r["final_theta"] = row.final_theta;
        r["error_norm"] = row.error_norm;
        if (config.checkpoint > 0) {
            r["checkpoint_theta"] = row.checkpoint_theta;
            r["checkpoint_error"] = row.checkpoint_error;
        }
        r["updates"] = row.updates;
        r["skipped"] = row.skipped;
        r["wall_ms"] = row.wall_ms;
        rows.push_back(std::move(r));
    }
    json summary;
    summary["command"] = "estimate";
    summary["variant"] = variant_name(config.variant);
    summary["cycles"] = config.cycles;
    summary["replications"] = config.replications;
    summary["true_theta_free"] = ctx.truth_free;
    summary["median_error"] = result.median_error;
    summary["q25_error"] = sample_quantile(errors, 0.25);
    summary["q75_error"] = sample_quantile(errors, 0.75);
    if (config.checkpoint > 0) {
        summary["checkpoint"] = config.checkpoint;
        summary["median_checkpoint_error"] = result.median_checkpoint_error;
    }
    if (want_gbar) summary["median_gbar_norm"] = result.median_gbar_norm;
    summary["skip_budget_exceeded"] = result.skip_budget_exceeded;
    summary["outside_proven_hypotheses"] = result.outside_proven_hypotheses;
    summary["replication_rows"] = std::move(rows);
    summary["asserts_passed"] = result.asserts_passed;
    result.summary_json = summary.dump(2);
    return result;
}

CltResult run_clt(const ExperimentConfig& config, int threads) {
    if (config.variant != EstimatorVariant::Normalized)
        throw ConfigError("clt requires estimator.variant = normalized");
    const RunContext ctx = make_run_context(config, true);
    const EtaKind which = config.which == "time" ? EtaKind::Time : EtaKind::Value;
    const std::size_t coord = ctx.binding.free_indices()[0];

    CltResult result;
    result.predicted_sigma2 =
        asymptotic_variance_scalar(*ctx.table_at_true, ctx.p_model, which, coord);
    const double sigma_pred = std::sqrt(result.predicted_sigma2);

    const std::int64_t m = config.replications;
    const std::int64_t n_updates = config.cycles - config.burn_in;
    result.sqrt_n_errors.resize(static_cast<std::size_t>(m), 0.0);

    parallel_for(m, threads, [&](std::int64_t rep) {
        QuadratureMomentProvider provider(ctx.model, ctx.grid, ctx.binding, ctx.f, config.quad);
        Rng rng(config.seed, static_cast<std::uint64_t>(rep));
        double current = first_hit_grid(ctx.model, config.true_theta, config.x0, ctx.grid,
                                        ctx.path, rng).second;

        std::vector<double> alpha = ctx.normalized_alpha;
        std::int64_t start_cycle = 1;
        EstimatorState state = EstimatorState::make(
            config.init, config.make_schedule(), GainSpec::constant_sign(1.0),
            ParameterSpace::unconstrained(1));
        state.n = config.start_index;
        if (config.alpha_source == "pilot") {
            // Experimental two-stage mode: a sign-gain pilot supplies the
            // derivative table in place of the true parameter.
            EstimatorState pilot = EstimatorState::make(config.init, config.make_schedule(),
                                                        GainSpec::ratio_sign(),
                                                        ParameterSpace::unconstrained(1));
            for (std::int64_t cycle = 1; cycle <= config.pilot_cycles; ++cycle) {
                const ObservationRecord rec = run_cycle(ctx.model, config.true_theta, current,
                                                        ctx.grid, ctx.path, rng, cycle);
                current = rec.next_grid_point;
                update_value(pilot, rec, provider, ctx.f);
            }
            const MomentTable pilot_table =
                build_moment_table(ctx.model, ctx.binding.embed(pilot.theta), ctx.grid, ctx.f,
                                   ctx.g, config.quad);
            alpha = normalized_gains(pilot_table, ctx.binding, which);
            state.theta = pilot.theta;
        }

        for (std::int64_t cycle = start_cycle; cycle <= config.cycles; ++cycle) {
            const ObservationRecord rec = run_cycle(ctx.model, config.true_theta, current,
                                                    ctx.grid, ctx.path, rng, cycle);
            current = rec.next_grid_point;
            if (cycle <= config.burn_in) continue;
            update_normalized(state, rec, provider, alpha, which, ctx.f, ctx.g);
        }
        result.sqrt_n_errors[static_cast<std::size_t>(rep)] =
            std::sqrt(static_cast<double>(n_updates)) * (state.theta[0] - ctx.truth_free[0]);
    });

    const double mn = static_cast<double>(m);
    result.empirical_mean =
        std::accumulate(result.sqrt_n_errors.begin(), result.sqrt_n_errors.end(), 0.0) / mn;
    double ss = 0.0;
    for (double e : result.sqrt_n_errors) {
        const double d = e - result.empirical_mean;
        ss += d * d;
    }
    result.empirical_variance = (m > 1) ? ss / (mn - 1.0) : 0.0;
    result.variance_ratio = result.empirical_variance / result.predicted_sigma2;
    result.mean_band = 3.0 * sigma_pred / std::sqrt(mn);

    std::vector<double> standardized;
    standardized.reserve(result.sqrt_n_errors.size());
    for (double e : result.sqrt_n_errors) standardized.push_back(e / sigma_pred);
    result.q05 = sample_quantile(standardized, 0.05);
    result.q95 = sample_quantile(standardized, 0.95);

    result.asserts_passed = true;
    if (config.assert_variance_ratio_low)
        result.asserts_passed &= result.variance_ratio >= *config.assert_variance_ratio_low;
    if (config.assert_variance_ratio_high)
        result.asserts_passed &= result.variance_ratio <= *config.assert_variance_ratio_high;
    if (config.assert_quantile_tolerance) {
        const double tol = *config.assert_quantile_tolerance;
        result.asserts_passed &= std::fabs(result.q05 + 1.6448536269514722) <= tol &&
                                 std::fabs(result.q95 - 1.6448536269514722) <= tol;
    }

    json summary;
    summary["command"] = "clt";
    summary["replications"] = m;
    summary["cycles"] = config.cycles;
    summary["burn_in"] = config.burn_in;
    summary["which"] = config.which;
    summary["alpha_source"] = config.alpha_source;
    summary["predicted_sigma2"] = result.predicted_sigma2;
    summary["empirical_variance"] = result.empirical_variance;
    summary["variance_ratio"] = result.variance_ratio;
    summary["empirical_mean"] = result.empirical_mean;
    summary["mean_band_3sigma"] = result.mean_band;
    summary["mean_within_band"] = std::fabs(result.empirical_mean) <= result.mean_band;
    json quant;
    quant["p05"] = result.q05;
    quant["p25"] = sample_quantile(standardized, 0.25);
    quant["p50"] = sample_quantile(standardized, 0.50);
    quant["p75"] = sample_quantile(standardized, 0.75);
    quant["p95"] = result.q95;
    quant["normal_p05"] = -1.6448536269514722;
    quant["normal_p25"] = -0.6744897501960817;
    quant["normal_p50"] = 0.0;
    quant["normal_p75"] = 0.6744897501960817;
    quant["normal_p95"] = 1.6448536269514722;
    summary["standardized_quantiles"] = std::move(quant);
    summary["sqrt_n_errors"] = result.sqrt_n_errors;
    summary["asserts_passed"] = result.asserts_passed;
    result.summary_json = summary.dump(2);
    return result;
}

DiagnoseResult run_diagnose(const ExperimentConfig& config,
                            const std::vector<ObservationRecord>& stream) {
    const ParametricDiffusion model = config.make_model();
    const ObservationGrid grid = config.make_grid();
    const ParameterBinding binding = config.make_binding();

    DiagnoseResult result;
    json report;
    report["command"] = "diagnose";
    report["cycles"] = stream.size();

    const TransitionMatrix estimated = estimate_transition_matrix(stream, grid);
    const TransitionMatrix modeled =
        model_transition_matrix(model, config.true_theta, grid, config.quad);
    report["estimated_A"] = matrix_to_json(estimated.probs);
    report["model_A"] = matrix_to_json(modeled.probs);
    report["unvisited_rows"] = estimated.unvisited_rows;

    bool adjacency_ok = true;
    try {
        estimated.check_invariants();
    } catch (const ChainError&) {
        adjacency_ok = false;
    }
    report["tridiagonal_support"] = adjacency_ok;
    report["type_one_estimated"] = is_type_one(estimated.probs);

    // Parity structure of the two-step chain.
    json parity;
    const Eigen::MatrixXd a2 = estimated.probs * estimated.probs;
    parity["a2_type_two"] = is_type_two(a2, 1e-15);
    double mult_err = 0.0;
    double spread = 0.0;
    double min_entry = 1.0;
    try {
        const Eigen::MatrixXd po = p_odd(a2, 1e-15);
        const Eigen::MatrixXd pe = p_even(a2, 1e-15);
        const Eigen::MatrixXd a4 = a2 * a2;
        mult_err = std::max((p_odd(a4, 1e-12) - po * po).cwiseAbs().maxCoeff(),
                            (p_even(a4, 1e-12) - pe * pe).cwiseAbs().maxCoeff());
        for (const Eigen::MatrixXd* block : {&po, &pe}) {
            Eigen::MatrixXd power = *block;
            for (int step = 0; step < 6; ++step) power = power * power;  // block^64
            min_entry = std::min(min_entry, power.minCoeff());
            for (Eigen::Index j = 0; j < power.cols(); ++j)
                spread = std::max(spread,
                                  power.col(j).maxCoeff() - power.col(j).minCoeff());
        }
        parity["multiplicativity_error"] = mult_err;
        parity["power64_row_spread"] = spread;
        parity["power64_min_entry"] = min_entry;
    } catch (const ChainError& e) {
        parity["error"] = e.what();
    }
    report["parity"] = std::move(parity);

    const Eigen::VectorXd p_model = stationary_vector(modeled.probs);
    report["stationary_p_model"] = vector_to_json(p_model);
    Eigen::VectorXd p_used = p_model;
    try {
        const Eigen::VectorXd p_est = stationary_vector(estimated.probs);
        report["stationary_p_estimated"] = vector_to_json(p_est);
        const double res = ((p_est.transpose() * estimated.probs).transpose() - p_est)
                               .lpNorm<Eigen::Infinity>();
        report["stationary_residual_estimated"] = res;
    } catch (const ChainError& e) {
        report["stationary_p_estimated"] = nullptr;
        report["stationary_note"] = e.what();
    }

    const Eigen::VectorXd freq = occupancy(stream, grid);
    report["occupancy"] = vector_to_json(freq);
    const double occupancy_gap = (freq - p_model).lpNorm<Eigen::Infinity>();
    report["max_occupancy_gap"] = occupancy_gap;

    json ergodic = json::array();
    {
        const ErgodicAverage id_avg =
            ergodic_average(stream, [](double d) { return d; }, grid, p_model);
        ergodic.push_back({{"h", "identity"},
                           {"empirical", id_avg.empirical},
                           {"predicted", id_avg.predicted}});
        const double d1 = grid.points.front();
        const ErgodicAverage ind_avg = ergodic_average(
            stream, [d1](double d) { return d == d1 ? 1.0 : 0.0; }, grid, p_model);
        ergodic.push_back({{"h", "indicator_d1"},
                           {"empirical", ind_avg.empirical},
                           {"predicted", ind_avg.predicted}});
    }
    report["ergodic_averages"] = std::move(ergodic);

    const MomentTable table = build_moment_table(model, config.true_theta, grid,
                                                 identity_observable(), identity_observable(),
                                                 config.quad);
    json variance;
    for (std::size_t coord : binding.free_indices()) {
        json entry;
        entry["coordinate"] = coord;
        try {
            entry["sigma2_value"] =
                asymptotic_variance_scalar(table, p_model, EtaKind::Value, coord);
        } catch (const ChainError& e) {
            entry["sigma2_value_error"] = e.what();
        }
        try {
            entry["sigma2_time"] =
                asymptotic_variance_scalar(table, p_model, EtaKind::Time, coord);
        } catch (const ChainError& e) {
            entry["sigma2_time_error"] = e.what();
        }
        variance.push_back(std::move(entry));
    }
    report["asymptotic_variance"] = std::move(variance);

    try {
        // Covariance block at the trace-optimal gain K = A^{-1}.
        const Eigen::Index dim = static_cast<Eigen::Index>(binding.free_dimension());
        Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(dim, dim);
        for (std::size_t i = 0; i < table.entries.size(); ++i) {
            Eigen::VectorXd grad(dim);
            for (Eigen::Index c = 0; c < dim; ++c)
                grad(c) = -table.entries[i].alpha_value.at(
                    binding.free_indices()[static_cast<std::size_t>(c)]);
            hessian += p_model(static_cast<Eigen::Index>(i)) * grad * grad.transpose();
        }
        const Eigen::MatrixXd k_opt = hessian.inverse();
        const CovarianceReport cov = asymptotic_covariance(table, p_model, k_opt, binding);
        json block;
        block["k"] = matrix_to_json(k_opt);
        block["sigma"] = matrix_to_json(cov.sigma);
        block["hessian"] = matrix_to_json(cov.hessian);
        block["stationary_cov"] = matrix_to_json(cov.stationary_cov);
        block["ka_eigenvalues"] = vector_to_json(cov.ka_eigenvalues);
        report["covariance"] = std::move(block);
    } catch (const std::exception& e) {
        report["covariance"] = nullptr;
        report["covariance_note"] = e.what();
    }

    result.asserts_passed = true;
    if (config.assert_occupancy_tolerance)
        result.asserts_passed &= occupancy_gap < *config.assert_occupancy_tolerance;
    report["asserts_passed"] = result.asserts_passed;
    result.report_json = report.dump(2);
    return result;
}

}  // namespace sdefit
