#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "sdefit/moments.hpp"
#include "sdefit/rng.hpp"

using namespace sdefit;

namespace {
const QuadratureConfig kQuad{};
ParametricDiffusion driftless(double sigma2) {
    return ParametricDiffusion::custom(
        [](double, const Theta&) { return 0.0; },
        [sigma2](double, const Theta&) { return sigma2; }, StateSpace::real_line(), 0);
}
}  // namespace

TEST_CASE("scale function closed forms") {
    // Zero drift: phi = 1, s(x) = x - c.
    const auto flat = driftless(1.0);
    CHECK(scale_function(flat, {}, 0.0, 0.7, kQuad) == doctest::Approx(0.7).epsilon(1e-10));
    CHECK(scale_function(flat, {}, -0.3, 0.45, kQuad) == doctest::Approx(0.75).epsilon(1e-10));
    CHECK(scale_function(flat, {}, 0.2, 0.2, kQuad) == 0.0);

    // Constant drift: s(x) = (1 - exp(-2 mu x / sigma^2)) / (2 mu / sigma^2).
    const auto bm = ParametricDiffusion::brownian();
    CHECK(scale_function(bm, {1.0, 1.0}, 0.0, 0.5, kQuad) ==
          doctest::Approx(0.31606027941427884).epsilon(1e-10));

    // CIR scale against an independent Romberg nested integration.
    const auto cir = ParametricDiffusion::cir(1.0);
    const Theta th{0.0, 0.0};  // m = 1, sigma0 = 1
    auto phi = [&](double y) {
        const double inner = oracles::romberg(
            [&](double z) { return 2.0 * cir.ratio(z, th); }, 0.5, y, 14);
        return std::exp(-inner);
    };
    const double expected = oracles::romberg(phi, 0.5, 1.0, 14);
    CHECK(scale_function(cir, th, 0.5, 1.0, kQuad) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("scale function is strictly increasing in x") {
    const auto cev = ParametricDiffusion::cev(2.0);
    double prev = 0.0;
    for (double x = 0.85; x <= 1.25; x += 0.05) {
        const double s = scale_function(cev, {0.3, -0.2}, 0.8, x, kQuad);
        CHECK(s > prev);
        prev = s;
    }
}

TEST_CASE("exit probability closed forms") {
    const auto flat = driftless(2.0);
    CHECK(exit_probability_right(flat, {}, 0.0, 1.0, 0.5, kQuad) ==
          doctest::Approx(0.5).epsilon(1e-10));

    const auto bm = ParametricDiffusion::brownian();
    CHECK(exit_probability_right(bm, {1.0, 1.0}, 0.0, 1.0, 0.5, kQuad) ==
          doctest::Approx(0.73105857863000488).epsilon(1e-10));
    CHECK(exit_probability_right(bm, {1.0, 1.0}, 0.0, 1.0, 0.5, kQuad) ==
          doctest::Approx(oracles::brownian_exit_prob(1.0, 1.0, 0.0, 1.0, 0.5))
              .epsilon(1e-10));

    // Monotone approach to 1 near the right endpoint.
    double prev = 0.0;
    for (double x : {0.9, 0.99, 0.999}) {
        const double p = exit_probability_right(bm, {1.0, 1.0}, 0.0, 1.0, x, kQuad);
        CHECK(p > prev);
        prev = p;
    }
    CHECK(prev > 0.999);
}

TEST_CASE("exit value moment and variance follow the two-point law") {
    ObservationGrid grid;
    grid.points = {0.5};
    grid.neighborhoods = {{0.0, 1.0}};
    const auto f = identity_observable();

    const auto flat = driftless(1.0);
    CHECK(exit_value_moment(flat, {}, grid, 0.5, f, kQuad) ==
          doctest::Approx(0.5).epsilon(1e-10));

    const auto bm = ParametricDiffusion::brownian();
    const double p = 0.73105857863000488;
    CHECK(exit_value_variance(bm, {1.0, 1.0}, grid, 0.5, f, kQuad) ==
          doctest::Approx(p * (1.0 - p)).epsilon(1e-9));

    // eta^{f^2} - (eta^f)^2 = p(1-p)(f(hi) - f(lo))^2 for nonlinear f too.
    ObservationGrid skew;
    skew.points = {1.0};
    skew.neighborhoods = {{0.9, 1.15}};
    Rng rng(20240811, 1);
    for (int i = 0; i < 12; ++i) {
        const Theta th{rng.uniform() * 2.0 - 1.0, rng.uniform() - 0.5};
        const auto cev = ParametricDiffusion::cev(2.0);
        auto fsq = [](double x) { return x * x; };
        const double eta1 = exit_value_moment(cev, th, skew, 1.0, f, kQuad);
        const double eta2 = exit_value_moment(cev, th, skew, 1.0, fsq, kQuad);
        const double var = exit_value_variance(cev, th, skew, 1.0, f, kQuad);
        CHECK(eta2 - eta1 * eta1 == doctest::Approx(var).epsilon(1e-9));
    }
}

TEST_CASE("expected exit time closed form and scaling") {
    // Zero drift, sigma^2 = v: E_x T = (x-c)(d-x)/v.
    for (double v : {1.0, 2.0}) {
        const auto flat = driftless(v);
        CHECK(expected_exit_time(flat, {}, 0.0, 1.0, 0.5, kQuad) ==
              doctest::Approx(0.25 / v).epsilon(1e-9));
        CHECK(expected_exit_time(flat, {}, 0.0, 1.0, 0.2, kQuad) ==
              doctest::Approx(0.16 / v).epsilon(1e-9));
    }

    // Doubling sigma0 halves the expected exit time when b/sigma^2 is fixed.
    const auto cev = ParametricDiffusion::cev(2.0);
    const double t_base = expected_exit_time(cev, {0.2, 0.0}, 0.9, 1.1, 1.0, kQuad);
    const double t_double =
        expected_exit_time(cev, {0.2, std::log(2.0)}, 0.9, 1.1, 1.0, kQuad);
    CHECK(t_double == doctest::Approx(0.5 * t_base).epsilon(1e-8));

    // CIR mean exit time against the dense BVP oracle.
    const auto cir = ParametricDiffusion::cir(1.0);
    const double bvp = oracles::bvp_mean_exit_time(cir, {0.0, 0.0}, 0.8, 1.2, 1.0);
    CHECK(expected_exit_time(cir, {0.0, 0.0}, 0.8, 1.2, 1.0, kQuad) ==
          doctest::Approx(bvp).epsilon(1e-6));
}

TEST_CASE("exit time second moment against the BVP oracle") {
    const auto flat = driftless(1.0);
    // Closed form for the unit interval: E_{1/2} T^2 = 5/48.
    CHECK(exit_time_second_moment(flat, {}, 0.0, 1.0, 0.5, kQuad) ==
          doctest::Approx(5.0 / 48.0).epsilon(1e-8));
    CHECK(exit_time_second_moment(flat, {}, 0.0, 1.0, 0.5, kQuad) ==
          doctest::Approx(oracles::bvp_exit_time_second_moment(flat, {}, 0.0, 1.0, 0.5))
              .epsilon(1e-6));

    const auto bm = ParametricDiffusion::brownian();
    CHECK(exit_time_second_moment(bm, {1.0, 1.0}, 0.0, 1.0, 0.5, kQuad) ==
          doctest::Approx(
              oracles::bvp_exit_time_second_moment(bm, {1.0, 1.0}, 0.0, 1.0, 0.5))
              .epsilon(1e-6));

    // var_time >= 0 across states, and sigma0^2 scaling of the second moment.
    const auto cev = ParametricDiffusion::cev(2.0);
    for (double x : {0.93, 1.0, 1.05}) {
        const double t1 = expected_exit_time(cev, {0.1, 0.0}, 0.9, 1.1, x, kQuad);
        const double t2 = exit_time_second_moment(cev, {0.1, 0.0}, 0.9, 1.1, x, kQuad);
        CHECK(t2 - t1 * t1 >= 0.0);
    }
    const double u_base = exit_time_second_moment(cev, {0.1, 0.0}, 0.9, 1.1, 1.0, kQuad);
    const double u_scaled =
        exit_time_second_moment(cev, {0.1, std::log(2.0)}, 0.9, 1.1, 1.0, kQuad);
    CHECK(u_scaled == doctest::Approx(0.25 * u_base).epsilon(1e-8));
}

TEST_CASE("eta derivative: structure and higher-order oracle") {
    const auto cev = ParametricDiffusion::cev(2.0);
    const auto grid = ObservationGrid::with_radius({1.0}, 0.08);
    const auto f = identity_observable();

    // eta^f depends on theta only through b/sigma^2, so the sigma0 coordinate
    // has zero derivative.
    const Theta alpha = eta_derivative(cev, {0.2, -0.4}, grid, 1.0, EtaKind::Value, f, kQuad);
    CHECK(std::fabs(alpha[1]) < 1e-9);
    // eta increasing in lambda (positive ratio derivative), so alpha = -deta < 0.
    CHECK(alpha[0] < 0.0);

    // Richardson 4-point stencil agreement on a CIR test point.
    const auto cir = ParametricDiffusion::cir(1.0);
    const auto cir_grid = ObservationGrid::with_radius({0.8}, 0.05);
    const Theta at{0.3, 0.1};
    const Theta got = eta_derivative(cir, at, cir_grid, 0.8, EtaKind::Value, f, kQuad);
    auto eta_of_lambda = [&](double lam) {
        return exit_value_moment(cir, {lam, at[1]}, cir_grid, 0.8, f, kQuad);
    };
    const double oracle = -oracles::richardson_derivative(eta_of_lambda, at[0], 1e-3);
    CHECK(got[0] == doctest::Approx(oracle).epsilon(1e-6));

    // FD self-consistency against a secant over a 1e-3 step.
    const double secant =
        -(eta_of_lambda(at[0] + 5e-4) - eta_of_lambda(at[0] - 5e-4)) / 1e-3;
    CHECK(got[0] == doctest::Approx(secant).epsilon(1e-4));
}

TEST_CASE("moment table assembly and serialization round-trip") {
    const auto flat = driftless(1.0);
    const auto grid = ObservationGrid::with_radius({0.0, 1.0, 2.0}, 0.25);
    const auto table = build_moment_table(flat, {}, grid, identity_observable(),
                                          identity_observable(), kQuad);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(table.entries[i].eta_value == doctest::Approx(grid.points[i]).epsilon(1e-10));
        CHECK(table.entries[i].exit_prob_right == doctest::Approx(0.5).epsilon(1e-10));
        CHECK(table.entries[i].eta_time == doctest::Approx(0.25 * 0.25).epsilon(1e-9));
        CHECK(table.entries[i].var_time >= 0.0);
    }

    const auto cev = ParametricDiffusion::cev(2.0);
    const auto cev_grid = ObservationGrid::with_radius({0.9, 1.1}, 0.04);
    const auto t2 = build_moment_table(cev, {0.0, 0.0}, cev_grid, identity_observable(),
                                       identity_observable(), kQuad);
    const MomentTable parsed = MomentTable::from_json(t2.to_json());
    CHECK(parsed.theta == t2.theta);
    CHECK(parsed.grid_points == t2.grid_points);
    for (std::size_t i = 0; i < t2.entries.size(); ++i) {
        CHECK(parsed.entries[i].eta_value == t2.entries[i].eta_value);
        CHECK(parsed.entries[i].eta_time == t2.entries[i].eta_time);
        CHECK(parsed.entries[i].var_value == t2.entries[i].var_value);
        CHECK(parsed.entries[i].var_time == t2.entries[i].var_time);
        CHECK(parsed.entries[i].alpha_value == t2.entries[i].alpha_value);
        CHECK(parsed.entries[i].alpha_time == t2.entries[i].alpha_time);
    }

    // Non-affine time observables are rejected.
    CHECK_THROWS_AS(build_moment_table(flat, {}, grid, identity_observable(),
                                       [](double t) { return t * t; }, kQuad),
                    DomainError);
}

TEST_CASE("section-5 closed forms match the generic pipeline") {
    const auto f = identity_observable();
    Rng rng(99, 5);
    const auto cev = ParametricDiffusion::cev(2.0);
    for (int i = 0; i < 3; ++i) {
        const double lam = rng.uniform() - 0.5;
        const double d = 0.9 + 0.3 * rng.uniform();
        const auto grid = ObservationGrid::with_radius({d}, 0.05);
        const double generic = exit_value_moment(cev, {lam, 0.7}, grid, d, f, kQuad);
        const double explicit_form =
            oracles::cev_eta_explicit(std::exp(lam), 2.0, d - 0.05, d + 0.05, d);
        CHECK(generic == doctest::Approx(explicit_form).epsilon(1e-8));
    }
    const auto cir = ParametricDiffusion::cir(1.3);
    for (int i = 0; i < 3; ++i) {
        const double lam = rng.uniform() - 0.5;
        const double d = 0.6 + 0.3 * rng.uniform();
        const auto grid = ObservationGrid::with_radius({d}, 0.05);
        const double generic = exit_value_moment(cir, {lam, -0.4}, grid, d, f, kQuad);
        const double explicit_form =
            oracles::cir_eta_explicit(std::exp(lam), 1.3, d - 0.05, d + 0.05, d);
        CHECK(generic == doctest::Approx(explicit_form).epsilon(1e-8));
    }
}

TEST_CASE("monotonicity scan directions") {
    const auto f = identity_observable();
    const auto cev = ParametricDiffusion::cev(2.0);
    const auto grid = ObservationGrid::with_radius({1.0}, 0.06);
    // Positive ratio derivative in lambda: eta strictly increasing.
    auto report = monotonicity_scan(cev, ParameterBinding({0.0, 0.0}, {0}), grid, 1.0, f,
                                    -2.0, 2.0, 41, kQuad);
    CHECK(report.applicable);
    CHECK(report.strictly_monotone);
    CHECK(report.direction == 1);

    // CIR: increasing below alpha, decreasing above.
    const auto cir = ParametricDiffusion::cir(1.0);
    const auto low = ObservationGrid::with_radius({0.6}, 0.05);
    report = monotonicity_scan(cir, ParameterBinding({0.0, 0.0}, {0}), low, 0.6, f, -1.5, 1.5,
                               21, kQuad);
    CHECK(report.applicable);
    CHECK(report.direction == 1);
    const auto high = ObservationGrid::with_radius({1.5}, 0.05);
    report = monotonicity_scan(cir, ParameterBinding({0.0, 0.0}, {0}), high, 1.5, f, -1.5, 1.5,
                               21, kQuad);
    CHECK(report.applicable);
    CHECK(report.direction == -1);

    // The sigma0 coordinate leaves the ratio flat: scan is not applicable.
    report = monotonicity_scan(cev, ParameterBinding({0.0, 0.0}, {1}), grid, 1.0, f, -1.0, 1.0,
                               11, kQuad);
    CHECK(!report.applicable);
}

TEST_CASE("time average scales inversely with sigma0 at fixed ratio") {
    // eta~ * sigma0 constant in sigma0: the timecons factorization.
    const auto cir = ParametricDiffusion::cir(1.0);
    const double base = expected_exit_time(cir, {0.1, 0.0}, 0.7, 0.9, 0.8, kQuad);
    for (double s : {-0.7, 0.4, 1.1}) {
        const double scaled = expected_exit_time(cir, {0.1, s}, 0.7, 0.9, 0.8, kQuad);
        CHECK(scaled * std::exp(s) == doctest::Approx(base).epsilon(1e-8));
    }
}

TEST_CASE("quadrature moment provider caches per iterate") {
    const auto cev = ParametricDiffusion::cev(2.0);
    const auto grid = ObservationGrid::with_radius({0.9, 1.1}, 0.04);
    QuadratureMomentProvider provider(cev, grid, ParameterBinding({0.0, 0.0}, {0}),
                                      identity_observable(), kQuad);
    const double direct = exit_value_moment(cev, {0.3, 0.0}, grid, 1.1, identity_observable(),
                                            kQuad);
    CHECK(provider.eta_value({0.3}, 1) == doctest::Approx(direct).epsilon(1e-12));
    CHECK(provider.eta_value({0.3}, 1) == provider.eta_value({0.3}, 1));
    const Theta alpha = provider.alpha_value({0.3}, 1);
    CHECK(alpha.size() == 1);
    CHECK(alpha[0] < 0.0);
    const double eta_t = provider.eta_time({0.3}, 1);
    CHECK(eta_t ==
          doctest::Approx(expected_exit_time(cev, {0.3, 0.0}, 1.06, 1.14, 1.1, kQuad))
              .epsilon(1e-10));
}
