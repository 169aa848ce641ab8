#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "sdefit/chain.hpp"
#include "sdefit/rng.hpp"

using namespace sdefit;

namespace {
Eigen::MatrixXd two_state() {
    Eigen::MatrixXd a(2, 2);
    a << 0, 1, 1, 0;
    return a;
}

Eigen::MatrixXd chain3(double q) {
    Eigen::MatrixXd a(3, 3);
    a << 0, 1, 0, q, 0, 1 - q, 0, 1, 0;
    return a;
}

// Random zero-diagonal tridiagonal chain matrix of size s.
Eigen::MatrixXd random_chain(std::size_t s, Rng& rng) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(s, s);
    a(0, 1) = 1.0;
    a(static_cast<Eigen::Index>(s - 1), static_cast<Eigen::Index>(s - 2)) = 1.0;
    for (std::size_t i = 1; i + 1 < s; ++i) {
        const double q = 0.1 + 0.8 * rng.uniform();
        a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i + 1)) = q;
        a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0 - q;
    }
    return a;
}
}  // namespace

TEST_CASE("transition matrix estimation from a forced alternation") {
    const auto grid = ObservationGrid::with_radius({0.0, 1.0}, 0.2);
    std::vector<ObservationRecord> stream;
    double current = 0.0;
    for (int i = 0; i < 10; ++i) {
        ObservationRecord rec;
        rec.index = i + 1;
        rec.grid_point = current;
        rec.next_grid_point = (current == 0.0) ? 1.0 : 0.0;
        rec.exit_point = current - 0.2;
        rec.exit_elapsed = 0.01;
        stream.push_back(rec);
        current = rec.next_grid_point;
    }
    const auto t = estimate_transition_matrix(stream, grid);
    CHECK((t.probs - two_state()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(t.unvisited_rows.empty());
    t.check_invariants();
    CHECK(is_type_one(t.probs));

    // A 3-point grid with an unvisited corner is flagged, not imputed.
    const auto grid3 = ObservationGrid::with_radius({0.0, 1.0, 2.0}, 0.2);
    const auto partial = estimate_transition_matrix(stream, grid3);
    CHECK(partial.unvisited_rows == std::vector<std::size_t>{2});
}

TEST_CASE("model transition matrix: corner rows and the drifted middle row") {
    const auto bm = ParametricDiffusion::brownian();
    const auto grid = ObservationGrid::with_radius({0.0, 1.0, 2.0}, 0.2);
    QuadratureConfig quad;
    const auto t = model_transition_matrix(bm, {1.0, 1.0}, grid, quad);
    CHECK(t.probs(0, 1) == 1.0);
    CHECK(t.probs(2, 1) == 1.0);
    CHECK(t.probs(1, 2) == doctest::Approx(0.88079707797788244).epsilon(1e-9));
    CHECK(t.probs(1, 0) == doctest::Approx(1.0 - 0.88079707797788244).epsilon(1e-8));
    t.check_invariants(1e-9);

    const auto flat_t = model_transition_matrix(bm, {0.0, 1.0}, grid, quad);
    CHECK(flat_t.probs(1, 2) == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("type classification") {
    CHECK(is_type_one(two_state()));
    CHECK(!is_type_one(Eigen::MatrixXd::Identity(2, 2)));
    CHECK(is_type_two(Eigen::MatrixXd::Identity(2, 2)));
    CHECK(is_type_one(chain3(0.3)));

    Rng rng(55, 0);
    for (std::size_t s : {3u, 4u, 5u, 6u}) {
        const Eigen::MatrixXd a = random_chain(s, rng);
        const Eigen::MatrixXd b = random_chain(s, rng);
        CHECK(is_type_one(a));
        CHECK(is_type_two(a * b));           // product of two type-I matrices
        CHECK(is_type_one(a * (a * b)));     // I x II -> I
        CHECK(is_type_two((a * b) * (b * a)));
    }
}

TEST_CASE("parity extraction and multiplicativity") {
    Rng rng(77, 1);
    for (std::size_t s : {4u, 5u, 6u}) {
        const Eigen::MatrixXd a = random_chain(s, rng);
        const Eigen::MatrixXd a2 = a * a;
        const Eigen::MatrixXd a4 = a2 * a2;
        const Eigen::MatrixXd po = p_odd(a2, 1e-14);
        const Eigen::MatrixXd pe = p_even(a2, 1e-14);
        CHECK(po.rows() == static_cast<Eigen::Index>((s + 1) / 2));
        CHECK(pe.rows() == static_cast<Eigen::Index>(s / 2));
        CHECK((p_odd(a4, 1e-12) - po * po).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((p_even(a4, 1e-12) - pe * pe).cwiseAbs().maxCoeff() < 1e-12);
        // Row sums of the parity blocks stay stochastic.
        for (Eigen::Index i = 0; i < po.rows(); ++i)
            CHECK(po.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(p_odd(two_state()), ChainError);  // type I, not type II
}

TEST_CASE("parity powers converge to rank-one positive matrices") {
    Rng rng(42, 9);
    const Eigen::MatrixXd a = random_chain(5, rng);
    const Eigen::MatrixXd a2 = a * a;
    for (const Eigen::MatrixXd& block : {p_odd(a2, 1e-14), p_even(a2, 1e-14)}) {
        Eigen::MatrixXd power = block;
        for (int i = 0; i < 6; ++i) power = power * power;  // block^64
        CHECK(power.minCoeff() > 0.0);
        for (Eigen::Index j = 0; j < power.cols(); ++j)
            CHECK(power.col(j).maxCoeff() - power.col(j).minCoeff() < 1e-10);
    }
}

TEST_CASE("stationary vector solves and matches closed forms") {
    const Eigen::VectorXd p2 = stationary_vector(two_state());
    CHECK(p2(0) == doctest::Approx(0.5).epsilon(1e-14));

    // 3-point chain: p = (q/2, 1/2, (1-q)/2).
    const double q = 0.3;
    const Eigen::VectorXd p3 = stationary_vector(chain3(q));
    CHECK(p3(0) == doctest::Approx(q / 2.0).epsilon(1e-12));
    CHECK(p3(1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p3(2) == doctest::Approx((1.0 - q) / 2.0).epsilon(1e-12));

    // Tridiagonal chains are reversible: detailed balance gives the closed form.
    Rng rng(4, 4);
    const Eigen::MatrixXd a = random_chain(6, rng);
    const Eigen::VectorXd p = stationary_vector(a);
    CHECK(((p.transpose() * a).transpose() - p).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(p.minCoeff() > 0.0);
    std::vector<double> unnormalized{1.0};
    for (Eigen::Index i = 0; i + 1 < a.rows(); ++i)
        unnormalized.push_back(unnormalized.back() * a(i, i + 1) / a(i + 1, i));
    double total = 0.0;
    for (double v : unnormalized) total += v;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        CHECK(p(i) == doctest::Approx(unnormalized[static_cast<std::size_t>(i)] / total)
                          .epsilon(1e-10));

    // Simulated chain occupancy agrees with p within sampling error.
    Rng sim(10, 3);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(6);
    Eigen::Index state = 0;
    for (int step = 0; step < 1000000; ++step) {
        counts(state) += 1.0;
        const double u = sim.uniform();
        double acc = 0.0;
        for (Eigen::Index j = 0; j < 6; ++j) {
            acc += a(state, j);
            if (u < acc) {
                state = j;
                break;
            }
        }
    }
    counts /= counts.sum();
    CHECK((counts - p).lpNorm<Eigen::Infinity>() < 3e-3);

    // Reducible matrices are rejected.
    Eigen::MatrixXd reducible = Eigen::MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(stationary_vector(reducible), ChainError);
}

TEST_CASE("ergodic averages") {
    const auto grid = ObservationGrid::with_radius({0.0, 1.0}, 0.2);
    std::vector<ObservationRecord> stream;
    for (int i = 0; i < 40; ++i) {
        ObservationRecord rec;
        rec.grid_point = (i % 2 == 0) ? 0.0 : 1.0;
        rec.next_grid_point = (i % 2 == 0) ? 1.0 : 0.0;
        stream.push_back(rec);
    }
    const Eigen::VectorXd p = stationary_vector(two_state());
    const auto ones = ergodic_average(stream, [](double) { return 1.0; }, grid, p);
    CHECK(ones.empirical == 1.0);
    CHECK(ones.predicted == 1.0);
    const auto ind = ergodic_average(
        stream, [](double d) { return d == 0.0 ? 1.0 : 0.0; }, grid, p);
    CHECK(ind.empirical == doctest::Approx(0.5));
    CHECK(ind.predicted == doctest::Approx(0.5));
}

TEST_CASE("scalar asymptotic variance") {
    MomentTable table;
    table.grid_points = {1.0};
    table.entries.resize(1);
    table.entries[0].var_value = 0.04;
    table.entries[0].alpha_value = {0.5};
    Eigen::VectorXd p(1);
    p << 1.0;
    CHECK(asymptotic_variance_scalar(table, p, EtaKind::Value, 0) ==
          doctest::Approx(0.16).epsilon(1e-15));

    // Permutation invariance over grid relabeling.
    MomentTable t2;
    t2.grid_points = {1.0, 2.0};
    t2.entries.resize(2);
    t2.entries[0].var_value = 0.04;
    t2.entries[0].alpha_value = {0.5};
    t2.entries[1].var_value = 0.09;
    t2.entries[1].alpha_value = {0.25};
    Eigen::VectorXd p2(2);
    p2 << 0.3, 0.7;
    MomentTable swapped;
    swapped.grid_points = {2.0, 1.0};
    swapped.entries = {t2.entries[1], t2.entries[0]};
    Eigen::VectorXd p2s(2);
    p2s << 0.7, 0.3;
    CHECK(asymptotic_variance_scalar(t2, p2, EtaKind::Value, 0) ==
          doctest::Approx(asymptotic_variance_scalar(swapped, p2s, EtaKind::Value, 0))
              .epsilon(1e-15));

    table.entries[0].alpha_value = {0.0};
    CHECK_THROWS_AS(asymptotic_variance_scalar(table, p, EtaKind::Value, 0), ChainError);
}

TEST_CASE("covariance assembly: scalar reduction, Lyapunov closed form, optimality") {
    // Single grid point, one parameter: the machinery reduces to the scalar
    // formula exactly at K = 1/A.
    MomentTable table;
    table.grid_points = {1.0};
    table.entries.resize(1);
    table.entries[0].var_value = 0.04;
    table.entries[0].alpha_value = {0.5, 0.0};
    Eigen::VectorXd p1(1);
    p1 << 1.0;
    const ParameterBinding scalar_binding({0.0, 0.0}, {0});
    Eigen::MatrixXd k1(1, 1);
    k1 << 1.0 / 0.25;  // A = alpha^2
    const auto rep = asymptotic_covariance(table, p1, k1, scalar_binding);
    CHECK(rep.stationary_cov(0, 0) ==
          doctest::Approx(asymptotic_variance_scalar(table, p1, EtaKind::Value, 0))
              .epsilon(1e-14));

    // Two parameters: Lyapunov solve equals the closed form at K = A^{-1}.
    MomentTable t2;
    t2.grid_points = {1.0, 2.0, 3.0};
    t2.entries.resize(3);
    t2.entries[0].var_value = 0.04;
    t2.entries[0].alpha_value = {0.5, 0.1};
    t2.entries[1].var_value = 0.02;
    t2.entries[1].alpha_value = {0.3, -0.2};
    t2.entries[2].var_value = 0.07;
    t2.entries[2].alpha_value = {0.1, 0.4};
    Eigen::VectorXd p3(3);
    p3 << 0.25, 0.5, 0.25;
    const ParameterBinding binding2({0.0, 0.0}, {0, 1});

    Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(2, 2);
    Eigen::MatrixXd source = Eigen::MatrixXd::Zero(2, 2);
    for (int i = 0; i < 3; ++i) {
        Eigen::Vector2d grad(-t2.entries[static_cast<std::size_t>(i)].alpha_value[0],
                             -t2.entries[static_cast<std::size_t>(i)].alpha_value[1]);
        hessian += p3(i) * grad * grad.transpose();
        source += p3(i) * t2.entries[static_cast<std::size_t>(i)].var_value * grad *
                  grad.transpose();
    }
    const Eigen::MatrixXd k_opt = hessian.inverse();
    const auto opt = asymptotic_covariance(t2, p3, k_opt, binding2);
    const Eigen::MatrixXd closed = k_opt * source * k_opt.transpose();
    CHECK((opt.stationary_cov - closed).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((opt.hessian - hessian).cwiseAbs().maxCoeff() < 1e-14);

    // K = A^{-1} minimizes the trace over random admissible gains.
    Rng rng(2025, 6);
    const double trace_opt = opt.stationary_cov.trace();
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd m(2, 2);
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) m(r, c) = rng.uniform() * 2.0 - 1.0;
        Eigen::MatrixXd k = m * m.transpose() + 0.2 * Eigen::MatrixXd::Identity(2, 2);
        // Rescale until every eigenvalue of K A clears 1/2.
        const double min_eig =
            Eigen::EigenSolver<Eigen::MatrixXd>(k * hessian).eigenvalues().real().minCoeff();
        k *= 0.6 / std::min(min_eig, 0.6);
        const auto rep_k = asymptotic_covariance(t2, p3, k, binding2);
        CHECK(rep_k.stationary_cov.trace() >= trace_opt - 1e-12);
    }

    // The eigenvalue hypothesis is enforced.
    Eigen::MatrixXd tiny = 0.1 * k_opt;
    CHECK_THROWS_AS(asymptotic_covariance(t2, p3, tiny, binding2), ChainError);
}
