// Recursive estimators driven by the observation cycles:
//
//   value      Theta' = P[Theta - gamma_n H (f(exit) - eta^f(Theta, d))]
//   time       Theta' = P[Theta - gamma_n H (g(elapsed) - eta~(Theta, d))]
//   projected  Theta' = P[Theta - gamma_n K grad_Vbar (y - eta(Theta, d))]
//   normalized Theta' = Theta - (1/n) (y - eta(Theta, d)) / alpha*(d)
//
// P is the box projection, gamma_n the step schedule, H a +/-1 (or tabulated)
// gain, K a fixed nonsingular matrix, grad_Vbar = -grad eta evaluated at the
// current iterate, and alpha*(d) = -d eta/d theta at the true parameter.  A
// moment-evaluation failure skips the update and leaves the iterate unchanged.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "sdefit/diffusion.hpp"
#include "sdefit/moments.hpp"
#include "sdefit/simulator.hpp"

namespace sdefit {

struct EstimatorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StepSchedule {
    enum class Form { AOverNPlusB, AOverNPow };

    Form form = Form::AOverNPlusB;
    double a = 1.0;
    double b = 10.0;
    double power = 1.0;  // exponent in (1/2, 1] for the a/n^p form

    double gamma(std::int64_t n) const;
    void validate() const;
};

struct GainSpec {
    enum class Kind { ConstantSign, RatioSign, TableAlpha, MatrixK };

    Kind kind = Kind::ConstantSign;
    double sign = 1.0;                    // ConstantSign
    std::vector<double> alpha_by_point;   // TableAlpha: gain per grid point
    std::vector<double> k_matrix;         // MatrixK: row-major s x s

    static GainSpec constant_sign(double sign);
    static GainSpec ratio_sign();
    static GainSpec table_alpha(std::vector<double> alpha_by_point);
    static GainSpec matrix_k(std::vector<double> row_major, std::size_t dim);

    void validate(std::size_t dim, std::size_t n_points) const;
};

struct TrajectoryPoint {
    std::int64_t n;
    Theta theta;
    double gamma;
    double innovation;
};

struct EstimatorState {
    Theta theta;  // free coordinates
    std::int64_t n = 1;
    StepSchedule schedule;
    GainSpec gain;
    ParameterSpace space;
    std::int64_t updates = 0;
    std::int64_t skipped = 0;
    std::vector<TrajectoryPoint>* trajectory = nullptr;  // optional recording
    std::int64_t trajectory_stride = 0;

    static EstimatorState make(Theta init, StepSchedule schedule, GainSpec gain,
                               ParameterSpace space);
};

/// The +/-1 gain that points the value recursion at the root: -sign of
/// d(b/sigma^2)/d theta at (d, theta).  Throws when the derivative is
/// numerically zero (the sign-gain hypothesis excludes that case).
double ratio_sign_gain(MomentProviderBase& moments, const Theta& free_theta, std::size_t point,
                       std::size_t coord = 0);

void update_value(EstimatorState& state, const ObservationRecord& rec,
                  MomentProviderBase& moments, const Observable& f);

void update_time(EstimatorState& state, const ObservationRecord& rec,
                 MomentProviderBase& moments, const Observable& g);

/// Which squared-residual channels feed the projected vector recursion.  The
/// exit value alone cannot identify diffusion-scale coordinates (eta^f does
/// not depend on them), so joint runs combine both channels.
enum class ResidualChannel { Value, Time, Both };

void update_projected_vector(EstimatorState& state, const ObservationRecord& rec,
                             MomentProviderBase& moments, const Observable& f,
                             const Observable& g, ResidualChannel channels);

/// Per-point 1/alpha gains for the normalized recursion, extracted from a
/// moment table evaluated at the true parameter.  Throws on a vanishing
/// derivative.
std::vector<double> normalized_gains(const MomentTable& table_at_true,
                                     const ParameterBinding& binding, EtaKind which);

void update_normalized(EstimatorState& state, const ObservationRecord& rec,
                       MomentProviderBase& moments, const std::vector<double>& alpha_by_point,
                       EtaKind which, const Observable& f, const Observable& g);

/// Mean field of the projected ODE at theta:
///   gbar(theta) = sum_d p_d Vbar(theta, d) grad_Vbar(theta, d)
/// summed over the selected channels, with Vbar = eta(theta*, d) - eta(theta, d)
/// taken from the true-parameter table.  Zero at theta* by construction.
Theta stationary_residual(const Theta& free_theta, MomentProviderBase& moments,
                          const MomentTable& table_at_true, const std::vector<double>& p,
                          ResidualChannel channels);

struct JacobianReport {
    std::vector<std::vector<double>> d_eta_d_theta;  // rows: grid points
    double min_singular_value = 0.0;
    bool full_column_rank = false;
};

/// Rank check of [d eta/d theta_j (theta*, d_i)] over the free coordinates;
/// full column rank makes theta* the locally unique stationary point.
JacobianReport jacobian_injectivity(const MomentTable& table_at_true,
                                    const ParameterBinding& binding, ResidualChannel channels);

}  // namespace sdefit
