#include "sdefit/estimator.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <sstream>

namespace sdefit {

double StepSchedule::gamma(std::int64_t n) const {
    const double nn = static_cast<double>(n);
    switch (form) {
        case Form::AOverNPlusB: return a / (nn + b);
        case Form::AOverNPow: return a / std::pow(nn, power);
    }
    return 0.0;
}

void StepSchedule::validate() const {
    if (!(a > 0.0)) throw EstimatorError("step schedule requires a > 0");
    if (form == Form::AOverNPlusB) {
        if (!(b >= 0.0)) throw EstimatorError("step schedule requires b >= 0");
    } else {
        // sum gamma = inf and sum gamma^2 < inf pins the exponent to (1/2, 1].
        if (!(power > 0.5 && power <= 1.0))
            throw EstimatorError("step schedule power must lie in (0.5, 1]");
    }
}

GainSpec GainSpec::constant_sign(double sign) {
    GainSpec g;
    g.kind = Kind::ConstantSign;
    g.sign = sign;
    return g;
}

GainSpec GainSpec::ratio_sign() {
    GainSpec g;
    g.kind = Kind::RatioSign;
    return g;
}

GainSpec GainSpec::table_alpha(std::vector<double> alpha_by_point) {
    GainSpec g;
    g.kind = Kind::TableAlpha;
    g.alpha_by_point = std::move(alpha_by_point);
    return g;
}

GainSpec GainSpec::matrix_k(std::vector<double> row_major, std::size_t dim) {
    GainSpec g;
    g.kind = Kind::MatrixK;
    g.k_matrix = std::move(row_major);
    g.validate(dim, 0);
    return g;
}

void GainSpec::validate(std::size_t dim, std::size_t n_points) const {
    switch (kind) {
        case Kind::ConstantSign:
            if (sign != 1.0 && sign != -1.0)
                throw EstimatorError("constant sign gain must be +1 or -1");
            break;
        case Kind::RatioSign:
            break;
        case Kind::TableAlpha:
            if (n_points > 0 && alpha_by_point.size() != n_points)
                throw EstimatorError("table gain does not cover every grid point");
            for (double a : alpha_by_point)
                if (a == 0.0) throw EstimatorError("table gain has a vanishing entry");
            break;
        case Kind::MatrixK: {
            if (k_matrix.size() != dim * dim)
                throw EstimatorError("gain matrix K has the wrong dimensions");
            Eigen::MatrixXd k(dim, dim);
            for (std::size_t i = 0; i < dim; ++i)
                for (std::size_t j = 0; j < dim; ++j)
                    k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                        k_matrix[i * dim + j];
            if (std::fabs(k.determinant()) < 1e-14)
                throw EstimatorError("gain matrix K is singular");
            break;
        }
    }
}

EstimatorState EstimatorState::make(Theta init, StepSchedule schedule, GainSpec gain,
                                    ParameterSpace space) {
    schedule.validate();
    space.validate();
    if (init.size() != space.dimension)
        throw EstimatorError("initial iterate does not match the parameter space dimension");
    EstimatorState s;
    s.theta = project(space, init);
    s.schedule = std::move(schedule);
    s.gain = std::move(gain);
    s.space = std::move(space);
    return s;
}

namespace {

void record_trajectory(EstimatorState& state, double gamma, double innovation) {
    if (state.trajectory && state.trajectory_stride > 0 &&
        state.n % state.trajectory_stride == 0) {
        state.trajectory->push_back({state.n, state.theta, gamma, innovation});
    }
}

double scalar_gain(EstimatorState& state, MomentProviderBase& moments, std::size_t point) {
    switch (state.gain.kind) {
        case GainSpec::Kind::ConstantSign: return state.gain.sign;
        case GainSpec::Kind::RatioSign: return ratio_sign_gain(moments, state.theta, point);
        case GainSpec::Kind::TableAlpha: return state.gain.alpha_by_point.at(point);
        case GainSpec::Kind::MatrixK:
            throw EstimatorError("matrix gain is only valid for the projected vector update");
    }
    return 0.0;
}

void require_scalar(const EstimatorState& state, const char* what) {
    if (state.theta.size() != 1) {
        std::ostringstream os;
        os << what << " drives a one-dimensional parameter; use the projected vector update "
           << "for dimension " << state.theta.size();
        throw EstimatorError(os.str());
    }
}

}  // namespace

double ratio_sign_gain(MomentProviderBase& moments, const Theta& free_theta, std::size_t point,
                       std::size_t coord) {
    const double dr = moments.ratio_dtheta(free_theta, point, coord);
    if (std::fabs(dr) < 1e-12) {
        std::ostringstream os;
        os << "d(b/sigma^2)/d theta is numerically zero (" << dr << ") at grid point index "
           << point << "; the sign-gain hypothesis excludes this";
        throw EstimatorError(os.str());
    }
    // eta is increasing in theta where the ratio derivative is positive, so
    // the descent gain is the opposite sign.
    return dr > 0.0 ? -1.0 : 1.0;
}

void update_value(EstimatorState& state, const ObservationRecord& rec,
                  MomentProviderBase& moments, const Observable& f) {
    require_scalar(state, "update_value");
    try {
        const std::size_t i = moments.grid().index_of(rec.grid_point);
        const double gamma = state.schedule.gamma(state.n);
        const double h = scalar_gain(state, moments, i);
        const double innovation = f(rec.exit_point) - moments.eta_value(state.theta, i);
        Theta next = state.theta;
        next[0] -= gamma * h * innovation;
        state.theta = project(state.space, next);
        ++state.updates;
        record_trajectory(state, gamma, innovation);
    } catch (const std::runtime_error&) {
        ++state.skipped;
    }
    ++state.n;
}

void update_time(EstimatorState& state, const ObservationRecord& rec,
                 MomentProviderBase& moments, const Observable& g) {
    require_scalar(state, "update_time");
    try {
        const std::size_t i = moments.grid().index_of(rec.grid_point);
        const double gamma = state.schedule.gamma(state.n);
        const double h = scalar_gain(state, moments, i);
        const double innovation = g(rec.exit_elapsed) - moments.eta_time(state.theta, i);
        Theta next = state.theta;
        next[0] -= gamma * h * innovation;
        state.theta = project(state.space, next);
        ++state.updates;
        record_trajectory(state, gamma, innovation);
    } catch (const std::runtime_error&) {
        ++state.skipped;
    }
    ++state.n;
}

void update_projected_vector(EstimatorState& state, const ObservationRecord& rec,
                             MomentProviderBase& moments, const Observable& f,
                             const Observable& g, ResidualChannel channels) {
    if (state.gain.kind != GainSpec::Kind::MatrixK)
        throw EstimatorError("projected vector update requires a matrix gain");
    const std::size_t dim = state.theta.size();
    state.gain.validate(dim, 0);
    try {
        const std::size_t i = moments.grid().index_of(rec.grid_point);
        const double gamma = state.schedule.gamma(state.n);
        // grad Vbar = -grad eta = alpha at the current iterate.
        Theta direction(dim, 0.0);
        double innovation = 0.0;
        if (channels == ResidualChannel::Value || channels == ResidualChannel::Both) {
            const double v = f(rec.exit_point) - moments.eta_value(state.theta, i);
            const Theta alpha = moments.alpha_value(state.theta, i);
            for (std::size_t k = 0; k < dim; ++k) direction[k] += alpha[k] * v;
            innovation += v;
        }
        if (channels == ResidualChannel::Time || channels == ResidualChannel::Both) {
            const double v = g(rec.exit_elapsed) - moments.eta_time(state.theta, i);
            const Theta alpha = moments.alpha_time(state.theta, i);
            for (std::size_t k = 0; k < dim; ++k) direction[k] += alpha[k] * v;
            innovation += v;
        }
        Theta next = state.theta;
        for (std::size_t r = 0; r < dim; ++r) {
            double step = 0.0;
            for (std::size_t c = 0; c < dim; ++c)
                step += state.gain.k_matrix[r * dim + c] * direction[c];
            next[r] -= gamma * step;
        }
        state.theta = project(state.space, next);
        ++state.updates;
        record_trajectory(state, gamma, innovation);
    } catch (const std::runtime_error&) {
        ++state.skipped;
    }
    ++state.n;
}

std::vector<double> normalized_gains(const MomentTable& table_at_true,
                                     const ParameterBinding& binding, EtaKind which) {
    if (binding.free_dimension() != 1)
        throw EstimatorError("the normalized recursion drives a one-dimensional parameter");
    const std::size_t coord = binding.free_indices()[0];
    std::vector<double> alpha;
    alpha.reserve(table_at_true.entries.size());
    for (const MomentEntry& e : table_at_true.entries) {
        const Theta& src = (which == EtaKind::Value) ? e.alpha_value : e.alpha_time;
        const double a = src.at(coord);
        if (a == 0.0 || !std::isfinite(a))
            throw EstimatorError("alpha(d) vanishes at the true parameter; the normalized "
                                 "recursion is undefined");
        alpha.push_back(a);
    }
    return alpha;
}

void update_normalized(EstimatorState& state, const ObservationRecord& rec,
                       MomentProviderBase& moments, const std::vector<double>& alpha_by_point,
                       EtaKind which, const Observable& f, const Observable& g) {
    require_scalar(state, "update_normalized");
    try {
        const std::size_t i = moments.grid().index_of(rec.grid_point);
        const double y =
            (which == EtaKind::Value) ? f(rec.exit_point) : g(rec.exit_elapsed);
        const double eta = (which == EtaKind::Value) ? moments.eta_value(state.theta, i)
                                                     : moments.eta_time(state.theta, i);
        const double innovation = y - eta;
        const double step = innovation / alpha_by_point.at(i) / static_cast<double>(state.n);
        state.theta[0] -= step;  // unconstrained by construction
        ++state.updates;
        record_trajectory(state, 1.0 / static_cast<double>(state.n), innovation);
    } catch (const std::runtime_error&) {
        ++state.skipped;
    }
    ++state.n;
}

Theta stationary_residual(const Theta& free_theta, MomentProviderBase& moments,
                          const MomentTable& table_at_true, const std::vector<double>& p,
                          ResidualChannel channels) {
    const std::size_t dim = free_theta.size();
    const std::size_t n_points = moments.grid().size();
    if (p.size() != n_points)
        throw EstimatorError("occupancy vector does not cover every grid point");
    Theta gbar(dim, 0.0);
    for (std::size_t i = 0; i < n_points; ++i) {
        if (channels == ResidualChannel::Value || channels == ResidualChannel::Both) {
            const double vbar =
                table_at_true.entries[i].eta_value - moments.eta_value(free_theta, i);
            const Theta alpha = moments.alpha_value(free_theta, i);
            for (std::size_t k = 0; k < dim; ++k) gbar[k] += p[i] * vbar * alpha[k];
        }
        if (channels == ResidualChannel::Time || channels == ResidualChannel::Both) {
            const double vbar =
                table_at_true.entries[i].eta_time - moments.eta_time(free_theta, i);
            const Theta alpha = moments.alpha_time(free_theta, i);
            for (std::size_t k = 0; k < dim; ++k) gbar[k] += p[i] * vbar * alpha[k];
        }
    }
    return gbar;
}

JacobianReport jacobian_injectivity(const MomentTable& table_at_true,
                                    const ParameterBinding& binding, ResidualChannel channels) {
    const std::size_t dim = binding.free_dimension();
    const std::size_t n_points = table_at_true.entries.size();
    const std::size_t rows =
        (channels == ResidualChannel::Both) ? 2 * n_points : n_points;
    Eigen::MatrixXd j(rows, dim);
    JacobianReport report;
    std::size_t r = 0;
    auto push_row = [&](const Theta& alpha_full) {
        std::vector<double> row(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            row[k] = -alpha_full.at(binding.free_indices()[k]);  // d eta/d theta = -alpha
            j(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = row[k];
        }
        report.d_eta_d_theta.push_back(std::move(row));
        ++r;
    };
    for (const MomentEntry& e : table_at_true.entries) {
        if (channels == ResidualChannel::Value || channels == ResidualChannel::Both)
            push_row(e.alpha_value);
        if (channels == ResidualChannel::Time || channels == ResidualChannel::Both)
            push_row(e.alpha_time);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(j);
    report.min_singular_value = svd.singularValues().minCoeff();
    report.full_column_rank = report.min_singular_value > 1e-12;
    return report;
}

}  // namespace sdefit
