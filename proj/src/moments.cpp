#include "sdefit/moments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace sdefit {

namespace {

constexpr int kMaxMeshDoublings = 6;

void require_interior(const ParametricDiffusion& model, double x, const char* what) {
    if (!model.state_space().interior_contains(x)) {
        std::ostringstream os;
        os << what << " " << x << " lies outside the interior of the state space";
        throw DomainError(os.str());
    }
}

// Shared-mesh tabulation of the scale density and the nested Green-kernel
// integrals over one interval [c, d].  Value levels are always built; the
// exit-time levels are added on first use.
class ExitKernel {
  public:
    ExitKernel(const ParametricDiffusion& model, Theta theta, double c, double d,
               QuadratureConfig quad)
        : model_(model), theta_(std::move(theta)), c_(c), d_(d), quad_(quad) {
        quad_.validate();
        if (!(c < d)) throw DomainError("exit interval must satisfy c < d");
        require_interior(model, c, "interval endpoint");
        require_interior(model, d, "interval endpoint");
        intervals_ = std::max(16, quad_.mesh_size + (quad_.mesh_size % 2));
        build(false);
    }

    double log_shift() const { return shift_; }
    double shifted_scale_total() const { return s_prefix_.back(); }

    double shifted_scale(double x) const {
        check_range(x);
        return prefix_at(phi_, s_prefix_, c_, h_, x);
    }

    /// s(x)/s(d); the log-space shift cancels in the ratio.
    double exit_prob_right(double x) const {
        const double p = shifted_scale(x) / s_prefix_.back();
        return std::clamp(p, 0.0, 1.0);
    }

    /// Unshifted scale function value; throws when exp(shift) overflows.
    double scale(double x) const {
        const double rescale = std::exp(shift_);
        const double value = rescale * shifted_scale(x);
        if (!std::isfinite(value))
            throw QuadratureError(
                "scale function overflows double range; rescale the model coefficients");
        return value;
    }

    double mean_exit_time(double x) {
        ensure_time_levels();
        check_range(x);
        return green_value(g1_, g1_prefix_, x);
    }

    double exit_time_second_moment(double x) {
        ensure_second_moment_levels();
        check_range(x);
        return green_value(g2_, g2_prefix_, x);
    }

  private:
    void check_range(double x) const {
        if (x < c_ || x > d_) {
            std::ostringstream os;
            os << "evaluation point " << x << " outside [" << c_ << ", " << d_ << "]";
            throw DomainError(os.str());
        }
    }

    // -int_c^x 2 phi G + (s(x)/s(d)) int_c^d 2 phi G, the Dirichlet solution
    // of L w = -g with the source folded into the G prefix.
    double green_value(const std::vector<double>& integrand,
                       const std::vector<double>& prefix, double x) const {
        const double ratio = exit_prob_right(x);
        const double w = -prefix_at(integrand, prefix, c_, h_, x) + ratio * prefix.back();
        return std::max(w, 0.0);
    }

    void check_finite(const std::vector<double>& v, const char* what) const {
        for (double x : v) {
            if (!std::isfinite(x)) {
                std::ostringstream os;
                os << what
                   << " is not finite on the quadrature mesh; the drift is too extreme for "
                      "double range, rescale the model";
                throw QuadratureError(os.str());
            }
        }
    }

    bool total_converged(const std::vector<double>& samples, double total) const {
        const double err = std::fabs(total - coarse_total(samples, h_)) / 15.0;
        return err <= std::max(quad_.abs_tol, quad_.rel_tol * std::fabs(total));
    }

    void build(bool with_time) {
        for (int attempt = 0;; ++attempt) {
            const std::size_t n = static_cast<std::size_t>(intervals_) + 1;
            h_ = (d_ - c_) / static_cast<double>(intervals_);

            std::vector<double> log_density(n);
            {
                std::vector<double> r2(n);
                for (std::size_t j = 0; j < n; ++j)
                    r2[j] = 2.0 * model_.ratio(node(j), theta_);
                check_finite(r2, "2 b / sigma^2");
                log_density = cumulative_integral(r2, h_);
            }
            shift_ = *std::min_element(log_density.begin(), log_density.end());

            phi_.resize(n);
            for (std::size_t j = 0; j < n; ++j) phi_[j] = std::exp(shift_ - log_density[j]);
            s_prefix_ = cumulative_integral(phi_, h_);

            bool ok = total_converged(phi_, s_prefix_.back());
            if (ok && with_time) {
                build_time_levels();
                ok = total_converged(g1_, g1_prefix_.back());
            }
            if (ok) {
                has_time_ = with_time;
                return;
            }
            if (attempt >= kMaxMeshDoublings) {
                std::ostringstream os;
                os << "mesh refinement did not reach rel_tol=" << quad_.rel_tol
                   << " within " << kMaxMeshDoublings << " doublings on [" << c_ << ", " << d_
                   << "]";
                throw QuadratureError(os.str());
            }
            intervals_ *= 2;
        }
    }

    void build_time_levels() {
        const std::size_t n = phi_.size();
        psi_.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double s2 = model_.diffusion_sq(node(j), theta_);
            if (!(s2 > model_.diffusion_floor()))
                throw SingularityError("sigma^2 at or below the diffusion floor on the mesh");
            psi_[j] = 1.0 / (s2 * phi_[j]);
        }
        check_finite(psi_, "1/(sigma^2 phi)");
        i_prefix_ = cumulative_integral(psi_, h_);

        g1_.resize(n);
        for (std::size_t j = 0; j < n; ++j) g1_[j] = 2.0 * phi_[j] * i_prefix_[j];
        g1_prefix_ = cumulative_integral(g1_, h_);

        eta_nodes_.resize(n);
        const double total = g1_prefix_.back();
        const double s_total = s_prefix_.back();
        for (std::size_t j = 0; j < n; ++j)
            eta_nodes_[j] = std::max(-g1_prefix_[j] + s_prefix_[j] / s_total * total, 0.0);
    }

    void ensure_time_levels() {
        if (has_time_) return;
        build(true);
    }

    void ensure_second_moment_levels() {
        ensure_time_levels();
        if (!g2_.empty()) return;
        // E_x T^2 solves L u = -2 eta with u(c) = u(d) = 0.
        const std::size_t n = phi_.size();
        std::vector<double> q(n);
        for (std::size_t j = 0; j < n; ++j) q[j] = 2.0 * eta_nodes_[j] * psi_[j];
        const std::vector<double> q_prefix = cumulative_integral(q, h_);
        g2_.resize(n);
        for (std::size_t j = 0; j < n; ++j) g2_[j] = 2.0 * phi_[j] * q_prefix[j];
        g2_prefix_ = cumulative_integral(g2_, h_);
    }

    double node(std::size_t j) const { return c_ + h_ * static_cast<double>(j); }

    const ParametricDiffusion& model_;
    Theta theta_;
    double c_;
    double d_;
    QuadratureConfig quad_;
    int intervals_ = 0;
    double h_ = 0.0;
    double shift_ = 0.0;  // min of the log scale density over the mesh

    std::vector<double> phi_;       // shifted scale density exp(shift - log_density)
    std::vector<double> s_prefix_;  // shifted scale function at nodes
    bool has_time_ = false;
    std::vector<double> psi_;       // 1/(sigma^2 phi), shift-consistent
    std::vector<double> i_prefix_;
    std::vector<double> g1_;        // 2 phi * I
    std::vector<double> g1_prefix_;
    std::vector<double> eta_nodes_; // E_x[exit time] at nodes
    std::vector<double> g2_;
    std::vector<double> g2_prefix_;
};

std::pair<double, double> neighborhood_of(const ObservationGrid& grid, double d) {
    return grid.neighborhoods[grid.index_of(d)];
}

double fd_bandwidth(double coordinate) {
    return std::max(1e-5, 1e-5 * std::fabs(coordinate));
}

}  // namespace

double scale_function(const ParametricDiffusion& model, const Theta& theta, double c, double x,
                      const QuadratureConfig& quad) {
    if (x == c) return 0.0;
    if (!(c < x)) throw DomainError("scale_function expects c < x");
    ExitKernel kernel(model, theta, c, x, quad);
    return kernel.scale(x);
}

double exit_probability_right(const ParametricDiffusion& model, const Theta& theta, double c,
                              double d, double x, const QuadratureConfig& quad) {
    if (!(c < x && x < d)) throw DomainError("exit_probability_right expects c < x < d");
    ExitKernel kernel(model, theta, c, d, quad);
    return kernel.exit_prob_right(x);
}

double exit_value_moment(const ParametricDiffusion& model, const Theta& theta,
                         const ObservationGrid& grid, double d, const Observable& f,
                         const QuadratureConfig& quad) {
    const auto [lo, hi] = neighborhood_of(grid, d);
    ExitKernel kernel(model, theta, lo, hi, quad);
    const double p = kernel.exit_prob_right(d);
    return f(hi) * p + f(lo) * (1.0 - p);
}

double exit_value_variance(const ParametricDiffusion& model, const Theta& theta,
                           const ObservationGrid& grid, double d, const Observable& f,
                           const QuadratureConfig& quad) {
    const auto [lo, hi] = neighborhood_of(grid, d);
    ExitKernel kernel(model, theta, lo, hi, quad);
    const double p = kernel.exit_prob_right(d);
    const double spread = f(hi) - f(lo);
    return p * (1.0 - p) * spread * spread;
}

double expected_exit_time(const ParametricDiffusion& model, const Theta& theta, double c,
                          double d, double x, const QuadratureConfig& quad) {
    if (!(c < x && x < d)) throw DomainError("expected_exit_time expects c < x < d");
    ExitKernel kernel(model, theta, c, d, quad);
    return kernel.mean_exit_time(x);
}

double exit_time_second_moment(const ParametricDiffusion& model, const Theta& theta, double c,
                               double d, double x, const QuadratureConfig& quad) {
    if (!(c < x && x < d)) throw DomainError("exit_time_second_moment expects c < x < d");
    ExitKernel kernel(model, theta, c, d, quad);
    return kernel.exit_time_second_moment(x);
}

namespace {

double eta_at(const ParametricDiffusion& model, const Theta& theta, const ObservationGrid& grid,
              double d, EtaKind which, const Observable& f, const QuadratureConfig& quad) {
    if (which == EtaKind::Value) return exit_value_moment(model, theta, grid, d, f, quad);
    const auto [lo, hi] = neighborhood_of(grid, d);
    return expected_exit_time(model, theta, lo, hi, d, quad);
}

}  // namespace

Theta eta_derivative(const ParametricDiffusion& model, const Theta& theta,
                     const ObservationGrid& grid, double d, EtaKind which, const Observable& f,
                     const QuadratureConfig& quad) {
    Theta alpha(theta.size(), 0.0);
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double h = fd_bandwidth(theta[j]);
        Theta up = theta, dn = theta;
        up[j] += h;
        dn[j] -= h;
        const double slope = (eta_at(model, up, grid, d, which, f, quad) -
                              eta_at(model, dn, grid, d, which, f, quad)) /
                             (2.0 * h);
        if (!std::isfinite(slope)) {
            std::ostringstream os;
            os << "eta derivative is not finite in coordinate " << j << " at d = " << d;
            throw QuadratureError(os.str());
        }
        alpha[j] = -slope;
    }
    return alpha;
}

std::size_t MomentTable::index_of(double d) const {
    for (std::size_t i = 0; i < grid_points.size(); ++i)
        if (grid_points[i] == d) return i;
    throw DomainError("moment table has no entry for the requested grid point");
}

std::string MomentTable::to_json() const {
    nlohmann::json j;
    j["theta"] = theta;
    j["grid_points"] = grid_points;
    j["points"] = nlohmann::json::array();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const MomentEntry& e = entries[i];
        j["points"].push_back({
            {"d", grid_points[i]},
            {"eta_value", e.eta_value},
            {"eta_time", e.eta_time},
            {"var_value", e.var_value},
            {"var_time", e.var_time},
            {"exit_prob_right", e.exit_prob_right},
            {"alpha_value", e.alpha_value},
            {"alpha_time", e.alpha_time},
        });
    }
    return j.dump(2);
}

MomentTable MomentTable::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    MomentTable t;
    t.theta = j.at("theta").get<Theta>();
    t.grid_points = j.at("grid_points").get<std::vector<double>>();
    for (const auto& p : j.at("points")) {
        MomentEntry e;
        e.eta_value = p.at("eta_value").get<double>();
        e.eta_time = p.at("eta_time").get<double>();
        e.var_value = p.at("var_value").get<double>();
        e.var_time = p.at("var_time").get<double>();
        e.exit_prob_right = p.at("exit_prob_right").get<double>();
        e.alpha_value = p.at("alpha_value").get<Theta>();
        e.alpha_time = p.at("alpha_time").get<Theta>();
        t.entries.push_back(std::move(e));
    }
    if (t.entries.size() != t.grid_points.size())
        throw DomainError("moment table JSON has mismatched points");
    return t;
}

MomentTable build_moment_table(const ParametricDiffusion& model, const Theta& theta,
                               const ObservationGrid& grid, const Observable& f,
                               const Observable& g, const QuadratureConfig& quad) {
    // The exit-time pipeline produces E[T] and E[T^2]; that covers affine g
    // exactly and nothing beyond.
    const double g0 = g(0.0), g1 = g(1.0), g2 = g(2.0);
    if (std::fabs(g2 - 2.0 * g1 + g0) > 1e-12 * (1.0 + std::fabs(g1)))
        throw DomainError("time observable g must be affine (identity by default)");
    const double g_slope = g1 - g0;

    MomentTable table;
    table.theta = theta;
    table.grid_points = grid.points;
    table.entries.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double d = grid.points[i];
        const auto [lo, hi] = grid.neighborhoods[i];
        ExitKernel kernel(model, theta, lo, hi, quad);
        MomentEntry& e = table.entries[i];
        const double p = kernel.exit_prob_right(d);
        const double spread = f(hi) - f(lo);
        e.exit_prob_right = p;
        e.eta_value = f(hi) * p + f(lo) * (1.0 - p);
        e.var_value = p * (1.0 - p) * spread * spread;
        const double t1 = kernel.mean_exit_time(d);
        const double t2 = kernel.exit_time_second_moment(d);
        e.eta_time = g0 + g_slope * t1;
        e.var_time = std::max(g_slope * g_slope * (t2 - t1 * t1), 0.0);
        e.alpha_value = eta_derivative(model, theta, grid, d, EtaKind::Value, f, quad);
        e.alpha_time = eta_derivative(model, theta, grid, d, EtaKind::Time, f, quad);
        for (double& a : e.alpha_time) a *= g_slope;
    }
    return table;
}

MonotonicityReport monotonicity_scan(const ParametricDiffusion& model,
                                     const ParameterBinding& binding,
                                     const ObservationGrid& grid, double d, const Observable& f,
                                     double theta_lo, double theta_hi, int n_samples,
                                     const QuadratureConfig& quad) {
    if (binding.free_dimension() != 1)
        throw DomainError("monotonicity_scan expects a single free coordinate");
    if (n_samples < 3) throw DomainError("monotonicity_scan needs at least 3 samples");

    MonotonicityReport report;
    const auto [lo, hi] = neighborhood_of(grid, d);

    // Applicability: d(b/sigma^2)/d theta keeps one nonzero sign on U_d over
    // the scanned range.
    int seen_sign = 0;
    bool flat = true, mixed = false;
    for (double t : {theta_lo, 0.5 * (theta_lo + theta_hi), theta_hi}) {
        for (double y : {lo, 0.5 * (lo + hi), hi, d}) {
            const double h = fd_bandwidth(t);
            Theta up = binding.embed({t + h}), dn = binding.embed({t - h});
            const double dr = (model.ratio(y, up) - model.ratio(y, dn)) / (2.0 * h);
            if (std::fabs(dr) < 1e-12) continue;
            flat = false;
            const int s = dr > 0.0 ? 1 : -1;
            if (seen_sign == 0) seen_sign = s;
            else if (seen_sign != s) mixed = true;
        }
    }
    if (flat) {
        report.note = "not applicable: ratio derivative vanishes on the scanned range";
        return report;
    }
    if (mixed) {
        report.note = "not applicable: ratio derivative changes sign on the neighborhood";
        return report;
    }
    report.applicable = true;

    report.samples.reserve(static_cast<std::size_t>(n_samples));
    for (int k = 0; k < n_samples; ++k) {
        const double t =
            theta_lo + (theta_hi - theta_lo) * static_cast<double>(k) / (n_samples - 1);
        const double eta = exit_value_moment(model, binding.embed({t}), grid, d, f, quad);
        report.samples.emplace_back(t, eta);
    }
    bool increasing = true, decreasing = true;
    for (std::size_t k = 0; k + 1 < report.samples.size(); ++k) {
        if (!(report.samples[k + 1].second > report.samples[k].second)) increasing = false;
        if (!(report.samples[k + 1].second < report.samples[k].second)) decreasing = false;
    }
    report.strictly_monotone = increasing || decreasing;
    report.direction = increasing ? 1 : (decreasing ? -1 : 0);
    if (!report.strictly_monotone)
        report.note = "eta is not strictly monotone over the scanned samples";
    return report;
}

struct QuadratureMomentProvider::Impl {
    using Key = std::pair<std::size_t, Theta>;
    std::map<Key, std::shared_ptr<ExitKernel>> kernels;

    std::shared_ptr<ExitKernel> kernel_for(const ParametricDiffusion& model,
                                           const ObservationGrid& grid,
                                           const QuadratureConfig& quad, std::size_t point,
                                           const Theta& full_theta) {
        Key key{point, full_theta};
        auto it = kernels.find(key);
        if (it != kernels.end()) return it->second;
        if (kernels.size() >= 512) kernels.clear();
        const auto [lo, hi] = grid.neighborhoods[point];
        auto kernel = std::make_shared<ExitKernel>(model, full_theta, lo, hi, quad);
        kernels.emplace(std::move(key), kernel);
        return kernel;
    }
};

QuadratureMomentProvider::QuadratureMomentProvider(ParametricDiffusion model,
                                                   ObservationGrid grid,
                                                   ParameterBinding binding, Observable f,
                                                   QuadratureConfig quad)
    : model_(std::move(model)),
      grid_(std::move(grid)),
      binding_(std::move(binding)),
      f_(std::move(f)),
      quad_(quad),
      impl_(std::make_unique<Impl>()) {
    quad_.validate();
}

QuadratureMomentProvider::~QuadratureMomentProvider() = default;

double QuadratureMomentProvider::eta_value(const Theta& free_theta, std::size_t point) {
    const Theta full = binding_.embed(free_theta);
    auto kernel = impl_->kernel_for(model_, grid_, quad_, point, full);
    const double p = kernel->exit_prob_right(grid_.points[point]);
    return f_(grid_.right(point)) * p + f_(grid_.left(point)) * (1.0 - p);
}

double QuadratureMomentProvider::eta_time(const Theta& free_theta, std::size_t point) {
    const Theta full = binding_.embed(free_theta);
    auto kernel = impl_->kernel_for(model_, grid_, quad_, point, full);
    return kernel->mean_exit_time(grid_.points[point]);
}

Theta QuadratureMomentProvider::alpha_value(const Theta& free_theta, std::size_t point) {
    Theta alpha(free_theta.size(), 0.0);
    for (std::size_t k = 0; k < free_theta.size(); ++k) {
        const double h = fd_bandwidth(free_theta[k]);
        Theta up = free_theta, dn = free_theta;
        up[k] += h;
        dn[k] -= h;
        alpha[k] = -(eta_value(up, point) - eta_value(dn, point)) / (2.0 * h);
    }
    return alpha;
}

Theta QuadratureMomentProvider::alpha_time(const Theta& free_theta, std::size_t point) {
    Theta alpha(free_theta.size(), 0.0);
    for (std::size_t k = 0; k < free_theta.size(); ++k) {
        const double h = fd_bandwidth(free_theta[k]);
        Theta up = free_theta, dn = free_theta;
        up[k] += h;
        dn[k] -= h;
        alpha[k] = -(eta_time(up, point) - eta_time(dn, point)) / (2.0 * h);
    }
    return alpha;
}

double QuadratureMomentProvider::ratio_dtheta(const Theta& free_theta, std::size_t point,
                                              std::size_t coord) {
    const double d = grid_.points[point];
    const double h = fd_bandwidth(free_theta.at(coord));
    Theta up = free_theta, dn = free_theta;
    up[coord] += h;
    dn[coord] -= h;
    return (model_.ratio(d, binding_.embed(up)) - model_.ratio(d, binding_.embed(dn))) /
           (2.0 * h);
}

}  // namespace sdefit
