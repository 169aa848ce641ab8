// Exit moments of a scalar diffusion over grid neighborhoods, computed by
// quadrature from the scale function:
//
//   s(x)    = int_c^x exp(-int_c^y 2 b/sigma^2 dz) dy          (Ls = 0, s(c) = 0)
//   p       = s(x)/s(d)                    right-exit probability of (c, d)
//   eta^f   = f(D_r) p + f(D_l) (1 - p)    two-point exit-value law
//   T1(x)   = E_x[exit time]               Green kernel with unit source
//   T2(x)   = E_x[exit time^2]             Green kernel with source 2*T1
//
// Every level of the nesting is tabulated on one shared uniform mesh and
// accumulated in a single pass; the mesh doubles until a Richardson estimate
// of the top-level totals meets the configured tolerances.  Integrands are
// kept in log space until differences are formed, so strongly drifted models
// do not overflow the scale density.

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sdefit/diffusion.hpp"
#include "sdefit/quadrature.hpp"

namespace sdefit {

using Observable = std::function<double(double)>;

inline Observable identity_observable() {
    return [](double x) { return x; };
}

enum class EtaKind { Value, Time };

double scale_function(const ParametricDiffusion& model, const Theta& theta, double c,
                      double x, const QuadratureConfig& quad);

double exit_probability_right(const ParametricDiffusion& model, const Theta& theta, double c,
                              double d, double x, const QuadratureConfig& quad);

double exit_value_moment(const ParametricDiffusion& model, const Theta& theta,
                         const ObservationGrid& grid, double d, const Observable& f,
                         const QuadratureConfig& quad);

double exit_value_variance(const ParametricDiffusion& model, const Theta& theta,
                           const ObservationGrid& grid, double d, const Observable& f,
                           const QuadratureConfig& quad);

double expected_exit_time(const ParametricDiffusion& model, const Theta& theta, double c,
                          double d, double x, const QuadratureConfig& quad);

double exit_time_second_moment(const ParametricDiffusion& model, const Theta& theta, double c,
                               double d, double x, const QuadratureConfig& quad);

/// -d eta / d theta over all model coordinates, by central finite differences
/// with per-coordinate bandwidth max(1e-5, 1e-5 |theta_i|).
Theta eta_derivative(const ParametricDiffusion& model, const Theta& theta,
                     const ObservationGrid& grid, double d, EtaKind which,
                     const Observable& f, const QuadratureConfig& quad);

struct MomentEntry {
    double eta_value = 0.0;
    double eta_time = 0.0;
    double var_value = 0.0;
    double var_time = 0.0;
    double exit_prob_right = 0.0;
    Theta alpha_value;  // -d eta   / d theta at the table's theta
    Theta alpha_time;   // -d eta~  / d theta
};

struct MomentTable {
    Theta theta;
    std::vector<double> grid_points;
    std::vector<MomentEntry> entries;

    const MomentEntry& at(std::size_t i) const { return entries.at(i); }
    std::size_t index_of(double d) const;

    std::string to_json() const;
    static MomentTable from_json(const std::string& text);
};

/// Assembles all per-point moments at one theta.  g must be the identity (or
/// affine); general time observables would need the full exit-time law.
MomentTable build_moment_table(const ParametricDiffusion& model, const Theta& theta,
                               const ObservationGrid& grid, const Observable& f,
                               const Observable& g, const QuadratureConfig& quad);

struct MonotonicityReport {
    bool applicable = false;     // ratio derivative has a constant nonzero sign
    bool strictly_monotone = false;
    int direction = 0;           // +1 increasing, -1 decreasing in theta
    std::string note;
    std::vector<std::pair<double, double>> samples;  // (theta, eta)
};

/// Scans eta^f(theta, d) along one free coordinate of the binding and reports
/// strict monotonicity.  Flat ratio derivatives make the scan inapplicable.
MonotonicityReport monotonicity_scan(const ParametricDiffusion& model,
                                     const ParameterBinding& binding,
                                     const ObservationGrid& grid, double d,
                                     const Observable& f, double theta_lo, double theta_hi,
                                     int n_samples, const QuadratureConfig& quad);

/// Moment evaluations the estimators consume per update.  Virtual so tests
/// can substitute fixed-value providers.
class MomentProviderBase {
  public:
    virtual ~MomentProviderBase() = default;
    virtual double eta_value(const Theta& free_theta, std::size_t point) = 0;
    virtual double eta_time(const Theta& free_theta, std::size_t point) = 0;
    virtual Theta alpha_value(const Theta& free_theta, std::size_t point) = 0;
    virtual Theta alpha_time(const Theta& free_theta, std::size_t point) = 0;
    /// d(b/sigma^2)/d theta_coord at the grid point, free coordinates.
    virtual double ratio_dtheta(const Theta& free_theta, std::size_t point,
                                std::size_t coord) = 0;
    virtual const ObservationGrid& grid() const = 0;
    virtual const ParameterBinding& binding() const = 0;
};

/// Quadrature-backed provider.  Kernels are cached per (point, theta) so
/// repeated evaluations at one iterate cost one interpolation, not one
/// quadrature; fresh iterates trigger a fresh mesh build.
class QuadratureMomentProvider final : public MomentProviderBase {
  public:
    QuadratureMomentProvider(ParametricDiffusion model, ObservationGrid grid,
                             ParameterBinding binding, Observable f, QuadratureConfig quad);
    ~QuadratureMomentProvider() override;

    double eta_value(const Theta& free_theta, std::size_t point) override;
    double eta_time(const Theta& free_theta, std::size_t point) override;
    Theta alpha_value(const Theta& free_theta, std::size_t point) override;
    Theta alpha_time(const Theta& free_theta, std::size_t point) override;
    double ratio_dtheta(const Theta& free_theta, std::size_t point, std::size_t coord) override;
    const ObservationGrid& grid() const override { return grid_; }
    const ParameterBinding& binding() const override { return binding_; }

    const ParametricDiffusion& model() const { return model_; }
    const QuadratureConfig& quadrature() const { return quad_; }

  private:
    struct Impl;
    ParametricDiffusion model_;
    ObservationGrid grid_;
    ParameterBinding binding_;
    Observable f_;
    QuadratureConfig quad_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace sdefit
