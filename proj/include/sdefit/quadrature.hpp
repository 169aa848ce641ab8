// Quadrature toolkit: an adaptive Gauss-Kronrod integrator for one-off
// integrals, and fourth-order cumulative integration of uniformly sampled
// integrands.  The cumulative form is what the nested exit-moment integrals
// are built on: every level of the nesting is one O(n) pass over a shared
// mesh instead of a quadratic number of inner quadratures.

#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

namespace sdefit {

struct QuadratureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct QuadratureConfig {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    int max_subdivisions = 200;  // adaptive splits / mesh refinement budget
    int mesh_size = 2048;        // node count of the shared cumulative mesh

    void validate() const;
};

/// Adaptive Gauss-Kronrod 7/15 integration of f over [a, b].
/// Throws QuadratureError when the subdivision budget is exhausted.
double integrate(const std::function<double(double)>& f, double a, double b,
                 const QuadratureConfig& quad = {});

/// Prefix integrals F_k = int_{x_0}^{x_k} f for f sampled at n+1 uniform
/// nodes with spacing h (n >= 4).  Composite Simpson with half-panel closes,
/// globally O(h^4) for smooth f.
std::vector<double> cumulative_integral(const std::vector<double>& samples, double h);

/// Same prefix integral computed from every second sample (spacing 2h);
/// |fine - coarse|/15 is the usual Richardson error estimate for the total.
double coarse_total(const std::vector<double>& samples, double h);

/// Value of the prefix integral at an arbitrary x in [x_0, x_n]: the prefix
/// at the enclosing node plus the analytic integral of the local cubic
/// interpolant of f.  `a` is x_0.
double prefix_at(const std::vector<double>& samples, const std::vector<double>& prefix,
                 double a, double h, double x);

/// Cubic Lagrange interpolation of uniformly sampled values at x.
double interp_uniform(const std::vector<double>& samples, double a, double h, double x);

}  // namespace sdefit
