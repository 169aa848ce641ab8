// Test-only oracles, independent of the production quadrature pipeline:
// Romberg integration on a fixed dyadic mesh, a dense finite-difference
// boundary-value solver for exit-time moments, the explicit CEV/CIR exit-law
// integrands, and closed forms for driftless and constant-drift models.

#pragma once

#include <functional>
#include <vector>

#include "sdefit/diffusion.hpp"

namespace sdefit::oracles {

/// Romberg integration with `levels` halvings (fixed mesh, Richardson table).
double romberg(const std::function<double(double)>& f, double a, double b, int levels = 16);

/// Solves (sigma^2/2) u'' + b u' = -source on (c, d), u(c) = u(d) = 0 by
/// central differences on n interior nodes (Thomas algorithm) and returns u
/// at the nodes.  source is evaluated at the interior nodes.
std::vector<double> solve_dirichlet_bvp(const ParametricDiffusion& model, const Theta& theta,
                                        double c, double d, std::size_t n,
                                        const std::function<double(double)>& source);

/// E_x[exit time] of (c, d) by the BVP solver (linear interpolation at x).
double bvp_mean_exit_time(const ParametricDiffusion& model, const Theta& theta, double c,
                          double d, double x, std::size_t n = 100000);

/// E_x[exit time squared]: solves the mean first, then L u = -2 eta.
double bvp_exit_time_second_moment(const ParametricDiffusion& model, const Theta& theta,
                                   double c, double d, double x, std::size_t n = 100000);

/// Explicit exit-value expectation for the CEV family with ratio
/// (mu/sigma^2) e^lambda-style link already applied: pass m = (mu/sigma^2).
/// Integrand exp(m/(gamma-1) * y^(2-2 gamma)).
double cev_eta_explicit(double m, double gamma, double lo, double hi, double x);

/// Explicit exit-value expectation for CIR: integrand
/// y^(-2 alpha m) exp(2 m y).
double cir_eta_explicit(double m, double alpha, double lo, double hi, double x);

/// Exit probability at the upper end of (c, d) for constant drift mu and
/// diffusion sigma^2: (1 - exp(-2 mu (x-c)/sigma^2)) / (1 - exp(-2 mu (d-c)/sigma^2)).
double brownian_exit_prob(double mu, double sigma2, double c, double d, double x);

/// Fourth-order Richardson stencil for d eta / d theta along one coordinate.
double richardson_derivative(const std::function<double(double)>& eta_of_theta, double theta,
                             double h);

}  // namespace sdefit::oracles
