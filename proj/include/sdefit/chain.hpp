// The embedded chain of visited grid points: transition structure, parity
// (type I/II) decomposition, stationary vector, ergodic averages, and the
// asymptotic variance / covariance predictions for the normalized estimators.
//
// The chain alternates between odd- and even-indexed grid points, so its
// matrix is bipartite-periodic: plain power iteration does not converge and
// the stationary vector is obtained by a direct linear solve; the parity
// submatrices of even powers are the structural check, not the solver.

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <vector>

#include "sdefit/diffusion.hpp"
#include "sdefit/moments.hpp"
#include "sdefit/simulator.hpp"

namespace sdefit {

struct ChainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TransitionMatrix {
    Eigen::MatrixXd probs;            // row-stochastic
    Eigen::MatrixXd counts;           // raw transition counts when estimated
    std::vector<std::size_t> unvisited_rows;
    bool empirical = false;

    std::size_t size() const { return static_cast<std::size_t>(probs.rows()); }

    /// Rows sum to one, support only on grid-adjacent pairs, zero diagonal.
    void check_invariants(double tol = 1e-12) const;
};

TransitionMatrix estimate_transition_matrix(const std::vector<ObservationRecord>& stream,
                                            const ObservationGrid& grid);

/// One-step transition probabilities from the scale-function exit law over
/// (d_{i-1}, d_{i+1}); corner rows are unit vectors to their single neighbor.
TransitionMatrix model_transition_matrix(const ParametricDiffusion& model, const Theta& theta,
                                         const ObservationGrid& grid,
                                         const QuadratureConfig& quad);

/// Type I: entries vanish on same-parity index pairs (in particular the
/// diagonal); type II: entries vanish on opposite-parity pairs.  Products of
/// two type-I matrices are type II, and the parity submatrices of type-II
/// matrices multiply blockwise.
bool is_type_one(const Eigen::MatrixXd& a, double tol = 0.0);
bool is_type_two(const Eigen::MatrixXd& a, double tol = 0.0);

/// Odd/even index-extracted submatrices of a type-II matrix (1-based parity),
/// sizes ceil(s/2) and floor(s/2).
Eigen::MatrixXd p_odd(const Eigen::MatrixXd& a, double tol = 1e-12);
Eigen::MatrixXd p_even(const Eigen::MatrixXd& a, double tol = 1e-12);

/// Left-fixed probability row vector p with p A = p, computed by direct
/// linear solve; requires A irreducible (checked by reachability).
Eigen::VectorXd stationary_vector(const Eigen::MatrixXd& a);

struct ErgodicAverage {
    double empirical = 0.0;
    double predicted = 0.0;
};

/// Average of h along the visited grid points and the p-weighted prediction.
ErgodicAverage ergodic_average(const std::vector<ObservationRecord>& stream,
                               const std::function<double(double)>& h,
                               const ObservationGrid& grid, const Eigen::VectorXd& p);

/// Occupancy frequencies of the grid points along a stream.
Eigen::VectorXd occupancy(const std::vector<ObservationRecord>& stream,
                          const ObservationGrid& grid);

/// sigma^2 = sum_d p_d Var_d(Y) / alpha(d)^2 for the scalar normalized
/// recursion; `which` selects the exit-value or exit-time channel and `coord`
/// the model coordinate of alpha.
double asymptotic_variance_scalar(const MomentTable& table_at_true, const Eigen::VectorXd& p,
                                  EtaKind which, std::size_t coord);

struct CovarianceReport {
    Eigen::MatrixXd sigma;           // sum_d p_d Var_d (K grad eta)(K grad eta)'
    Eigen::MatrixXd hessian;         // A = sum_d p_d grad eta grad eta'
    Eigen::MatrixXd stationary_cov;  // Lyapunov solution for (-KA + I/2)
    Eigen::VectorXd ka_eigenvalues;  // eigenvalues of K A (must exceed 1/2)
};

/// Covariance assembly for the matrix-gain normalized recursion.  The
/// stationary covariance solves (-KA + I/2) X + X (-KA + I/2)' = -K S K'
/// with S = sum_d p_d Var_d grad eta grad eta'; at K = A^{-1} it reduces to
/// A^{-1} S A^{-1}, the trace-optimal choice.
CovarianceReport asymptotic_covariance(const MomentTable& table_at_true,
                                       const Eigen::VectorXd& p, const Eigen::MatrixXd& k,
                                       const ParameterBinding& binding,
                                       EtaKind which = EtaKind::Value);

}  // namespace sdefit
