#include "sdefit/chain.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace sdefit {

void TransitionMatrix::check_invariants(double tol) const {
    const Eigen::Index s = probs.rows();
    if (probs.cols() != s) throw ChainError("transition matrix is not square");
    for (Eigen::Index i = 0; i < s; ++i) {
        bool unvisited = false;
        for (std::size_t u : unvisited_rows)
            if (static_cast<Eigen::Index>(u) == i) unvisited = true;
        if (unvisited) continue;
        if (std::fabs(probs.row(i).sum() - 1.0) > tol) {
            std::ostringstream os;
            os << "row " << i << " sums to " << probs.row(i).sum() << ", not 1";
            throw ChainError(os.str());
        }
        for (Eigen::Index j = 0; j < s; ++j) {
            if (std::abs(i - j) != 1 && probs(i, j) != 0.0) {
                std::ostringstream os;
                os << "transition " << i << " -> " << j
                   << " violates grid adjacency (entry " << probs(i, j) << ")";
                throw ChainError(os.str());
            }
        }
    }
}

TransitionMatrix estimate_transition_matrix(const std::vector<ObservationRecord>& stream,
                                            const ObservationGrid& grid) {
    if (stream.empty()) throw ChainError("cannot estimate transitions from an empty stream");
    const std::size_t s = grid.size();
    TransitionMatrix t;
    t.empirical = true;
    t.counts = Eigen::MatrixXd::Zero(s, s);
    for (const ObservationRecord& rec : stream) {
        const std::size_t i = grid.index_of(rec.grid_point);
        const std::size_t j = grid.index_of(rec.next_grid_point);
        t.counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += 1.0;
    }
    t.probs = Eigen::MatrixXd::Zero(s, s);
    for (std::size_t i = 0; i < s; ++i) {
        const double row_total = t.counts.row(static_cast<Eigen::Index>(i)).sum();
        if (row_total == 0.0) {
            t.unvisited_rows.push_back(i);
            continue;
        }
        t.probs.row(static_cast<Eigen::Index>(i)) =
            t.counts.row(static_cast<Eigen::Index>(i)) / row_total;
    }
    return t;
}

TransitionMatrix model_transition_matrix(const ParametricDiffusion& model, const Theta& theta,
                                         const ObservationGrid& grid,
                                         const QuadratureConfig& quad) {
    const std::size_t s = grid.size();
    if (s < 2) throw ChainError("the embedded chain needs at least two grid points");
    TransitionMatrix t;
    t.counts = Eigen::MatrixXd::Zero(s, s);
    t.probs = Eigen::MatrixXd::Zero(s, s);
    for (std::size_t i = 0; i < s; ++i) {
        const Eigen::Index ii = static_cast<Eigen::Index>(i);
        if (i == 0) {
            t.probs(ii, 1) = 1.0;
        } else if (i + 1 == s) {
            t.probs(ii, ii - 1) = 1.0;
        } else {
            const double up = exit_probability_right(model, theta, grid.points[i - 1],
                                                     grid.points[i + 1], grid.points[i], quad);
            t.probs(ii, ii + 1) = up;
            t.probs(ii, ii - 1) = 1.0 - up;
        }
    }
    return t;
}

namespace {
bool same_parity(Eigen::Index i, Eigen::Index j) { return ((i ^ j) & 1) == 0; }
}  // namespace

bool is_type_one(const Eigen::MatrixXd& a, double tol) {
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (same_parity(i, j) && std::fabs(a(i, j)) > tol) return false;
    return true;
}

bool is_type_two(const Eigen::MatrixXd& a, double tol) {
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (!same_parity(i, j) && std::fabs(a(i, j)) > tol) return false;
    return true;
}

namespace {
Eigen::MatrixXd parity_block(const Eigen::MatrixXd& a, Eigen::Index offset, double tol) {
    if (!is_type_two(a, tol))
        throw ChainError("parity extraction requires a type-II matrix");
    const Eigen::Index s = a.rows();
    const Eigen::Index n = (s - offset + 1) / 2;
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(i, j) = a(offset + 2 * i, offset + 2 * j);
    return out;
}
}  // namespace

Eigen::MatrixXd p_odd(const Eigen::MatrixXd& a, double tol) { return parity_block(a, 0, tol); }
Eigen::MatrixXd p_even(const Eigen::MatrixXd& a, double tol) { return parity_block(a, 1, tol); }

namespace {

bool reachable_all(const Eigen::MatrixXd& a, bool transpose) {
    const Eigen::Index s = a.rows();
    std::vector<bool> seen(static_cast<std::size_t>(s), false);
    std::vector<Eigen::Index> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
        const Eigen::Index i = stack.back();
        stack.pop_back();
        for (Eigen::Index j = 0; j < s; ++j) {
            const double w = transpose ? a(j, i) : a(i, j);
            if (w != 0.0 && !seen[static_cast<std::size_t>(j)]) {
                seen[static_cast<std::size_t>(j)] = true;
                stack.push_back(j);
            }
        }
    }
    for (bool b : seen)
        if (!b) return false;
    return true;
}

}  // namespace

Eigen::VectorXd stationary_vector(const Eigen::MatrixXd& a) {
    const Eigen::Index s = a.rows();
    if (a.cols() != s || s < 1) throw ChainError("stationary_vector needs a square matrix");
    if (!reachable_all(a, false) || !reachable_all(a, true))
        throw ChainError("transition matrix is reducible; no unique stationary vector");

    // (A' - I) p = 0 with the last equation replaced by sum p = 1.
    Eigen::MatrixXd m = a.transpose() - Eigen::MatrixXd::Identity(s, s);
    m.row(s - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s);
    rhs(s - 1) = 1.0;
    Eigen::VectorXd p = m.fullPivLu().solve(rhs);

    const double residual = ((p.transpose() * a).transpose() - p).lpNorm<Eigen::Infinity>();
    if (!(residual < 1e-10))
        throw ChainError("stationary vector solve left a large residual");
    if (p.minCoeff() <= 0.0)
        throw ChainError("stationary vector has a non-positive component");
    return p;
}

ErgodicAverage ergodic_average(const std::vector<ObservationRecord>& stream,
                               const std::function<double(double)>& h,
                               const ObservationGrid& grid, const Eigen::VectorXd& p) {
    if (stream.empty()) throw ChainError("ergodic average of an empty stream");
    ErgodicAverage out;
    for (const ObservationRecord& rec : stream) out.empirical += h(rec.grid_point);
    out.empirical /= static_cast<double>(stream.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        out.predicted += h(grid.points[i]) * p(static_cast<Eigen::Index>(i));
    return out;
}

Eigen::VectorXd occupancy(const std::vector<ObservationRecord>& stream,
                          const ObservationGrid& grid) {
    Eigen::VectorXd freq = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
    for (const ObservationRecord& rec : stream)
        freq(static_cast<Eigen::Index>(grid.index_of(rec.grid_point))) += 1.0;
    if (!stream.empty()) freq /= static_cast<double>(stream.size());
    return freq;
}

double asymptotic_variance_scalar(const MomentTable& table_at_true, const Eigen::VectorXd& p,
                                  EtaKind which, std::size_t coord) {
    const std::size_t s = table_at_true.entries.size();
    if (static_cast<std::size_t>(p.size()) != s)
        throw ChainError("occupancy vector does not match the moment table");
    double sigma2 = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
        const MomentEntry& e = table_at_true.entries[i];
        const double var = (which == EtaKind::Value) ? e.var_value : e.var_time;
        const double alpha =
            (which == EtaKind::Value) ? e.alpha_value.at(coord) : e.alpha_time.at(coord);
        if (alpha == 0.0) throw ChainError("alpha(d) vanishes; scalar variance undefined");
        sigma2 += p(static_cast<Eigen::Index>(i)) * var / (alpha * alpha);
    }
    return sigma2;
}

CovarianceReport asymptotic_covariance(const MomentTable& table_at_true,
                                       const Eigen::VectorXd& p, const Eigen::MatrixXd& k,
                                       const ParameterBinding& binding, EtaKind which) {
    const std::size_t dim = binding.free_dimension();
    if (dim > 4)
        throw ChainError("covariance assembly is implemented for parameter dimension <= 4");
    if (k.rows() != static_cast<Eigen::Index>(dim) || k.cols() != k.rows())
        throw ChainError("gain matrix K has the wrong dimensions");
    const std::size_t s = table_at_true.entries.size();
    if (static_cast<std::size_t>(p.size()) != s)
        throw ChainError("occupancy vector does not match the moment table");

    Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd source = Eigen::MatrixXd::Zero(dim, dim);  // sum p Var grad grad'
    for (std::size_t i = 0; i < s; ++i) {
        const MomentEntry& e = table_at_true.entries[i];
        Eigen::VectorXd grad(dim);
        for (std::size_t c = 0; c < dim; ++c) {
            const Theta& alpha = (which == EtaKind::Value) ? e.alpha_value : e.alpha_time;
            grad(static_cast<Eigen::Index>(c)) = -alpha.at(binding.free_indices()[c]);
        }
        const double var = (which == EtaKind::Value) ? e.var_value : e.var_time;
        const double pi = p(static_cast<Eigen::Index>(i));
        hessian += pi * grad * grad.transpose();
        source += pi * var * grad * grad.transpose();
    }

    CovarianceReport report;
    report.hessian = hessian;
    report.sigma = k * source * k.transpose();

    const Eigen::MatrixXd ka = k * hessian;
    Eigen::EigenSolver<Eigen::MatrixXd> eig(ka);
    report.ka_eigenvalues = eig.eigenvalues().real();
    for (Eigen::Index i = 0; i < report.ka_eigenvalues.size(); ++i) {
        if (std::fabs(eig.eigenvalues()(i).imag()) > 1e-10)
            throw ChainError("K A has a complex eigenvalue; choose a symmetric gain");
        if (!(report.ka_eigenvalues(i) > 0.5)) {
            std::ostringstream os;
            os << "eigenvalue " << report.ka_eigenvalues(i)
               << " of K A is not greater than 1/2";
            throw ChainError(os.str());
        }
    }

    // Lyapunov solve by vectorization: (I (x) B + B (x) I) vec(X) = -vec(Sigma)
    // with B = -K A + I/2.
    const Eigen::Index n = static_cast<Eigen::Index>(dim);
    const Eigen::MatrixXd bmat =
        -ka + 0.5 * Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd kron = Eigen::MatrixXd::Zero(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index l = 0; l < n; ++l) {
                kron(i * n + j, l * n + j) += bmat(i, l);  // B X term
                kron(i * n + j, i * n + l) += bmat(j, l);  // X B' term
            }
    Eigen::VectorXd rhs(n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) rhs(i * n + j) = -report.sigma(i, j);
    const Eigen::VectorXd x = kron.fullPivLu().solve(rhs);
    report.stationary_cov.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) report.stationary_cov(i, j) = x(i * n + j);
    return report;
}

}  // namespace sdefit
