#include "sdefit/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>

namespace sdefit {

void QuadratureConfig::validate() const {
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0))
        throw QuadratureError("quadrature tolerances must be positive");
    if (mesh_size < 16) throw QuadratureError("mesh_size must be at least 16");
    if (max_subdivisions < 1) throw QuadratureError("max_subdivisions must be at least 1");
}

namespace {

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
constexpr double kKronrodNodes[8] = {
    0.0,
    0.2077849550078985,
    0.4058451513773972,
    0.5860872354676911,
    0.7415311855993944,
    0.8648644233597691,
    0.9491079123427585,
    0.9914553711208126,
};
constexpr double kKronrodWeights[8] = {
    0.2094821410847278, 0.2044329400752989, 0.1903505780647854, 0.1690047266392679,
    0.1406532597155259, 0.1047900103222502, 0.0630920926299786, 0.0229353220105292,
};
// Gauss-7 weights; zero entries mark Kronrod-only nodes.
constexpr double kGaussWeights[8] = {
    0.4179591836734694, 0.0, 0.3818300505051189, 0.0,
    0.2797053914892767, 0.0, 0.1294849661688697, 0.0,
};

struct PanelResult {
    double value;
    double error;
};

PanelResult gk15(const std::function<double(double)>& f, double a, double b) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double f0 = f(mid);
    double k15 = kKronrodWeights[0] * f0;
    double g7 = kGaussWeights[0] * f0;
    for (int i = 1; i < 8; ++i) {
        const double dx = half * kKronrodNodes[i];
        const double fi = f(mid + dx) + f(mid - dx);
        k15 += kKronrodWeights[i] * fi;
        g7 += kGaussWeights[i] * fi;
    }
    k15 *= half;
    g7 *= half;
    const double diff = 200.0 * std::fabs(k15 - g7);
    return {k15, diff * std::sqrt(diff)};
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 const QuadratureConfig& quad) {
    quad.validate();
    if (a == b) return 0.0;
    const double sign = (a < b) ? 1.0 : -1.0;
    if (a > b) std::swap(a, b);

    std::vector<std::pair<double, double>> stack{{a, b}};
    double sum = 0.0;
    int splits = 0;
    while (!stack.empty()) {
        const auto [lo, hi] = stack.back();
        stack.pop_back();
        const PanelResult r = gk15(f, lo, hi);
        if (!std::isfinite(r.value))
            throw QuadratureError("integrand produced a non-finite value");
        if (r.error <= quad.abs_tol || r.error <= quad.rel_tol * std::fabs(r.value) ||
            hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::fabs(hi)) {
            sum += r.value;
            continue;
        }
        if (++splits > quad.max_subdivisions) {
            std::ostringstream os;
            os << "adaptive quadrature did not converge within " << quad.max_subdivisions
               << " subdivisions on [" << lo << ", " << hi << "]";
            throw QuadratureError(os.str());
        }
        const double mid = 0.5 * (lo + hi);
        stack.emplace_back(lo, mid);
        stack.emplace_back(mid, hi);
    }
    return sign * sum;
}

std::vector<double> cumulative_integral(const std::vector<double>& f, double h) {
    const std::size_t n = f.size();
    if (n < 5) throw QuadratureError("cumulative_integral needs at least 5 samples");
    std::vector<double> out(n, 0.0);
    // Half-panel (three-point Newton-Cotes) for odd nodes, Simpson for even.
    for (std::size_t k = 0; k + 2 < n; k += 2) {
        out[k + 1] = out[k] + h / 12.0 * (5.0 * f[k] + 8.0 * f[k + 1] - f[k + 2]);
        out[k + 2] = out[k] + h / 3.0 * (f[k] + 4.0 * f[k + 1] + f[k + 2]);
    }
    if (n % 2 == 0) {  // odd interval count: close the last interval backward
        const std::size_t k = n - 1;
        out[k] = out[k - 1] + h / 12.0 * (-f[k - 2] + 8.0 * f[k - 1] + 5.0 * f[k]);
    }
    return out;
}

double coarse_total(const std::vector<double>& f, double h) {
    const std::size_t n = f.size();
    std::vector<double> coarse;
    coarse.reserve(n / 2 + 1);
    for (std::size_t k = 0; k < n; k += 2) coarse.push_back(f[k]);
    if (coarse.size() < 5) return cumulative_integral(f, h).back();
    return cumulative_integral(coarse, 2.0 * h).back();
}

namespace {

// Integral over [0, t] (grid units) of the cubic Lagrange interpolant through
// samples at integer offsets rel[0..3] relative to the enclosing node.
double cubic_prefix_unit(const double val[4], const double rel[4], double t) {
    double acc = 0.0;
    for (int i = 0; i < 4; ++i) {
        // Expand prod_{j != i} (tau - rel[j]) into cubic coefficients.
        double c[4] = {1.0, 0.0, 0.0, 0.0};
        double denom = 1.0;
        for (int j = 0; j < 4; ++j) {
            if (j == i) continue;
            denom *= rel[i] - rel[j];
            double nxt[4] = {0.0, 0.0, 0.0, 0.0};
            for (int k = 0; k < 3; ++k) {
                nxt[k + 1] += c[k];
                nxt[k] -= c[k] * rel[j];
            }
            for (int k = 0; k < 4; ++k) c[k] = nxt[k];
        }
        double integral = 0.0;
        double tp = t;
        for (int k = 0; k < 4; ++k) {
            integral += c[k] * tp / static_cast<double>(k + 1);
            tp *= t;
        }
        acc += val[i] * integral / denom;
    }
    return acc;
}

struct Stencil {
    double val[4];
    double rel[4];
    std::size_t node;  // index of the node at relative offset 0
    double t;          // (x - node) / h in [0, 1]
};

Stencil make_stencil(const std::vector<double>& samples, double a, double h, double x) {
    const std::size_t n = samples.size();
    double pos = (x - a) / h;
    pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
    std::size_t k = static_cast<std::size_t>(pos);
    if (k >= n - 1) k = n - 2;
    const std::size_t first = (k == 0) ? 0 : std::min(k - 1, n - 4);
    Stencil st;
    st.node = k;
    st.t = pos - static_cast<double>(k);
    for (int i = 0; i < 4; ++i) {
        st.val[i] = samples[first + i];
        st.rel[i] = static_cast<double>(first + i) - static_cast<double>(k);
    }
    return st;
}

}  // namespace

double prefix_at(const std::vector<double>& samples, const std::vector<double>& prefix,
                 double a, double h, double x) {
    const Stencil st = make_stencil(samples, a, h, x);
    if (st.t == 0.0) return prefix[st.node];
    return prefix[st.node] + h * cubic_prefix_unit(st.val, st.rel, st.t);
}

double interp_uniform(const std::vector<double>& samples, double a, double h, double x) {
    const Stencil st = make_stencil(samples, a, h, x);
    double acc = 0.0;
    for (int i = 0; i < 4; ++i) {
        double li = 1.0;
        for (int j = 0; j < 4; ++j) {
            if (j == i) continue;
            li *= (st.t - st.rel[j]) / (st.rel[i] - st.rel[j]);
        }
        acc += st.val[i] * li;
    }
    return acc;
}

}  // namespace sdefit
