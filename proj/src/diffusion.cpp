#include "sdefit/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sdefit {

std::string family_name(FamilyTag tag) {
    switch (tag) {
        case FamilyTag::BrownianMotion: return "brownian";
        case FamilyTag::CEV: return "cev";
        case FamilyTag::CIR: return "cir";
        case FamilyTag::Custom: return "custom";
    }
    return "unknown";
}

namespace {
void check_theta_size(const Theta& theta, std::size_t dim) {
    if (theta.size() != dim) {
        std::ostringstream os;
        os << "parameter vector has dimension " << theta.size() << ", expected " << dim;
        throw DomainError(os.str());
    }
}
}  // namespace

ParametricDiffusion ParametricDiffusion::brownian() {
    ParametricDiffusion m;
    m.family_ = FamilyTag::BrownianMotion;
    m.space_ = StateSpace::real_line();
    m.dim_ = 2;
    m.drift_ = [](double, const Theta& th) {
        check_theta_size(th, 2);
        return th[0];
    };
    m.diff_sq_ = [](double, const Theta& th) {
        check_theta_size(th, 2);
        return th[1];
    };
    return m;
}

ParametricDiffusion ParametricDiffusion::cev(double gamma) {
    if (!(gamma > 1.0)) throw DomainError("cev requires elasticity gamma > 1");
    ParametricDiffusion m;
    m.family_ = FamilyTag::CEV;
    m.space_ = StateSpace::positive_half_line();
    m.dim_ = 2;
    m.gamma_ = gamma;
    m.diff_sq_ = [gamma](double x, const Theta& th) {
        check_theta_size(th, 2);
        return std::exp(th[1]) * std::pow(x, 2.0 * gamma);
    };
    m.drift_ = [](double x, const Theta& th) {
        check_theta_size(th, 2);
        return std::exp(th[0]) * std::exp(th[1]) * x;
    };
    return m;
}

ParametricDiffusion ParametricDiffusion::cir(double alpha) {
    if (!(alpha > 0.0)) throw DomainError("cir requires reversion level alpha > 0");
    ParametricDiffusion m;
    m.family_ = FamilyTag::CIR;
    m.space_ = StateSpace::positive_half_line();
    m.dim_ = 2;
    m.alpha_ = alpha;
    m.diff_sq_ = [](double x, const Theta& th) {
        check_theta_size(th, 2);
        return std::exp(th[1]) * x;
    };
    m.drift_ = [alpha](double x, const Theta& th) {
        check_theta_size(th, 2);
        return std::exp(th[0]) * std::exp(th[1]) * (alpha - x);
    };
    return m;
}

ParametricDiffusion ParametricDiffusion::custom(Coefficient drift, Coefficient diffusion_sq,
                                                StateSpace space,
                                                std::size_t parameter_dimension) {
    ParametricDiffusion m;
    m.family_ = FamilyTag::Custom;
    m.drift_ = std::move(drift);
    m.diff_sq_ = std::move(diffusion_sq);
    m.space_ = space;
    m.dim_ = parameter_dimension;
    return m;
}

double ParametricDiffusion::ratio(double x, const Theta& theta) const {
    if (!space_.interior_contains(x)) {
        std::ostringstream os;
        os << "state " << x << " outside the interior of the state space";
        throw DomainError(os.str());
    }
    const double s2 = diff_sq_(x, theta);
    if (!(s2 > diffusion_floor_)) {
        std::ostringstream os;
        os << "sigma^2(" << x << ") = " << s2 << " at or below the diffusion floor "
           << diffusion_floor_;
        throw SingularityError(os.str());
    }
    return drift_(x, theta) / s2;
}

ParameterBinding::ParameterBinding(Theta anchor, std::vector<std::size_t> free_indices)
    : anchor_(std::move(anchor)), free_(std::move(free_indices)) {
    for (std::size_t i : free_) {
        if (i >= anchor_.size()) throw DomainError("free index outside parameter vector");
    }
}

ParameterBinding ParameterBinding::identity(std::size_t dimension) {
    std::vector<std::size_t> all(dimension);
    for (std::size_t i = 0; i < dimension; ++i) all[i] = i;
    return ParameterBinding(Theta(dimension, 0.0), std::move(all));
}

Theta ParameterBinding::embed(const Theta& free_theta) const {
    if (free_theta.size() != free_.size())
        throw DomainError("free parameter vector has wrong dimension");
    Theta full = anchor_;
    for (std::size_t k = 0; k < free_.size(); ++k) full[free_[k]] = free_theta[k];
    return full;
}

Theta ParameterBinding::extract(const Theta& full_theta) const {
    if (full_theta.size() != anchor_.size())
        throw DomainError("full parameter vector has wrong dimension");
    Theta out(free_.size());
    for (std::size_t k = 0; k < free_.size(); ++k) out[k] = full_theta[free_[k]];
    return out;
}

ParameterSpace ParameterSpace::unconstrained(std::size_t dim) {
    ParameterSpace s;
    s.kind = Kind::Unconstrained;
    s.dimension = dim;
    return s;
}

ParameterSpace ParameterSpace::box(std::vector<std::pair<double, double>> bounds) {
    ParameterSpace s;
    s.kind = Kind::Box;
    s.dimension = bounds.size();
    s.bounds = std::move(bounds);
    s.validate();
    return s;
}

void ParameterSpace::validate() const {
    if (kind == Kind::Unconstrained) return;
    if (bounds.size() != dimension) throw DomainError("box bounds/dimension mismatch");
    for (const auto& [a, b] : bounds) {
        if (!std::isfinite(a) || !std::isfinite(b) || !(a < b)) {
            std::ostringstream os;
            os << "box bounds must satisfy -inf < a < b < inf, got [" << a << ", " << b << "]";
            throw DomainError(os.str());
        }
    }
}

bool ParameterSpace::contains(const Theta& theta) const {
    if (theta.size() != dimension) return false;
    if (kind == Kind::Unconstrained) return true;
    for (std::size_t i = 0; i < dimension; ++i) {
        if (theta[i] < bounds[i].first || theta[i] > bounds[i].second) return false;
    }
    return true;
}

Theta project(const ParameterSpace& space, const Theta& theta) {
    if (theta.size() != space.dimension)
        throw DomainError("project: parameter vector has wrong dimension");
    if (space.kind == ParameterSpace::Kind::Unconstrained) return theta;
    Theta out = theta;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::clamp(out[i], space.bounds[i].first, space.bounds[i].second);
    }
    return out;
}

std::size_t ObservationGrid::index_of(double d) const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i] == d) return i;
    }
    std::ostringstream os;
    os << "state " << d << " is not a grid point";
    throw DomainError(os.str());
}

ObservationGrid ObservationGrid::with_radius(std::vector<double> pts, double radius) {
    if (!(radius > 0.0)) throw DomainError("neighborhood radius must be positive");
    ObservationGrid g;
    g.points = std::move(pts);
    g.neighborhoods.reserve(g.points.size());
    for (double d : g.points) g.neighborhoods.emplace_back(d - radius, d + radius);
    return g;
}

std::vector<GridViolation> validate_grid(const ParametricDiffusion& model,
                                         const ObservationGrid& grid) {
    std::vector<GridViolation> out;
    auto add = [&out](GridViolation::Kind kind, const std::string& msg) {
        out.push_back({kind, msg});
    };

    const auto& pts = grid.points;
    if (pts.size() != grid.neighborhoods.size()) {
        add(GridViolation::Kind::PointOutsideNeighborhood,
            "grid has a different number of points and neighborhoods");
        return out;
    }
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        if (!(pts[i] < pts[i + 1])) {
            std::ostringstream os;
            os << "grid points not strictly increasing at index " << i;
            add(GridViolation::Kind::UnsortedPoints, os.str());
        }
    }

    const StateSpace& space = model.state_space();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto [lo, hi] = grid.neighborhoods[i];
        std::ostringstream tag;
        tag << "U_{" << pts[i] << "} = (" << lo << ", " << hi << ")";
        if (!(lo < pts[i] && pts[i] < hi)) {
            add(GridViolation::Kind::PointOutsideNeighborhood,
                tag.str() + " does not contain its own grid point");
        }
        // Closure inside the interior keeps expected exit times finite.
        if (!(space.interior_contains(lo) && space.interior_contains(hi))) {
            add(GridViolation::Kind::NeighborhoodTouchesBoundary,
                tag.str() + " is not contained in the interior of the state space");
        }
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (j != i && pts[j] > lo && pts[j] < hi) {
                std::ostringstream os;
                os << tag.str() << " contains the foreign grid point " << pts[j];
                add(GridViolation::Kind::ForeignGridPoint, os.str());
            }
        }
    }
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        // Points are sorted, so only adjacent neighborhoods can intersect.
        if (grid.neighborhoods[i].second > grid.neighborhoods[i + 1].first) {
            std::ostringstream os;
            os << "neighborhoods of " << pts[i] << " and " << pts[i + 1] << " overlap";
            add(GridViolation::Kind::NeighborhoodOverlap, os.str());
        }
    }
    return out;
}

}  // namespace sdefit
