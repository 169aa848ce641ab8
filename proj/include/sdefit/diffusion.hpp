// Parametric scalar diffusion models, parameter spaces, and observation grids.
//
// A model is the pair (b, sigma^2) of coefficient functions on a state
// interval S.  Built-in families follow the road-map/speed split: the ratio
// b/sigma^2 is controlled by a coordinate lambda through the link exp(lambda),
// the diffusion scale sigma0 by a coordinate sigma through exp(sigma).
//
//   brownian : S = R,       theta = (mu, sigma^2), b = mu, sigma^2 = const
//   cev      : S = (0,inf), theta = (lambda, sigma),
//              sigma^2(x) = e^sigma x^(2 gamma),  b(x) = e^lambda e^sigma x
//              (so b/sigma^2 = e^lambda x^(1-2 gamma), gamma > 1 fixed)
//   cir      : S = (0,inf), theta = (lambda, sigma),
//              sigma^2(x) = e^sigma x,  b(x) = e^lambda e^sigma (alpha - x)
//              (so b/sigma^2 = e^lambda (alpha - x)/x, alpha > 0 fixed)
//
// Custom models supply the two coefficient callbacks and a state space; the
// existence/regularity conditions on them are a caller obligation.

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdefit {

using Theta = std::vector<double>;

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SingularityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// State interval with open/closed/infinite endpoint kinds.
struct StateSpace {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool lo_closed = false;
    bool hi_closed = false;

    static StateSpace real_line() { return {}; }
    static StateSpace positive_half_line() {
        return {0.0, std::numeric_limits<double>::infinity(), false, false};
    }

    bool interior_contains(double x) const { return x > lo && x < hi; }
    bool contains(double x) const {
        if (x == lo) return lo_closed;
        if (x == hi) return hi_closed;
        return interior_contains(x);
    }
};

enum class FamilyTag { BrownianMotion, CEV, CIR, Custom };

std::string family_name(FamilyTag tag);

class ParametricDiffusion {
  public:
    using Coefficient = std::function<double(double, const Theta&)>;

    static ParametricDiffusion brownian();
    static ParametricDiffusion cev(double gamma);
    static ParametricDiffusion cir(double alpha);
    static ParametricDiffusion custom(Coefficient drift, Coefficient diffusion_sq,
                                      StateSpace space, std::size_t parameter_dimension);

    double drift(double x, const Theta& theta) const { return drift_(x, theta); }
    double diffusion_sq(double x, const Theta& theta) const { return diff_sq_(x, theta); }

    /// b/sigma^2 at an interior state; throws DomainError outside the interior
    /// and SingularityError when sigma^2 underflows the configured floor.
    double ratio(double x, const Theta& theta) const;

    const StateSpace& state_space() const { return space_; }
    FamilyTag family() const { return family_; }
    std::size_t parameter_dimension() const { return dim_; }
    double gamma() const { return gamma_; }
    double alpha() const { return alpha_; }

    double diffusion_floor() const { return diffusion_floor_; }
    void set_diffusion_floor(double floor) { diffusion_floor_ = floor; }

  private:
    ParametricDiffusion() = default;

    FamilyTag family_ = FamilyTag::Custom;
    Coefficient drift_;
    Coefficient diff_sq_;
    StateSpace space_;
    std::size_t dim_ = 0;
    double gamma_ = 0.0;  // CEV elasticity
    double alpha_ = 0.0;  // CIR reversion level
    double diffusion_floor_ = 1e-300;
};

/// Fixes a subset of a model's coordinates at reference values so estimators
/// operate on the free coordinates only.  free_theta has one entry per free
/// index; the embedding keeps the remaining coordinates at `anchor`.
class ParameterBinding {
  public:
    ParameterBinding(Theta anchor, std::vector<std::size_t> free_indices);

    std::size_t free_dimension() const { return free_.size(); }
    std::size_t full_dimension() const { return anchor_.size(); }
    const std::vector<std::size_t>& free_indices() const { return free_; }

    Theta embed(const Theta& free_theta) const;
    Theta extract(const Theta& full_theta) const;

    static ParameterBinding identity(std::size_t dimension);

  private:
    Theta anchor_;
    std::vector<std::size_t> free_;
};

struct ParameterSpace {
    enum class Kind { Unconstrained, Box };

    Kind kind = Kind::Unconstrained;
    std::vector<std::pair<double, double>> bounds;  // per coordinate, box only
    std::size_t dimension = 1;

    static ParameterSpace unconstrained(std::size_t dim);
    static ParameterSpace box(std::vector<std::pair<double, double>> bounds);

    bool contains(const Theta& theta) const;
    void validate() const;
};

/// Coordinate-wise clamp onto the box (identity when unconstrained).
Theta project(const ParameterSpace& space, const Theta& theta);

struct ObservationGrid {
    std::vector<double> points;                              // d_1 < ... < d_s
    std::vector<std::pair<double, double>> neighborhoods;    // U_d per point

    std::size_t size() const { return points.size(); }
    double left(std::size_t i) const { return neighborhoods[i].first; }
    double right(std::size_t i) const { return neighborhoods[i].second; }

    /// Index of a grid point; throws DomainError when d is not on the grid.
    std::size_t index_of(double d) const;

    /// Grid built from points with symmetric neighborhoods (d - r, d + r).
    static ObservationGrid with_radius(std::vector<double> points, double radius);
};

struct GridViolation {
    enum class Kind {
        UnsortedPoints,
        PointOutsideNeighborhood,
        NeighborhoodOverlap,
        NeighborhoodTouchesBoundary,
        ForeignGridPoint,
    };
    Kind kind;
    std::string message;
};

/// Report-style check of the grid invariants against a model's state space.
/// An empty report means the grid is valid.
std::vector<GridViolation> validate_grid(const ParametricDiffusion& model,
                                         const ObservationGrid& grid);

}  // namespace sdefit
