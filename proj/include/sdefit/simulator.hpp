// Sample-path simulation of the observation scheme: from each grid point the
// path runs to the first exit of the surrounding neighborhood (recording the
// exit point and elapsed time) and then on to the first hit of a different
// grid point, which starts the next cycle.
//
// Paths are Euler-Maruyama with full-truncation clamping of coefficient
// arguments to the state space.  Level crossings inside a step are detected
// by sign change (crossing time linearly interpolated or refined by bridge
// bisection) and, between steps, by the Brownian-bridge crossing probability
// exp(-2 (x_k - l)(x_{k+1} - l) / (sigma^2 dt)); plain Euler systematically
// misses those excursions and biases exit times upward.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdefit/diffusion.hpp"
#include "sdefit/rng.hpp"

namespace sdefit {

struct SimulationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PathConfig {
    enum class Crossing { LinearInterpolation, BisectionSubstep };

    double dt = 1e-4;
    Crossing crossing_refinement = Crossing::LinearInterpolation;
    bool bridge_correction = true;
    double max_path_time = 100.0;  // abort threshold per excursion

    void validate() const;
};

/// One sampling cycle: grid point, neighborhood exit, and the next grid hit.
struct ObservationRecord {
    std::int64_t index = 0;
    double grid_point = 0.0;
    double exit_point = 0.0;
    double exit_elapsed = 0.0;
    double next_grid_point = 0.0;
};

/// One Euler-Maruyama step with coefficients evaluated at the state-space
/// clamp of x.  z is a standard normal draw.
double euler_step(const ParametricDiffusion& model, const Theta& theta, double x, double dt,
                  double z);

/// Simulates from x0 until the path crosses any grid point; (0, x0) when x0
/// is already on the grid.
std::pair<double, double> first_hit_grid(const ParametricDiffusion& model, const Theta& theta,
                                         double x0, const ObservationGrid& grid,
                                         const PathConfig& cfg, Rng& rng);

/// From grid point d: exit of U_d, then continuation to the first hit of a
/// grid point other than d.
ObservationRecord run_cycle(const ParametricDiffusion& model, const Theta& theta, double d,
                            const ObservationGrid& grid, const PathConfig& cfg, Rng& rng,
                            std::int64_t index = 1);

std::vector<ObservationRecord> generate_stream(const ParametricDiffusion& model,
                                               const Theta& theta, const ObservationGrid& grid,
                                               double x0, std::int64_t n_cycles,
                                               const PathConfig& cfg, Rng& rng);

void write_stream_csv(std::ostream& os, const std::vector<ObservationRecord>& records);
std::vector<ObservationRecord> read_stream_csv(std::istream& is);

}  // namespace sdefit
