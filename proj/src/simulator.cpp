#include "sdefit/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace sdefit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double clamp_to_space(const StateSpace& space, double x) {
    return std::clamp(x, space.lo, space.hi);
}

struct BarrierHit {
    double elapsed;
    double level;
};

// Runs the path from x0 until it reaches `lower` or `upper` (either may be
// infinite).  Returns the crossing time estimate and the barrier hit.
BarrierHit simulate_to_barrier(const ParametricDiffusion& model, const Theta& theta, double x0,
                               double lower, double upper, const PathConfig& cfg, Rng& rng) {
    const StateSpace& space = model.state_space();
    double x = x0;
    double t = 0.0;
    const double dt = cfg.dt;

    while (true) {
        const double x_eval = clamp_to_space(space, x);
        const double b = model.drift(x_eval, theta);
        const double s2 = model.diffusion_sq(x_eval, theta);
        const double vol = std::sqrt(std::max(s2, 0.0) * dt);
        const double z = rng.normal();
        const double x1 = x + b * dt + vol * z;
        if (!std::isfinite(x1)) throw SimulationError("euler step produced a non-finite state");

        // Direct crossing: the step endpoint is at or beyond a barrier.
        const bool up = x1 >= upper;
        const bool down = x1 <= lower;
        if (up || down) {
            const double level = up ? upper : lower;
            double frac = 0.5;
            if (cfg.crossing_refinement == PathConfig::Crossing::LinearInterpolation) {
                frac = (x1 != x) ? std::clamp((level - x) / (x1 - x), 0.0, 1.0) : 0.0;
            } else {
                // Bridge bisection: sample conditioned midpoints and descend
                // into the half containing the first crossing.
                double a = x, bseg = x1, seglen = dt, base = 0.0;
                for (int depth = 0; depth < 6; ++depth) {
                    // Bridge midpoint over a segment of length seglen has
                    // mean (a+b)/2 and variance sigma^2 seglen / 4.
                    const double mid = 0.5 * (a + bseg) +
                                       0.5 * std::sqrt(std::max(s2, 0.0) * seglen) * rng.normal();
                    seglen *= 0.5;
                    const bool mid_beyond = up ? (mid >= level) : (mid <= level);
                    if (mid_beyond) {
                        bseg = mid;
                    } else {
                        a = mid;
                        base += seglen;
                    }
                }
                frac = (base + 0.5 * seglen) / dt;
            }
            return {t + frac * dt, level};
        }

        if (cfg.bridge_correction) {
            // Un-crossed step: the continuous path may still have touched a
            // barrier inside the step.
            double p_up = 0.0, p_down = 0.0;
            if (std::isfinite(upper) && s2 > 0.0)
                p_up = std::exp(-2.0 * (upper - x) * (upper - x1) / (s2 * dt));
            if (std::isfinite(lower) && s2 > 0.0)
                p_down = std::exp(-2.0 * (x - lower) * (x1 - lower) / (s2 * dt));
            bool hit_up = false, hit_down = false;
            if (p_up > 0.0) hit_up = rng.uniform() < p_up;
            if (p_down > 0.0) hit_down = rng.uniform() < p_down;
            if (hit_up && hit_down) {
                // Both excursions fired in one step; keep the likelier one.
                if (p_up >= p_down) hit_down = false;
                else hit_up = false;
            }
            if (hit_up) return {t + 0.5 * dt, upper};
            if (hit_down) return {t + 0.5 * dt, lower};
        }

        x = x1;
        t += dt;
        if (t > cfg.max_path_time) {
            std::ostringstream os;
            os << "path exceeded max_path_time = " << cfg.max_path_time
               << " without reaching a barrier (started at " << x0 << ")";
            throw SimulationError(os.str());
        }
    }
}

}  // namespace

void PathConfig::validate() const {
    if (!(dt > 0.0)) throw SimulationError("dt must be positive");
    if (!(max_path_time > dt)) throw SimulationError("max_path_time must exceed dt");
}

double euler_step(const ParametricDiffusion& model, const Theta& theta, double x, double dt,
                  double z) {
    const double x_eval = clamp_to_space(model.state_space(), x);
    const double s2 = model.diffusion_sq(x_eval, theta);
    const double out = x + model.drift(x_eval, theta) * dt + std::sqrt(std::max(s2, 0.0) * dt) * z;
    if (!std::isfinite(out)) throw SimulationError("euler step produced a non-finite state");
    return out;
}

std::pair<double, double> first_hit_grid(const ParametricDiffusion& model, const Theta& theta,
                                         double x0, const ObservationGrid& grid,
                                         const PathConfig& cfg, Rng& rng) {
    cfg.validate();
    for (double d : grid.points)
        if (x0 == d) return {0.0, d};
    double lower = -kInf, upper = kInf;
    for (double d : grid.points) {
        if (d < x0) lower = std::max(lower, d);
        if (d > x0) upper = std::min(upper, d);
    }
    const BarrierHit hit = simulate_to_barrier(model, theta, x0, lower, upper, cfg, rng);
    return {hit.elapsed, hit.level};
}

ObservationRecord run_cycle(const ParametricDiffusion& model, const Theta& theta, double d,
                            const ObservationGrid& grid, const PathConfig& cfg, Rng& rng,
                            std::int64_t index) {
    cfg.validate();
    const std::size_t i = grid.index_of(d);
    const auto [lo, hi] = grid.neighborhoods[i];

    const BarrierHit exit = simulate_to_barrier(model, theta, d, lo, hi, cfg, rng);

    // Continue the same path to the first hit of D \ {d}; by continuity only
    // the adjacent grid points are reachable.
    const double lower = (i > 0) ? grid.points[i - 1] : -kInf;
    const double upper = (i + 1 < grid.size()) ? grid.points[i + 1] : kInf;

    ObservationRecord rec;
    rec.index = index;
    rec.grid_point = d;
    rec.exit_point = exit.level;
    rec.exit_elapsed = exit.elapsed;
    if (exit.level == lower || exit.level == upper) {
        rec.next_grid_point = exit.level;  // neighborhood endpoint on the grid
    } else {
        rec.next_grid_point =
            simulate_to_barrier(model, theta, exit.level, lower, upper, cfg, rng).level;
    }
    return rec;
}

std::vector<ObservationRecord> generate_stream(const ParametricDiffusion& model,
                                               const Theta& theta, const ObservationGrid& grid,
                                               double x0, std::int64_t n_cycles,
                                               const PathConfig& cfg, Rng& rng) {
    if (n_cycles < 1) throw SimulationError("generate_stream needs n_cycles >= 1");
    std::vector<ObservationRecord> out;
    out.reserve(static_cast<std::size_t>(n_cycles));
    double current = first_hit_grid(model, theta, x0, grid, cfg, rng).second;
    for (std::int64_t n = 1; n <= n_cycles; ++n) {
        out.push_back(run_cycle(model, theta, current, grid, cfg, rng, n));
        current = out.back().next_grid_point;
    }
    return out;
}

void write_stream_csv(std::ostream& os, const std::vector<ObservationRecord>& records) {
    os << "n,grid_point,exit_point,exit_elapsed,next_grid_point\n";
    char line[256];
    for (const ObservationRecord& r : records) {
        std::snprintf(line, sizeof(line), "%lld,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<long long>(r.index), r.grid_point, r.exit_point,
                      r.exit_elapsed, r.next_grid_point);
        os << line;
    }
}

std::vector<ObservationRecord> read_stream_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "n,grid_point,exit_point,exit_elapsed,next_grid_point")
        throw SimulationError("stream CSV is missing the expected header");
    std::vector<ObservationRecord> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ObservationRecord r;
        char* end = nullptr;
        const char* p = line.c_str();
        r.index = std::strtoll(p, &end, 10);
        for (double* field : {&r.grid_point, &r.exit_point, &r.exit_elapsed,
                              &r.next_grid_point}) {
            if (*end != ',') throw SimulationError("malformed stream CSV row: " + line);
            p = end + 1;
            *field = std::strtod(p, &end);
        }
        out.push_back(r);
    }
    return out;
}

}  // namespace sdefit
