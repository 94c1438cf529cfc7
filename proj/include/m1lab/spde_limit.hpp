#pragma once

#include "m1lab/errors.hpp"
#include "m1lab/m1_metric.hpp"
#include "m1lab/numeric.hpp"
#include "m1lab/particle_system.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace m1lab {

struct DensityGrid {
    double x_max = 25.0;
    double dx = 0.01;
    std::size_t substeps = 0;   // diffusion sub-steps per time step; 0 picks the fewest with r <= r_max
    double r_max = 1.0;         // Crank-Nicolson stays positivity preserving for r <= 1

    void validate() const {
        if (!(dx > 0.0 && std::isfinite(dx))) throw ConfigError("spde.dx", "must be > 0");
        if (!(x_max > 2.0 * dx)) throw ConfigError("spde.x_max", "must exceed 2 dx");
        if (!(r_max > 0.0 && r_max <= 1.0)) throw ConfigError("spde.r_max", "must lie in (0, 1]");
    }
};

/// Density on x_j = j dx, j = 0..J, at every simulation time, with v = 0 at both ends.
struct DensitySolution {
    double dx = 0.0;
    std::size_t nodes = 0;                // J + 1
    std::size_t substeps = 0;
    std::vector<double> times;
    std::vector<double> density;          // (G + 1) * (J + 1), time-major
    std::vector<double> loss;             // mass absorbed at 0 (boundary flux and shifts below 0)
    std::vector<double> far_loss;         // mass leaving through x_max
    double initial_deficit = 0.0;         // 1 - initial discrete mass
    double clipped_mass = 0.0;            // |negative mass| removed by clipping

    [[nodiscard]] std::size_t steps() const noexcept { return times.size() - 1; }
    [[nodiscard]] double x(std::size_t j) const noexcept { return static_cast<double>(j) * dx; }
    [[nodiscard]] std::span<const double> at(std::size_t g) const noexcept {
        return std::span<const double>(density).subspan(g * nodes, nodes);
    }
    [[nodiscard]] double mass(std::size_t g) const {
        CompensatedSum s;
        for (double v : at(g)) s += v;
        return s.value() * dx;
    }
    /// int v + L - 1 at step g; far-field loss and clipping show up here.
    [[nodiscard]] double balance_error(std::size_t g) const { return mass(g) + loss[g] - 1.0; }
    [[nodiscard]] CadlagPath loss_path() const { return CadlagPath(times, loss); }
};

namespace detail {

// Solves the tridiagonal system (1 + r) u_j - (r/2)(u_{j-1} + u_{j+1}) = rhs_j on the
// interior with zero boundary values. Thomas algorithm; scratch holds the modified
// super-diagonal.
inline void cn_solve(std::vector<double>& u, const std::vector<double>& rhs, double r, std::vector<double>& scratch) {
    const std::size_t m = rhs.size();
    scratch.resize(m);
    const double diag = 1.0 + r;
    const double off = -0.5 * r;
    double denom = diag;
    scratch[0] = off / denom;
    u[0] = rhs[0] / denom;
    for (std::size_t j = 1; j < m; ++j) {
        denom = diag - off * scratch[j - 1];
        scratch[j] = off / denom;
        u[j] = (rhs[j] - off * u[j - 1]) / denom;
    }
    for (std::size_t j = m - 1; j-- > 0;) u[j] -= scratch[j] * u[j + 1];
}

}  // namespace detail

/// Splitting solver for the limit equation given common-noise increments dW:
/// per step, Crank-Nicolson diffusion with coefficient (1 - rho(L)^2)/2, then a
/// conservative (cloud-in-cell) shift by rho(L) dW. L is the absorbed mass and
/// rho is evaluated at its value at the start of the step.
inline DensitySolution solve_density(std::span<const double> dW, double dt, const RhoTable& rho,
                                     const std::function<double(double)>& initial_cdf, const DensityGrid& grid,
                                     double point_mass_at = -1.0) {
    grid.validate();
    rho.validate();
    if (!(dt > 0.0)) throw ConfigError("dt", "must be > 0");
    const auto last = static_cast<std::size_t>(std::llround(grid.x_max / grid.dx));
    const std::size_t nodes = last + 1;
    const double dx = grid.dx;
    const std::size_t steps = dW.size();

    // Diffusion coefficient is at most 1/2.
    const double r_full = 0.5 * dt / (dx * dx);
    std::size_t sub = grid.substeps;
    if (sub == 0) {
        sub = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(r_full / grid.r_max - 1e-12)));
    } else if (r_full / static_cast<double>(sub) > grid.r_max) {
        const double suggest = std::sqrt(0.5 * dt / static_cast<double>(sub) / grid.r_max);
        throw ConfigError("spde.substeps", "r = " + std::to_string(r_full / static_cast<double>(sub)) +
                                               " exceeds r_max; use dx >= " + std::to_string(suggest) + " or more substeps");
    }
    const double dt_sub = dt / static_cast<double>(sub);

    DensitySolution sol;
    sol.dx = dx;
    sol.nodes = nodes;
    sol.substeps = sub;
    sol.times.resize(steps + 1);
    for (std::size_t g = 0; g <= steps; ++g) sol.times[g] = static_cast<double>(g) * dt;
    sol.density.assign((steps + 1) * nodes, 0.0);
    sol.loss.assign(steps + 1, 0.0);
    sol.far_loss.assign(steps + 1, 0.0);

    std::vector<double> v(nodes, 0.0);
    if (point_mass_at > 0.0) {
        const double pos = point_mass_at / dx;
        const auto j = static_cast<std::size_t>(std::floor(pos));
        if (j < 1 || j + 1 >= last) throw std::domain_error("spde: point mass must lie in [dx, x_max - dx)");
        const double frac = pos - static_cast<double>(j);
        v[j] += (1.0 - frac) / dx;
        v[j + 1] += frac / dx;
    } else {
        const double beyond = 1.0 - initial_cdf(grid.x_max - 0.5 * dx);
        if (beyond > 1e-8) {
            throw ConfigError("spde.x_max", "initial mass beyond x_max is " + format_double(beyond) + " (> 1e-8); raise x_max");
        }
        for (std::size_t j = 1; j < last; ++j) {
            const double lo = j == 1 ? 0.0 : (static_cast<double>(j) - 0.5) * dx;
            const double hi = (static_cast<double>(j) + 0.5) * dx;
            v[j] = (initial_cdf(hi) - initial_cdf(lo)) / dx;
        }
    }
    {
        CompensatedSum m;
        for (double x : v) m += x;
        sol.initial_deficit = 1.0 - m.value() * dx;
    }
    std::copy(v.begin(), v.end(), sol.density.begin());

    const std::size_t interior = nodes - 2;
    std::vector<double> rhs(interior), u(interior), scratch, shifted(nodes);
    double loss = 0.0;
    double far = 0.0;
    for (std::size_t g = 0; g < steps; ++g) {
        const double rh = rho(loss);
        const double a = 0.5 * (1.0 - rh * rh);
        const double r = a * dt_sub / (dx * dx);
        if (r > 0.0) {
            for (std::size_t s = 0; s < sub; ++s) {
                for (std::size_t j = 1; j <= interior; ++j) {
                    rhs[j - 1] = (1.0 - r) * v[j] + 0.5 * r * (v[j - 1] + v[j + 1]);
                }
                detail::cn_solve(u, rhs, r, scratch);
                // Exact discrete fluxes through both ends.
                loss += dx * 0.5 * r * (v[1] + u[0]);
                far += dx * 0.5 * r * (v[interior] + u[interior - 1]);
                for (std::size_t j = 1; j <= interior; ++j) {
                    double val = u[j - 1];
                    if (val < 0.0) {
                        sol.clipped_mass += -val * dx;
                        val = 0.0;
                    }
                    v[j] = val;
                }
            }
        }
        const double shift = rh * dW[g] / dx;
        if (shift != 0.0) {
            std::fill(shifted.begin(), shifted.end(), 0.0);
            const double whole = std::floor(shift);
            const double frac = shift - whole;
            const auto offset = static_cast<long long>(whole);
            for (std::size_t j = 1; j <= interior; ++j) {
                if (v[j] == 0.0) continue;
                const long long k = static_cast<long long>(j) + offset;
                const double parts[2] = {(1.0 - frac) * v[j], frac * v[j]};
                for (int q = 0; q < 2; ++q) {
                    const long long target = k + q;
                    if (parts[q] == 0.0) continue;
                    if (target <= 0) {
                        loss += parts[q] * dx;
                    } else if (target >= static_cast<long long>(last)) {
                        far += parts[q] * dx;
                    } else {
                        shifted[static_cast<std::size_t>(target)] += parts[q];
                    }
                }
            }
            v.swap(shifted);
        }
        sol.loss[g + 1] = loss;
        sol.far_loss[g + 1] = far;
        std::copy(v.begin(), v.end(), sol.density.begin() + static_cast<std::ptrdiff_t>((g + 1) * nodes));
    }
    return sol;
}

inline DensitySolution solve_density(std::span<const double> dW, double dt, const RhoTable& rho, const InitialLaw& law,
                                     const DensityGrid& grid) {
    law.validate();
    if (law.family == InitialLaw::Family::point) return solve_density(dW, dt, rho, {}, grid, law.a);
    return solve_density(dW, dt, rho, [&](double x) { return law.cdf(x); }, grid);
}

/// Conditional limit for a simulated replicate: same dW, rho, and initial law.
inline DensitySolution solve_density(const ParticleEnsemble& ens, const DensityGrid& grid) {
    return solve_density(ens.common, ens.dt(), ens.config.rho, ens.config.initial, grid);
}

/// t -> int v(t, x) f(x) dx by the trapezoid rule.
template <typename F>
CadlagPath project_density(const DensitySolution& sol, F&& f) {
    std::vector<double> fx(sol.nodes);
    for (std::size_t j = 0; j < sol.nodes; ++j) fx[j] = f(sol.x(j));
    std::vector<double> vals(sol.times.size());
    for (std::size_t g = 0; g < sol.times.size(); ++g) {
        const auto v = sol.at(g);
        CompensatedSum s;
        for (std::size_t j = 0; j < sol.nodes; ++j) {
            const double w = (j == 0 || j + 1 == sol.nodes) ? 0.5 : 1.0;
            s += w * v[j] * fx[j];
        }
        vals[g] = s.value() * sol.dx;
    }
    return CadlagPath(sol.times, std::move(vals));
}

struct ConvergenceReport {
    std::vector<std::size_t> particles;             // N ladder
    std::vector<std::uint32_t> seeds;               // replicate ids sharing the common-noise key
    std::vector<std::vector<double>> distances;     // [rung][seed]
    std::vector<double> medians;
    std::vector<bool> converged;                    // every refinement converged, per rung
    [[nodiscard]] bool strictly_decreasing() const {
        for (std::size_t k = 1; k < medians.size(); ++k) {
            if (!(medians[k] < medians[k - 1])) return false;
        }
        return true;
    }
};

/// For each seed, solves the limit equation once with the common noise of that
/// seed and measures d_M1(nu^N(phi), nu(phi)) for every N. All N share the
/// common-noise stream, and the first N particle streams.
inline ConvergenceReport convergence_study(const ModelConfig& base, const std::vector<std::size_t>& ladder,
                                           const std::vector<std::uint32_t>& seeds, const TestFunction& phi,
                                           const DensityGrid& grid, const RefineOptions& refine = {}) {
    ConvergenceReport rep;
    rep.particles = ladder;
    rep.seeds = seeds;
    rep.distances.assign(ladder.size(), std::vector<double>(seeds.size(), 0.0));
    rep.converged.assign(ladder.size(), true);
    RefineOptions opts = refine;
    opts.with_witness = false;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        std::optional<CadlagPath> target;
        for (std::size_t k = 0; k < ladder.size(); ++k) {
            ModelConfig cfg = base;
            cfg.particles = ladder[k];
            const auto ens = simulate(cfg, seeds[s]);
            if (!target) target = project_density(solve_density(ens, grid), phi);
            const auto res = m1_distance_refined(project(ens, phi), *target, opts);
            rep.distances[k][s] = res.distance;
            if (!res.converged) rep.converged[k] = false;
        }
    }
    for (const auto& row : rep.distances) rep.medians.push_back(median(row));
    return rep;
}

}  // namespace m1lab
