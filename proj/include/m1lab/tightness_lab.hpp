#pragma once

#include "m1lab/numeric.hpp"
#include "m1lab/parallel.hpp"
#include "m1lab/particle_system.hpp"
#include "m1lab/path.hpp"
#include "m1lab/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace m1lab {

/// Grid-index triple g1 < g2 < g3.
using Triple = std::array<std::size_t, 3>;

/// Symmetric triples (g - u, g, g + u) for u on the dyadic ladder 1, 2, 4, ...
/// (every admissible centre on a coarse stride), followed by `random_count`
/// uniformly drawn ordered triples. Requires at least 3 grid points.
inline std::vector<Triple> make_triples(std::size_t steps, std::size_t random_count, std::uint64_t seed,
                                        std::size_t centres_per_lag = 8) {
    if (steps < 2) throw std::invalid_argument("make_triples: need at least 3 grid times");
    std::vector<Triple> out;
    for (std::size_t u = 1; 2 * u <= steps; u *= 2) {
        const std::size_t lo = u;
        const std::size_t hi = steps - u;
        const std::size_t count = std::min(centres_per_lag, hi - lo + 1);
        for (std::size_t c = 0; c < count; ++c) {
            const std::size_t g = count == 1 ? lo : lo + c * (hi - lo) / (count - 1);
            out.push_back({g - u, g, g + u});
        }
    }
    const auto span = static_cast<double>(steps + 1);
    for (std::size_t k = 0; k < random_count; ++k) {
        Triple t{};
        for (std::uint32_t attempt = 0;; ++attempt) {
            if (attempt > 1000) throw std::runtime_error("make_triples: could not draw distinct times");
            const RandomStream rs(seed, static_cast<std::uint32_t>(k), attempt);
            const auto u = rs.uniform_pair(0, DrawKind::increment);
            const double v = rs.uniform(0, DrawKind::bridge);
            t = {static_cast<std::size_t>(u[0] * span), static_cast<std::size_t>(u[1] * span),
                 static_cast<std::size_t>(v * span)};
            std::sort(t.begin(), t.end());
            if (t[0] < t[1] && t[1] < t[2] && t[2] <= steps) break;
        }
        out.push_back(t);
    }
    return out;
}

inline void validate_triple(const Triple& tr, std::size_t steps) {
    if (!(tr[0] < tr[1] && tr[1] < tr[2]) || tr[2] > steps) {
        throw std::invalid_argument("triple must satisfy t1 < t2 < t3 on the grid");
    }
}

// ---------------------------------------------------------------------------
// Decomposition trick

struct DecompositionReport {
    std::size_t checks = 0;
    double max_violation = -std::numeric_limits<double>::infinity();   // max(LHS - RHS)
    double max_loss_segment = 0.0;     // max H(L_t1, L_t2, L_t3); zero for a monotone L
    double max_lhs = 0.0;
    [[nodiscard]] bool passes(double tol = 1e-10) const noexcept { return max_violation <= tol && max_loss_segment == 0.0; }
    void merge(const DecompositionReport& o) {
        checks += o.checks;
        max_violation = std::max(max_violation, o.max_violation);
        max_loss_segment = std::max(max_loss_segment, o.max_loss_segment);
        max_lhs = std::max(max_lhs, o.max_lhs);
    }
};

/// H(nu_t1, nu_t2, nu_t3) <= |nubar_t1 - nubar_t2| + |nubar_t2 - nubar_t3| pathwise.
template <typename F>
DecompositionReport decomposition_check(const ParticleEnsemble& ens, F&& phi, const std::vector<Triple>& triples) {
    const auto nu = project(ens, phi);
    const auto nubar = project_stopped(ens, phi);
    const auto v = nu.values();
    const auto w = nubar.values();
    DecompositionReport r;
    for (const auto& tr : triples) {
        validate_triple(tr, ens.steps);
        const double lhs = h_functional(v[tr[0]], v[tr[1]], v[tr[2]]);
        const double rhs = std::abs(w[tr[0]] - w[tr[1]]) + std::abs(w[tr[1]] - w[tr[2]]);
        r.max_violation = std::max(r.max_violation, lhs - rhs);
        r.max_lhs = std::max(r.max_lhs, lhs);
        r.max_loss_segment =
            std::max(r.max_loss_segment, h_functional(ens.loss[tr[0]], ens.loss[tr[1]], ens.loss[tr[2]]));
        ++r.checks;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Fourth moments of stopped increments

struct FourthMomentReport {
    std::size_t particles = 0;
    std::size_t replicates = 0;
    std::vector<double> lags;           // |t - s|
    std::vector<double> moments;        // E |nubar_t - nubar_s|^4
    std::vector<double> particle_bound; // Lip^4 E[(1/N) sum |dX_stopped|^4]
    double lipschitz = 0.0;
    LineFit fit;                        // log moment vs log lag
    std::size_t holder_violations = 0;  // (1/N) sum |d phi(X^i)|^4 < |d nubar|^4
    std::size_t lipschitz_violations = 0;
    bool few_replicates = false;
    [[nodiscard]] bool passes(double min_slope = 1.7) const noexcept {
        return fit.slope >= min_slope && holder_violations == 0 && lipschitz_violations == 0;
    }
};

/// Lags are given in grid steps. For each lag the moment is averaged over the
/// non-overlapping windows [s, s + lag] and over replicates.
template <typename F>
FourthMomentReport fourth_moment_scaling(const ModelConfig& cfg, F&& phi, double lipschitz,
                                         const std::vector<std::size_t>& lag_steps, std::size_t replicates,
                                         unsigned jobs = 1) {
    cfg.validate();
    const std::size_t steps = cfg.steps();
    for (std::size_t lag : lag_steps) {
        if (lag == 0 || lag > steps) throw std::invalid_argument("fourth_moment_scaling: lag outside (0, T]");
    }
    const std::size_t L = lag_steps.size();
    struct Slot {
        std::vector<double> moment, bound;
        std::size_t holder = 0;
        std::size_t lip = 0;
    };
    std::vector<Slot> slots(replicates);
    parallel_for(replicates, jobs, [&](std::size_t rep) {
        const auto ens = simulate(cfg, static_cast<std::uint32_t>(rep));
        const std::size_t n = ens.particles;
        const double at_zero = phi(0.0);
        // phi(X^i_{t ^ tau}) and X^i_{t ^ tau} on the grid.
        std::vector<double> fx((steps + 1) * n), sx((steps + 1) * n);
        for (std::size_t g = 0; g <= steps; ++g) {
            for (std::size_t i = 0; i < n; ++i) {
                const bool alive = ens.alive(g, i);
                sx[g * n + i] = alive ? ens.position(g, i) : 0.0;
                fx[g * n + i] = alive ? phi(ens.position(g, i)) : at_zero;
            }
        }
        std::vector<double> nubar(steps + 1);
        for (std::size_t g = 0; g <= steps; ++g) {
            CompensatedSum s;
            for (std::size_t i = 0; i < n; ++i) s += fx[g * n + i];
            nubar[g] = s.value() / static_cast<double>(n);
        }
        Slot& slot = slots[rep];
        slot.moment.assign(L, 0.0);
        slot.bound.assign(L, 0.0);
        for (std::size_t l = 0; l < L; ++l) {
            const std::size_t lag = lag_steps[l];
            CompensatedSum m, b;
            std::size_t windows = 0;
            for (std::size_t s = 0; s + lag <= steps; s += lag, ++windows) {
                const double d = nubar[s + lag] - nubar[s];
                const double d4 = d * d * d * d;
                CompensatedSum pf, px;
                for (std::size_t i = 0; i < n; ++i) {
                    const double df = fx[(s + lag) * n + i] - fx[s * n + i];
                    const double dx = sx[(s + lag) * n + i] - sx[s * n + i];
                    pf += df * df * df * df;
                    px += dx * dx * dx * dx;
                }
                const double holder = pf.value() / static_cast<double>(n);
                const double lipb = std::pow(lipschitz, 4) * px.value() / static_cast<double>(n);
                if (holder < d4 * (1.0 - 1e-12) - 1e-300) ++slot.holder;
                if (lipb < holder * (1.0 - 1e-4) - 1e-300) ++slot.lip;
                m += d4;
                b += lipb;
            }
            slot.moment[l] = m.value() / static_cast<double>(windows);
            slot.bound[l] = b.value() / static_cast<double>(windows);
        }
    });

    FourthMomentReport r;
    r.particles = cfg.particles;
    r.replicates = replicates;
    r.lipschitz = lipschitz;
    r.few_replicates = replicates < 100;
    for (std::size_t l = 0; l < L; ++l) {
        CompensatedSum m, b;
        for (const auto& s : slots) {
            m += s.moment[l];
            b += s.bound[l];
        }
        r.lags.push_back(static_cast<double>(lag_steps[l]) * cfg.dt);
        r.moments.push_back(m.value() / static_cast<double>(replicates));
        r.particle_bound.push_back(b.value() / static_cast<double>(replicates));
    }
    for (const auto& s : slots) {
        r.holder_violations += s.holder;
        r.lipschitz_violations += s.lip;
    }
    std::vector<double> lx, ly;
    for (std::size_t l = 0; l < L; ++l) {
        if (r.moments[l] > 0.0) {
            lx.push_back(std::log(r.lags[l]));
            ly.push_back(std::log(r.moments[l]));
        }
    }
    if (lx.size() >= 3) r.fit = fit_line(lx, ly);
    return r;
}

// ---------------------------------------------------------------------------
// Exceedance tail fit

enum class TailFitStatus { fitted, vacuous, insufficient };

struct TailFitReport {
    std::vector<double> etas;
    std::vector<double> spans;                       // t3 - t1 per triple
    std::vector<std::vector<double>> exceedance;     // [eta][triple]
    TailFitStatus status = TailFitStatus::insufficient;
    double a = 0.0, b = 0.0, c = 0.0;
    double a_se = 0.0, b_se = 0.0;
    std::size_t cells = 0;                           // cells used in the fit (0 < p < 1)
    std::size_t outliers = 0;                        // cells more than 2 sigma above the fitted surface
    std::size_t markov_violations = 0;               // p > E[RHS^4] / eta^4 (only if RHS samples given)
    [[nodiscard]] bool passes() const noexcept {
        if (status == TailFitStatus::vacuous) return true;
        if (status != TailFitStatus::fitted) return false;
        return static_cast<double>(outliers) <= 0.05 * static_cast<double>(cells) && markov_violations == 0;
    }
};

/// samples[triple][replicate] = H value; rhs[triple][replicate] optional decomposition
/// right sides for the Markov check. Fits log p = log c - a log eta + (1 + b) log span.
inline TailFitReport tail_exponent_fit(const std::vector<std::vector<double>>& samples, const std::vector<double>& spans,
                                       const std::vector<double>& etas,
                                       const std::vector<std::vector<double>>& rhs = {}) {
    if (samples.size() != spans.size()) throw std::invalid_argument("tail_exponent_fit: one span per triple");
    TailFitReport r;
    r.etas = etas;
    r.spans = spans;
    r.exceedance.assign(etas.size(), std::vector<double>(spans.size(), 0.0));
    std::vector<double> log_eta, log_span, log_p;
    bool any = false;
    for (std::size_t e = 0; e < etas.size(); ++e) {
        for (std::size_t k = 0; k < spans.size(); ++k) {
            const auto& hs = samples[k];
            if (hs.empty()) continue;
            const auto hits = std::count_if(hs.begin(), hs.end(), [&](double h) { return h >= etas[e]; });
            const double p = static_cast<double>(hits) / static_cast<double>(hs.size());
            r.exceedance[e][k] = p;
            any = any || hits > 0;
            if (!rhs.empty()) {
                CompensatedSum m4;
                for (double x : rhs[k]) m4 += x * x * x * x;
                const double bound = m4.value() / static_cast<double>(rhs[k].size()) / std::pow(etas[e], 4);
                if (p > bound * (1.0 + 1e-12)) ++r.markov_violations;
            }
            if (p > 0.0 && p < 1.0) {
                log_eta.push_back(std::log(etas[e]));
                log_span.push_back(std::log(spans[k]));
                log_p.push_back(std::log(p));
            }
        }
    }
    if (!any) {
        r.status = TailFitStatus::vacuous;
        return r;
    }
    r.cells = log_p.size();
    if (r.cells < 5) return r;
    const auto fit = least_squares({log_eta, log_span}, log_p);
    r.status = TailFitStatus::fitted;
    r.c = std::exp(fit.coefficients[0]);
    r.a = -fit.coefficients[1];
    r.b = fit.coefficients[2] - 1.0;
    r.a_se = fit.std_errors[1];
    r.b_se = fit.std_errors[2];
    for (double res : fit.residuals) {
        if (res > 2.0 * fit.residual_sd) ++r.outliers;
    }
    return r;
}

/// H(nu_t1, nu_t2, nu_t3) and the decomposition right side per triple, for one replicate.
template <typename F>
void segment_samples(const ParticleEnsemble& ens, F&& phi, const std::vector<Triple>& triples, std::vector<double>& h,
                     std::vector<double>& rhs) {
    const auto nu = project(ens, phi);
    const auto nubar = project_stopped(ens, phi);
    const auto v = nu.values();
    const auto w = nubar.values();
    h.resize(triples.size());
    rhs.resize(triples.size());
    for (std::size_t k = 0; k < triples.size(); ++k) {
        const auto& tr = triples[k];
        validate_triple(tr, ens.steps);
        h[k] = h_functional(v[tr[0]], v[tr[1]], v[tr[2]]);
        rhs[k] = std::abs(w[tr[0]] - w[tr[1]]) + std::abs(w[tr[1]] - w[tr[2]]);
    }
}

// ---------------------------------------------------------------------------
// Endpoint condition

struct EndpointCell {
    std::size_t particles = 0;
    double delta = 0.0;
    double exceedance = 0.0;       // P(head + tail oscillation of nu(phi) >= eta)
    double mean_oscillation = 0.0; // E[head + tail]
    double stopped_part = 0.0;     // E sup_{(0,d)} |nubar_t - nubar_0|
    double loss_part = 0.0;        // |phi(0)| E L_d
    double mean_loss = 0.0;        // E L^N_d
    double first_passage = 0.0;    // P(tau^1 <= d), particle 1 across replicates
    double first_passage_se = 0.0;
};

struct EndpointReport {
    double eta = 0.0;
    std::vector<EndpointCell> cells;   // N-major, deltas in the given (decreasing) order
    std::size_t monotonicity_breaks = 0;
    [[nodiscard]] bool passes() const noexcept { return monotonicity_breaks == 0; }
};

template <typename F>
EndpointReport endpoint_condition_check(const ModelConfig& base, const std::vector<std::size_t>& ladder, F&& phi,
                                        const std::vector<double>& deltas, std::size_t replicates, double eta,
                                        unsigned jobs = 1) {
    for (std::size_t k = 1; k < deltas.size(); ++k) {
        if (!(deltas[k] < deltas[k - 1])) throw std::invalid_argument("endpoint_condition_check: delta ladder must decrease");
    }
    EndpointReport rep;
    rep.eta = eta;
    const double phi0 = std::abs(phi(0.0));
    for (std::size_t n : ladder) {
        ModelConfig cfg = base;
        cfg.particles = n;
        const std::size_t D = deltas.size();
        struct Slot {
            std::vector<double> osc, stopped, loss, first;
        };
        std::vector<Slot> slots(replicates);
        parallel_for(replicates, jobs, [&](std::size_t r) {
            const auto ens = simulate(cfg, static_cast<std::uint32_t>(r));
            const auto nu = project(ens, phi);
            const auto nubar = project_stopped(ens, phi);
            const auto loss = loss_process(ens);
            Slot& s = slots[r];
            for (double d : deltas) {
                const auto [head, tail] = endpoint_oscillation(nu, d);
                s.osc.push_back(head + tail);
                s.stopped.push_back(endpoint_oscillation(nubar, d).first);
                // L at time d- (the open window): left limit.
                s.loss.push_back(loss.left_limit(d));
                s.first.push_back(ens.tau[0] < d ? 1.0 : 0.0);
            }
        });
        for (std::size_t k = 0; k < D; ++k) {
            EndpointCell c;
            c.particles = n;
            c.delta = deltas[k];
            CompensatedSum ex, osc, st, lo, fp;
            for (const auto& s : slots) {
                ex += s.osc[k] >= eta ? 1.0 : 0.0;
                osc += s.osc[k];
                st += s.stopped[k];
                lo += s.loss[k];
                fp += s.first[k];
            }
            const auto R = static_cast<double>(replicates);
            c.exceedance = ex.value() / R;
            c.mean_oscillation = osc.value() / R;
            c.stopped_part = st.value() / R;
            c.mean_loss = lo.value() / R;
            c.loss_part = phi0 * c.mean_loss;
            c.first_passage = fp.value() / R;
            c.first_passage_se = std::sqrt(std::max(c.first_passage * (1.0 - c.first_passage), 1e-300) / R);
            if (!rep.cells.empty() && k > 0) {
                const auto& prev = rep.cells.back();
                if (c.exceedance > prev.exceedance || c.mean_oscillation > prev.mean_oscillation ||
                    c.stopped_part > prev.stopped_part || c.loss_part > prev.loss_part) {
                    ++rep.monotonicity_breaks;
                }
            }
            rep.cells.push_back(c);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Finite-dimensional distributions

/// Feature vector (nu_{t_j}(phi_i))_{i,j} of one replicate; times are grid indices.
template <typename F>
std::vector<double> fdd_features(const ParticleEnsemble& ens, const std::vector<F>& phis,
                                 const std::vector<std::size_t>& time_index) {
    std::vector<double> out;
    for (const auto& phi : phis) {
        const auto path = project(ens, phi);
        for (std::size_t g : time_index) {
            if (g > ens.steps) throw std::invalid_argument("fdd_features: time index beyond the grid");
            out.push_back(path.values()[g]);
        }
    }
    return out;
}

/// max over probe points p (the pooled sample points) of |F_1(p) - F_2(p)| with
/// F the empirical joint CDF (componentwise <=).
inline double fdd_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("fdd_distance: empty sample");
    const std::size_t k = a.front().size();
    auto cdf = [k](const std::vector<std::vector<double>>& s, const std::vector<double>& p) {
        std::size_t count = 0;
        for (const auto& x : s) {
            bool below = true;
            for (std::size_t j = 0; j < k && below; ++j) below = x[j] <= p[j];
            count += below ? 1 : 0;
        }
        return static_cast<double>(count) / static_cast<double>(s.size());
    };
    double best = 0.0;
    for (const auto* sample : {&a, &b}) {
        for (const auto& p : *sample) {
            if (p.size() != k) throw std::invalid_argument("fdd_distance: feature length mismatch");
            best = std::max(best, std::abs(cdf(a, p) - cdf(b, p)));
        }
    }
    return best;
}

}  // namespace m1lab
