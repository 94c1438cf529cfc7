#pragma once

#include "m1lab/errors.hpp"
#include "m1lab/hermite.hpp"
#include "m1lab/numeric.hpp"
#include "m1lab/path.hpp"
#include "m1lab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace m1lab {

/// Piecewise-linear correlation function on [0, 1].
class RhoTable {
public:
    RhoTable() : nodes_{0.0, 1.0}, values_{0.0, 0.0} {}
    RhoTable(std::vector<double> nodes, std::vector<double> values)
        : nodes_(std::move(nodes)), values_(std::move(values)) {
        validate();
    }

    static RhoTable constant(double rho) { return RhoTable({0.0, 1.0}, {rho, rho}); }

    [[nodiscard]] std::span<const double> nodes() const noexcept { return nodes_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

    [[nodiscard]] double operator()(double loss) const {
        const double l = std::clamp(loss, 0.0, 1.0);
        const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), l);
        if (it == nodes_.end()) return values_.back();
        const auto i = static_cast<std::size_t>(it - nodes_.begin());
        if (i == 0) return values_.front();
        const double w = (l - nodes_[i - 1]) / (nodes_[i] - nodes_[i - 1]);
        return std::clamp((1.0 - w) * values_[i - 1] + w * values_[i], 0.0, 1.0);
    }

    void validate() const {
        if (nodes_.size() < 2) throw ConfigError("rho.nodes", "need at least two nodes");
        if (values_.size() != nodes_.size()) throw ConfigError("rho.values", "need one value per node");
        if (nodes_.front() != 0.0) throw ConfigError("rho.nodes[0]", "table must start at 0");
        if (nodes_.back() != 1.0) throw ConfigError("rho.nodes[" + std::to_string(nodes_.size() - 1) + "]", "table must end at 1");
        for (std::size_t i = 1; i < nodes_.size(); ++i) {
            if (!(nodes_[i] > nodes_[i - 1])) {
                throw ConfigError("rho.nodes[" + std::to_string(i) + "]", "nodes must be strictly increasing");
            }
        }
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!(values_[i] >= 0.0 && values_[i] <= 1.0)) {
                throw ConfigError("rho.values[" + std::to_string(i) + "]", "value must lie in [0, 1]");
            }
        }
    }

    friend bool operator==(const RhoTable&, const RhoTable&) = default;

private:
    std::vector<double> nodes_;
    std::vector<double> values_;
};

/// Initial law with density on (0, inf).
struct InitialLaw {
    enum class Family { shifted_exponential, lognormal, uniform, point };

    Family family = Family::shifted_exponential;
    double a = 0.5;   // shift | mu | lower | x0
    double b = 1.0;   // rate  | sigma | upper | unused

    static InitialLaw shifted_exponential(double shift, double rate) { return {Family::shifted_exponential, shift, rate}; }
    static InitialLaw lognormal(double mu, double sigma) { return {Family::lognormal, mu, sigma}; }
    static InitialLaw uniform(double lo, double hi) { return {Family::uniform, lo, hi}; }
    static InitialLaw point(double x0) { return {Family::point, x0, 0.0}; }

    void validate() const {
        switch (family) {
            case Family::shifted_exponential:
                if (!(a >= 0.0 && std::isfinite(a))) throw ConfigError("initial.shift", "must be >= 0");
                if (!(b > 0.0 && std::isfinite(b))) throw ConfigError("initial.rate", "must be > 0");
                break;
            case Family::lognormal:
                if (!std::isfinite(a)) throw ConfigError("initial.mu", "must be finite");
                if (!(b > 0.0 && std::isfinite(b))) throw ConfigError("initial.sigma", "must be > 0");
                break;
            case Family::uniform:
                if (!(a > 0.0 && std::isfinite(a))) throw ConfigError("initial.lower", "must be > 0");
                if (!(b > a && std::isfinite(b))) throw ConfigError("initial.upper", "must exceed initial.lower");
                break;
            case Family::point:
                if (!(a > 0.0 && std::isfinite(a))) throw ConfigError("initial.x0", "must be > 0");
                break;
        }
    }

    [[nodiscard]] double sample(const RandomStream& rs) const {
        switch (family) {
            case Family::shifted_exponential: return a - std::log(rs.uniform(0, DrawKind::initial)) / b;
            case Family::lognormal: return std::exp(a + b * rs.normal(0, DrawKind::initial));
            case Family::uniform: return a + (b - a) * rs.uniform(0, DrawKind::initial);
            case Family::point: return a;
        }
        return a;
    }

    [[nodiscard]] double cdf(double x) const {
        switch (family) {
            case Family::shifted_exponential: return x <= a ? 0.0 : -std::expm1(-b * (x - a));
            case Family::lognormal: return x <= 0.0 ? 0.0 : normal_cdf((std::log(x) - a) / b);
            case Family::uniform: return std::clamp((x - a) / (b - a), 0.0, 1.0);
            case Family::point: return x < a ? 0.0 : 1.0;
        }
        return 0.0;
    }

    friend bool operator==(const InitialLaw&, const InitialLaw&) = default;
};

enum class BarrierMode { grid, bridge };

struct ModelConfig {
    std::size_t particles = 256;
    double horizon = 1.0;
    double dt = 1.0 / 256.0;
    RhoTable rho = RhoTable::constant(0.3);
    InitialLaw initial = InitialLaw::shifted_exponential(0.5, 1.0);
    BarrierMode barrier = BarrierMode::grid;
    std::uint64_t seed = 1;

    [[nodiscard]] std::size_t steps() const { return static_cast<std::size_t>(std::llround(horizon / dt)); }

    void validate() const {
        if (particles < 1) throw ConfigError("N", "must be >= 1");
        if (particles >= std::numeric_limits<std::uint32_t>::max()) throw ConfigError("N", "too large");
        if (!(horizon > 0.0 && std::isfinite(horizon))) throw ConfigError("T", "must be > 0");
        if (!(dt > 0.0 && dt <= horizon)) throw ConfigError("dt", "must lie in (0, T]");
        const double g = std::round(horizon / dt);
        if (std::abs(g * dt - horizon) > 1e-9 * horizon) throw ConfigError("dt", "must divide T");
        rho.validate();
        initial.validate();
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Simulated trajectories of one replicate, stored time-major: positions[g * N + i].
struct ParticleEnsemble {
    ModelConfig config;
    std::uint32_t replicate = 0;
    std::size_t particles = 0;
    std::size_t steps = 0;
    std::vector<double> times;        // t_0 .. t_G
    std::vector<double> positions;    // (G + 1) * N, 0 from absorption on
    std::vector<double> tau;          // absorption times, +inf if none
    std::vector<double> common;       // dW_g, g < G
    std::vector<double> loss;         // L at grid times

    [[nodiscard]] double dt() const noexcept { return config.dt; }
    [[nodiscard]] double position(std::size_t g, std::size_t i) const noexcept { return positions[g * particles + i]; }
    [[nodiscard]] bool alive(std::size_t g, std::size_t i) const noexcept { return times[g] < tau[i]; }
};

/// Euler-Maruyama with absorption at 0, one replicate. Stream (seed, replicate, 0)
/// carries the common noise, (seed, replicate, i + 1) particle i.
inline ParticleEnsemble simulate(const ModelConfig& cfg, std::uint32_t replicate = 0) {
    cfg.validate();
    const std::size_t n = cfg.particles;
    const std::size_t steps = cfg.steps();
    const double dt = cfg.dt;
    const double sqdt = std::sqrt(dt);
    const double inf = std::numeric_limits<double>::infinity();

    ParticleEnsemble ens;
    ens.config = cfg;
    ens.replicate = replicate;
    ens.particles = n;
    ens.steps = steps;
    ens.times.resize(steps + 1);
    for (std::size_t g = 0; g <= steps; ++g) ens.times[g] = static_cast<double>(g) * dt;
    ens.times[steps] = cfg.horizon;
    ens.positions.assign((steps + 1) * n, 0.0);
    ens.tau.assign(n, inf);
    ens.common.resize(steps);
    ens.loss.assign(steps + 1, 0.0);

    const RandomStream w(cfg.seed, replicate, 0);
    std::vector<RandomStream> streams;
    streams.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        streams.emplace_back(cfg.seed, replicate, static_cast<std::uint32_t>(i + 1));
        ens.positions[i] = cfg.initial.sample(streams[i]);
    }

    std::size_t dead = 0;
    for (std::size_t g = 0; g < steps; ++g) {
        const double rho = cfg.rho(static_cast<double>(dead) / static_cast<double>(n));
        const double idio = rho >= 1.0 ? 0.0 : std::sqrt(1.0 - rho * rho);
        const double dw = sqdt * w.normal(static_cast<std::uint32_t>(g));
        ens.common[g] = dw;
        const double* x = &ens.positions[g * n];
        double* next = &ens.positions[(g + 1) * n];
        const double t_mid = 0.5 * (ens.times[g] + ens.times[g + 1]);
        for (std::size_t i = 0; i < n; ++i) {
            if (ens.tau[i] != inf) continue;
            const double step = idio == 0.0 ? 0.0 : idio * sqdt * streams[i].normal(static_cast<std::uint32_t>(g));
            const double y = x[i] + rho * dw + step;
            bool absorbed = y <= 0.0;
            if (!absorbed && cfg.barrier == BarrierMode::bridge) {
                const double p = std::exp(-2.0 * x[i] * y / dt);
                absorbed = streams[i].uniform(static_cast<std::uint32_t>(g), DrawKind::bridge) < p;
            }
            if (absorbed) {
                ens.tau[i] = cfg.barrier == BarrierMode::bridge ? t_mid : ens.times[g + 1];
                next[i] = 0.0;
                ++dead;
            } else {
                next[i] = y;
            }
        }
        ens.loss[g + 1] = static_cast<double>(dead) / static_cast<double>(n);
    }
    return ens;
}

/// L^N as a step path with knots at the distinct absorption times.
inline CadlagPath loss_process(const ParticleEnsemble& ens) {
    std::vector<double> taus;
    const double horizon = ens.config.horizon;
    for (double t : ens.tau) {
        if (t <= horizon) taus.push_back(t);
    }
    std::sort(taus.begin(), taus.end());
    std::vector<double> times{0.0};
    std::vector<double> values{0.0};
    const auto n = static_cast<double>(ens.particles);
    for (std::size_t k = 0; k < taus.size(); ++k) {
        if (k + 1 < taus.size() && taus[k + 1] == taus[k]) continue;
        const double v = static_cast<double>(k + 1) / n;
        if (taus[k] == 0.0) {
            values.back() = v;
        } else {
            times.push_back(taus[k]);
            values.push_back(v);
        }
    }
    if (times.back() != horizon) {
        times.push_back(horizon);
        values.push_back(values.back());
    }
    return CadlagPath(std::move(times), std::move(values));
}

/// t -> (1/N) sum_{i : t < tau_i} f(X^i_t) on the simulation grid.
template <typename F>
CadlagPath project(const ParticleEnsemble& ens, F&& f) {
    std::vector<double> vals(ens.steps + 1);
    for (std::size_t g = 0; g <= ens.steps; ++g) {
        CompensatedSum s;
        for (std::size_t i = 0; i < ens.particles; ++i) {
            if (ens.alive(g, i)) s += f(ens.position(g, i));
        }
        vals[g] = s.value() / static_cast<double>(ens.particles);
    }
    return CadlagPath(ens.times, std::move(vals));
}

/// t -> (1/N) sum_i f(X^i_{t ^ tau_i}); absorbed particles sit at 0.
template <typename F>
CadlagPath project_stopped(const ParticleEnsemble& ens, F&& f) {
    const double at_zero = f(0.0);
    std::vector<double> vals(ens.steps + 1);
    for (std::size_t g = 0; g <= ens.steps; ++g) {
        CompensatedSum s;
        for (std::size_t i = 0; i < ens.particles; ++i) s += ens.alive(g, i) ? f(ens.position(g, i)) : at_zero;
        vals[g] = s.value() / static_cast<double>(ens.particles);
    }
    return CadlagPath(ens.times, std::move(vals));
}

/// Dual coordinates t -> (nu^N_t(h_0), ..., nu^N_t(h_{D-1})).
inline VectorPath project_coordinates(const ParticleEnsemble& ens, std::size_t dim, bool stopped = false) {
    std::vector<double> vals((ens.steps + 1) * dim, 0.0);
    std::vector<double> h(dim), at_zero(dim);
    hermite_functions(0.0, dim, at_zero.data());
    std::vector<CompensatedSum> sums(dim);
    for (std::size_t g = 0; g <= ens.steps; ++g) {
        std::fill(sums.begin(), sums.end(), CompensatedSum{});
        for (std::size_t i = 0; i < ens.particles; ++i) {
            if (ens.alive(g, i)) {
                hermite_functions(ens.position(g, i), dim, h.data());
                for (std::size_t k = 0; k < dim; ++k) sums[k] += h[k];
            } else if (stopped) {
                for (std::size_t k = 0; k < dim; ++k) sums[k] += at_zero[k];
            }
        }
        for (std::size_t k = 0; k < dim; ++k) vals[g * dim + k] = sums[k].value() / static_cast<double>(ens.particles);
    }
    return VectorPath(ens.times, std::move(vals), dim);
}

/// I^N_t(phi) = nu_t(phi) - nu_0(phi) - sum_{t_g < t} [ nu_g(phi'') dt / 2 + rho(L_g) nu_g(phi') dW_g ].
inline CadlagPath evolution_residual(const ParticleEnsemble& ens, const TestFunction& phi, double zero_tol = 1e-8) {
    const double at_zero = phi(0.0);
    if (std::abs(at_zero) > zero_tol) {
        throw std::invalid_argument("evolution_residual needs phi(0) = 0, got " + std::to_string(at_zero));
    }
    const auto n = static_cast<double>(ens.particles);
    const double dt = ens.dt();
    std::vector<double> vals(ens.steps + 1, 0.0);
    double nu0 = 0.0;
    double drift = 0.0;
    for (std::size_t g = 0; g <= ens.steps; ++g) {
        CompensatedSum v, d1, d2;
        for (std::size_t i = 0; i < ens.particles; ++i) {
            if (!ens.alive(g, i)) continue;
            const auto j = phi.jet(ens.position(g, i));
            v += j.value;
            d1 += j.d1;
            d2 += j.d2;
        }
        const double nu = v.value() / n;
        if (g == 0) nu0 = nu;
        vals[g] = nu - nu0 - drift;
        if (g < ens.steps) {
            drift += 0.5 * d2.value() / n * dt + ens.config.rho(ens.loss[g]) * d1.value() / n * ens.common[g];
        }
    }
    return CadlagPath(ens.times, std::move(vals));
}

// Raw ensemble binary: "M1LE", u32 version, u64 N, u64 G, f64 dt, u32 replicate,
// then times, positions, tau, common (little-endian doubles).
inline constexpr std::uint32_t kRawEnsembleVersion = 1;

inline void write_raw_ensemble(std::ostream& out, const ParticleEnsemble& ens) {
    auto put = [&](const void* p, std::size_t n) { out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); };
    const std::uint32_t version = kRawEnsembleVersion;
    const std::uint64_t n = ens.particles;
    const std::uint64_t g = ens.steps;
    const double dt = ens.dt();
    put("M1LE", 4);
    put(&version, sizeof version);
    put(&n, sizeof n);
    put(&g, sizeof g);
    put(&dt, sizeof dt);
    put(&ens.replicate, sizeof ens.replicate);
    put(ens.times.data(), ens.times.size() * sizeof(double));
    put(ens.positions.data(), ens.positions.size() * sizeof(double));
    put(ens.tau.data(), ens.tau.size() * sizeof(double));
    put(ens.common.data(), ens.common.size() * sizeof(double));
}

struct RawEnsemble {
    std::uint32_t version = 0;
    std::uint64_t particles = 0;
    std::uint64_t steps = 0;
    double dt = 0.0;
    std::uint32_t replicate = 0;
    std::vector<double> times, positions, tau, common;
};

inline RawEnsemble read_raw_ensemble(std::istream& in) {
    auto get = [&](void* p, std::size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!in) throw std::runtime_error("raw ensemble truncated");
    };
    char magic[4];
    get(magic, 4);
    if (std::memcmp(magic, "M1LE", 4) != 0) throw std::runtime_error("not a raw ensemble file");
    RawEnsemble r;
    get(&r.version, sizeof r.version);
    if (r.version != kRawEnsembleVersion) throw std::runtime_error("unsupported raw ensemble version");
    get(&r.particles, sizeof r.particles);
    get(&r.steps, sizeof r.steps);
    get(&r.dt, sizeof r.dt);
    get(&r.replicate, sizeof r.replicate);
    auto array = [&](std::vector<double>& v, std::size_t n) {
        v.resize(n);
        get(v.data(), n * sizeof(double));
    };
    array(r.times, r.steps + 1);
    array(r.positions, (r.steps + 1) * r.particles);
    array(r.tau, r.particles);
    array(r.common, r.steps);
    return r;
}

}  // namespace m1lab
