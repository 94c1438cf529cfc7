#pragma once

// Independent reference implementations used by the tests. These favour
// obviousness over speed and share no code with the library algorithms.

#include "m1lab/path.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <vector>

namespace oracle {

/// min over a uniform lambda grid, refined by ternary search around the best
/// grid point, of the weighted distance from v2 to lambda v1 + (1 - lambda) v3.
inline double h_brute(std::span<const double> v1, std::span<const double> v2, std::span<const double> v3,
                      std::span<const double> w, std::size_t points = 1000) {
    auto dist = [&](double l) {
        double s = 0.0;
        for (std::size_t j = 0; j < v1.size(); ++j) {
            const double r = v2[j] - (l * v1[j] + (1.0 - l) * v3[j]);
            s += w[j] * r * r;
        }
        return std::sqrt(s);
    };
    double best_l = 0.0;
    double best = dist(0.0);
    for (std::size_t k = 1; k < points; ++k) {
        const double l = static_cast<double>(k) / static_cast<double>(points - 1);
        const double d = dist(l);
        if (d < best) {
            best = d;
            best_l = l;
        }
    }
    // The distance is convex in lambda: refine inside the bracketing cells.
    const double cell = 1.0 / static_cast<double>(points - 1);
    double lo = std::max(0.0, best_l - cell);
    double hi = std::min(1.0, best_l + cell);
    for (int it = 0; it < 200; ++it) {
        const double a = lo + (hi - lo) / 3.0;
        const double b = hi - (hi - lo) / 3.0;
        if (dist(a) <= dist(b)) {
            hi = b;
        } else {
            lo = a;
        }
    }
    return std::min(best, dist(0.5 * (lo + hi)));
}

inline double h_brute(double v1, double v2, double v3) {
    const double w = 1.0;
    return h_brute({&v1, 1}, {&v2, 1}, {&v3, 1}, {&w, 1});
}

// Pieces [t_i, t_{i+1}) meeting the window [max(0, s - d), min(s + d, T)).
inline std::vector<std::size_t> window_pieces(std::span<const double> t, double s, double d) {
    const double a = std::max(0.0, s - d);
    const double b = std::min(s + d, t.back());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        if (t[i] < b && t[i + 1] > a) out.push_back(i);
    }
    return out;
}

// Window centres at which the set of pieces can change, plus midpoints between them.
inline std::vector<double> window_centres(std::span<const double> t, double d) {
    std::set<double> crit{0.0, t.back()};
    for (double k : t) {
        for (double c : {k - d, k + d}) {
            if (c >= 0.0 && c <= t.back()) crit.insert(c);
        }
    }
    std::vector<double> c(crit.begin(), crit.end());
    std::vector<double> out = c;
    for (std::size_t i = 0; i + 1 < c.size(); ++i) out.push_back(0.5 * (c[i] + c[i + 1]));
    return out;
}

/// Brute-force M1 modulus of a step path: every window, every ordered triple of pieces.
inline double m1_modulus_brute(const m1lab::CadlagPath& x, double d) {
    const auto t = x.times();
    const auto v = x.values();
    double best = 0.0;
    for (double s : window_centres(t, d)) {
        const auto p = window_pieces(t, s, d);
        for (std::size_t a = 0; a < p.size(); ++a) {
            for (std::size_t b = a + 1; b < p.size(); ++b) {
                for (std::size_t c = b + 1; c < p.size(); ++c) {
                    best = std::max(best, h_brute(v[p[a]], v[p[b]], v[p[c]]));
                }
            }
        }
    }
    return best;
}

inline double m1_modulus_brute(const m1lab::VectorPath& x, double d) {
    const auto t = x.times();
    double best = 0.0;
    for (double s : window_centres(t, d)) {
        const auto p = window_pieces(t, s, d);
        for (std::size_t a = 0; a < p.size(); ++a) {
            for (std::size_t b = a + 1; b < p.size(); ++b) {
                for (std::size_t c = b + 1; c < p.size(); ++c) {
                    best = std::max(best, h_brute(x.value(p[a]), x.value(p[b]), x.value(p[c]), x.weights(), 200));
                }
            }
        }
    }
    return best;
}

/// Random step path on [0, T] with `jumps` interior knots.
inline m1lab::CadlagPath random_step_path(std::mt19937_64& rng, std::size_t jumps, double horizon = 1.0,
                                          bool monotone = false) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::set<double> knots;
    while (knots.size() < jumps) {
        const double s = horizon * u(rng);
        if (s > 0.0 && s < horizon) knots.insert(s);
    }
    std::vector<double> t{0.0};
    t.insert(t.end(), knots.begin(), knots.end());
    t.push_back(horizon);
    std::vector<double> v(t.size());
    double level = u(rng);
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (monotone) {
            level += i == 0 ? 0.0 : u(rng) * (u(rng) < 0.2 ? 0.0 : 1.0);
            v[i] = level;
        } else {
            v[i] = 2.0 * u(rng) - 1.0;
        }
    }
    return m1lab::CadlagPath(t, v);
}

inline m1lab::VectorPath random_vector_path(std::mt19937_64& rng, std::size_t jumps, std::size_t dim,
                                            double horizon = 1.0) {
    const auto base = random_step_path(rng, jumps, horizon);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> vals(base.size() * dim);
    for (double& x : vals) x = n(rng);
    std::vector<double> t(base.times().begin(), base.times().end());
    return m1lab::VectorPath(t, vals, dim);
}

}  // namespace oracle
