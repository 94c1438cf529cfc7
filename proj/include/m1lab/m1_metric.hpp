#pragma once

#include "m1lab/path.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace m1lab {

/// Sampled parametric representation of a completed graph: K points in graph
/// order, every graph vertex included, extra points spread by arc length in the
/// product metric max(p(dz), |dt|).
struct ParametricRepresentation {
    std::size_t dim = 1;
    std::vector<double> s;        // normalized arc-length parameter, s.front() = 0, s.back() = 1
    std::vector<double> t;
    std::vector<double> z;        // flat, dim per sample
    std::vector<bool> is_vertex;
    std::vector<double> weights;

    [[nodiscard]] std::size_t size() const noexcept { return t.size(); }
    [[nodiscard]] std::span<const double> point(std::size_t i) const noexcept {
        return std::span<const double>(z).subspan(i * dim, dim);
    }
    /// Largest product-metric distance between consecutive samples.
    [[nodiscard]] double max_gap() const {
        double g = 0.0;
        for (std::size_t i = 1; i < size(); ++i) {
            g = std::max(g, std::max(weighted_norm_diff(i, i - 1), std::abs(t[i] - t[i - 1])));
        }
        return g;
    }

    [[nodiscard]] double weighted_norm_diff(std::size_t i, std::size_t j) const {
        double acc = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            const double d = z[i * dim + k] - z[j * dim + k];
            acc += weights[k] * d * d;
        }
        return std::sqrt(acc);
    }
};

inline ParametricRepresentation sample_parametrization(const CompletedGraph& graph, std::size_t samples) {
    const std::size_t vertices = graph.vertex_count();
    if (samples < vertices) {
        throw std::invalid_argument("sample count K = " + std::to_string(samples) +
                                    " is below the required minimum " + std::to_string(vertices) +
                                    " (number of graph vertices)");
    }
    const std::size_t dim = graph.dim();
    const std::size_t segments = vertices - 1;
    std::vector<double> length(segments);
    double total = 0.0;
    for (std::size_t k = 0; k < segments; ++k) {
        length[k] = graph.vertex_distance(k, graph, k + 1);
        total += length[k];
    }

    // Greedy refinement: each extra point goes to the segment with the largest
    // current sub-gap (ties to the lower index).
    std::vector<std::size_t> extra(segments, 0);
    using Entry = std::pair<double, std::size_t>;
    auto cmp = [](const Entry& a, const Entry& b) {
        return a.first < b.first || (a.first == b.first && a.second > b.second);
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> heap(cmp);
    for (std::size_t k = 0; k < segments; ++k) {
        if (length[k] > 0.0) heap.emplace(length[k], k);
    }
    for (std::size_t left = samples - vertices; left > 0 && !heap.empty(); --left) {
        const auto [gap, k] = heap.top();
        heap.pop();
        ++extra[k];
        heap.emplace(length[k] / static_cast<double>(extra[k] + 1), k);
    }

    ParametricRepresentation rep;
    rep.dim = dim;
    rep.weights.assign(graph.weights().begin(), graph.weights().end());
    rep.t.reserve(samples);
    rep.z.reserve(samples * dim);
    double arc = 0.0;
    auto emit = [&](double t, std::span<const double> z, double at, bool vertex) {
        rep.t.push_back(t);
        rep.z.insert(rep.z.end(), z.begin(), z.end());
        rep.s.push_back(total > 0.0 ? at / total : 0.0);
        rep.is_vertex.push_back(vertex);
    };
    std::vector<double> buf(dim);
    for (std::size_t k = 0; k < segments; ++k) {
        emit(graph.time(k), graph.z(k), arc, true);
        const auto a = graph.z(k);
        const auto b = graph.z(k + 1);
        const double n = static_cast<double>(extra[k] + 1);
        for (std::size_t m = 1; m <= extra[k]; ++m) {
            const double w = static_cast<double>(m) / n;
            for (std::size_t d = 0; d < dim; ++d) buf[d] = (1.0 - w) * a[d] + w * b[d];
            emit((1.0 - w) * graph.time(k) + w * graph.time(k + 1), buf, arc + w * length[k], false);
        }
        arc += length[k];
    }
    emit(graph.time(segments), graph.z(segments), total, true);
    // Pad with repeats of the final vertex if every segment had zero length.
    while (rep.size() < samples) emit(graph.time(segments), graph.z(segments), total, true);
    return rep;
}

struct RefinementStep {
    std::size_t grid = 0;
    double estimate = 0.0;  // raw estimate at this K
    double best = 0.0;      // running minimum up to this K
};

/// Outcome of a graph-matching computation of the M1 distance.
struct MatchingResult {
    double distance = 0.0;   // upper bound on the infimum over parametric representations
    std::size_t grid = 0;    // K
    std::vector<std::pair<std::size_t, std::size_t>> witness;  // monotone in both sample orders
    bool converged = true;
    double gap_bound = 0.0;  // largest sample gap of the grid that produced `distance`
    std::vector<RefinementStep> history;
};

namespace detail {

inline double pair_cost(const ParametricRepresentation& a, std::size_t i, const ParametricRepresentation& b,
                        std::size_t j) noexcept {
    double dz;
    if (a.dim == 1) {
        dz = std::abs(a.z[i] - b.z[j]) * std::sqrt(a.weights[0]);
    } else {
        double acc = 0.0;
        for (std::size_t k = 0; k < a.dim; ++k) {
            const double d = a.z[i * a.dim + k] - b.z[j * a.dim + k];
            acc += a.weights[k] * d * d;
        }
        dz = std::sqrt(acc);
    }
    return std::max(dz, std::abs(a.t[i] - b.t[j]));
}

// Discrete Fréchet min-max over monotone couplings, O(K) memory.
inline double frechet_value(const ParametricRepresentation& a, const ParametricRepresentation& b) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::vector<double> prev(m), cur(m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double c = pair_cost(a, i, b, j);
            double reach;
            if (i == 0 && j == 0) {
                reach = c;
            } else if (i == 0) {
                reach = std::max(c, cur[j - 1]);
            } else if (j == 0) {
                reach = std::max(c, prev[0]);
            } else {
                reach = std::max(c, std::min({prev[j - 1], prev[j], cur[j - 1]}));
            }
            cur[j] = reach;
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

// Monotone coupling achieving `value`: reachability over cells with cost <= value,
// then backtracking with ties broken toward the diagonal move.
inline std::vector<std::pair<std::size_t, std::size_t>> frechet_witness(const ParametricRepresentation& a,
                                                                         const ParametricRepresentation& b,
                                                                         double value) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::vector<std::uint64_t> bits((n * m + 63) / 64, 0);
    auto get = [&](std::size_t i, std::size_t j) {
        const std::size_t idx = i * m + j;
        return (bits[idx >> 6] >> (idx & 63)) & 1u;
    };
    auto set = [&](std::size_t i, std::size_t j) {
        const std::size_t idx = i * m + j;
        bits[idx >> 6] |= std::uint64_t{1} << (idx & 63);
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (pair_cost(a, i, b, j) > value) continue;
            const bool ok = (i == 0 && j == 0) || (i > 0 && get(i - 1, j)) || (j > 0 && get(i, j - 1)) ||
                            (i > 0 && j > 0 && get(i - 1, j - 1));
            if (ok) set(i, j);
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> path;
    std::size_t i = n - 1;
    std::size_t j = m - 1;
    path.emplace_back(i, j);
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 && get(i - 1, j - 1)) {
            --i;
            --j;
        } else if (i > 0 && get(i - 1, j)) {
            --i;
        } else {
            --j;
        }
        path.emplace_back(i, j);
    }
    std::reverse(path.begin(), path.end());
    return path;
}

inline void require_same_horizon(double a, double b) {
    if (a != b) throw std::invalid_argument("paths have different horizons");
}

inline void require_compatible(const VectorPath& x, const VectorPath& y) {
    require_same_horizon(x.horizon(), y.horizon());
    if (x.dim() != y.dim()) throw std::invalid_argument("vector paths have different dimensions");
    if (!std::equal(x.weights().begin(), x.weights().end(), y.weights().begin())) {
        throw std::invalid_argument("vector paths carry different seminorm weights");
    }
}

inline void require_compatible(const CadlagPath& x, const CadlagPath& y) { require_same_horizon(x.horizon(), y.horizon()); }

inline MatchingResult match_graphs(const CompletedGraph& gx, const CompletedGraph& gy, std::size_t samples,
                                   bool with_witness) {
    const auto px = sample_parametrization(gx, samples);
    const auto py = sample_parametrization(gy, samples);
    MatchingResult r;
    r.grid = samples;
    r.distance = frechet_value(px, py);
    r.gap_bound = std::max(px.max_gap(), py.max_gap());
    if (with_witness) r.witness = frechet_witness(px, py, r.distance);
    r.history.push_back({samples, r.distance, r.distance});
    return r;
}

}  // namespace detail

/// Upper-bound estimate of d_M1(x, y) from a K x K monotone graph matching.
/// Each estimate dominates the true distance and exceeds it by at most the
/// largest sample gap of the two parametrizations.
template <typename Path>
MatchingResult m1_distance(const Path& x, const Path& y, std::size_t samples, bool with_witness = true) {
    detail::require_compatible(x, y);
    return detail::match_graphs(completed_graph(x), completed_graph(y), samples, with_witness);
}

struct RefineOptions {
    double tol = 1e-4;
    std::size_t max_grid = std::size_t{1} << 14;
    std::size_t min_grid = 16;
    bool with_witness = true;
};

/// Doubles K until successive estimates agree within tol. The reported distance
/// is the smallest estimate seen (every estimate is an upper bound), so it is
/// nonincreasing along the refinement history.
template <typename Path>
MatchingResult m1_distance_refined(const Path& x, const Path& y, const RefineOptions& opts = {}) {
    if (!(opts.tol > 0.0)) throw std::invalid_argument("tol must be > 0");
    detail::require_compatible(x, y);
    const auto gx = completed_graph(x);
    const auto gy = completed_graph(y);
    std::size_t grid = std::bit_ceil(std::max({gx.vertex_count(), gy.vertex_count(), opts.min_grid}));

    MatchingResult out;
    out.converged = false;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_grid = grid;
    double best_gap = 0.0;
    while (true) {
        const auto step = detail::match_graphs(gx, gy, grid, false);
        const double previous = best;
        if (step.distance < best) {
            best = step.distance;
            best_grid = grid;
            best_gap = step.gap_bound;
        }
        out.history.push_back({grid, step.distance, best});
        out.grid = grid;
        if (best == 0.0 || std::abs(previous - best) < opts.tol) {
            out.converged = true;
            break;
        }
        if (grid * 2 > opts.max_grid) break;
        grid *= 2;
    }
    out.distance = best;
    out.gap_bound = best_gap;
    if (opts.with_witness) out.witness = detail::match_graphs(gx, gy, best_grid, true).witness;
    return out;
}

/// d_{B,M1} for a finite set B of coefficient vectors: max over phi in B of the
/// scalar M1 distance between the projected paths t -> <phi, x_t>.
inline double projection_distance(const VectorPath& x, const VectorPath& y,
                                  const std::vector<std::vector<double>>& testset, std::size_t samples) {
    if (testset.empty()) throw std::invalid_argument("projection_distance: empty test set");
    detail::require_same_horizon(x.horizon(), y.horizon());
    double worst = 0.0;
    for (const auto& phi : testset) {
        if (phi.size() != x.dim() || phi.size() != y.dim()) {
            throw std::invalid_argument("test vector dimension does not match path dimension");
        }
        worst = std::max(worst, m1_distance(x.project(phi), y.project(phi), samples, false).distance);
    }
    return worst;
}

}  // namespace m1lab
