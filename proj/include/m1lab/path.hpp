#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace m1lab {

enum class Interpolation { step, linear };

namespace detail {

inline void validate_knots(std::span<const double> times) {
    if (times.size() < 2) throw std::invalid_argument("path needs at least two knots (t = 0 and t = T)");
    if (times.front() != 0.0) throw std::invalid_argument("first knot must be exactly t = 0");
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!std::isfinite(times[i]) || !(times[i] > times[i - 1])) {
            throw std::invalid_argument("knot times must be finite and strictly increasing (index " +
                                        std::to_string(i) + ")");
        }
    }
}

// Index of the piece [t_i, t_{i+1}) containing t; the last knot maps to itself.
inline std::size_t piece_index(std::span<const double> times, double t) {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    return static_cast<std::size_t>(it - times.begin()) - 1;
}

}  // namespace detail

/// Real-valued càdlàg path on [0, T] given by knots t_0 = 0 < ... < t_{n-1} = T.
///
/// In step mode the path equals values[i] on [t_i, t_{i+1}) and values[n-1] at T,
/// so a jump at T is representable. In linear mode the knots are joined by
/// segments and the path is continuous.
class CadlagPath {
public:
    CadlagPath(std::vector<double> times, std::vector<double> values,
               Interpolation mode = Interpolation::step)
        : times_(std::move(times)), values_(std::move(values)), mode_(mode) {
        detail::validate_knots(times_);
        if (values_.size() != times_.size()) throw std::invalid_argument("one value per knot required");
        for (double v : values_) {
            if (!std::isfinite(v)) throw std::invalid_argument("path values must be finite");
        }
    }

    static CadlagPath constant(double horizon, double value) { return CadlagPath({0.0, horizon}, {value, value}); }

    [[nodiscard]] double horizon() const noexcept { return times_.back(); }
    [[nodiscard]] std::size_t size() const noexcept { return times_.size(); }
    [[nodiscard]] std::span<const double> times() const noexcept { return times_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] Interpolation interpolation() const noexcept { return mode_; }

    [[nodiscard]] double eval(double t) const {
        check_time(t);
        const std::size_t i = detail::piece_index(times_, t);
        if (mode_ == Interpolation::step || i + 1 == times_.size()) return values_[i];
        const double w = (t - times_[i]) / (times_[i + 1] - times_[i]);
        return (1.0 - w) * values_[i] + w * values_[i + 1];
    }

    /// x(t-); x(0-) := x(0).
    [[nodiscard]] double left_limit(double t) const {
        check_time(t);
        if (t == 0.0 || mode_ == Interpolation::linear) return eval(t);
        const auto it = std::lower_bound(times_.begin(), times_.end(), t);
        return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
    }

    [[nodiscard]] bool is_nondecreasing() const noexcept { return std::is_sorted(values_.begin(), values_.end()); }

    friend bool operator==(const CadlagPath&, const CadlagPath&) = default;

private:
    void check_time(double t) const {
        if (!(t >= 0.0 && t <= horizon())) {
            throw std::domain_error("time " + std::to_string(t) + " outside [0, " + std::to_string(horizon()) + "]");
        }
    }

    std::vector<double> times_;
    std::vector<double> values_;
    Interpolation mode_;
};

/// Weighted seminorm p(v) = sqrt(sum_j w_j v_j^2).
inline double weighted_norm(std::span<const double> v, std::span<const double> weights) {
    double s = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) s += weights[j] * v[j] * v[j];
    return std::sqrt(s);
}

/// Càdlàg path in R^M (step mode), carrying the seminorm weights used to measure it.
class VectorPath {
public:
    VectorPath(std::vector<double> times, std::vector<double> values, std::size_t dim,
               std::vector<double> weights = {})
        : times_(std::move(times)), values_(std::move(values)), dim_(dim), weights_(std::move(weights)) {
        detail::validate_knots(times_);
        if (dim_ == 0) throw std::invalid_argument("vector path dimension must be positive");
        if (values_.size() != times_.size() * dim_) throw std::invalid_argument("vector path needs dim values per knot");
        if (weights_.empty()) weights_.assign(dim_, 1.0);
        if (weights_.size() != dim_) throw std::invalid_argument("one seminorm weight per coordinate required");
        for (double w : weights_) {
            if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("seminorm weights must be finite and >= 0");
        }
        for (double v : values_) {
            if (!std::isfinite(v)) throw std::invalid_argument("path values must be finite");
        }
    }

    [[nodiscard]] double horizon() const noexcept { return times_.back(); }
    [[nodiscard]] std::size_t size() const noexcept { return times_.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::span<const double> times() const noexcept { return times_; }
    [[nodiscard]] std::span<const double> weights() const noexcept { return weights_; }
    [[nodiscard]] std::span<const double> flat_values() const noexcept { return values_; }
    [[nodiscard]] std::span<const double> value(std::size_t knot) const noexcept {
        return std::span<const double>(values_).subspan(knot * dim_, dim_);
    }

    [[nodiscard]] std::span<const double> eval(double t) const {
        if (!(t >= 0.0 && t <= horizon())) throw std::domain_error("time outside [0, T]");
        return value(detail::piece_index(times_, t));
    }

    [[nodiscard]] double norm(std::span<const double> v) const { return weighted_norm(v, weights_); }

    [[nodiscard]] CadlagPath component(std::size_t j) const {
        if (j >= dim_) throw std::out_of_range("component index out of range");
        std::vector<double> vals(times_.size());
        for (std::size_t i = 0; i < times_.size(); ++i) vals[i] = values_[i * dim_ + j];
        return CadlagPath(times_, std::move(vals));
    }

    /// t -> <coeffs, x_t>: the real path obtained by pairing with a fixed vector.
    [[nodiscard]] CadlagPath project(std::span<const double> coeffs) const {
        if (coeffs.size() != dim_) throw std::invalid_argument("projection vector dimension mismatch");
        std::vector<double> vals(times_.size());
        for (std::size_t i = 0; i < times_.size(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < dim_; ++j) s += coeffs[j] * values_[i * dim_ + j];
            vals[i] = s;
        }
        return CadlagPath(times_, std::move(vals));
    }

    VectorPath with_weights(std::vector<double> weights) const {
        return VectorPath(times_, values_, dim_, std::move(weights));
    }

    friend bool operator==(const VectorPath&, const VectorPath&) = default;

private:
    std::vector<double> times_;
    std::vector<double> values_;
    std::size_t dim_;
    std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// Completed graphs

/// Polyline through the completed graph: continuity vertices plus the segment
/// [x(t-), x(t)] at every jump, listed in graph order.
class CompletedGraph {
public:
    CompletedGraph(std::size_t dim, std::vector<double> weights) : dim_(dim), weights_(std::move(weights)) {}

    void push(double t, std::span<const double> z) {
        times_.push_back(t);
        z_.insert(z_.end(), z.begin(), z.end());
    }

    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::size_t vertex_count() const noexcept { return times_.size(); }
    [[nodiscard]] double time(std::size_t i) const noexcept { return times_[i]; }
    [[nodiscard]] std::span<const double> z(std::size_t i) const noexcept {
        return std::span<const double>(z_).subspan(i * dim_, dim_);
    }
    [[nodiscard]] std::span<const double> weights() const noexcept { return weights_; }

    /// Product-metric distance max(p(dz), |dt|) between vertices of two graphs.
    [[nodiscard]] double vertex_distance(std::size_t i, const CompletedGraph& other, std::size_t j) const {
        const auto a = z(i);
        const auto b = other.z(j);
        double s = 0.0;
        for (std::size_t k = 0; k < dim_; ++k) {
            const double d = a[k] - b[k];
            s += weights_[k] * d * d;
        }
        return std::max(std::sqrt(s), std::abs(times_[i] - other.times_[j]));
    }

private:
    std::size_t dim_;
    std::vector<double> weights_;
    std::vector<double> times_;
    std::vector<double> z_;
};

inline CompletedGraph completed_graph(const CadlagPath& x) {
    const double one = 1.0;
    CompletedGraph g(1, {one});
    const auto t = x.times();
    const auto v = x.values();
    g.push(t[0], v.subspan(0, 1));
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (x.interpolation() == Interpolation::linear) {
            g.push(t[i], v.subspan(i, 1));
            continue;
        }
        g.push(t[i], v.subspan(i - 1, 1));             // left limit
        if (v[i] != v[i - 1]) g.push(t[i], v.subspan(i, 1));  // jump segment end
    }
    return g;
}

inline CompletedGraph completed_graph(const VectorPath& x) {
    CompletedGraph g(x.dim(), std::vector<double>(x.weights().begin(), x.weights().end()));
    const auto t = x.times();
    g.push(t[0], x.value(0));
    for (std::size_t i = 1; i < t.size(); ++i) {
        g.push(t[i], x.value(i - 1));
        const auto a = x.value(i - 1);
        const auto b = x.value(i);
        if (!std::equal(a.begin(), a.end(), b.begin())) g.push(t[i], b);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Segment functional and moduli

/// Distance from v2 to the segment [v1, v3]; zero iff v2 lies between v1 and v3.
inline double h_functional(double v1, double v2, double v3) noexcept {
    const double lo = std::min(v1, v3);
    const double hi = std::max(v1, v3);
    if (v2 > hi) return v2 - hi;
    if (v2 < lo) return lo - v2;
    return 0.0;
}

/// Weighted-norm distance from v2 to the segment [v1, v3] (closed-form projection).
inline double h_functional(std::span<const double> v1, std::span<const double> v2, std::span<const double> v3,
                           std::span<const double> weights) {
    const std::size_t m = v1.size();
    if (v2.size() != m || v3.size() != m || weights.size() != m) {
        throw std::invalid_argument("h_functional: dimension mismatch");
    }
    double rd = 0.0;
    double dd = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double d = v3[j] - v1[j];
        rd += weights[j] * (v2[j] - v1[j]) * d;
        dd += weights[j] * d * d;
    }
    const double lambda = dd > 0.0 ? std::clamp(rd / dd, 0.0, 1.0) : 0.0;
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double r = v2[j] - (1.0 - lambda) * v1[j] - lambda * v3[j];
        s += weights[j] * r * r;
    }
    return std::sqrt(s);
}

namespace detail {

inline void require_positive_delta(double delta) {
    if (!(delta > 0.0)) throw std::domain_error("delta must be > 0");
}

inline void require_step(const CadlagPath& x, const char* what) {
    if (x.interpolation() != Interpolation::step) {
        throw std::invalid_argument(std::string(what) + " requires a step (piecewise-constant) path");
    }
}

// Calls fn(first, last) for each maximal run of consecutive pieces that fits in
// one admissible window [max(0, t - d), min(t + d, T)). Piece i is [t_i, t_{i+1}),
// i = 0 .. n-2; the knot at T itself never enters a window.
template <typename Fn>
void for_each_window_run(std::span<const double> times, double delta, Fn&& fn) {
    const std::size_t pieces = times.size() - 1;
    const double horizon = times.back();
    const double width = std::min(2.0 * delta, horizon);
    std::size_t last = 0;
    std::size_t prev_last = std::numeric_limits<std::size_t>::max();
    for (std::size_t first = 0; first < pieces; ++first) {
        if (last < first) last = first;
        const double end_of_first = times[first + 1];
        const bool tail_window = end_of_first > horizon - width;
        while (last + 1 < pieces && (tail_window || times[last + 1] < end_of_first + width)) ++last;
        if (last != prev_last) fn(first, last);
        prev_last = last;
    }
}

// max over i <= j <= k in [first, last] of h(v_i, v_j, v_k) for scalar values.
inline double max_h_in_run(std::span<const double> v, std::size_t first, std::size_t last,
                           std::vector<double>& scratch) {
    const std::size_t len = last - first + 1;
    if (len < 3) return 0.0;
    scratch.assign(2 * len, 0.0);
    double* suf_min = scratch.data();
    double* suf_max = scratch.data() + len;
    suf_min[len - 1] = suf_max[len - 1] = v[last];
    for (std::size_t r = len - 1; r-- > 0;) {
        suf_min[r] = std::min(suf_min[r + 1], v[first + r]);
        suf_max[r] = std::max(suf_max[r + 1], v[first + r]);
    }
    double pre_min = v[first];
    double pre_max = v[first];
    double best = 0.0;
    for (std::size_t r = 0; r < len; ++r) {
        const double b = v[first + r];
        pre_min = std::min(pre_min, b);
        pre_max = std::max(pre_max, b);
        best = std::max(best, b - std::max(pre_min, suf_min[r]));
        best = std::max(best, std::min(pre_max, suf_max[r]) - b);
    }
    return best;
}

}  // namespace detail

/// M1 modulus of continuity: sup over windows of width 2*delta (clipped to [0, T))
/// and ordered triples in the window of h(x(t1), x(t2), x(t3)). Exact for step paths.
inline double m1_modulus(const CadlagPath& x, double delta) {
    detail::require_positive_delta(delta);
    detail::require_step(x, "m1_modulus");
    double best = 0.0;
    std::vector<double> scratch;
    detail::for_each_window_run(x.times(), delta, [&](std::size_t first, std::size_t last) {
        best = std::max(best, detail::max_h_in_run(x.values(), first, last, scratch));
    });
    return best;
}

inline double m1_modulus(const VectorPath& x, double delta) {
    detail::require_positive_delta(delta);
    double best = 0.0;
    const auto w = x.weights();
    detail::for_each_window_run(x.times(), delta, [&](std::size_t first, std::size_t last) {
        for (std::size_t j = first + 1; j < last; ++j) {
            for (std::size_t i = first; i < j; ++i) {
                for (std::size_t k = j + 1; k <= last; ++k) {
                    best = std::max(best, h_functional(x.value(i), x.value(j), x.value(k), w));
                }
            }
        }
    });
    return best;
}

/// (sup_{t in (0,d)} |x(t) - x(0)|, sup_{t in (T-d,T)} |x(T) - x(t)|).
inline std::pair<double, double> endpoint_oscillation(const CadlagPath& x, double delta) {
    const double horizon = x.horizon();
    if (!(delta > 0.0 && delta < horizon)) throw std::domain_error("endpoint_oscillation needs 0 < delta < T");
    const auto t = x.times();
    const double x0 = x.eval(0.0);
    const double xT = x.eval(horizon);
    double head = 0.0;
    double tail = 0.0;
    if (x.interpolation() == Interpolation::step) {
        for (std::size_t i = 0; i + 1 < t.size(); ++i) {
            const double v = x.values()[i];
            if (t[i] < delta) head = std::max(head, std::abs(v - x0));
            if (t[i + 1] > horizon - delta) tail = std::max(tail, std::abs(xT - v));
        }
    } else {
        // Continuous path: extrema over an open interval are attained at interior
        // knots or approached at the interval ends.
        head = std::abs(x.eval(delta) - x0);
        tail = std::abs(xT - x.eval(horizon - delta));
        for (std::size_t i = 1; i + 1 < t.size(); ++i) {
            if (t[i] < delta) head = std::max(head, std::abs(x.values()[i] - x0));
            if (t[i] > horizon - delta) tail = std::max(tail, std::abs(xT - x.values()[i]));
        }
    }
    return {head, tail};
}

/// J1 modulus w'(x, d): inf over partitions of [0, T) into intervals longer than d
/// of the largest oscillation on a half-open interval. Partition points are
/// searched over the knots plus a uniform grid of `resolution` cells, so the
/// result is exact when optimal cut points are knots and an upper bound otherwise.
/// When d >= T no admissible partition exists and the oscillation over [0, T) is returned.
inline double j1_modulus(const CadlagPath& x, double delta, std::size_t resolution = 256) {
    detail::require_positive_delta(delta);
    const double horizon = x.horizon();
    std::vector<double> cand(x.times().begin(), x.times().end());
    for (std::size_t k = 1; k < resolution; ++k) cand.push_back(horizon * static_cast<double>(k) / static_cast<double>(resolution));
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    const std::size_t c = cand.size();

    // Range of x over [cand[r], cand[r+1]).
    std::vector<double> cell_min(c - 1), cell_max(c - 1);
    for (std::size_t r = 0; r + 1 < c; ++r) {
        const double a = x.eval(cand[r]);
        if (x.interpolation() == Interpolation::step) {
            cell_min[r] = cell_max[r] = a;
        } else {
            const double b = x.left_limit(cand[r + 1]);
            cell_min[r] = std::min(a, b);
            cell_max[r] = std::max(a, b);
        }
    }
    if (delta >= horizon) {
        return *std::max_element(cell_max.begin(), cell_max.end()) - *std::min_element(cell_min.begin(), cell_min.end());
    }

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> best(c, inf);
    best[0] = 0.0;
    for (std::size_t s = 1; s < c; ++s) {
        double lo = inf;
        double hi = -inf;
        for (std::size_t r = s; r-- > 0;) {
            lo = std::min(lo, cell_min[r]);
            hi = std::max(hi, cell_max[r]);
            if (cand[s] - cand[r] > delta && best[r] < inf) best[s] = std::min(best[s], std::max(best[r], hi - lo));
        }
    }
    return best[c - 1];
}

}  // namespace m1lab
