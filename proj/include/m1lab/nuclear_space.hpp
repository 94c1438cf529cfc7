#pragma once

#include "m1lab/hermite.hpp"
#include "m1lab/numeric.hpp"
#include "m1lab/parallel.hpp"
#include "m1lab/path.hpp"
#include "m1lab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace m1lab {

// ---------------------------------------------------------------------------
// Hilbert-Schmidt tails and truncation

/// Certified upper bound on sum_{k > M} (2k+2)^{2(n-p)}: exact partial sum over
/// the next 1000 terms plus the midpoint integral bound for the remainder (the
/// summand is convex in k, so f(k) <= integral of f over [k - 1/2, k + 1/2]).
inline double hs_tail(int n, int p, std::size_t truncation) {
    if (p <= n) throw std::domain_error("hs_tail: need p > n, the tail diverges otherwise");
    const double a = 2.0 * static_cast<double>(p - n);
    constexpr std::size_t kExplicit = 1000;
    const std::size_t first = truncation + 1;
    const std::size_t last = first + kExplicit - 1;
    CompensatedSum s;
    const double cut = static_cast<double>(last);
    s += std::pow(2.0 * cut + 3.0, 1.0 - a) / (2.0 * (a - 1.0));
    for (std::size_t k = last + 1; k-- > first;) s += std::pow(2.0 * static_cast<double>(k) + 2.0, -a);
    return s.value();
}

/// Smallest M with hs_tail(n, p, M) <= eps. The retained Hermite indices are 0..M.
inline std::size_t choose_truncation(int n, int p, double eps) {
    if (!(eps > 0.0)) throw std::domain_error("choose_truncation: eps must be > 0");
    if (hs_tail(n, p, 0) <= eps) return 0;
    std::size_t hi = 1;
    while (hs_tail(n, p, hi) > eps) hi *= 2;
    std::size_t lo = hi / 2;  // tail(lo) > eps
    while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (hs_tail(n, p, mid) > eps) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return hi;
}

/// Net dimension used by the modulus-bound checks: the M + 1 retained Hermite
/// coordinates, capped by the ambient dimension of the paths.
inline std::size_t lemma34_dimension(int n, int p, double eps,
                                     std::size_t ambient = std::numeric_limits<std::size_t>::max()) {
    return std::min(choose_truncation(n, p, eps) + 1, ambient);
}

// ---------------------------------------------------------------------------
// Theta nets

class ThetaNet {
public:
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] double epsilon() const noexcept { return eps_; }
    /// Chordal covering radius: every unit vector u has a net point within this
    /// Euclidean distance of u or -u.
    [[nodiscard]] double resolution() const noexcept { return radius_; }
    [[nodiscard]] std::size_t size() const noexcept { return dirs_.size() / dim_; }
    [[nodiscard]] std::span<const double> direction(std::size_t i) const noexcept {
        return std::span<const double>(dirs_).subspan(i * dim_, dim_);
    }

    /// Index of the net point whose construction cell contains +-u (u nonzero).
    [[nodiscard]] std::size_t nearest(std::span<const double> u) const {
        if (dim_ == 1) return 0;
        if (dim_ == 2) {
            double angle = std::atan2(u[1], u[0]);
            if (angle < 0.0) angle += std::numbers::pi;
            if (angle >= std::numbers::pi) angle -= std::numbers::pi;
            const auto m = static_cast<double>(size());
            auto j = static_cast<std::size_t>(std::llround(angle / (std::numbers::pi / m)));
            return j % size();
        }
        std::size_t face = 0;
        for (std::size_t j = 1; j < dim_; ++j) {
            if (std::abs(u[j]) > std::abs(u[face])) face = j;
        }
        std::vector<long> idx(dim_);
        const double scale = 1.0 / u[face];
        const double h = 2.0 / static_cast<double>(grid_);
        for (std::size_t j = 0; j < dim_; ++j) {
            const double x = u[j] * scale;
            idx[j] = std::clamp(std::lround((x + 1.0) / h), 0L, static_cast<long>(grid_));
        }
        idx[face] = static_cast<long>(grid_);
        canonicalize(idx);
        return index_.at(encode(idx));
    }

    friend ThetaNet build_theta_net(std::size_t dim, double eps, std::size_t max_dim, std::size_t max_size);

private:
    // Flip so that the first coordinate on the cube boundary is +1.
    void canonicalize(std::vector<long>& idx) const {
        const long m = static_cast<long>(grid_);
        for (std::size_t j = 0; j < dim_; ++j) {
            if (idx[j] == m) return;
            if (idx[j] == 0) {
                for (auto& v : idx) v = m - v;
                return;
            }
        }
    }
    [[nodiscard]] std::uint64_t encode(const std::vector<long>& idx) const {
        std::uint64_t key = 0;
        for (long v : idx) key = key * (grid_ + 1) + static_cast<std::uint64_t>(v);
        return key;
    }

    std::size_t dim_ = 1;
    double eps_ = 1.0;
    double radius_ = 0.0;
    std::size_t grid_ = 0;
    std::vector<double> dirs_;
    std::unordered_map<std::uint64_t, std::uint32_t> index_;
};

/// Unit directions covering the projective sphere at chordal radius 0.45 * min(eps, 1).
/// Covering radius r < eps/2 is sufficient for the segment property: with u0 the
/// direction of the segment's minimum-norm point, w . u0 >= eps >= eps |w| for all
/// w on the segment, and |w . (theta - u0)| <= r |w|.
/// M = 1: {+1}. M = 2: equally spaced half-circle directions. M >= 3: normalized
/// grid points on the cube faces x_i = +1.
inline ThetaNet build_theta_net(std::size_t dim, double eps, std::size_t max_dim = 6,
                                std::size_t max_size = 4'000'000) {
    if (dim < 1) throw std::domain_error("theta net dimension must be >= 1");
    if (!(eps > 0.0 && eps <= 2.0)) throw std::domain_error("theta net epsilon must lie in (0, 2]");
    if (dim > max_dim) {
        throw std::length_error("theta net dimension " + std::to_string(dim) + " exceeds the cap " +
                                std::to_string(max_dim) + " (net size grows exponentially in the dimension)");
    }
    ThetaNet net;
    net.dim_ = dim;
    net.eps_ = eps;
    net.radius_ = 0.45 * std::min(eps, 1.0);
    if (dim == 1) {
        net.dirs_ = {1.0};
        return net;
    }
    if (dim == 2) {
        const auto m = static_cast<std::size_t>(std::ceil(std::numbers::pi / (4.0 * std::asin(net.radius_ / 2.0))));
        if (m > max_size) throw std::length_error("theta net size exceeds the cap");
        for (std::size_t j = 0; j < m; ++j) {
            const double a = std::numbers::pi * static_cast<double>(j) / static_cast<double>(m);
            net.dirs_.push_back(std::cos(a));
            net.dirs_.push_back(std::sin(a));
        }
        return net;
    }
    // Grid spacing h with (h/2) sqrt(M-1) <= r; radial projection onto the sphere
    // is 1-Lipschitz outside the unit ball.
    const auto grid = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(dim - 1)) / net.radius_));
    const double estimate = static_cast<double>(dim) * std::pow(static_cast<double>(grid + 1), static_cast<double>(dim - 1));
    if (estimate > static_cast<double>(max_size)) {
        throw std::length_error("theta net size ~" + std::to_string(static_cast<long long>(estimate)) +
                                " exceeds the cap " + std::to_string(max_size));
    }
    net.grid_ = grid;
    const double h = 2.0 / static_cast<double>(grid);
    std::vector<long> idx(dim);
    std::vector<double> x(dim);
    for (std::size_t face = 0; face < dim; ++face) {
        std::fill(idx.begin(), idx.end(), 0L);
        idx[face] = static_cast<long>(grid);
        while (true) {
            bool keep = true;
            for (std::size_t j = 0; j < face; ++j) {
                if (idx[j] == 0 || idx[j] == static_cast<long>(grid)) keep = false;
            }
            if (keep) {
                double norm2 = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    x[j] = j == face ? 1.0 : -1.0 + h * static_cast<double>(idx[j]);
                    norm2 += x[j] * x[j];
                }
                const double inv = 1.0 / std::sqrt(norm2);
                net.index_.emplace(net.encode(idx), static_cast<std::uint32_t>(net.size()));
                for (double v : x) net.dirs_.push_back(v * inv);
            }
            // Odometer over the non-face coordinates.
            std::size_t j = 0;
            for (; j < dim; ++j) {
                if (j == face) continue;
                if (idx[j] < static_cast<long>(grid)) {
                    ++idx[j];
                    break;
                }
                idx[j] = 0;
            }
            if (j == dim) break;
        }
    }
    return net;
}

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
    return s;
}

// Minimum over lambda in [0, 1] of |lambda v1 + (1 - lambda) v2|, and the minimizer point.
inline double segment_min_norm(std::span<const double> v1, std::span<const double> v2, std::vector<double>& point) {
    const std::size_t m = v1.size();
    double dd = 0.0;
    double vd = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double d = v1[j] - v2[j];
        dd += d * d;
        vd += v2[j] * d;
    }
    const double lambda = dd > 0.0 ? std::clamp(-vd / dd, 0.0, 1.0) : 0.0;
    point.resize(m);
    for (std::size_t j = 0; j < m; ++j) point[j] = lambda * v1[j] + (1.0 - lambda) * v2[j];
    return std::sqrt(dot(point, point));
}

}  // namespace detail

/// Exact min over lambda in [0, 1] of 2 eps^-1 |w . theta| - |w|, w = lambda v1 + (1 - lambda) v2.
/// On each interval where w . theta keeps its sign the objective is concave, so
/// the minimum is attained at 0, 1 or the zero of w . theta.
inline double theta_margin_exact(std::span<const double> v1, std::span<const double> v2, std::span<const double> theta,
                                 double eps) {
    const double a1 = detail::dot(v1, theta);
    const double a2 = detail::dot(v2, theta);
    const double n11 = detail::dot(v1, v1);
    const double n22 = detail::dot(v2, v2);
    const double n12 = detail::dot(v1, v2);
    auto f = [&](double l) {
        const double proj = l * a1 + (1.0 - l) * a2;
        const double norm2 = l * l * n11 + 2.0 * l * (1.0 - l) * n12 + (1.0 - l) * (1.0 - l) * n22;
        return 2.0 / eps * std::abs(proj) - std::sqrt(std::max(0.0, norm2));
    };
    double worst = std::min(f(0.0), f(1.0));
    if (a1 != a2) {
        const double root = a2 / (a2 - a1);
        if (root > 0.0 && root < 1.0) worst = std::min(worst, f(root));
    }
    return worst;
}

/// min over the lambda grid of 2 eps^-1 |w . theta| - |w|, w = lambda v1 + (1 - lambda) v2.
/// Nonnegative iff theta witnesses the segment property for (v1, v2) at the grid
/// points. lambda_points = 0 evaluates the exact minimum instead.
inline double theta_margin(std::span<const double> v1, std::span<const double> v2, std::span<const double> theta,
                           double eps, std::size_t lambda_points = 1000) {
    if (lambda_points == 0) return theta_margin_exact(v1, v2, theta, eps);
    const double a1 = detail::dot(v1, theta);
    const double a2 = detail::dot(v2, theta);
    const double n11 = detail::dot(v1, v1);
    const double n22 = detail::dot(v2, v2);
    const double n12 = detail::dot(v1, v2);
    double worst = std::numeric_limits<double>::infinity();
    const double denom = lambda_points > 1 ? static_cast<double>(lambda_points - 1) : 1.0;
    for (std::size_t j = 0; j < lambda_points; ++j) {
        const double l = static_cast<double>(j) / denom;
        const double proj = l * a1 + (1.0 - l) * a2;
        const double norm2 = l * l * n11 + 2.0 * l * (1.0 - l) * n12 + (1.0 - l) * (1.0 - l) * n22;
        worst = std::min(worst, 2.0 / eps * std::abs(proj) - std::sqrt(std::max(0.0, norm2)));
    }
    return worst;
}

/// Best witness margin for a pair: tries the net point nearest the direction of
/// the segment's minimum-norm point first, then scans the whole net.
/// Returns nullopt if no net point satisfies the property.
struct PairCheck {
    double margin = 0.0;
    std::size_t witness = 0;
    bool used_scan = false;
};

inline std::optional<PairCheck> check_pair(const ThetaNet& net, std::span<const double> v1, std::span<const double> v2,
                                           std::size_t lambda_points = 1000) {
    std::vector<double> w0;
    const double min_norm = detail::segment_min_norm(v1, v2, w0);
    if (min_norm > 0.0) {
        const std::size_t i = net.nearest(w0);
        const double m = theta_margin(v1, v2, net.direction(i), net.epsilon(), lambda_points);
        if (m >= 0.0) return PairCheck{m, i, false};
    }
    for (std::size_t i = 0; i < net.size(); ++i) {
        const double m = theta_margin(v1, v2, net.direction(i), net.epsilon(), lambda_points);
        if (m >= 0.0) return PairCheck{m, i, true};
    }
    return std::nullopt;
}

struct CertificationReport {
    std::size_t trials = 0;
    std::size_t failures = 0;
    std::size_t scans = 0;          // pairs whose nearest net point did not witness
    std::size_t draws = 0;          // candidate pairs drawn, including rejected ones
    bool exhausted = false;         // some trial hit the rejection cap
    double worst_margin = std::numeric_limits<double>::infinity();
};

namespace detail {

inline void ball_sample(const RandomStream& rs, std::uint32_t first_step, std::uint32_t radius_step, std::size_t dim,
                        double* out) {
    double norm2 = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        out[j] = rs.normal(first_step + static_cast<std::uint32_t>(j), DrawKind::increment);
        norm2 += out[j] * out[j];
    }
    const double r = std::pow(rs.uniform(radius_step, DrawKind::bridge), 1.0 / static_cast<double>(dim));
    const double s = r / std::sqrt(norm2);
    for (std::size_t j = 0; j < dim; ++j) out[j] *= s;
}

}  // namespace detail

/// Draws `trials` pairs uniformly from B x B conditioned on segment min-norm >= eps
/// (rejection sampling, stream (seed, trial, attempt)) and checks each on a lambda grid.
/// For eps >= 1 no pair in the unit ball qualifies and the report is marked exhausted.
inline CertificationReport certify_theta_net(const ThetaNet& net, std::size_t trials, std::uint64_t seed,
                                             unsigned jobs = 1, std::size_t lambda_points = 1000,
                                             std::size_t max_attempts = 1'000'000) {
    if (net.epsilon() >= 1.0) {
        CertificationReport empty;
        empty.trials = trials;
        empty.exhausted = trials > 0;
        return empty;
    }
    const std::size_t m = net.dim();
    struct Slot {
        bool failed = false;
        bool scanned = false;
        bool exhausted = false;
        std::size_t draws = 0;
        double margin = std::numeric_limits<double>::infinity();
    };
    std::vector<Slot> slots(trials);
    parallel_for(trials, jobs, [&](std::size_t t) {
        Slot& slot = slots[t];
        std::vector<double> v1(m), v2(m), w0;
        for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
            const RandomStream rs(seed, static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(attempt));
            detail::ball_sample(rs, 0, 0, m, v1.data());
            detail::ball_sample(rs, static_cast<std::uint32_t>(m), 1, m, v2.data());
            ++slot.draws;
            if (detail::segment_min_norm(v1, v2, w0) < net.epsilon()) continue;
            const auto check = check_pair(net, v1, v2, lambda_points);
            if (!check) {
                slot.failed = true;
            } else {
                slot.margin = check->margin;
                slot.scanned = check->used_scan;
            }
            return;
        }
        slot.exhausted = true;
    });
    CertificationReport report;
    report.trials = trials;
    for (const auto& s : slots) {
        report.failures += s.failed ? 1 : 0;
        report.scans += s.scanned ? 1 : 0;
        report.draws += s.draws;
        report.exhausted = report.exhausted || s.exhausted;
        report.worst_margin = std::min(report.worst_margin, s.margin);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Test-function construction and modulus-bound verification

/// phi_i = sum_j theta_i^(j) e_j^p with e_j^p = (2j+2)^{-p} h_j, so |phi_i|_p = 1.
inline std::vector<TestFunction> lemma34_test_functions(int n, int p, double eps, const ThetaNet& net,
                                                        std::size_t ambient = std::numeric_limits<std::size_t>::max()) {
    const std::size_t expected = lemma34_dimension(n, p, eps, ambient);
    if (net.dim() != expected) {
        throw std::invalid_argument("theta net dimension " + std::to_string(net.dim()) + " does not match the truncation dimension " +
                                    std::to_string(expected));
    }
    std::vector<TestFunction> out;
    out.reserve(net.size());
    std::vector<double> c(net.dim());
    for (std::size_t i = 0; i < net.size(); ++i) {
        const auto theta = net.direction(i);
        for (std::size_t j = 0; j < net.dim(); ++j) c[j] = theta[j] * ladder_weight(j, -p);
        out.emplace_back(c);
    }
    return out;
}

/// One instance of the inequality: left side against the printed right side
/// 2 c eps^-1 S + 3 c eps and the right side with corrected constants
/// 2 eps^-1 S + 2 c eps + 2 c sqrt(tail).
struct BoundCheck {
    double lhs = 0.0;
    double scalar_sup = 0.0;   // S; a lower bound on the true maximum when !rhs_exact
    double c = 0.0;
    double rhs_printed = 0.0;
    double rhs_corrected = 0.0;
    bool rhs_exact = true;

    [[nodiscard]] bool holds_printed() const noexcept { return lhs <= rhs_printed; }
    [[nodiscard]] bool holds_corrected() const noexcept { return lhs <= rhs_corrected; }
    [[nodiscard]] double margin_printed() const noexcept { return rhs_printed - lhs; }
};

struct IncrementCheck {
    double s = 0.0;
    BoundCheck bound;
};

struct ModulusBoundReport {
    int n = 0;
    int p = 1;
    double epsilon = 0.0;
    double delta = 0.0;
    std::size_t truncation = 0;      // M from choose_truncation
    std::size_t dimension = 0;       // net dimension actually used
    std::size_t net_size = 0;
    double tail = 0.0;               // HS tail beyond the net dimension, restricted to the path coordinates
    BoundCheck family;
    std::vector<BoundCheck> per_path;
    std::vector<IncrementCheck> increments;
    std::size_t printed_violations = 0;
    std::size_t corrected_violations = 0;
};

struct ModulusBoundOptions {
    std::vector<double> increment_times;      // s values for the increment version
    std::size_t exact_limit = 4096;           // nets up to this size are scanned completely
    bool per_path = true;
};

namespace detail {

inline double max_coordinate_norm(const VectorPath& x, const std::vector<double>& weights) {
    double c = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) c = std::max(c, weighted_norm(x.value(i), weights));
    return c;
}

// Knot indices whose value is taken somewhere on (s - d, s + d) intersected with [0, T].
inline std::vector<std::size_t> open_window_knots(std::span<const double> t, double s, double d) {
    std::vector<std::size_t> out;
    const std::size_t n = t.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (t[i] < s + d && t[i + 1] > s - d) out.push_back(i);
    }
    if (t[n - 1] < s + d) out.push_back(n - 1);
    return out;
}

inline double increment_sup(const CadlagPath& x, double s, double d) {
    const double xs = x.eval(s);
    double best = 0.0;
    for (std::size_t i : open_window_knots(x.times(), s, d)) best = std::max(best, std::abs(x.values()[i] - xs));
    return best;
}

inline double increment_sup(const VectorPath& x, double s, double d) {
    const auto xs = x.eval(s);
    std::vector<double> diff(x.dim());
    double best = 0.0;
    for (std::size_t i : open_window_knots(x.times(), s, d)) {
        const auto v = x.value(i);
        for (std::size_t j = 0; j < x.dim(); ++j) diff[j] = v[j] - xs[j];
        best = std::max(best, x.norm(diff));
    }
    return best;
}

// Fills the right-hand sides of `check` given lhs and c, scanning directions in
// order and stopping early (rhs_exact = false) once both right sides reach lhs.
template <typename ScalarSup>
void fill_rhs(BoundCheck& check, std::size_t count, double eps, double tail, bool exhaustive, ScalarSup&& scalar_sup) {
    check.rhs_exact = true;
    double s = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        s = std::max(s, scalar_sup(i));
        const double printed = 2.0 * check.c / eps * s + 3.0 * check.c * eps;
        const double corrected = 2.0 / eps * s + 2.0 * check.c * eps + 2.0 * check.c * std::sqrt(tail);
        if (!exhaustive && printed >= check.lhs && corrected >= check.lhs && i + 1 < count) {
            check.rhs_exact = false;
            break;
        }
    }
    check.scalar_sup = s;
    check.rhs_printed = 2.0 * check.c / eps * s + 3.0 * check.c * eps;
    check.rhs_corrected = 2.0 / eps * s + 2.0 * check.c * eps + 2.0 * check.c * std::sqrt(tail);
}

}  // namespace detail

/// Evaluates both sides of the modulus inequality for a family of vector paths
/// whose coordinates are the dual pairings x_t(h_k), k < D. The left side uses
/// the |.|_{-p} weights (2k+2)^{-2p}; c is measured in |.|_{-n}.
inline ModulusBoundReport verify_modulus_bound(const std::vector<VectorPath>& paths, int n, int p, double eps,
                                               double delta, const ModulusBoundOptions& opts = {}) {
    if (paths.empty()) throw std::invalid_argument("verify_modulus_bound: empty path set");
    if (p <= n) throw std::domain_error("verify_modulus_bound: need p > n");
    detail::require_positive_delta(delta);
    const std::size_t ambient = paths.front().dim();
    for (const auto& x : paths) {
        if (x.dim() != ambient) throw std::invalid_argument("verify_modulus_bound: paths differ in dimension");
    }

    ModulusBoundReport r;
    r.n = n;
    r.p = p;
    r.epsilon = eps;
    r.delta = delta;
    r.truncation = choose_truncation(n, p, eps);
    r.dimension = std::min(r.truncation + 1, ambient);
    for (std::size_t k = r.dimension; k < ambient; ++k) r.tail += std::pow(ladder_weight(k, n - p), 2.0);

    const auto net = build_theta_net(r.dimension, std::min(eps, 2.0));
    r.net_size = net.size();
    const auto phis = lemma34_test_functions(n, p, eps, net, ambient);
    const bool exhaustive = net.size() <= opts.exact_limit;

    std::vector<double> w_n(ambient), w_p(ambient);
    for (std::size_t k = 0; k < ambient; ++k) {
        w_n[k] = std::pow(ladder_weight(k, -n), 2.0);
        w_p[k] = std::pow(ladder_weight(k, -p), 2.0);
    }
    std::vector<double> padded(ambient, 0.0);
    auto project = [&](const VectorPath& x, std::size_t i) {
        const auto c = phis[i].coefficients();
        std::copy(c.begin(), c.end(), padded.begin());
        return x.project(padded);
    };

    std::vector<double> c_path(paths.size()), lhs_path(paths.size());
    std::vector<VectorPath> weighted;
    weighted.reserve(paths.size());
    for (std::size_t a = 0; a < paths.size(); ++a) {
        c_path[a] = detail::max_coordinate_norm(paths[a], w_n);
        if (!std::isfinite(c_path[a])) throw std::domain_error("verify_modulus_bound: path is not bounded in |.|_{-n}");
        weighted.push_back(paths[a].with_weights(w_p));
        lhs_path[a] = m1_modulus(weighted.back(), delta);
    }

    auto tally = [&](const BoundCheck& b) {
        r.printed_violations += b.holds_printed() ? 0 : 1;
        r.corrected_violations += b.holds_corrected() ? 0 : 1;
    };

    r.family.c = *std::max_element(c_path.begin(), c_path.end());
    r.family.lhs = *std::max_element(lhs_path.begin(), lhs_path.end());
    detail::fill_rhs(r.family, phis.size(), eps, r.tail, exhaustive, [&](std::size_t i) {
        double s = 0.0;
        for (const auto& x : paths) s = std::max(s, m1_modulus(project(x, i), delta));
        return s;
    });
    tally(r.family);

    if (opts.per_path) {
        for (std::size_t a = 0; a < paths.size(); ++a) {
            BoundCheck b;
            b.c = c_path[a];
            b.lhs = lhs_path[a];
            detail::fill_rhs(b, phis.size(), eps, r.tail, exhaustive,
                             [&](std::size_t i) { return m1_modulus(project(paths[a], i), delta); });
            tally(b);
            r.per_path.push_back(b);
        }
    }

    for (double s : opts.increment_times) {
        IncrementCheck inc;
        inc.s = s;
        inc.bound.c = r.family.c;
        for (const auto& x : weighted) inc.bound.lhs = std::max(inc.bound.lhs, detail::increment_sup(x, s, delta));
        detail::fill_rhs(inc.bound, phis.size(), eps, r.tail, exhaustive, [&](std::size_t i) {
            double v = 0.0;
            for (const auto& x : paths) v = std::max(v, detail::increment_sup(project(x, i), s, delta));
            return v;
        });
        tally(inc.bound);
        r.increments.push_back(inc);
    }
    return r;
}

}  // namespace m1lab
