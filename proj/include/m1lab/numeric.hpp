#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace m1lab {

/// Neumaier-compensated accumulator. Sums are order-sensitive only at the
/// ~1e-16 relative level, so aggregation over replicates stays schedule-independent
/// to well below 1e-12.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    CompensatedSum& operator+=(double x) noexcept {
        add(x);
        return *this;
    }
    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    CompensatedSum s;
    for (double x : xs) s += x;
    return s.value() / static_cast<double>(xs.size());
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double median(std::vector<double> xs) {
    if (xs.empty()) throw std::invalid_argument("median of empty sample");
    const std::size_t mid = xs.size() / 2;
    std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
    const double hi = xs[mid];
    if (xs.size() % 2 == 1) return hi;
    const double lo = *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

/// Ordinary least squares y = X beta with an intercept column prepended.
struct LeastSquaresFit {
    std::vector<double> coefficients;  // intercept first
    std::vector<double> std_errors;
    std::vector<double> residuals;
    double residual_sd = 0.0;
};

inline LeastSquaresFit least_squares(const std::vector<std::vector<double>>& regressors,
                                     std::span<const double> y) {
    const auto n = static_cast<Eigen::Index>(y.size());
    const auto p = static_cast<Eigen::Index>(regressors.size()) + 1;
    if (n < p) throw std::invalid_argument("least_squares: fewer observations than parameters");
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd Y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        for (Eigen::Index j = 1; j < p; ++j) {
            const auto& col = regressors[static_cast<std::size_t>(j - 1)];
            if (col.size() != y.size()) throw std::invalid_argument("least_squares: column length mismatch");
            X(i, j) = col[static_cast<std::size_t>(i)];
        }
        Y(i) = y[static_cast<std::size_t>(i)];
    }
    const Eigen::MatrixXd XtX = X.transpose() * X;
    const Eigen::VectorXd beta = XtX.ldlt().solve(X.transpose() * Y);
    const Eigen::VectorXd res = Y - X * beta;

    LeastSquaresFit fit;
    fit.coefficients.assign(beta.data(), beta.data() + p);
    fit.residuals.assign(res.data(), res.data() + n);
    const double dof = static_cast<double>(n - p);
    const double s2 = dof > 0 ? res.squaredNorm() / dof : 0.0;
    fit.residual_sd = std::sqrt(s2);
    const Eigen::MatrixXd cov = s2 * XtX.inverse();
    fit.std_errors.resize(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) fit.std_errors[static_cast<std::size_t>(j)] = std::sqrt(std::max(0.0, cov(j, j)));
    return fit;
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    auto fit = least_squares({std::vector<double>(x.begin(), x.end())}, y);
    return {fit.coefficients[1], fit.coefficients[0], fit.std_errors[1]};
}

}  // namespace m1lab
