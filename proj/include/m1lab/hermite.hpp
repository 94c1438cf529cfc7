#pragma once

#include "m1lab/path_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace m1lab {

/// Fills out[0..count) with the L2-orthonormal Hermite functions h_k(x) via the
/// three-term recurrence. For |x| beyond ~38 the Gaussian factor underflows and
/// every value is returned as 0.
inline void hermite_functions(double x, std::size_t count, double* out) noexcept {
    if (count == 0) return;
    const double h0 = std::exp(-0.5 * x * x) / std::sqrt(std::sqrt(std::numbers::pi));
    out[0] = h0;
    if (count == 1) return;
    out[1] = std::numbers::sqrt2 * x * h0;
    for (std::size_t k = 1; k + 1 < count; ++k) {
        const double kk = static_cast<double>(k);
        out[k + 1] = std::sqrt(2.0 / (kk + 1.0)) * x * out[k] - std::sqrt(kk / (kk + 1.0)) * out[k - 1];
    }
}

inline double hermite_eval(std::size_t k, double x) {
    std::vector<double> h(k + 1);
    hermite_functions(x, k + 1, h.data());
    return h[k];
}

/// Weight (2k+2)^n of coefficient k in the n-th Hilbertian norm; n may be negative.
inline double ladder_weight(std::size_t k, int n) { return std::pow(2.0 * static_cast<double>(k) + 2.0, n); }

/// sqrt(sum_k (2k+2)^{2n} c_k^2). For negative n this is the dual norm of a
/// functional given by its coordinates f(h_k).
inline double ladder_norm(std::span<const double> coeffs, int n) {
    double s = 0.0;
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
        const double w = ladder_weight(k, n);
        s += w * w * coeffs[k] * coeffs[k];
    }
    return std::sqrt(s);
}

/// Schwartz function given by finitely many Hermite coefficients.
class TestFunction {
public:
    struct Jet {
        double value = 0.0;
        double d1 = 0.0;
        double d2 = 0.0;
    };

    TestFunction() = default;
    explicit TestFunction(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
        for (double c : coeffs_) {
            if (!std::isfinite(c)) throw std::invalid_argument("test function coefficients must be finite");
        }
    }

    static TestFunction hermite(std::size_t k, double scale = 1.0) {
        std::vector<double> c(k + 1, 0.0);
        c[k] = scale;
        return TestFunction(std::move(c));
    }

    [[nodiscard]] std::size_t size() const noexcept { return coeffs_.size(); }
    [[nodiscard]] std::span<const double> coefficients() const noexcept { return coeffs_; }

    [[nodiscard]] double operator()(double x) const { return jet(x).value; }
    [[nodiscard]] double derivative(double x) const { return jet(x).d1; }
    [[nodiscard]] double second_derivative(double x) const { return jet(x).d2; }

    /// Value and first two derivatives. h_k' = sqrt(k/2) h_{k-1} - sqrt((k+1)/2) h_{k+1},
    /// h_k'' = (x^2 - 2k - 1) h_k.
    [[nodiscard]] Jet jet(double x) const {
        Jet j;
        const std::size_t d = coeffs_.size();
        if (d == 0) return j;
        double stack[64];
        std::vector<double> heap;
        double* h = stack;
        if (d + 1 > 64) {
            heap.resize(d + 1);
            h = heap.data();
        }
        hermite_functions(x, d + 1, h);
        for (std::size_t k = 0; k < d; ++k) {
            const double c = coeffs_[k];
            if (c == 0.0) continue;
            const double kk = static_cast<double>(k);
            j.value += c * h[k];
            j.d1 += c * ((k > 0 ? std::sqrt(kk / 2.0) * h[k - 1] : 0.0) - std::sqrt((kk + 1.0) / 2.0) * h[k + 1]);
            j.d2 += c * (x * x - 2.0 * kk - 1.0) * h[k];
        }
        return j;
    }

    [[nodiscard]] double norm(int n) const { return ladder_norm(coeffs_, n); }

    /// Probe grid covering the oscillatory region of the highest retained mode.
    [[nodiscard]] std::vector<double> probe_grid(double step = 1e-3) const {
        const double reach = std::sqrt(2.0 * static_cast<double>(coeffs_.size()) + 1.0) + 8.0;
        const auto count = static_cast<std::size_t>(std::ceil(2.0 * reach / step)) + 1;
        std::vector<double> xs(count);
        for (std::size_t i = 0; i < count; ++i) xs[i] = -reach + static_cast<double>(i) * step;
        return xs;
    }

    [[nodiscard]] double sup_norm() const {
        double best = 0.0;
        for (double x : probe_grid()) best = std::max(best, std::abs(jet(x).value));
        return best;
    }

    /// max |phi'| on the probe grid.
    [[nodiscard]] double lipschitz() const {
        double best = 0.0;
        for (double x : probe_grid()) best = std::max(best, std::abs(jet(x).d1));
        return best;
    }

    friend bool operator==(const TestFunction&, const TestFunction&) = default;

private:
    std::vector<double> coeffs_;
};

// Coefficient CSV: header "k,c_k", one row per index. Missing indices are zero.
inline TestFunction read_test_function_csv(std::istream& in) {
    std::string line;
    std::vector<double> coeffs;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_row(line);
        if (row == 1 && cells.size() == 2 && cells[0] == "k") continue;
        if (cells.size() != 2) throw std::invalid_argument("coefficient CSV row " + std::to_string(row) + " needs 2 cells");
        const double kd = parse_double(cells[0]);
        if (!(kd >= 0.0) || kd != std::floor(kd) || kd > 1e6) {
            throw std::invalid_argument("coefficient CSV row " + std::to_string(row) + ": bad index");
        }
        const auto k = static_cast<std::size_t>(kd);
        if (k >= coeffs.size()) coeffs.resize(k + 1, 0.0);
        coeffs[k] = parse_double(cells[1]);
    }
    if (coeffs.empty()) throw std::invalid_argument("coefficient CSV has no rows");
    return TestFunction(std::move(coeffs));
}

inline void write_test_function_csv(std::ostream& out, const TestFunction& phi) {
    out << "k,c_k\n";
    const auto c = phi.coefficients();
    for (std::size_t k = 0; k < c.size(); ++k) out << k << ',' << format_double(c[k]) << '\n';
}

inline TestFunction load_test_function(const std::string& file) {
    auto in = detail::open_for_read(file);
    return read_test_function_csv(in);
}

}  // namespace m1lab
