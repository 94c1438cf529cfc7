#include "m1lab/hermite.hpp"
#include "m1lab/nuclear_space.hpp"
#include "support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <numbers>
#include <random>
#include <sstream>

using namespace m1lab;

namespace {

// sum_{j >= from} j^-s for s = 2, 4 via the zeta values.
double zeta_tail(int s, std::size_t from) {
    double total = s == 2 ? std::numbers::pi * std::numbers::pi / 6.0 : std::pow(std::numbers::pi, 4) / 90.0;
    for (std::size_t j = 1; j < from; ++j) total -= std::pow(static_cast<double>(j), -s);
    return total;
}

std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> n;
    std::vector<double> u(dim);
    double s = 0.0;
    for (double& v : u) {
        v = n(rng);
        s += v * v;
    }
    for (double& v : u) v /= std::sqrt(s);
    return u;
}

double chordal_to_net(const ThetaNet& net, std::span<const double> u, std::size_t i) {
    const auto th = net.direction(i);
    double plus = 0.0, minus = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        plus += (u[j] - th[j]) * (u[j] - th[j]);
        minus += (u[j] + th[j]) * (u[j] + th[j]);
    }
    return std::sqrt(std::min(plus, minus));
}

}  // namespace

TEST_CASE("hermite functions are orthonormal") {
    // Trapezoid rule on [-30, 30]: spectrally accurate for Gaussian-decaying integrands.
    const std::size_t count = 40;
    const double step = 0.02;
    std::vector<double> h(count);
    std::vector<std::vector<double>> gram(count, std::vector<double>(count, 0.0));
    for (int i = -1500; i <= 1500; ++i) {
        hermite_functions(i * step, count, h.data());
        for (std::size_t j = 0; j < count; ++j) {
            for (std::size_t k = j; k < count; ++k) gram[j][k] += step * h[j] * h[k];
        }
    }
    for (std::size_t j = 0; j < count; ++j) {
        for (std::size_t k = j; k < count; ++k) CHECK(gram[j][k] == Catch::Approx(j == k ? 1.0 : 0.0).margin(1e-12));
    }
}

TEST_CASE("hermite derivatives agree with finite differences") {
    std::mt19937_64 rng(20);
    std::normal_distribution<double> n;
    std::vector<double> c(12);
    for (double& v : c) v = n(rng);
    const TestFunction phi(c);
    const double h = 1e-4;
    for (double x = -6.0; x <= 6.0; x += 0.37) {
        const auto j = phi.jet(x);
        CHECK(j.value == Catch::Approx(phi(x)));
        const double d1 = (phi(x + h) - phi(x - h)) / (2.0 * h);
        const double d2 = (phi(x + h) - 2.0 * phi(x) + phi(x - h)) / (h * h);
        CHECK(j.d1 == Catch::Approx(d1).margin(1e-6));
        CHECK(j.d2 == Catch::Approx(d2).margin(1e-4));
    }
    CHECK(TestFunction::hermite(0)(0.0) == Catch::Approx(std::pow(std::numbers::pi, -0.25)));
    CHECK(hermite_eval(3, 40.0) == 0.0);
}

TEST_CASE("ladder norms") {
    for (std::size_t k : {0u, 1u, 5u, 30u}) {
        const auto hk = TestFunction::hermite(k);
        CHECK(hk.norm(0) == Catch::Approx(1.0));
        CHECK(hk.norm(1) == Catch::Approx(2.0 * k + 2.0));
        CHECK(hk.norm(-2) == Catch::Approx(std::pow(2.0 * k + 2.0, -2)));
    }
    const std::vector<double> c{3.0, 4.0};
    CHECK(ladder_norm(c, 0) == Catch::Approx(5.0));
    CHECK(ladder_norm(c, 1) == Catch::Approx(std::sqrt(36.0 + 256.0)));
    // Norms increase along the ladder.
    CHECK(ladder_norm(c, -1) < ladder_norm(c, 0));
    // |h_2| peaks at x^2 = 5/2 with value 4 / sqrt(2) pi^-1/4 e^-5/4.
    CHECK(TestFunction::hermite(2).sup_norm() ==
          Catch::Approx(4.0 / std::sqrt(2.0) * std::pow(std::numbers::pi, -0.25) * std::exp(-1.25)).epsilon(1e-6));
    CHECK_THROWS_AS(TestFunction({1.0, std::nan("")}), std::invalid_argument);
}

TEST_CASE("coefficient CSV round trip and errors") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n;
    std::vector<double> c(17);
    for (double& v : c) v = n(rng);
    const TestFunction phi(c);
    std::stringstream ss;
    write_test_function_csv(ss, phi);
    CHECK(read_test_function_csv(ss) == phi);

    std::istringstream sparse("k,c_k\n3,2.5\n0,1\n");
    const auto s = read_test_function_csv(sparse);
    REQUIRE(s.size() == 4);
    CHECK(s.coefficients()[1] == 0.0);
    CHECK(s.coefficients()[3] == 2.5);

    for (const char* bad : {"", "k,c_k\n", "k,c_k\n-1,2\n", "k,c_k\n1.5,2\n", "k,c_k\n1,2,3\n", "k,c_k\n1,x\n"}) {
        std::istringstream in(bad);
        CHECK_THROWS_AS(read_test_function_csv(in), std::invalid_argument);
    }
}

TEST_CASE("Hilbert-Schmidt tail bounds the exact series") {
    // n = 0, p = 1: sum_{k > M} (2k+2)^-2 = zeta_tail(2, M + 2) / 4.
    // n = 0, p = 2: sum_{k > M} (2k+2)^-4 = zeta_tail(4, M + 2) / 16.
    // n = 1, p = 2 has the same exponent as n = 0, p = 1.
    for (std::size_t m : {0u, 1u, 3u, 10u, 24u, 100u, 5000u}) {
        const double e1 = zeta_tail(2, m + 2) / 4.0;
        const double e2 = zeta_tail(4, m + 2) / 16.0;
        CHECK(hs_tail(0, 1, m) >= e1 * (1.0 - 1e-12));
        CHECK(hs_tail(0, 1, m) <= e1 * (1.0 + 1e-6));
        CHECK(hs_tail(1, 2, m) == hs_tail(0, 1, m));
        // The subtraction oracle loses digits once the quartic tail is tiny.
        if (m > 100) continue;
        CHECK(hs_tail(0, 2, m) >= e2 * (1.0 - 1e-9));
        CHECK(hs_tail(0, 2, m) <= e2 * (1.0 + 1e-6));
    }
    CHECK_THROWS_AS(hs_tail(1, 1, 0), std::domain_error);
}

TEST_CASE("truncation level is minimal") {
    for (double eps : {0.5, 0.1, 0.01, 1e-3}) {
        for (auto [n, p] : {std::pair{0, 1}, std::pair{0, 2}, std::pair{1, 3}}) {
            const std::size_t m = choose_truncation(n, p, eps);
            CHECK(hs_tail(n, p, m) <= eps);
            if (m > 0) CHECK(hs_tail(n, p, m - 1) > eps);
        }
    }
    std::size_t scan = 0;
    while (hs_tail(0, 1, scan) > 0.01) ++scan;
    CHECK(choose_truncation(0, 1, 0.01) == scan);
    CHECK(choose_truncation(0, 1, 0.5) == 0);
    CHECK(choose_truncation(0, 1, 0.1) == 1);
    CHECK(lemma34_dimension(0, 1, 0.1) == 2);
    CHECK(lemma34_dimension(0, 1, 0.01, 3) == 3);
    CHECK_THROWS_AS(choose_truncation(0, 1, 0.0), std::domain_error);
}

TEST_CASE("theta nets cover the projective sphere") {
    std::mt19937_64 rng(22);
    for (std::size_t dim : {1u, 2u, 3u, 4u}) {
        for (double eps : {0.5, 0.1}) {
            if (dim == 4 && eps < 0.5) continue;
            const auto net = build_theta_net(dim, eps);
            CHECK(net.resolution() == Catch::Approx(0.45 * std::min(eps, 1.0)));
            for (std::size_t i = 0; i < net.size(); ++i) {
                double s = 0.0;
                for (double v : net.direction(i)) s += v * v;
                CHECK(s == Catch::Approx(1.0));
            }
            for (int t = 0; t < 300; ++t) {
                const auto u = random_unit(rng, dim);
                double best = 1e9;
                for (std::size_t i = 0; i < net.size(); ++i) best = std::min(best, chordal_to_net(net, u, i));
                CHECK(best <= net.resolution() + 1e-12);
                CHECK(chordal_to_net(net, u, net.nearest(u)) <= net.resolution() + 1e-12);
            }
        }
    }
    CHECK(build_theta_net(1, 0.1).size() == 1);
    for (std::size_t dim : {2u, 3u}) {
        std::size_t prev = 0;
        for (double eps : {2.0, 1.0, 0.5, 0.2, 0.1, 0.05}) {
            const auto size = build_theta_net(dim, eps).size();
            CHECK(size >= prev);
            prev = size;
        }
    }
}

TEST_CASE("theta net caps") {
    CHECK_THROWS_AS(build_theta_net(7, 0.5), std::length_error);
    CHECK_THROWS_AS(build_theta_net(6, 0.001), std::length_error);
    CHECK_THROWS_AS(build_theta_net(0, 0.5), std::domain_error);
    CHECK_THROWS_AS(build_theta_net(2, 0.0), std::domain_error);
}

TEST_CASE("segment margin matches a direct evaluation") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> n;
    for (int t = 0; t < 100; ++t) {
        std::vector<double> v1{n(rng), n(rng), n(rng)}, v2{n(rng), n(rng), n(rng)};
        const auto th = random_unit(rng, 3);
        const double eps = 0.3;
        double worst = 1e300;
        for (int j = 0; j < 1000; ++j) {
            const double l = j / 999.0;
            double proj = 0.0, norm2 = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double w = l * v1[k] + (1.0 - l) * v2[k];
                proj += w * th[k];
                norm2 += w * w;
            }
            worst = std::min(worst, 2.0 / eps * std::abs(proj) - std::sqrt(norm2));
        }
        CHECK(theta_margin(v1, v2, th, eps) == Catch::Approx(worst).margin(1e-12));
        const double exact = theta_margin_exact(v1, v2, th, eps);
        CHECK(exact <= worst + 1e-12);
        CHECK(theta_margin(v1, v2, th, eps, 0) == exact);
        // Dense scan: the grid minimum converges to the exact one.
        double dense = 1e300;
        for (int j = 0; j <= 200000; ++j) {
            const double l = j / 200000.0;
            double proj = 0.0, norm2 = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double w = l * v1[k] + (1.0 - l) * v2[k];
                proj += w * th[k];
                norm2 += w * w;
            }
            dense = std::min(dense, 2.0 / eps * std::abs(proj) - std::sqrt(norm2));
        }
        CHECK(exact == Catch::Approx(dense).margin(1e-3));
        CHECK(exact <= dense + 1e-12);
    }
}

TEST_CASE("theta net certification") {
    for (std::size_t dim : {1u, 2u, 3u}) {
        const auto net = build_theta_net(dim, 0.1);
        const auto r = certify_theta_net(net, 2000, 5);
        CHECK(r.trials == 2000);
        CHECK(r.failures == 0);
        CHECK_FALSE(r.exhausted);
        CHECK(r.worst_margin >= 0.0);
        CHECK(r.draws >= r.trials);
        const auto again = certify_theta_net(net, 2000, 5, 2);
        CHECK(again.draws == r.draws);
        CHECK(again.worst_margin == r.worst_margin);
        const auto exact = certify_theta_net(net, 2000, 5, 1, 0);
        CHECK(exact.failures == 0);
        CHECK(exact.worst_margin <= r.worst_margin);
    }
    const auto planar = certify_theta_net(build_theta_net(2, 0.5), 100000, 6);
    CHECK(planar.failures == 0);
    CHECK(certify_theta_net(build_theta_net(1, 0.5), 1000, 7).failures == 0);
    CHECK(certify_theta_net(build_theta_net(1, 2.0), 1000, 7).exhausted);

    // Degenerate pair: a single point of norm >= eps.
    const auto net3 = build_theta_net(3, 0.1);
    const std::vector<double> p{0.3, -0.2, 0.5};
    CHECK(check_pair(net3, p, p, 0).has_value());

    // A segment sweeping almost every direction has no witness. The crossing
    // near lambda = 1/2 falls between points of the default lambda grid.
    const auto net = build_theta_net(2, 0.1);
    const std::vector<double> a{1.0, 0.0}, b{-1.0, 0.01};
    CHECK_FALSE(check_pair(net, a, b, 0).has_value());
    CHECK(check_pair(net, a, b).has_value());
}

TEST_CASE("modulus-bound test functions have unit p-norm") {
    const auto net = build_theta_net(3, 0.1);
    const auto phis = lemma34_test_functions(0, 1, 0.01, net, 3);
    REQUIRE(phis.size() == net.size());
    for (const auto& phi : phis) CHECK(phi.norm(1) == Catch::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(lemma34_test_functions(0, 1, 0.1, net), std::invalid_argument);
    const auto net2 = build_theta_net(2, 0.1);
    const auto two = lemma34_test_functions(0, 1, 0.1, net2);
    CHECK(two.size() == net2.size());
}

TEST_CASE("modulus bound report on random vector paths") {
    std::mt19937_64 rng(24);
    std::vector<VectorPath> paths;
    for (int i = 0; i < 12; ++i) paths.push_back(oracle::random_vector_path(rng, 6, 3));
    ModulusBoundOptions opts;
    opts.increment_times = {0.25, 0.5, 0.9};
    const auto r = verify_modulus_bound(paths, 0, 1, 0.1, 0.1, opts);
    CHECK(r.truncation == 1);
    CHECK(r.dimension == 2);
    CHECK(r.net_size == build_theta_net(2, 0.1).size());
    CHECK(r.tail == Catch::Approx(1.0 / 36.0));
    REQUIRE(r.per_path.size() == paths.size());
    CHECK(r.increments.size() == 3);

    // Left side and c recomputed directly.
    const std::vector<double> wp{1.0 / 4.0, 1.0 / 16.0, 1.0 / 36.0};
    double lhs = 0.0, c = 0.0;
    for (const auto& x : paths) {
        lhs = std::max(lhs, m1_modulus(x.with_weights(wp), 0.1));
        for (std::size_t k = 0; k < x.size(); ++k) {
            const auto v = x.value(k);
            c = std::max(c, std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
        }
    }
    CHECK(r.family.lhs == Catch::Approx(lhs));
    CHECK(r.family.c == Catch::Approx(c));
    CHECK(r.family.rhs_printed == Catch::Approx(2.0 * c / 0.1 * r.family.scalar_sup + 0.3 * c));
    CHECK(r.corrected_violations == 0);

    CHECK_THROWS_AS(verify_modulus_bound({}, 0, 1, 0.1, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(verify_modulus_bound(paths, 1, 1, 0.1, 0.1), std::domain_error);
}
