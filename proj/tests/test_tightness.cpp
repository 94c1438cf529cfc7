#include "m1lab/tightness_lab.hpp"
#include "support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <set>

using namespace m1lab;

namespace {

ModelConfig model(std::size_t n, BarrierMode barrier = BarrierMode::grid) {
    ModelConfig cfg;
    cfg.particles = n;
    cfg.dt = 1.0 / 128.0;
    cfg.initial = InitialLaw::uniform(0.05, 1.5);
    cfg.barrier = barrier;
    cfg.seed = 17;
    return cfg;
}

}  // namespace

TEST_CASE("triples are ordered, on the grid and reproducible") {
    const auto t = make_triples(128, 500, 3);
    CHECK(t == make_triples(128, 500, 3));
    CHECK(t != make_triples(128, 500, 4));
    std::set<std::size_t> lags;
    for (const auto& tr : t) {
        CHECK(tr[0] < tr[1]);
        CHECK(tr[1] < tr[2]);
        CHECK(tr[2] <= 128);
        if (tr[1] - tr[0] == tr[2] - tr[1]) lags.insert(tr[1] - tr[0]);
    }
    for (std::size_t u = 1; u <= 64; u *= 2) CHECK(lags.count(u) == 1);
    CHECK(make_triples(2, 3, 1).size() == 4);
    CHECK_THROWS_AS(make_triples(1, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(validate_triple({3, 2, 5}, 10), std::invalid_argument);
    CHECK_THROWS_AS(validate_triple({1, 2, 11}, 10), std::invalid_argument);
}

TEST_CASE("decomposition inequality holds pathwise") {
    const std::vector<TestFunction> phis{TestFunction::hermite(0), TestFunction::hermite(1), TestFunction({0.3, -1.0, 0.5})};
    for (auto barrier : {BarrierMode::grid, BarrierMode::bridge}) {
        const auto cfg = model(48, barrier);
        const auto triples = make_triples(cfg.steps(), 400, 8);
        for (std::uint32_t rep = 0; rep < 8; ++rep) {
            const auto ens = simulate(cfg, rep);
            for (const auto& phi : phis) {
                const auto r = decomposition_check(ens, phi, triples);
                CHECK(r.checks == triples.size());
                CHECK(r.passes());
                CHECK(r.max_loss_segment == 0.0);
                // The largest left side, recomputed with the brute-force H.
                const auto path = project(ens, phi);
                const auto nu = path.values();
                double lhs = 0.0;
                for (const auto& tr : triples) lhs = std::max(lhs, oracle::h_brute(nu[tr[0]], nu[tr[1]], nu[tr[2]]));
                CHECK(r.max_lhs == Catch::Approx(lhs).margin(1e-9));
            }
        }
    }
    // Mixing up the grid is an error, not a silent pass.
    const auto ens = simulate(model(8), 0);
    CHECK_THROWS_AS(decomposition_check(ens, TestFunction::hermite(1), {{0, 1, 1000}}), std::invalid_argument);
}

TEST_CASE("segment samples agree with the decomposition check") {
    const auto ens = simulate(model(32), 2);
    const auto triples = make_triples(ens.steps, 50, 1);
    std::vector<double> h, rhs;
    const auto phi = TestFunction::hermite(2);
    segment_samples(ens, phi, triples, h, rhs);
    REQUIRE(h.size() == triples.size());
    double worst = -1e9;
    for (std::size_t k = 0; k < h.size(); ++k) worst = std::max(worst, h[k] - rhs[k]);
    CHECK(worst == decomposition_check(ens, phi, triples).max_violation);
}

TEST_CASE("tail fit recovers synthetic exponents") {
    // P(H >= eta) = min(1, c span^(1 + b) eta^-a) with a = 4, b = 1, c = 1e-3.
    const double a = 4.0, b = 1.0, c = 1e-3;
    std::mt19937_64 rng(40);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> spans;
    for (double s = 0.05; s <= 0.8; s *= 1.5) spans.push_back(s);
    const std::vector<double> etas{0.02, 0.03, 0.05, 0.08};
    std::vector<std::vector<double>> samples(spans.size());
    for (std::size_t k = 0; k < spans.size(); ++k) {
        for (int r = 0; r < 4000; ++r) samples[k].push_back(std::pow(c * std::pow(spans[k], 1.0 + b) / u(rng), 1.0 / a));
    }
    const auto fit = tail_exponent_fit(samples, spans, etas);
    REQUIRE(fit.status == TailFitStatus::fitted);
    CHECK(fit.a == Catch::Approx(a).margin(0.3));
    CHECK(fit.b == Catch::Approx(b).margin(0.3));
    CHECK(fit.c == Catch::Approx(c).epsilon(0.5));
    CHECK(fit.passes());

    const std::vector<std::vector<double>> zeros(spans.size(), std::vector<double>(10, 0.0));
    const auto vac = tail_exponent_fit(zeros, spans, etas);
    CHECK(vac.status == TailFitStatus::vacuous);
    CHECK(vac.passes());
    CHECK_THROWS_AS(tail_exponent_fit(samples, {0.1}, etas), std::invalid_argument);

    // Markov bound from right sides that dominate the samples pointwise.
    const auto with_rhs = tail_exponent_fit(samples, spans, etas, samples);
    CHECK(with_rhs.markov_violations == 0);
    std::vector<std::vector<double>> tiny(spans.size(), std::vector<double>(4000, 1e-6));
    CHECK(tail_exponent_fit(samples, spans, etas, tiny).markov_violations > 0);
}

TEST_CASE("fourth moments of stopped increments") {
    const auto cfg = model(32);
    const auto phi = TestFunction::hermite(1);
    const auto r = fourth_moment_scaling(cfg, phi, phi.lipschitz(), {1, 2, 4, 8, 16, 32}, 40);
    CHECK(r.replicates == 40);
    CHECK(r.few_replicates);
    CHECK(r.holder_violations == 0);
    CHECK(r.lipschitz_violations == 0);
    REQUIRE(r.moments.size() == 6);
    CHECK(r.lags.front() == Catch::Approx(cfg.dt));
    for (std::size_t l = 1; l < r.moments.size(); ++l) CHECK(r.moments[l] > r.moments[l - 1]);
    for (std::size_t l = 0; l < r.moments.size(); ++l) CHECK(r.moments[l] <= r.particle_bound[l] * (1.0 + 1e-9));
    CHECK(r.fit.slope > 1.0);
    const auto jobs = fourth_moment_scaling(cfg, phi, phi.lipschitz(), {1, 2, 4, 8, 16, 32}, 40, 3);
    CHECK(jobs.moments == r.moments);
    CHECK_THROWS_AS(fourth_moment_scaling(cfg, phi, 1.0, {0}, 2), std::invalid_argument);
}

TEST_CASE("endpoint diagnostics are nested in delta") {
    const auto base = model(16, BarrierMode::bridge);
    const auto phi = TestFunction::hermite(0);
    const std::vector<double> deltas{0.25, 0.1, 0.03};
    const auto r = endpoint_condition_check(base, {16, 64}, phi, deltas, 30, 0.05);
    REQUIRE(r.cells.size() == 6);
    CHECK(r.passes());
    CHECK(r.cells[0].particles == 16);
    CHECK(r.cells[3].particles == 64);
    for (const auto& c : r.cells) {
        CHECK(c.loss_part == Catch::Approx(std::abs(phi(0.0)) * c.mean_loss));
        CHECK(c.first_passage >= 0.0);
        CHECK(c.first_passage <= 1.0);
    }
    CHECK_THROWS_AS(endpoint_condition_check(base, {16}, phi, {0.1, 0.2}, 2, 0.05), std::invalid_argument);
}

TEST_CASE("finite-dimensional distribution distance") {
    const auto cfg = model(32);
    const std::vector<TestFunction> phis{TestFunction::hermite(0), TestFunction::hermite(1)};
    std::vector<std::vector<double>> a, b;
    for (std::uint32_t r = 0; r < 30; ++r) {
        const auto f = fdd_features(simulate(cfg, r), phis, {0, 64, 128});
        CHECK(f.size() == 6);
        a.push_back(f);
        auto g = f;
        for (double& x : g) x += 100.0;
        b.push_back(g);
    }
    CHECK(fdd_distance(a, a) == 0.0);
    // Probes are the pooled sample points, so disjoint samples give 1 - 1/30.
    CHECK(fdd_distance(a, b) == Catch::Approx(29.0 / 30.0));
    CHECK(fdd_distance(a, b) == fdd_distance(b, a));
    const std::vector<std::vector<double>> half(a.begin(), a.begin() + 15);
    CHECK(fdd_distance(a, half) <= 0.5);
    CHECK_THROWS_AS(fdd_distance(a, {}), std::invalid_argument);
    CHECK_THROWS_AS(fdd_features(simulate(cfg, 0), phis, {1000}), std::invalid_argument);
}
