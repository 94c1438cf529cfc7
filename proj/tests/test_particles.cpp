#include "m1lab/particle_system.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace m1lab;

namespace {

ModelConfig small_model() {
    ModelConfig cfg;
    cfg.particles = 64;
    cfg.horizon = 1.0;
    cfg.dt = 1.0 / 128.0;
    cfg.seed = 9;
    return cfg;
}

double ks_distance(std::vector<double> xs, const InitialLaw& law) {
    std::sort(xs.begin(), xs.end());
    const auto n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = law.cdf(xs[i]);
        d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
    }
    return d;
}

}  // namespace

TEST_CASE("model validation names the offending field") {
    auto bad = small_model();
    bad.particles = 0;
    CHECK_THROWS_WITH(bad.validate(), Catch::Matchers::ContainsSubstring("N"));
    bad = small_model();
    bad.dt = 0.3;
    CHECK_THROWS_WITH(bad.validate(), Catch::Matchers::ContainsSubstring("dt"));
    bad = small_model();
    bad.horizon = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_WITH(RhoTable::constant(1.5), Catch::Matchers::ContainsSubstring("rho.values[0]"));
    CHECK_THROWS_WITH(RhoTable({0.0, 0.5}, {0.1, 0.2}), Catch::Matchers::ContainsSubstring("rho.nodes[1]"));
    CHECK_THROWS_AS(RhoTable({0.0, 0.5, 0.5, 1.0}, {0.1, 0.2, 0.3, 0.4}), ConfigError);
    CHECK_THROWS_WITH(InitialLaw::uniform(2.0, 1.0).validate(), Catch::Matchers::ContainsSubstring("initial.upper"));
    CHECK_THROWS_AS(InitialLaw::point(0.0).validate(), ConfigError);
}

TEST_CASE("rho table interpolates linearly and clamps") {
    const RhoTable r({0.0, 0.5, 1.0}, {0.0, 1.0, 0.5});
    CHECK(r(0.25) == Catch::Approx(0.5));
    CHECK(r(0.75) == Catch::Approx(0.75));
    CHECK(r(-1.0) == 0.0);
    CHECK(r(2.0) == 0.5);
    CHECK(RhoTable::constant(0.3)(0.9) == Catch::Approx(0.3));
}

TEST_CASE("initial laws: closed-form cdfs and sampling") {
    CHECK(InitialLaw::shifted_exponential(0.5, 2.0).cdf(1.5) == Catch::Approx(1.0 - std::exp(-2.0)));
    CHECK(InitialLaw::lognormal(0.0, 1.0).cdf(1.0) == Catch::Approx(0.5));
    CHECK(InitialLaw::lognormal(0.2, 0.5).cdf(std::exp(0.7)) ==
          Catch::Approx(0.5 * std::erfc(-1.0 / std::sqrt(2.0))));
    CHECK(InitialLaw::uniform(2.0, 4.0).cdf(2.5) == Catch::Approx(0.25));
    CHECK(InitialLaw::point(1.0).cdf(0.999) == 0.0);
    CHECK(InitialLaw::point(1.0).cdf(1.0) == 1.0);

    for (const auto& law : {InitialLaw::shifted_exponential(0.5, 1.0), InitialLaw::lognormal(0.3, 0.4),
                            InitialLaw::uniform(2.0, 4.0)}) {
        std::vector<double> xs;
        for (std::uint32_t i = 0; i < 20000; ++i) xs.push_back(law.sample(RandomStream(3, 0, i)));
        CHECK(ks_distance(xs, law) < 1.63 / std::sqrt(20000.0));
        CHECK(*std::min_element(xs.begin(), xs.end()) > 0.0);
    }
}

TEST_CASE("simulation is deterministic and follows the stream layout") {
    const auto cfg = small_model();
    const auto a = simulate(cfg, 3);
    const auto b = simulate(cfg, 3);
    CHECK(a.positions == b.positions);
    CHECK(a.tau == b.tau);
    CHECK(a.common == b.common);
    CHECK(simulate(cfg, 4).positions != a.positions);

    // Re-derive particle 5 from its stream (seed, replicate, 6) and the common stream (seed, replicate, 0).
    const RandomStream w(cfg.seed, 3, 0);
    const RandomStream own(cfg.seed, 3, 6);
    double x = cfg.initial.sample(own);
    CHECK(a.position(0, 5) == x);
    std::size_t dead = 0;
    for (std::size_t g = 0; g < a.steps; ++g) {
        const double dw = std::sqrt(cfg.dt) * w.normal(static_cast<std::uint32_t>(g));
        CHECK(a.common[g] == dw);
        const double rho = cfg.rho(a.loss[g]);
        x = x + rho * dw + std::sqrt(1.0 - rho * rho) * std::sqrt(cfg.dt) * own.normal(static_cast<std::uint32_t>(g));
        if (x <= 0.0) {
            CHECK(a.tau[5] == Catch::Approx(a.times[g + 1]));
            CHECK(a.position(g + 1, 5) == 0.0);
            ++dead;
            break;
        }
        CHECK(a.position(g + 1, 5) == Catch::Approx(x).epsilon(1e-14));
    }
    if (dead == 0) CHECK(std::isinf(a.tau[5]));
}

TEST_CASE("loss process is nondecreasing with zero M1 modulus") {
    for (auto barrier : {BarrierMode::grid, BarrierMode::bridge}) {
        auto cfg = small_model();
        cfg.barrier = barrier;
        cfg.initial = InitialLaw::uniform(0.05, 1.0);
        for (std::uint32_t rep = 0; rep < 10; ++rep) {
            const auto ens = simulate(cfg, rep);
            for (std::size_t g = 1; g <= ens.steps; ++g) CHECK(ens.loss[g] >= ens.loss[g - 1]);
            const auto l = loss_process(ens);
            CHECK(l.is_nondecreasing());
            CHECK(l.eval(1.0) == ens.loss.back());
            for (double d : {0.01, 0.1, 0.5}) CHECK(m1_modulus(l, d) == 0.0);
            if (barrier == BarrierMode::grid) {
                for (std::size_t g = 0; g <= ens.steps; ++g) CHECK(l.eval(ens.times[g]) == ens.loss[g]);
            }
        }
    }
}

TEST_CASE("perfect correlation moves every particle together") {
    auto cfg = small_model();
    cfg.rho = RhoTable::constant(1.0);
    cfg.initial = InitialLaw::point(0.3);
    cfg.horizon = 4.0;
    cfg.dt = 1.0 / 64.0;
    const auto ens = simulate(cfg, 0);
    const auto l = loss_process(ens);
    // All particles are absorbed at the same step or none is.
    for (double v : ens.loss) CHECK((v == 0.0 || v == 1.0));
    CHECK(l.size() <= 3);
    for (std::size_t g = 0; g <= ens.steps; ++g) {
        for (std::size_t i = 1; i < ens.particles; ++i) CHECK(ens.position(g, i) == ens.position(g, 0));
    }
}

TEST_CASE("first passage of Brownian motion from x0 = 1") {
    // P(tau <= 1) = 2 Phi(-1) for standard Brownian motion started at 1.
    const double target = 2.0 * normal_cdf(-1.0);
    auto cfg = small_model();
    cfg.rho = RhoTable::constant(0.0);
    cfg.initial = InitialLaw::point(1.0);
    cfg.particles = 20000;
    cfg.dt = 1.0 / 64.0;
    cfg.barrier = BarrierMode::bridge;
    const double p_bridge = simulate(cfg, 0).loss.back();
    cfg.barrier = BarrierMode::grid;
    const double p_grid = simulate(cfg, 0).loss.back();
    const double se = std::sqrt(target * (1.0 - target) / 20000.0);
    CHECK(std::abs(p_bridge - target) < 4.0 * se);
    // Monitoring only at grid times misses crossings between them.
    CHECK(p_grid < target - 4.0 * se);
}

TEST_CASE("stopped and unstopped projections differ by f(0) times the loss") {
    auto cfg = small_model();
    cfg.initial = InitialLaw::uniform(0.05, 1.5);
    const auto ens = simulate(cfg, 1);
    const auto f = [](double x) { return std::cos(x) + 2.0; };
    const auto nu = project(ens, f);
    const auto bar = project_stopped(ens, f);
    for (std::size_t g = 0; g <= ens.steps; ++g) {
        CHECK(bar.values()[g] - nu.values()[g] == Catch::Approx(f(0.0) * ens.loss[g]).margin(1e-14));
    }
    const auto coords = project_coordinates(ens, 3);
    const auto h2 = TestFunction::hermite(2);
    const auto via_phi = project(ens, [&](double x) { return h2(x); });
    for (std::size_t g = 0; g <= ens.steps; ++g) CHECK(coords.value(g)[2] == Catch::Approx(via_phi.values()[g]).margin(1e-14));
    const auto stopped = project_coordinates(ens, 3, true);
    for (std::size_t g = 0; g <= ens.steps; ++g) {
        CHECK(stopped.value(g)[0] - coords.value(g)[0] == Catch::Approx(hermite_eval(0, 0.0) * ens.loss[g]).margin(1e-14));
    }
}

TEST_CASE("evolution residual") {
    auto cfg = small_model();
    CHECK_THROWS_AS(evolution_residual(simulate(cfg), TestFunction::hermite(0)), std::invalid_argument);

    // With rho = 1 and no absorption the residual is the Ito-Taylor remainder of a
    // single Brownian path, O(sqrt(dt)).
    cfg.rho = RhoTable::constant(1.0);
    cfg.initial = InitialLaw::point(3.0);
    cfg.particles = 1;
    cfg.horizon = 0.25;
    const auto h1 = TestFunction::hermite(1);
    double prev = 1e9;
    for (double dt : {1.0 / 64.0, 1.0 / 1024.0, 1.0 / 16384.0}) {
        cfg.dt = dt;
        const auto ens = simulate(cfg, 2);
        REQUIRE(ens.loss.back() == 0.0);
        const auto r = evolution_residual(ens, h1);
        CHECK(r.values()[0] == 0.0);
        double worst = 0.0;
        for (double v : r.values()) worst = std::max(worst, std::abs(v));
        CHECK(worst < 0.05 * std::pow(dt * 64.0, 0.25) + 1e-12);
        CHECK(worst < prev);
        prev = worst;
    }
}

TEST_CASE("raw ensemble round trip") {
    const auto ens = simulate(small_model(), 7);
    std::stringstream ss;
    write_raw_ensemble(ss, ens);
    const auto raw = read_raw_ensemble(ss);
    CHECK(raw.version == kRawEnsembleVersion);
    CHECK(raw.particles == ens.particles);
    CHECK(raw.steps == ens.steps);
    CHECK(raw.dt == ens.dt());
    CHECK(raw.replicate == 7);
    CHECK(raw.times == ens.times);
    CHECK(raw.positions == ens.positions);
    CHECK(raw.tau == ens.tau);
    CHECK(raw.common == ens.common);

    std::string bytes = ss.str();
    std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_raw_ensemble(truncated), std::runtime_error);
    bytes[0] = 'X';
    std::istringstream bad(bytes);
    CHECK_THROWS_AS(read_raw_ensemble(bad), std::runtime_error);
}
