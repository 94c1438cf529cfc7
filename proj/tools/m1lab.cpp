#include "m1lab/m1lab.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace m1lab;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Globals {
    unsigned jobs = 1;
    std::optional<std::uint64_t> seed;
};

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("M1LAB_SEED");
    if (s == nullptr || *s == '\0') return std::nullopt;
    try {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used, 0);
        if (used == std::string(s).size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("M1LAB_SEED", "expected an unsigned 64-bit integer");
}

// --seed, then a seed written in the config, then M1LAB_SEED, then the default.
std::uint64_t resolve_seed(const Globals& g, const json* config_root, std::uint64_t fallback) {
    if (g.seed) return *g.seed;
    if (config_root != nullptr && config_root->contains("seed")) return fallback;
    if (const auto e = env_seed()) return *e;
    return fallback;
}

struct LoadedConfig {
    ExperimentConfig cfg;
    json effective;
};

LoadedConfig load_experiment(const std::string& file, const Globals& g) {
    ExperimentConfig cfg;
    json root = json::object();
    if (!file.empty()) {
        root = load_config_json(file);
        cfg = parse_config_json(root);
    }
    cfg.model.seed = resolve_seed(g, &root, cfg.model.seed);
    return {cfg, config_to_json(cfg)};
}

std::string write_manifest_for(const fs::path& file, const std::string& kind, const std::string& config_path,
                               std::uint64_t seed, std::size_t replicates, const std::string& output, json config) {
    ExperimentManifest m;
    m.kind = kind;
    m.config_path = config_path;
    m.seed = seed;
    m.replicates = replicates;
    m.output = output;
    m.config = std::move(config);
    return write_manifest(file, m);
}

std::string rep_dir_name(std::size_t r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "rep_%04zu", r);
    return buf;
}

std::vector<fs::path> csv_files(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw std::runtime_error("no .csv files in " + dir);
    return out;
}

std::vector<NamedFunction> load_phis(const std::string& dir) {
    std::vector<NamedFunction> out;
    for (const auto& f : csv_files(dir)) out.push_back({f.stem().string(), load_test_function(f.string())});
    return out;
}

// One coefficient vector per row; a first row that does not parse is taken as a header.
std::vector<std::vector<double>> read_testset(const std::string& file) {
    auto in = detail::open_for_read(file);
    std::vector<std::vector<double>> out;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> v;
        try {
            for (auto cell : split_csv_row(line)) v.push_back(parse_double(cell));
        } catch (const std::invalid_argument&) {
            if (row == 1) continue;
            throw;
        }
        if (!out.empty() && v.size() != out.front().size()) {
            throw std::invalid_argument("testset row " + std::to_string(row) + " has a different length");
        }
        out.push_back(std::move(v));
    }
    if (out.empty()) throw std::invalid_argument("testset " + file + " is empty");
    return out;
}

const char* verdict(bool ok) { return ok ? "pass" : "fail"; }

// ---------------------------------------------------------------------------

int cmd_config(bool as_json) {
    const ExperimentConfig cfg;
    if (as_json) {
        std::cout << config_to_json(cfg).dump(2) << '\n';
    } else {
        std::cout << config_to_toml(cfg);
    }
    return 0;
}

struct SimulateArgs {
    std::string config;
    std::size_t replicates = 1;
    std::string out = "sim";
    bool raw = false;
};

int cmd_simulate(const SimulateArgs& a, const Globals& g) {
    const auto loaded = load_experiment(a.config, g);
    const auto& cfg = loaded.cfg;
    const fs::path out(a.out);
    const std::string hash = write_manifest_for(out / "manifest.json", "simulate", a.config, cfg.model.seed,
                                                a.replicates, a.out, loaded.effective);
    struct Slot {
        bool monotone = true;
        double final_loss = 0.0;
        double loss_modulus = 0.0;
    };
    std::vector<Slot> slots(a.replicates);
    parallel_for(a.replicates, g.jobs, [&](std::size_t r) {
        const auto ens = simulate(cfg.model, static_cast<std::uint32_t>(r));
        const fs::path dir = out / rep_dir_name(r);
        fs::create_directories(dir);
        const auto loss = loss_process(ens);
        save_path((dir / "loss.csv").string(), loss);
        for (const auto& f : cfg.phis) save_path((dir / ("proj_" + f.name + ".csv")).string(), project(ens, f.phi));
        if (cfg.coordinates > 0) save_path((dir / "coords.csv").string(), project_coordinates(ens, cfg.coordinates));
        if (a.raw) {
            auto os = detail::open_for_write((dir / "raw.bin").string());
            write_raw_ensemble(os, ens);
        }
        slots[r].monotone = loss.is_nondecreasing();
        slots[r].final_loss = ens.loss.back();
        slots[r].loss_modulus = m1_modulus(loss, std::max(cfg.model.horizon / 8.0, cfg.model.dt));
    });
    bool ok = true;
    json reps = json::array();
    for (std::size_t r = 0; r < slots.size(); ++r) {
        const bool pass = slots[r].monotone && slots[r].loss_modulus == 0.0;
        ok = ok && pass;
        reps.push_back({{"replicate", r},
                        {"final_loss", slots[r].final_loss},
                        {"loss_m1_modulus", slots[r].loss_modulus},
                        {"verdict", verdict(pass)}});
    }
    write_json(out / "summary.json",
               {{"manifest_hash", hash}, {"kind", "simulate"}, {"replicates", reps}, {"verdict", verdict(ok)}});
    std::cout << "simulate: " << a.replicates << " replicate(s) -> " << a.out << ", verdict " << verdict(ok) << '\n';
    return ok ? 0 : kExitFail;
}

struct DistanceArgs {
    std::string a, b;
    double tol = 1e-4;
    std::size_t max_grid = std::size_t{1} << 14;
    std::string testset;
    std::string manifest;
};

int cmd_distance(const DistanceArgs& a, const Globals& g) {
    if (!a.manifest.empty()) {
        write_manifest_for(a.manifest, "distance", "", resolve_seed(g, nullptr, 0), 1, "stdout",
                           {{"a", a.a}, {"b", a.b}, {"tol", a.tol}, {"max_grid", a.max_grid}, {"testset", a.testset}});
    }
    RefineOptions opts;
    opts.tol = a.tol;
    opts.max_grid = a.max_grid;
    opts.with_witness = false;
    double distance = 0.0;
    std::size_t grid = 0;
    bool converged = true;
    if (a.testset.empty()) {
        const auto res = m1_distance_refined(load_path(a.a), load_path(a.b), opts);
        distance = res.distance;
        grid = res.grid;
        converged = res.converged;
    } else {
        const auto x = load_vector_path(a.a);
        const auto y = load_vector_path(a.b);
        for (const auto& phi : read_testset(a.testset)) {
            if (phi.size() != x.dim()) throw std::invalid_argument("testset vector length does not match path dimension");
            const auto res = m1_distance_refined(x.project(phi), y.project(phi), opts);
            distance = std::max(distance, res.distance);
            grid = std::max(grid, res.grid);
            converged = converged && res.converged;
        }
    }
    std::cout << "distance,K,converged\n" << format_double(distance) << ',' << grid << ',' << (converged ? 1 : 0) << '\n';
    return 0;
}

struct ModulusArgs {
    std::string path;
    double delta = 0.1;
    std::string kind = "m1";
    std::string manifest;
};

int cmd_modulus(const ModulusArgs& a, const Globals& g) {
    if (!a.manifest.empty()) {
        write_manifest_for(a.manifest, "modulus", "", resolve_seed(g, nullptr, 0), 1, "stdout",
                           {{"path", a.path}, {"delta", a.delta}, {"kind", a.kind}});
    }
    if (!(a.delta > 0.0)) throw ConfigError("--delta", "must be > 0");
    const auto x = load_path(a.path);
    if (a.kind == "m1") {
        std::cout << format_double(m1_modulus(x, a.delta)) << '\n';
    } else if (a.kind == "j1") {
        std::cout << format_double(j1_modulus(x, a.delta)) << '\n';
    } else {
        const auto [head, tail] = endpoint_oscillation(x, a.delta);
        std::cout << format_double(head) << ',' << format_double(tail) << '\n';
    }
    return 0;
}

struct ModulusBoundArgs {
    int n = 0;
    int p = 1;
    double eps = 0.1;
    std::string paths;
    double delta = 0.05;
    std::size_t trials = 10000;
    std::vector<double> increments;
    std::string out;
};

json bound_json(const BoundCheck& b) {
    return {{"lhs", b.lhs},
            {"scalar_sup", b.scalar_sup},
            {"c", b.c},
            {"rhs_printed", b.rhs_printed},
            {"rhs_corrected", b.rhs_corrected},
            {"rhs_exact", b.rhs_exact},
            {"holds_printed", b.holds_printed()},
            {"holds_corrected", b.holds_corrected()}};
}

int cmd_lemma34(const ModulusBoundArgs& a, const Globals& g) {
    if (!(a.eps > 0.0 && a.eps <= 2.0)) throw ConfigError("--eps", "must lie in (0, 2]");
    if (a.p <= a.n) throw ConfigError("--p", "must exceed --n");
    if (!(a.delta > 0.0)) throw ConfigError("--delta", "must be > 0");
    const std::uint64_t seed = resolve_seed(g, nullptr, 1);
    std::string hash;
    if (!a.out.empty()) {
        hash = write_manifest_for(fs::path(a.out) / "manifest.json", "lemma34", "", seed, a.trials, a.out,
                                  {{"n", a.n}, {"p", a.p}, {"eps", a.eps}, {"paths", a.paths}, {"delta", a.delta},
                                   {"trials", a.trials}, {"increments", a.increments}});
    }
    std::vector<VectorPath> paths;
    for (const auto& f : csv_files(a.paths)) paths.push_back(load_vector_path(f.string()));

    ModulusBoundOptions opts;
    opts.increment_times = a.increments;
    const auto report = verify_modulus_bound(paths, a.n, a.p, a.eps, a.delta, opts);
    const auto net = build_theta_net(report.dimension, a.eps);
    std::optional<CertificationReport> cert;
    if (report.dimension <= 3 && a.trials > 0 && a.eps < 1.0) cert = certify_theta_net(net, a.trials, seed, g.jobs);

    const bool cert_ok = !cert || (cert->failures == 0 && !cert->exhausted);
    const bool ok = report.printed_violations == 0 && cert_ok;
    std::cout << "M,dimension,net_size,tail,printed_violations,corrected_violations,cert_failures,verdict\n"
              << report.truncation << ',' << report.dimension << ',' << report.net_size << ','
              << format_double(report.tail) << ',' << report.printed_violations << ','
              << report.corrected_violations << ',' << (cert ? std::to_string(cert->failures) : "na") << ','
              << verdict(ok) << '\n';

    if (!a.out.empty()) {
        const fs::path out(a.out);
        const fs::path phis = out / "phis";
        fs::create_directories(phis);
        const auto fns = lemma34_test_functions(a.n, a.p, a.eps, net, report.dimension);
        if (fns.size() <= 10000) {
            for (std::size_t i = 0; i < fns.size(); ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "phi_%05zu.csv", i);
                auto os = detail::open_for_write((phis / name).string());
                write_test_function_csv(os, fns[i]);
            }
        }
        json per_path = json::array();
        for (const auto& b : report.per_path) per_path.push_back(bound_json(b));
        json incs = json::array();
        for (const auto& inc : report.increments) incs.push_back({{"s", inc.s}, {"bound", bound_json(inc.bound)}});
        json summary{{"manifest_hash", hash},
                     {"kind", "lemma34"},
                     {"truncation", report.truncation},
                     {"dimension", report.dimension},
                     {"net_size", report.net_size},
                     {"tail", report.tail},
                     {"family", bound_json(report.family)},
                     {"per_path", per_path},
                     {"increments", incs},
                     {"printed_violations", report.printed_violations},
                     {"corrected_violations", report.corrected_violations},
                     {"verdict", verdict(ok)}};
        if (cert) {
            summary["certification"] = {{"trials", cert->trials},
                                        {"failures", cert->failures},
                                        {"scans", cert->scans},
                                        {"draws", cert->draws},
                                        {"exhausted", cert->exhausted},
                                        {"worst_margin", cert->worst_margin}};
        }
        write_json(out / "summary.json", summary);
    }
    return ok ? 0 : kExitFail;
}

struct TightnessArgs {
    std::string config;
    std::size_t replicates = 100;
    std::string phis;
    std::string out = "tightness";
};

int cmd_tightness(const TightnessArgs& a, const Globals& g) {
    auto loaded = load_experiment(a.config, g);
    auto& cfg = loaded.cfg;
    if (!a.phis.empty()) {
        cfg.phis = load_phis(a.phis);
        loaded.effective = config_to_json(cfg);
    }
    if (cfg.phis.empty()) throw ConfigError("phis", "need at least one test function");
    const fs::path out(a.out);
    const std::string hash = write_manifest_for(out / "manifest.json", "tightness", a.config, cfg.model.seed,
                                                a.replicates, a.out, loaded.effective);
    const std::size_t steps = cfg.model.steps();
    const auto triples = make_triples(steps, cfg.tightness.random_triples, cfg.model.seed);
    const std::size_t P = cfg.phis.size();
    const std::size_t R = a.replicates;

    // Pass over replicates at the configured N: decomposition, segment samples, loss modulus.
    struct Slot {
        std::vector<DecompositionReport> decomposition;
        std::vector<std::vector<double>> h, rhs;   // [phi][triple]
        double loss_modulus = 0.0;
    };
    std::vector<Slot> slots(R);
    parallel_for(R, g.jobs, [&](std::size_t r) {
        const auto ens = simulate(cfg.model, static_cast<std::uint32_t>(r));
        Slot& s = slots[r];
        s.decomposition.resize(P);
        s.h.resize(P);
        s.rhs.resize(P);
        for (std::size_t k = 0; k < P; ++k) {
            const auto& phi = cfg.phis[k].phi;
            s.decomposition[k] = decomposition_check(ens, phi, triples);
            segment_samples(ens, phi, triples, s.h[k], s.rhs[k]);
        }
        const auto loss = loss_process(ens);
        for (double d : cfg.tightness.deltas) s.loss_modulus = std::max(s.loss_modulus, m1_modulus(loss, d));
    });

    bool ok = true;
    json verdicts = json::object();
    double loss_modulus = 0.0;
    for (const auto& s : slots) loss_modulus = std::max(loss_modulus, s.loss_modulus);
    verdicts["loss_m1_modulus_zero"] = verdict(loss_modulus == 0.0);
    ok = ok && loss_modulus == 0.0;

    std::vector<double> spans;
    for (const auto& t : triples) spans.push_back(static_cast<double>(t[2] - t[0]) * cfg.model.dt);

    auto dec_csv = detail::open_for_write((out / "decomposition.csv").string());
    dec_csv << "phi,checks,max_violation,max_loss_segment,max_lhs,verdict\n";
    auto tail_csv = detail::open_for_write((out / "tail_exceedance.csv").string());
    tail_csv << "phi,eta,span,exceedance\n";
    auto fit_csv = detail::open_for_write((out / "tail_fit.csv").string());
    fit_csv << "phi,status,a,a_se,b,b_se,c,cells,outliers,markov_violations,verdict\n";
    auto fm_csv = detail::open_for_write((out / "fourth_moment.csv").string());
    fm_csv << "phi,N,lag,moment,particle_bound\n";
    auto fmfit_csv = detail::open_for_write((out / "fourth_moment_fit.csv").string());
    fmfit_csv << "phi,N,slope,slope_se,holder_violations,lipschitz_violations,few_replicates,verdict\n";
    auto ep_csv = detail::open_for_write((out / "endpoint.csv").string());
    ep_csv << "phi,N,delta,exceedance,mean_oscillation,stopped_part,loss_part,mean_loss,first_passage,first_passage_se\n";

    for (std::size_t k = 0; k < P; ++k) {
        const auto& name = cfg.phis[k].name;
        const auto& phi = cfg.phis[k].phi;

        DecompositionReport dec;
        std::vector<std::vector<double>> h(triples.size(), std::vector<double>(R));
        std::vector<std::vector<double>> rhs(triples.size(), std::vector<double>(R));
        for (std::size_t r = 0; r < R; ++r) {
            dec.merge(slots[r].decomposition[k]);
            for (std::size_t t = 0; t < triples.size(); ++t) {
                h[t][r] = slots[r].h[k][t];
                rhs[t][r] = slots[r].rhs[k][t];
            }
        }
        dec_csv << name << ',' << dec.checks << ',' << format_double(dec.max_violation) << ','
                << format_double(dec.max_loss_segment) << ',' << format_double(dec.max_lhs) << ','
                << verdict(dec.passes()) << '\n';
        verdicts["decomposition_" + name] = verdict(dec.passes());
        ok = ok && dec.passes();

        const auto fit = tail_exponent_fit(h, spans, cfg.tightness.etas, rhs);
        for (std::size_t e = 0; e < fit.etas.size(); ++e) {
            for (std::size_t t = 0; t < spans.size(); ++t) {
                tail_csv << name << ',' << format_double(fit.etas[e]) << ',' << format_double(spans[t]) << ','
                         << format_double(fit.exceedance[e][t]) << '\n';
            }
        }
        const char* status = fit.status == TailFitStatus::fitted ? "fitted"
                             : fit.status == TailFitStatus::vacuous ? "vacuous"
                                                                    : "insufficient";
        fit_csv << name << ',' << status << ',' << format_double(fit.a) << ',' << format_double(fit.a_se) << ','
                << format_double(fit.b) << ',' << format_double(fit.b_se) << ',' << format_double(fit.c) << ','
                << fit.cells << ',' << fit.outliers << ',' << fit.markov_violations << ',' << verdict(fit.passes())
                << '\n';
        verdicts["tail_fit_" + name] = verdict(fit.passes());
        ok = ok && fit.passes();

        const double lip = phi.lipschitz();
        for (std::size_t n : cfg.tightness.ladder) {
            ModelConfig m = cfg.model;
            m.particles = n;
            const auto fm = fourth_moment_scaling(m, phi, lip, cfg.lag_steps(), R, g.jobs);
            for (std::size_t l = 0; l < fm.lags.size(); ++l) {
                fm_csv << name << ',' << n << ',' << format_double(fm.lags[l]) << ',' << format_double(fm.moments[l])
                       << ',' << format_double(fm.particle_bound[l]) << '\n';
            }
            fmfit_csv << name << ',' << n << ',' << format_double(fm.fit.slope) << ',' << format_double(fm.fit.slope_se)
                      << ',' << fm.holder_violations << ',' << fm.lipschitz_violations << ','
                      << (fm.few_replicates ? 1 : 0) << ',' << verdict(fm.passes()) << '\n';
            verdicts["fourth_moment_" + name + "_N" + std::to_string(n)] = verdict(fm.passes());
            ok = ok && fm.passes();
        }

        const auto ep = endpoint_condition_check(cfg.model, cfg.tightness.ladder, phi, cfg.tightness.deltas, R,
                                                 cfg.tightness.endpoint_eta, g.jobs);
        for (const auto& c : ep.cells) {
            ep_csv << name << ',' << c.particles << ',' << format_double(c.delta) << ',' << format_double(c.exceedance)
                   << ',' << format_double(c.mean_oscillation) << ',' << format_double(c.stopped_part) << ','
                   << format_double(c.loss_part) << ',' << format_double(c.mean_loss) << ','
                   << format_double(c.first_passage) << ',' << format_double(c.first_passage_se) << '\n';
        }
        verdicts["endpoint_" + name] = verdict(ep.passes());
        ok = ok && ep.passes();
    }
    write_json(out / "summary.json", {{"manifest_hash", hash},
                                      {"kind", "tightness"},
                                      {"replicates", R},
                                      {"triples", triples.size()},
                                      {"verdicts", verdicts},
                                      {"verdict", verdict(ok)}});
    std::cout << "tightness: " << R << " replicate(s), " << triples.size() << " triples -> " << a.out << ", verdict "
              << verdict(ok) << '\n';
    return ok ? 0 : kExitFail;
}

struct SpdeArgs {
    std::string config;
    std::uint32_t wseed = 0;
    std::string out = "sol.csv";
};

int cmd_spde(const SpdeArgs& a, const Globals& g) {
    const auto loaded = load_experiment(a.config, g);
    const auto& cfg = loaded.cfg;
    const fs::path out(a.out);
    const fs::path stem = out.parent_path() / out.stem();
    json effective = loaded.effective;
    effective["wseed"] = a.wseed;
    const std::string hash = write_manifest_for(stem.string() + ".manifest.json", "spde", a.config, cfg.model.seed, 1,
                                                a.out, effective);

    // Common noise of replicate `wseed`: the same increments simulate() draws.
    const std::size_t steps = cfg.model.steps();
    const RandomStream w(cfg.model.seed, a.wseed, 0);
    const double sqdt = std::sqrt(cfg.model.dt);
    std::vector<double> dW(steps);
    for (std::size_t s = 0; s < steps; ++s) dW[s] = sqdt * w.normal(static_cast<std::uint32_t>(s));
    const auto sol = solve_density(dW, cfg.model.dt, cfg.model.rho, cfg.model.initial, cfg.spde.grid);

    std::vector<double> snaps = cfg.spde.snapshots;
    if (snaps.empty()) snaps.push_back(cfg.model.horizon);
    auto os = detail::open_for_write(out.string());
    os << "t,x,v\n";
    for (double t : snaps) {
        const auto gi = static_cast<std::size_t>(std::llround(t / cfg.model.dt));
        const auto v = sol.at(gi);
        for (std::size_t j = 0; j < sol.nodes; ++j) {
            os << format_double(sol.times[gi]) << ',' << format_double(sol.x(j)) << ',' << format_double(v[j]) << '\n';
        }
    }
    save_path(stem.string() + "_loss.csv", sol.loss_path());
    // Mass accounting including the far field: int v + L + L_far = 1 - initial deficit (+ clipped mass).
    double worst_balance = 0.0;
    for (std::size_t s = 0; s <= steps; ++s) {
        const double e = sol.mass(s) + sol.loss[s] + sol.far_loss[s] - (1.0 - sol.initial_deficit);
        worst_balance = std::max(worst_balance, std::abs(e));
    }
    const double far = sol.far_loss.back();
    const bool ok = worst_balance <= 1e-6 * std::max(cfg.model.horizon, 1.0) + sol.clipped_mass;
    write_json(stem.string() + "_summary.json", {{"manifest_hash", hash},
                                                {"kind", "spde"},
                                                {"substeps", sol.substeps},
                                                {"nodes", sol.nodes},
                                                {"final_mass", sol.mass(steps)},
                                                {"final_loss", sol.loss.back()},
                                                {"far_loss", far},
                                                {"initial_deficit", sol.initial_deficit},
                                                {"clipped_mass", sol.clipped_mass},
                                                {"max_balance_error", worst_balance},
                                                {"verdict", verdict(ok)}});
    std::cout << "spde: " << sol.nodes << " nodes, " << sol.substeps << " substep(s), final loss "
              << format_double(sol.loss.back()) << ", verdict " << verdict(ok) << '\n';
    return ok ? 0 : kExitFail;
}

struct ConvergeArgs {
    std::string config;
    std::string out = "converge";
};

int cmd_converge(const ConvergeArgs& a, const Globals& g) {
    const auto loaded = load_experiment(a.config, g);
    const auto& cfg = loaded.cfg;
    const fs::path out(a.out);
    const std::string hash = write_manifest_for(out / "manifest.json", "converge", a.config, cfg.model.seed,
                                                cfg.converge.seeds, a.out, loaded.effective);
    std::vector<std::uint32_t> seeds(cfg.converge.seeds);
    for (std::size_t s = 0; s < seeds.size(); ++s) seeds[s] = static_cast<std::uint32_t>(s);
    RefineOptions refine;
    refine.tol = cfg.converge.tol;
    refine.max_grid = cfg.converge.max_grid;

    // Seeds are independent; run them on the pool and merge in seed order.
    std::vector<ConvergenceReport> parts(seeds.size());
    parallel_for(seeds.size(), g.jobs, [&](std::size_t s) {
        parts[s] = convergence_study(cfg.model, cfg.converge.ladder, {seeds[s]}, cfg.phi(cfg.converge.phi),
                                     cfg.spde.grid, refine);
    });
    ConvergenceReport rep;
    rep.particles = cfg.converge.ladder;
    rep.seeds = seeds;
    rep.distances.assign(rep.particles.size(), {});
    rep.converged.assign(rep.particles.size(), true);
    for (const auto& p : parts) {
        for (std::size_t k = 0; k < rep.particles.size(); ++k) {
            rep.distances[k].push_back(p.distances[k][0]);
            if (!p.converged[k]) rep.converged[k] = false;
        }
    }
    for (const auto& row : rep.distances) rep.medians.push_back(median(row));

    auto csv = detail::open_for_write((out / "distances.csv").string());
    csv << "N,seed,distance\n";
    for (std::size_t k = 0; k < rep.particles.size(); ++k) {
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            csv << rep.particles[k] << ',' << seeds[s] << ',' << format_double(rep.distances[k][s]) << '\n';
        }
    }
    const bool ok = rep.strictly_decreasing();
    json rungs = json::array();
    for (std::size_t k = 0; k < rep.particles.size(); ++k) {
        rungs.push_back({{"N", rep.particles[k]}, {"median", rep.medians[k]}, {"refinement_converged", static_cast<bool>(rep.converged[k])}});
    }
    write_json(out / "summary.json",
               {{"manifest_hash", hash}, {"kind", "converge"}, {"rungs", rungs}, {"verdict", verdict(ok)}});
    std::cout << "N,median_distance\n";
    for (std::size_t k = 0; k < rep.particles.size(); ++k) {
        std::cout << rep.particles[k] << ',' << format_double(rep.medians[k]) << '\n';
    }
    std::cout << "verdict " << verdict(ok) << '\n';
    return ok ? 0 : kExitFail;
}

std::string version_text() {
    std::ostringstream os;
    os << "m1lab " << kToolVersion << " (path-csv " << kPathCsvFormat << ", coefficient-csv " << kCoefficientCsvFormat
       << ", manifest " << kManifestFormat << ", raw-ensemble " << kRawEnsembleVersion << ")";
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"M1-topology path metrics, particle simulation and tightness diagnostics"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", version_text());

    Globals g;
    std::uint64_t seed_flag = 0;
    app.add_option("--jobs,-j", g.jobs, "worker threads (0 = all cores)")->capture_default_str();
    auto* seed_opt = app.add_option("--seed", seed_flag, "master seed (falls back to the config, then M1LAB_SEED)");

    bool defaults = false;
    bool as_json = false;
    auto* config_cmd = app.add_subcommand("config", "print configuration");
    config_cmd->add_flag("--defaults", defaults, "print every default")->required();
    config_cmd->add_flag("--json", as_json, "JSON instead of TOML");

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "simulate replicates of the particle system");
    sim_cmd->add_option("--config", sim.config, "TOML or JSON config");
    sim_cmd->add_option("--replicates", sim.replicates)->capture_default_str()->check(CLI::PositiveNumber);
    sim_cmd->add_option("--out", sim.out)->capture_default_str();
    sim_cmd->add_flag("--raw", sim.raw, "also write raw.bin per replicate");

    DistanceArgs dist;
    auto* dist_cmd = app.add_subcommand("distance", "M1 distance between two path CSVs");
    dist_cmd->add_option("a", dist.a)->required();
    dist_cmd->add_option("b", dist.b)->required();
    dist_cmd->add_option("--tol", dist.tol)->capture_default_str()->check(CLI::PositiveNumber);
    dist_cmd->add_option("--max-grid", dist.max_grid)->capture_default_str()->check(CLI::Range(16, 1 << 16));
    dist_cmd->add_option("--testset", dist.testset, "CSV of coefficient vectors (vector paths)");
    dist_cmd->add_option("--manifest", dist.manifest, "write a manifest to this file");

    ModulusArgs mod;
    auto* mod_cmd = app.add_subcommand("modulus", "modulus of a path CSV");
    mod_cmd->add_option("path", mod.path)->required();
    mod_cmd->add_option("--delta", mod.delta)->capture_default_str();
    mod_cmd->add_option("--kind", mod.kind)->capture_default_str()->check(CLI::IsMember({"m1", "j1", "endpoint"}));
    mod_cmd->add_option("--manifest", mod.manifest, "write a manifest to this file");

    ModulusBoundArgs lem;
    auto* lem_cmd = app.add_subcommand("lemma34", "finite-dimensional reduction of the vector M1 modulus");
    lem_cmd->add_option("--n", lem.n)->capture_default_str();
    lem_cmd->add_option("--p", lem.p)->capture_default_str();
    lem_cmd->add_option("--eps", lem.eps)->capture_default_str();
    lem_cmd->add_option("--paths", lem.paths, "directory of vector path CSVs")->required();
    lem_cmd->add_option("--delta", lem.delta)->capture_default_str();
    lem_cmd->add_option("--trials", lem.trials, "net certification pairs")->capture_default_str();
    lem_cmd->add_option("--increments", lem.increments, "times s for the increment version");
    lem_cmd->add_option("--out", lem.out, "report directory");

    TightnessArgs tight;
    auto* tight_cmd = app.add_subcommand("tightness", "tightness diagnostics");
    tight_cmd->add_option("--config", tight.config);
    tight_cmd->add_option("--replicates", tight.replicates)->capture_default_str()->check(CLI::PositiveNumber);
    tight_cmd->add_option("--phis", tight.phis, "directory of coefficient CSVs");
    tight_cmd->add_option("--out", tight.out)->capture_default_str();

    SpdeArgs spde;
    auto* spde_cmd = app.add_subcommand("spde", "solve the limit equation for one common-noise path");
    spde_cmd->add_option("--config", spde.config);
    spde_cmd->add_option("--wseed", spde.wseed, "replicate whose common noise drives the solve")->capture_default_str();
    spde_cmd->add_option("--out", spde.out)->capture_default_str();

    ConvergeArgs conv;
    auto* conv_cmd = app.add_subcommand("converge", "M1 distance between particle and limit projections");
    conv_cmd->add_option("--config", conv.config);
    conv_cmd->add_option("--out", conv.out)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }
    if (seed_opt->count() > 0) g.seed = seed_flag;

    try {
        if (*config_cmd) return cmd_config(as_json);
        if (*sim_cmd) return cmd_simulate(sim, g);
        if (*dist_cmd) return cmd_distance(dist, g);
        if (*mod_cmd) return cmd_modulus(mod, g);
        if (*lem_cmd) return cmd_lemma34(lem, g);
        if (*tight_cmd) return cmd_tightness(tight, g);
        if (*spde_cmd) return cmd_spde(spde, g);
        if (*conv_cmd) return cmd_converge(conv, g);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitConfig;
}
