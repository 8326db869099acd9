#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "critwave/experiments.hpp"
#include "critwave/io.hpp"

using namespace critwave;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

RunConfig resolve(const Common& c)
{
    RunConfig cfg = c.config.empty() ? parse_config("") : load_config(c.config);
    if (!c.out.empty()) cfg.out = c.out;
    if (c.seed) cfg.random_seed = *c.seed;
    if (c.threads) cfg.threads = *c.threads;
    cfg.validate();
    return cfg;
}

fs::path prepare_out(const RunConfig& cfg)
{
    fs::path dir(cfg.out);
    fs::create_directories(dir);
    return dir;
}

ojson header(const char* kind, const RunConfig& cfg, const Background& bg, const DistanceParams& p)
{
    const Grid& g = *bg.grid();
    ojson j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = kind;
    j["dimension"] = g.dim();
    j["grid"] = {{"n", g.size()}, {"r_max", g.r_max()}, {"h", g.h()}};
    j["k"] = bg.k();
    j["J_W"] = bg.J_W();
    j["grad_sq_W"] = bg.ground.grad_sq;
    j["distance"] = distance_json(p);
    j["identity"] = {{"C1", cfg.identity.C1}, {"C2", cfg.identity.C2}, {"grad_cap", cfg.identity.grad_cap}};
    return j;
}

Background build(const RunConfig& cfg)
{
    return make_background(make_grid(cfg.dimension, cfg.n, cfg.grid_r_max()), cfg.spectral);
}

int cmd_spectrum(const RunConfig& cfg)
{
    const fs::path dir = prepare_out(cfg);
    const Background bg = build(cfg);
    ojson j = eigenpair_json(bg, config_json(cfg));
    j["config_source"] = cfg.source;
    write_json(dir / "eigenpair.json", j);

    CsvTable t(dir / "refinement.csv", kRefinementSchema,
               {"n", "h", "k", "k2", "residual", "negative_count", "static_residual", "k_step"});
    double prev = NAN;
    for (std::size_t n : cfg.refinement) {
        const Background b = make_background(make_grid(cfg.dimension, n, cfg.grid_r_max()), cfg.spectral);
        const Eigenpair& e = b.mode.pair();
        t.row({std::to_string(n), fmt_double(b.grid()->h()), fmt_double(e.k), fmt_double(e.k2()), fmt_double(e.residual),
               std::to_string(e.negative_count), fmt_double(static_residual(b.ground)),
               fmt_double(std::isnan(prev) ? NAN : std::abs(e.k - prev))});
        prev = e.k;
    }
    std::printf("k = %.12g  k^2 = %.12g  residual = %.3e  negative eigenvalues = %zu\n", bg.k(), bg.mode.k2(),
                bg.mode.pair().residual, bg.mode.pair().negative_count);
    return 0;
}

SeedSpec seed_from(const RunConfig& cfg, const Background& bg)
{
    SeedSpec s;
    s.a = cfg.seed.a;
    s.b = cfg.seed.b_in_k_units ? cfg.seed.b * bg.k() : cfg.seed.b;
    s.nu = cfg.seed.nu;
    s.amplitude_bound = cfg.seed.amplitude_bound;
    if (cfg.seed.f.norm > 0.0) s.f = with_grad_norm(bump(bg.grid(), cfg.seed.f.center, cfg.seed.f.width), cfg.seed.f.norm);
    if (cfg.seed.g.norm > 0.0) s.g = with_L2_norm(bump(bg.grid(), cfg.seed.g.center, cfg.seed.g.width), cfg.seed.g.norm);
    return s;
}

int cmd_evolve(const RunConfig& cfg)
{
    const fs::path dir = prepare_out(cfg);
    const Background bg = build(cfg);
    const DistanceParams p = cfg.distance_params(bg.ground.grad_norm());
    const SeedSpec spec = seed_from(cfg, bg);
    const TrajectoryRecord rec = evolve(seed_state(spec, p, bg), cfg.evolve, p, bg);
    write_trajectory_csv(dir / "trajectory.csv", rec.rows);

    ojson j = header("evolve", cfg, bg, p);
    j["seed"] = {{"a", spec.a},
                 {"b", spec.b},
                 {"nu", spec.nu},
                 {"mu_plus", mu_plus(spec.a, spec.b, bg.k())},
                 {"mu_minus", mu_minus(spec.a, spec.b, bg.k())}};
    j["record"] = record_json(rec, true);
    j["one_pass"] = audit_json(one_pass_audit(rec.rows, p.delta_star));
    j["trajectories"] = ojson::array({{{"id", "seed"}, {"forward", "trajectory.csv"}, {"backward", nullptr}}});
    j["config"] = config_json(cfg);
    j["config_source"] = cfg.source;
    write_json(dir / "summary.json", j);
    std::printf("%s at t = %.4g (%s), %zu rows\n", outcome_name(rec.outcome).c_str(), rec.outcome_time, rec.cause.c_str(),
                rec.rows.size());
    return 0;
}

int cmd_sweep(const RunConfig& cfg)
{
    const fs::path dir = prepare_out(cfg);
    fs::create_directories(dir / "trajectories");
    const Background bg = build(cfg);
    const DistanceParams p = cfg.distance_params(bg.ground.grad_norm());

    SweepConfig sc;
    sc.amplitude = cfg.sweep.amplitude;
    sc.probes = cfg.sweep.probes;
    sc.probe_ratio = cfg.sweep.probe_ratio;
    sc.bump_ratio = cfg.sweep.bump_ratio;
    sc.blowup_sign = cfg.sweep.blowup_sign;
    sc.threads = cfg.threads;
    sc.evolve = cfg.evolve;
    const QuadrantReport rep = quadrant_sweep(quadrant_cells(sc.amplitude, bg.k()), sc, p, bg);

    const auto seeds = random_hx_seeds(cfg.sweep.random_seeds, cfg.random_seed, cfg.sweep.random_a_min,
                                       cfg.sweep.random_a_max, p, bg);
    std::vector<BothWays> random_runs(seeds.size());
    parallel_for(seeds.size(), cfg.threads,
                 [&](std::size_t i) { random_runs[i] = evolve_both_ways(seeds[i].state, cfg.evolve, p, bg); });

    ojson trajectories = ojson::array();
    std::size_t one_pass_fail = 0;
    auto emit = [&](const std::string& id, const BothWays& r, ojson extra) {
        const std::string fw = "trajectories/" + id + "_forward.csv", bw = "trajectories/" + id + "_backward.csv";
        write_trajectory_csv(dir / fw, r.forward.rows);
        write_trajectory_csv(dir / bw, r.backward.rows);
        const OnePassAudit a = one_pass_audit(join_trajectory(r.backward, r.forward), p.delta_star);
        if (!a.pass()) ++one_pass_fail;
        ojson e;
        e["id"] = id;
        for (auto& [k, v] : extra.items()) e[k] = v;
        e["forward"] = fw;
        e["backward"] = bw;
        e["forward_record"] = record_json(r.forward, true);
        e["backward_record"] = record_json(r.backward, false);
        e["one_pass"] = audit_json(a);
        trajectories.push_back(e);
    };
    for (const SweepRun& r : rep.runs)
        emit(r.id, r.record, {{"kind", "quadrant"}, {"cell", r.cell}, {"a", r.a}, {"b", r.b}, {"bump_norm", r.bump_norm}});
    for (std::size_t i = 0; i < seeds.size(); ++i)
        emit("random" + std::to_string(i), random_runs[i], {{"kind", "random_" + seeds[i].kind}});

    CsvTable m(dir / "quadrant_matrix.csv", kQuadrantSchema,
               {"cell", "a", "b", "mu_plus", "mu_minus", "backward", "forward", "predicted_backward", "predicted_forward",
                "consistent", "open"});
    ojson cells = ojson::array();
    for (std::size_t c = 0; c < rep.cells.size(); ++c) {
        const QuadrantCell& q = rep.cells[c];
        m.row({std::to_string(c), fmt_double(q.a), fmt_double(q.b), fmt_double(q.mu_plus), fmt_double(q.mu_minus),
               outcome_name(q.backward, false), outcome_name(q.forward, true), outcome_name(q.predicted_backward, false),
               outcome_name(q.predicted_forward, true), q.consistent() ? "1" : "0", q.open ? "1" : "0"});
        ojson runs = ojson::array();
        for (std::size_t r : q.runs) runs.push_back(rep.runs[r].id);
        cells.push_back({{"a", q.a},
                         {"b", q.b},
                         {"mu_plus", q.mu_plus},
                         {"mu_minus", q.mu_minus},
                         {"backward", outcome_name(q.backward, false)},
                         {"forward", outcome_name(q.forward, true)},
                         {"predicted_backward", outcome_name(q.predicted_backward, false)},
                         {"predicted_forward", outcome_name(q.predicted_forward, true)},
                         {"consistent", q.consistent()},
                         {"open", q.open},
                         {"runs", runs}});
    }

    ojson j = header("sweep", cfg, bg, p);
    j["quadrant"] = {{"cells", cells},
                     {"distinct_pairs", rep.distinct_pairs()},
                     {"all_determined", rep.all_determined()},
                     {"all_consistent", rep.all_consistent()},
                     {"all_open", rep.all_open()}};
    j["one_pass_failures"] = one_pass_fail;
    j["trajectories"] = trajectories;
    j["config"] = config_json(cfg);
    j["config_source"] = cfg.source;
    write_json(dir / "summary.json", j);

    for (std::size_t c = 0; c < rep.cells.size(); ++c)
        std::printf("cell %zu  mu+ = %+.4f  mu- = %+.4f  %s%s\n", c, rep.cells[c].mu_plus, rep.cells[c].mu_minus,
                    rep.cells[c].pair_label().c_str(), rep.cells[c].open ? "" : "  (probe disagreement)");
    std::printf("distinct pairs %zu, one-pass failures %zu of %zu trajectories\n", rep.distinct_pairs(), one_pass_fail,
                trajectories.size());
    return rep.distinct_pairs() == 4 && rep.all_consistent() && one_pass_fail == 0 ? 0 : 1;
}

int cmd_audit(const std::string& run_dir)
{
    ojson rep;
    try {
        rep = audit_run(run_dir);
    } catch (const CorruptRun& e) {
        std::cout << e.to_json().dump(2) << '\n';
        return 2;
    }
    write_json(fs::path(run_dir) / "audit.json", rep);
    std::printf("audit %s: %zu trajectories, one-pass failures %zu, identity failures %zu\n",
                rep["status"].get<std::string>().c_str(), rep["trajectories"].size(),
                rep["one_pass_failures"].get<std::size_t>(), rep["identity_failures"].get<std::size_t>());
    return rep["status"] == "pass" ? 0 : 1;
}

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--config", c.config, "configuration file (YAML)")->check(CLI::ExistingFile);
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--seed", c.seed, "random seed");
    sub->add_option("--threads", c.threads, "worker threads (0: hardware concurrency)");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"radial energy-critical focusing wave equation near the ground state"};
    app.require_subcommand(1);
    Common spectrum_o, evolve_o, sweep_o;
    std::string audit_dir;
    auto* spectrum = app.add_subcommand("spectrum", "ground state eigenpair and refinement table");
    add_common(spectrum, spectrum_o);
    auto* evolve_c = app.add_subcommand("evolve", "evolve one seed and record diagnostics");
    add_common(evolve_c, evolve_o);
    auto* sweep = app.add_subcommand("sweep", "four-quadrant sweep plus random H_X ensemble");
    add_common(sweep, sweep_o);
    auto* audit = app.add_subcommand("audit", "recompute audits from a run directory");
    audit->add_option("run_dir", audit_dir, "run directory")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*spectrum) return cmd_spectrum(resolve(spectrum_o));
        if (*evolve_c) return cmd_evolve(resolve(evolve_o));
        if (*sweep) return cmd_sweep(resolve(sweep_o));
        if (*audit) return cmd_audit(audit_dir);
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const CorruptRun& e) {
        std::cout << e.to_json().dump(2) << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
