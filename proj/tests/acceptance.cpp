// Acceptance run: one PASS/FAIL line per criterion, exit status 0 iff all pass.

#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "critwave/experiments.hpp"

using namespace critwave;

namespace {

// tolerances
constexpr double kStaticResidualTol = 1e-4;
constexpr double kMinOrder = 2.0;
constexpr double kEigenResidualTol = 1e-6;
constexpr double kZeroModeOverlapTol = 1e-5;
constexpr double kHIdentityTol = 1e-10;
constexpr double kVirialOnFamilyTol = 1e-6;
constexpr double kExpansionTol = 1e-8;
constexpr double kSolveLambdaTol = 1e-6;
constexpr double kOrthogonalityTol = 1e-8;
constexpr double kD0OracleTol = 1e-4;
constexpr double kEnergyDriftTol = 1e-4;
constexpr double kDriftRatioLo = 3.3, kDriftRatioHi = 4.7;
constexpr double kLeakTol = 1e-8;
constexpr double kCovarianceFactor = 2.0;
constexpr double kEjectionRateTol = 0.10;
constexpr std::size_t kRandomSeeds = 50;
constexpr std::size_t kVariationalStates = 200;

// calibrated constants (fixtures)
constexpr double kIdentityC1 = 13.0, kIdentityC2 = 24.0, kIdentityGradCap = 1.1;
constexpr double kEjectionDriftC = 0.5;
constexpr double kFrozenK2 = 1.2103679049;   // d = 3 shooting oracle

struct Result {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...)
{
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

struct Context {
    GridPtr grid;
    Background bg;
    DistanceParams p;
    unsigned threads;
};

RadialField random_field(const GridPtr& grid, std::mt19937_64& rng, double scale = 1.0)
{
    std::uniform_real_distribution<double> U(0.0, 1.0);
    RadialField f(grid);
    for (int j = 0; j < 3; ++j) {
        const double c = 8.0 * U(rng), w = 0.5 + 3.0 * U(rng), a = 2.0 * U(rng) - 1.0;
        f = f.axpy(scale * a, bump(grid, c, w));
    }
    return f;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

double max_drift(const TrajectoryRecord& rec)
{
    double m = 0.0;
    for (const auto& r : rec.rows) m = std::max(m, std::abs(r.E - rec.E0));
    return m / std::abs(rec.E0);
}

RadialField every_other(const RadialField& fine, const GridPtr& coarse)
{
    std::vector<double> v(coarse->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = fine[2 * i];
    return RadialField(coarse, std::move(v));
}

// ------------------------------------------------------------------ 1

Result static_residual_check(const Context& c)
{
    const double r1 = static_residual(make_W(make_grid(3, 1024, 64.0)));
    const double r2 = static_residual(c.bg.ground);
    const double order = std::log2(r1 / r2);
    return {r2 < kStaticResidualTol && order >= kMinOrder, fmt("residual %.3e (N=2048), order %.2f", r2, order)};
}

// ------------------------------------------------------------------ 2

Result eigenpair_check(const Context& c)
{
    const Eigenpair& e = c.bg.mode.pair();
    const double overlap = std::abs(inner(e.rho, c.bg.ground.LambdaW));
    std::vector<double> k;
    for (std::size_t n : {512u, 1024u}) k.push_back(ground_eigenpair(make_W(make_grid(3, n, 64.0))).k);
    k.push_back(c.bg.k());
    k.push_back(ground_eigenpair(make_W(make_grid(3, 4096, 64.0))).k);
    double min_ratio = INFINITY;
    for (std::size_t i = 0; i + 2 < k.size(); ++i)
        min_ratio = std::min(min_ratio, std::abs(k[i + 1] - k[i]) / std::abs(k[i + 2] - k[i + 1]));
    const double oracle = rel(e.k2(), kFrozenK2);
    const bool ok = e.residual < kEigenResidualTol && e.negative_count == 1 && overlap < kZeroModeOverlapTol &&
                    min_ratio >= std::pow(2.0, kMinOrder) && oracle < 1e-6;
    return {ok, fmt("k^2 %.10f (oracle rel %.1e), residual %.2e, negatives %zu, <rho|LW> %.1e, Cauchy ratio min %.2f",
                    e.k2(), oracle, e.residual, e.negative_count, overlap, min_ratio)};
}

// ------------------------------------------------------------------ 3

Result functional_check(const Context& c)
{
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double worst_H = 0.0;
    for (int i = 0; i < 50; ++i) {
        const RadialField f = random_field(c.grid, rng, 0.5 + 0.05 * i);
        const double H = h_functional(f);
        worst_H = std::max(worst_H, std::abs(H - (static_energy(f) - virial(f) / c.grid->pstar())) / std::abs(H));
    }
    double worst_K = 0.0;
    for (double lam : {0.5, 1.0, 2.0})
        worst_K = std::max(worst_K, std::abs(virial(W_lambda(c.bg.ground, lam))) / c.bg.ground.grad_sq);
    double worst_E = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double lam = std::pow(2.0, 2.0 * U(rng) - 1.0);
        const double amp = std::pow(10.0, -3.0 + 1.5 * U(rng));
        const RadialField v = with_grad_norm(random_field(c.grid, rng), amp * c.bg.ground.grad_norm());
        const RadialField w = with_L2_norm(random_field(c.grid, rng), amp);
        worst_E = std::max(worst_E, energy_expansion(PhaseState(W_lambda(c.bg.ground, lam) + v, w), lam, c.bg).rel_diff);
    }
    return {worst_H < kHIdentityTol && worst_K < kVirialOnFamilyTol && worst_E < kExpansionTol,
            fmt("H identity %.1e, K(W_lam)/|grad W|^2 %.1e, expansion %.1e", worst_H, worst_K, worst_E)};
}

// ------------------------------------------------------------------ 4

PhaseState near_state(const Context& c, std::mt19937_64& rng, double eps)
{
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double lam = std::pow(2.0, 2.0 * U(rng) - 1.0);
    const double a = (2.0 * U(rng) - 1.0) * eps;
    const RadialField f = with_grad_norm(random_field(c.grid, rng), eps * U(rng) * c.bg.ground.grad_norm());
    const RadialField g = with_L2_norm(random_field(c.grid, rng), eps * U(rng));
    PhaseState s(W_lambda(c.bg.ground, lam).axpy(a, c.bg.mode.rho_lambda(lam)) + f, g);
    return U(rng) < 0.5 ? s.negated() : s;
}

Result modulation_check(const Context& c)
{
    double worst_lam = 0.0;
    for (double lam : {0.5, 1.0, 2.0}) {
        const PhaseState s = PhaseState::at_rest(W_lambda(c.bg.ground, lam));
        worst_lam = std::max(worst_lam, rel(solve_lambda(s, Side::Plus, c.bg, 1.05 * lam), lam));
        worst_lam = std::max(worst_lam, rel(solve_lambda(s.negated(), Side::Minus, c.bg, 0.95 * lam), lam));
    }
    std::mt19937_64 rng(101);
    double worst_orth = 0.0;
    std::size_t odd = 0;
    for (int i = 0; i < 100; ++i) {
        const PhaseState s = near_state(c, rng, 0.02);
        worst_orth = std::max(worst_orth, decompose(s, c.bg).orth_residual);
        if (distance_dS(s, c.p, c.bg) != distance_dS(s.negated(), c.p, c.bg)) ++odd;
    }
    const PhaseState s = PhaseState::at_rest(c.bg.ground.W.axpy(0.05, c.bg.mode.rho()));
    const double v = d0(s).value;
    double best = INFINITY;
    const int n = 6000;
    for (int i = 0; i <= n; ++i) {
        const double nu = 0.8 * std::pow(1.25 / 0.8, static_cast<double>(i) / n);
        best = std::min(best, grad_sq(s.u - W_lambda(c.bg.ground, nu)));
    }
    const double d0_err = rel(v, std::sqrt(best));
    return {worst_lam < kSolveLambdaTol && worst_orth < kOrthogonalityTol && odd == 0 && d0_err < kD0OracleTol,
            fmt("lambda recovery %.1e, orthogonality %.1e, d_S parity failures %zu, d0 vs dense %.1e", worst_lam,
                worst_orth, odd, d0_err)};
}

// ------------------------------------------------------------------ 5

Result flow_check(const Context& c)
{
    const PhaseState s0 = PhaseState::at_rest(c.bg.ground.W.axpy(-0.02, c.bg.mode.rho()));
    EvolveConfig e;
    e.T = 20.0;
    e.record_every = 4;
    e.modulation = false;
    e.scatter_window = 1e9;
    const double d1 = max_drift(evolve(s0, e, c.p, c.bg));
    e.cfl = 0.25;
    e.record_every = 8;
    const double d2 = max_drift(evolve(s0, e, c.p, c.bg));

    std::vector<double> bump_v = RadialField::sample(c.grid, [](double r) {
                                     return r < 4.0 ? 0.5 * std::pow(1.0 - r * r / 16.0, 4) : 0.0;
                                 }).vec();
    c.grid->fix_origin(bump_v);
    const PhaseState b0 = PhaseState::at_rest(RadialField(c.grid, std::move(bump_v)));
    double leak = 0.0;
    for (double T : {5.0, 10.0, 20.0}) leak = std::max(leak, exterior_energy(integrate(b0, T, 0.5), 4.0 + T + 0.5));

    // A = evolve(T_nu u0, t/nu), B = T_nu evolve(u0, t); refinement errors of both sides from the 2N-1 grid
    const double nu = 2.0, t = 4.0;
    const GridPtr fine = make_grid(3, 2 * c.grid->size() - 1, c.grid->r_max());
    const Background bf = make_background(fine);
    const PhaseState u2 = PhaseState::at_rest(bf.ground.W.axpy(-0.02, bf.mode.rho()));
    const PhaseState A = integrate(rescale_state(s0, nu), t / nu, 0.5);
    const PhaseState A2 = integrate(rescale_state(u2, nu), t / nu, 0.5);
    const PhaseState O = integrate(s0, t, 0.5), O2 = integrate(u2, t, 0.5);
    const PhaseState B = rescale_state(O, nu);
    const double eA = norm_grad(A.u - every_other(A2.u, c.grid));
    const double eO = norm_grad(O.u - every_other(O2.u, c.grid));
    const double cov = norm_grad(A.u - B.u) / std::max(eA, eO);

    const double ratio = d1 / d2;
    return {d1 < kEnergyDriftTol && ratio > kDriftRatioLo && ratio < kDriftRatioHi && leak < kLeakTol &&
                cov <= kCovarianceFactor,
            fmt("drift %.2e, dt-halving ratio %.2f, leak %.1e, covariance %.2f x discretization error", d1, ratio, leak,
                cov)};
}

// ------------------------------------------------------------------ 6

Result identity_check(const Context& c)
{
    EvolveConfig e;
    e.T = 40.0;
    e.record_every = 2;
    e.modulation = false;
    std::string detail;
    bool ok = true;
    for (double a : {-0.02, 0.02}) {
        SeedSpec s;
        s.a = a;
        const TrajectoryRecord rec = evolve(seed_state(s, c.p, c.bg), e, c.p, c.bg);
        const auto res = identity_residuals(rec.rows, kIdentityGradCap * c.bg.ground.grad_norm());
        const IdentityBound b = check_identity_bound(res, kIdentityC1, kIdentityC2, rec.h);
        ok = ok && b.pass() && res.size() >= 10;
        detail += fmt("%s%s: %zu rows, worst ratio %.2f at t=%.2f", detail.empty() ? "" : "; ",
                      outcome_name(rec.outcome).c_str(), res.size(), b.worst_ratio, b.worst_t);
    }
    return {ok, fmt("C1=%g C2=%g; ", kIdentityC1, kIdentityC2) + detail};
}

// ------------------------------------------------------------------ 7

Result ejection_check(const Context& c)
{
    EvolveConfig e;
    e.T = 12.0;
    e.record_every = 4;
    bool ok = true;
    double worst_rel = 0.0, worst_drift = 0.0;
    double rate[2] = {0.0, 0.0};
    int idx = 0;
    for (double nu : {1.0, 2.0}) {
        for (double sign : {1.0, -1.0}) {
            SeedSpec s;
            s.a = sign * 0.5 * c.p.delta_M;
            s.nu = nu;
            const EjectionFit f = ejection_fit(evolve(seed_state(s, c.p, c.bg), e, c.p, c.bg).rows, c.p, c.bg);
            worst_rel = std::max(worst_rel, f.rel_err);
            worst_drift = std::max(worst_drift, f.lambda_drift);
            ok = ok && f.sigma_consistent;
            rate[idx] += 0.5 * f.rate;
        }
        ++idx;
    }
    const double doubling = rate[1] / rate[0];
    ok = ok && worst_rel < kEjectionRateTol && std::abs(doubling / 2.0 - 1.0) < kEjectionRateTol &&
         worst_drift <= kEjectionDriftC * c.p.delta_H;
    return {ok, fmt("rate vs k lambda %.3f, nu=2/nu=1 rate %.3f, lambda drift %.2e (bound %.1e)", worst_rel, doubling,
                    worst_drift, kEjectionDriftC * c.p.delta_H)};
}

// ---------------------------------------------------------------- 8, 9

QuadrantReport run_sweep(const Context& c)
{
    SweepConfig sc;
    sc.amplitude = 0.02;
    sc.threads = c.threads;
    sc.evolve.T = 40.0;
    return quadrant_sweep(quadrant_cells(sc.amplitude, c.bg.k()), sc, c.p, c.bg);
}

Result quadrant_check(const QuadrantReport& rep)
{
    std::string pairs;
    for (const auto& cell : rep.cells)
        pairs += fmt("%s(%+.2f,%+.2f) %s", pairs.empty() ? "" : ", ", cell.mu_minus, cell.mu_plus, cell.pair_label().c_str());
    return {rep.distinct_pairs() == 4 && rep.all_determined() && rep.all_consistent() && rep.all_open(),
            fmt("%zu distinct pairs, consistent %d, open %d; (mu-,mu+): ", rep.distinct_pairs(), rep.all_consistent(),
                rep.all_open()) +
                pairs};
}

Result one_pass_check(const Context& c, const QuadrantReport& rep)
{
    const auto seeds = random_hx_seeds(kRandomSeeds, 7, 0.002, 0.02, c.p, c.bg);
    EvolveConfig e;
    e.T = 40.0;
    std::vector<BothWays> runs(seeds.size());
    parallel_for(seeds.size(), c.threads, [&](std::size_t i) { runs[i] = evolve_both_ways(seeds[i].state, e, c.p, c.bg); });

    std::size_t total = 0;
    std::string violations;
    auto audit = [&](const std::string& id, const BothWays& r) {
        ++total;
        const OnePassAudit a = one_pass_audit(join_trajectory(r.backward, r.forward), c.p.delta_star);
        if (a.pass()) return;
        std::ostringstream os;
        os << " [" << id << ": changes " << a.sign_changes << " entries " << a.tube_entries << " exits " << a.tube_exits
           << " at t =";
        for (double t : a.change_times) os << ' ' << t;
        os << ']';
        violations += os.str();
    };
    for (const auto& r : rep.runs) audit(r.id, r.record);
    for (std::size_t i = 0; i < seeds.size(); ++i) audit("random" + std::to_string(i) + "_" + seeds[i].kind, runs[i]);
    return {violations.empty(), fmt("%zu trajectories (%zu sweep, %zu random), violations:", total, rep.runs.size(),
                                    seeds.size()) +
                                    (violations.empty() ? std::string(" none") : violations)};
}

// ----------------------------------------------------------------- 10

Result variational_check(const Context& c)
{
    const auto ens = variational_ensemble(kVariationalStates, 11, c.p, c.bg);
    const VariationalReport rep = variational_scan(ens, {c.p.delta_star, c.p.delta_M, c.p.delta_H});
    std::string detail;
    for (const auto& b : rep.bands)
        detail += fmt("%sdelta %.0e: kappa %.2e c %.2e, %zu/%zu states, %zu violations", detail.empty() ? "" : "; ",
                      b.delta, b.kappa_hat, b.c_hat, b.calibration, b.validation, b.violations);
    return {rep.pass(), detail};
}

}  // namespace

int main()
{
    const auto t0 = std::chrono::steady_clock::now();
    Context c{make_grid(3, 2048, 64.0), {}, {}, std::max(1u, std::thread::hardware_concurrency())};
    c.bg = make_background(c.grid);
    c.p = DistanceParams::defaults(c.bg.ground.grad_norm());

    int failures = 0;
    auto report = [&](int n, const char* name, const std::function<Result()>& fn) {
        const auto s = std::chrono::steady_clock::now();
        Result r;
        try {
            r = fn();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - s).count();
        if (!r.pass) ++failures;
        std::printf("AC%-2d %-28s %s  (%.1fs)  %s\n", n, name, r.pass ? "PASS" : "FAIL", secs, r.detail.c_str());
        std::fflush(stdout);
    };

    report(1, "static residual", [&] { return static_residual_check(c); });
    report(2, "eigenpair", [&] { return eigenpair_check(c); });
    report(3, "functional identities", [&] { return functional_check(c); });
    report(4, "modulation", [&] { return modulation_check(c); });
    report(5, "flow conservation/symmetry", [&] { return flow_check(c); });
    report(6, "virial/equipartition", [&] { return identity_check(c); });
    report(7, "ejection rate", [&] { return ejection_check(c); });
    QuadrantReport sweep;
    bool swept = false;
    report(8, "four-quadrant portrait", [&] {
        sweep = run_sweep(c);
        swept = true;
        return quadrant_check(sweep);
    });
    report(9, "one-pass audit", [&] {
        if (!swept) return Result{false, "sweep did not complete"};
        return one_pass_check(c, sweep);
    });
    report(10, "variational gap", [&] { return variational_check(c); });

    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%d of 10 criteria passed (%.0fs)\n", 10 - failures, total);
    return failures == 0 ? 0 : 1;
}
