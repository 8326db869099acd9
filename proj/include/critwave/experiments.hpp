#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "critwave/evolution.hpp"
#include "critwave/functionals.hpp"
#include "critwave/modulation.hpp"
#include "critwave/spectral.hpp"

namespace critwave {

class ExperimentError : public Error {
public:
    using Error::Error;
};

// runs fn(i) for i in [0, n) on up to `threads` workers; first exception is rethrown
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn)
{
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!err) err = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------- seeds

struct SeedSpec {
    double a = 0.0;
    double b = 0.0;
    std::optional<RadialField> f;   // added to u
    std::optional<RadialField> g;   // added to udot
    double nu = 1.0;                // T_nu applied to the assembled state
    double amplitude_bound = NAN;   // bound on |a| + |b|; NaN selects delta_E
    double perturbation_ratio = 0.1;
};

inline double mu_plus(double a, double b, double k) { return 0.5 * (a + b / k); }
inline double mu_minus(double a, double b, double k) { return 0.5 * (a - b / k); }

inline void validate_seed(const SeedSpec& s, const DistanceParams& p)
{
    if (!std::isfinite(s.a) || !std::isfinite(s.b)) throw InputError("seed: a and b must be finite");
    if (!(s.nu > 0.0) || !std::isfinite(s.nu)) throw InputError("seed: nu must be positive");
    const double bound = std::isnan(s.amplitude_bound) ? p.delta_E : s.amplitude_bound;
    const double amp = std::abs(s.a) + std::abs(s.b);
    if (amp > bound) throw InputError("seed: |a| + |b| = " + std::to_string(amp) + " exceeds " + std::to_string(bound));
    const double pert = (s.f ? norm_grad(*s.f) : 0.0) + (s.g ? norm_L2(*s.g) : 0.0);
    if (pert > s.perturbation_ratio * amp * (1.0 + 1e-12))
        throw InputError("seed: ||grad f|| + ||g|| must not exceed " + std::to_string(s.perturbation_ratio) +
                         " (|a| + |b|)");
}

// (u, udot) -> (T_nu u, nu T_nu udot)
inline PhaseState rescale_state(const PhaseState& s, double nu)
{
    if (nu == 1.0) return s;
    RadialField u = dilate(s.u, nu, Tail::Harmonic);
    RadialField v = dilate(s.udot, nu, Tail::Zero).scaled(nu);
    return PhaseState(std::move(u), std::move(v), s.t / nu);
}

// T_nu is applied termwise: W_nu in closed form, rho_nu from the mode family, f and g by interpolation
inline PhaseState seed_state(const SeedSpec& spec, const DistanceParams& p, const Background& bg)
{
    validate_seed(spec, p);
    const double nu = spec.nu;
    const RadialField rho = bg.mode.rho_lambda(nu);
    RadialField u = W_lambda(bg.ground, nu).axpy(spec.a, rho);
    RadialField v = rho.scaled(spec.b * nu);
    if (spec.f) u = u + dilate(*spec.f, nu, Tail::Harmonic);
    if (spec.g) v = v + dilate(*spec.g, nu, Tail::Zero).scaled(nu);
    return PhaseState(std::move(u), std::move(v), 0.0);
}

// smooth radial bump exp(-((r-c)/w)^2), unit amplitude
inline RadialField bump(const GridPtr& grid, double center, double width)
{
    if (!(width > 0.0)) throw InputError("bump: width must be positive");
    return RadialField::sample(grid, [=](double r) {
        const double x = (r - center) / width;
        return std::exp(-x * x);
    });
}

inline RadialField with_grad_norm(const RadialField& f, double target) { return f.scaled(target / norm_grad(f)); }
inline RadialField with_L2_norm(const RadialField& f, double target) { return f.scaled(target / norm_L2(f)); }

// --------------------------------------------------------------- sweeps

// forward outcome from sign mu+ (backward from sign mu-): mu > 0 maps to blow-up when blowup_sign = +1
inline Outcome predicted_outcome(double mu, int blowup_sign)
{
    if (mu == 0.0) return Outcome::Undetermined;
    return (mu > 0.0) == (blowup_sign > 0) ? Outcome::BlowsUp : Outcome::Scatters;
}

// one seed run both ways; backward is the forward evolution of (u, -udot)
struct BothWays {
    TrajectoryRecord forward;
    TrajectoryRecord backward;
};

inline BothWays evolve_both_ways(const PhaseState& s0, const EvolveConfig& cfg, const DistanceParams& p,
                                 const Background& bg)
{
    BothWays out;
    out.forward = evolve(s0, cfg, p, bg);
    out.backward = evolve(s0.time_reversed(), cfg, p, bg);
    return out;
}

// backward rows with t -> -t in increasing time, then the forward rows
inline std::vector<DiagnosticRow> join_trajectory(const TrajectoryRecord& backward, const TrajectoryRecord& forward)
{
    std::vector<DiagnosticRow> rows;
    rows.reserve(backward.rows.size() + forward.rows.size());
    for (auto it = backward.rows.rbegin(); it != backward.rows.rend(); ++it) {
        if (it->t == 0.0 && !forward.rows.empty()) continue;
        DiagnosticRow r = *it;
        r.t = -r.t;
        r.V = -r.V;
        r.Y = -r.Y;
        rows.push_back(r);
    }
    rows.insert(rows.end(), forward.rows.begin(), forward.rows.end());
    return rows;
}

struct SweepConfig {
    double amplitude = 0.02;       // |a| = |b|/k
    double probe_ratio = 0.1;      // openness probes move a and b by this fraction of the amplitude
    double bump_ratio = 0.05;      // ||grad f|| of the probe bump, relative to |a| + |b|
    bool probes = true;
    int blowup_sign = 1;           // orientation of the mu -> outcome map
    unsigned threads = 1;
    EvolveConfig evolve;
};

struct SweepRun {
    std::string id;
    std::size_t cell = 0;
    double a = 0.0, b = 0.0, bump_norm = 0.0;
    BothWays record;
};

struct QuadrantCell {
    double a = 0.0, b = 0.0;
    double mu_plus = 0.0, mu_minus = 0.0;
    Outcome backward = Outcome::Undetermined, forward = Outcome::Undetermined;
    Outcome predicted_backward = Outcome::Undetermined, predicted_forward = Outcome::Undetermined;
    std::vector<std::size_t> runs;   // runs[0] is the center seed
    bool open = true;                // every probe reproduced the center pair

    bool determined() const { return backward != Outcome::Undetermined && forward != Outcome::Undetermined; }
    bool consistent() const { return backward == predicted_backward && forward == predicted_forward; }
    std::string pair_label() const { return outcome_name(backward, false) + "/" + outcome_name(forward, true); }
};

struct QuadrantReport {
    double k = 0.0;
    std::vector<QuadrantCell> cells;
    std::vector<SweepRun> runs;

    std::size_t distinct_pairs() const
    {
        std::set<std::pair<int, int>> s;
        for (const auto& c : cells) s.emplace(static_cast<int>(c.backward), static_cast<int>(c.forward));
        return s.size();
    }
    bool all_determined() const
    {
        return std::all_of(cells.begin(), cells.end(), [](const QuadrantCell& c) { return c.determined(); });
    }
    bool all_consistent() const
    {
        return std::all_of(cells.begin(), cells.end(), [](const QuadrantCell& c) { return c.consistent(); });
    }
    bool all_open() const
    {
        return std::all_of(cells.begin(), cells.end(), [](const QuadrantCell& c) { return c.open; });
    }
};

// the four sign quadrants of (mu+, mu-) at |a| = |b|/k = amp
inline std::vector<std::pair<double, double>> quadrant_cells(double amp, double k)
{
    return {{amp, 0.0}, {0.0, amp * k}, {-amp, 0.0}, {0.0, -amp * k}};
}

inline QuadrantReport quadrant_sweep(const std::vector<std::pair<double, double>>& cells, const SweepConfig& cfg,
                                     const DistanceParams& p, const Background& bg)
{
    cfg.evolve.validate();
    QuadrantReport rep;
    rep.k = bg.k();
    const GridPtr& grid = bg.grid();
    const RadialField probe_bump = bump(grid, 2.0, 1.0);

    for (std::size_t c = 0; c < cells.size(); ++c) {
        QuadrantCell cell;
        cell.a = cells[c].first;
        cell.b = cells[c].second;
        cell.mu_plus = mu_plus(cell.a, cell.b, rep.k);
        cell.mu_minus = mu_minus(cell.a, cell.b, rep.k);
        cell.predicted_forward = predicted_outcome(cell.mu_plus, cfg.blowup_sign);
        cell.predicted_backward = predicted_outcome(cell.mu_minus, cfg.blowup_sign);

        auto add = [&](double a, double b, double bn, const std::string& tag) {
            SweepRun r;
            r.id = "cell" + std::to_string(c) + "_" + tag;
            r.cell = c;
            r.a = a;
            r.b = b;
            r.bump_norm = bn;
            cell.runs.push_back(rep.runs.size());
            rep.runs.push_back(std::move(r));
        };
        add(cell.a, cell.b, 0.0, "center");
        if (cfg.probes) {
            const double da = cfg.probe_ratio * cfg.amplitude, db = cfg.probe_ratio * cfg.amplitude * rep.k;
            int j = 0;
            for (int sa : {1, -1})
                for (int sb : {1, -1}) {
                    const double a = cell.a + sa * da, b = cell.b + sb * db;
                    const double bn = (j % 2 == 0 ? 1.0 : -1.0) * cfg.bump_ratio * (std::abs(a) + std::abs(b));
                    add(a, b, bn, "probe" + std::to_string(j++));
                }
        }
        rep.cells.push_back(std::move(cell));
    }

    parallel_for(rep.runs.size(), cfg.threads, [&](std::size_t i) {
        SweepRun& r = rep.runs[i];
        SeedSpec spec;
        spec.a = r.a;
        spec.b = r.b;
        if (r.bump_norm != 0.0) spec.f = with_grad_norm(probe_bump, std::abs(r.bump_norm)).scaled(r.bump_norm > 0 ? 1.0 : -1.0);
        r.record = evolve_both_ways(seed_state(spec, p, bg), cfg.evolve, p, bg);
    });

    for (auto& cell : rep.cells) {
        const SweepRun& center = rep.runs[cell.runs.front()];
        cell.forward = center.record.forward.outcome;
        cell.backward = center.record.backward.outcome;
        for (std::size_t j = 1; j < cell.runs.size(); ++j) {
            const SweepRun& r = rep.runs[cell.runs[j]];
            if (r.record.forward.outcome != cell.forward || r.record.backward.outcome != cell.backward) cell.open = false;
        }
    }
    return rep;
}

// ------------------------------------------------------------ one pass

struct OnePassAudit {
    int sign_changes = 0;
    int tube_entries = 0;
    int tube_exits = 0;
    std::size_t rows_with_sigma = 0;
    std::vector<double> change_times;
    std::vector<double> entry_times;
    std::vector<double> exit_times;

    bool pass() const { return sign_changes <= 1 && tube_entries <= 1 && tube_exits <= 1; }
};

// Sigma = 0 rows and rows without d_S are skipped
inline OnePassAudit one_pass_audit(const std::vector<DiagnosticRow>& rows, double delta_star)
{
    OnePassAudit a;
    int last_sigma = 0;
    int inside = -1;   // unknown
    for (const auto& r : rows) {
        if (r.Sigma != 0) {
            ++a.rows_with_sigma;
            if (last_sigma != 0 && r.Sigma != last_sigma) {
                ++a.sign_changes;
                a.change_times.push_back(r.t);
            }
            last_sigma = r.Sigma;
        }
        if (std::isfinite(r.d_S)) {
            const int now = r.d_S < delta_star ? 1 : 0;
            if (inside == 0 && now == 1) {
                ++a.tube_entries;
                a.entry_times.push_back(r.t);
            } else if (inside == 1 && now == 0) {
                ++a.tube_exits;
                a.exit_times.push_back(r.t);
            }
            inside = now;
        }
    }
    return a;
}

// ------------------------------------------------------------- ejection

struct EjectionFit {
    double t0 = 0.0, t1 = 0.0;
    double delta0 = 0.0;
    double lambda0 = 0.0;
    double rate = 0.0;          // fitted d/dt log d_S
    double expected = 0.0;      // k lambda(t0)
    double rel_err = 0.0;
    double lambda_drift = 0.0;  // max |lambda(t) - lambda(t0)| / lambda(t0)
    bool sigma_consistent = true;
    std::size_t points = 0;
};

/*
 * Episode: the last row with d_S <= delta_M before the first row with
 * d_S >= delta_H, through the last row below delta_H.
 */
inline EjectionFit ejection_fit(const std::vector<DiagnosticRow>& rows, const DistanceParams& p, const Background& bg)
{
    std::size_t iH = rows.size();
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (std::isfinite(rows[i].d_S) && rows[i].d_S >= p.delta_H) {
            iH = i;
            break;
        }
    if (iH == rows.size() || iH == 0) throw ExperimentError("ejection_fit: d_S never reaches delta_H");
    std::size_t i0 = iH;
    for (std::size_t i = iH; i-- > 0;)
        if (std::isfinite(rows[i].d_S) && rows[i].d_S <= p.delta_M) {
            i0 = i;
            break;
        }
    if (i0 == iH) throw ExperimentError("ejection_fit: no row with d_S <= delta_M before the delta_H crossing");
    const DiagnosticRow& r0 = rows[i0];
    if (!(r0.E - bg.J_W() <= 0.5 * r0.d_S * r0.d_S))
        throw ExperimentError("ejection_fit: E - J(W) exceeds delta0^2/2 at the episode start");
    if (!r0.modulation_ok) throw ExperimentError("ejection_fit: modulation undefined at the episode start");

    EjectionFit f;
    f.t0 = r0.t;
    f.delta0 = r0.d_S;
    f.lambda0 = r0.lambda;
    f.expected = bg.k() * f.lambda0;
    double st = 0, sy = 0, stt = 0, sty = 0;
    for (std::size_t i = i0; i < iH; ++i) {
        const DiagnosticRow& r = rows[i];
        if (!r.modulation_ok || !std::isfinite(r.d_S) || !(r.d_S > 0.0))
            throw ExperimentError("ejection_fit: modulation undefined inside the episode");
        const double y = std::log(r.d_S);
        st += r.t;
        sy += y;
        stt += r.t * r.t;
        sty += r.t * y;
        ++f.points;
        f.t1 = r.t;
        f.lambda_drift = std::max(f.lambda_drift, std::abs(r.lambda - f.lambda0) / f.lambda0);
        if (r.Sigma != 0 && r.mu_S != 0.0 && r.Sigma != (r.mu_S > 0.0 ? -1 : 1)) f.sigma_consistent = false;
    }
    if (f.points < 3) throw ExperimentError("ejection_fit: fewer than 3 rows in the episode");
    const double n = static_cast<double>(f.points);
    f.rate = (n * sty - st * sy) / (n * stt - st * st);
    f.rel_err = std::abs(f.rate - f.expected) / f.expected;
    return f;
}

// ------------------------------------------------- identity residuals

struct IdentityResidual {
    double t = 0.0;
    double res_V = 0.0;   // |dV/dt + 2K|
    double res_Y = 0.0;   // |dY/dt - (||udot||^2 - K)|
    double E_ext = 0.0;   // exterior energy at the weight radius
};

// centered differences of the recorded V and Y series, interior rows only;
// the series is cut at the first row with ||grad u|| above grad_cap
inline std::vector<IdentityResidual> identity_residuals(const std::vector<DiagnosticRow>& rows,
                                                        double grad_cap = INFINITY)
{
    std::vector<IdentityResidual> out;
    std::size_t n = 0;
    while (n < rows.size() && rows[n].grad_norm <= grad_cap) ++n;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double dt = rows[i + 1].t - rows[i - 1].t;
        if (!(dt > 0.0)) throw ExperimentError("identity_residuals: times not increasing");
        const DiagnosticRow& r = rows[i];
        IdentityResidual x;
        x.t = r.t;
        x.res_V = std::abs((rows[i + 1].V - rows[i - 1].V) / dt + 2.0 * r.K);
        x.res_Y = std::abs((rows[i + 1].Y - rows[i - 1].Y) / dt - (r.udot_norm * r.udot_norm - r.K));
        x.E_ext = r.E_ext_w;
        out.push_back(x);
    }
    return out;
}

struct IdentityBound {
    double C1 = 0.0;
    double C2 = 0.0;
    double worst_ratio = 0.0;   // max residual / (C1 E_ext + C2 h^2)
    double worst_t = 0.0;
    bool pass() const { return worst_ratio <= 1.0; }
};

inline IdentityBound check_identity_bound(const std::vector<IdentityResidual>& res, double C1, double C2, double h)
{
    IdentityBound b;
    b.C1 = C1;
    b.C2 = C2;
    for (const auto& x : res) {
        const double bound = C1 * x.E_ext + C2 * h * h;
        const double q = std::max(x.res_V, x.res_Y) / bound;
        if (q > b.worst_ratio) {
            b.worst_ratio = q;
            b.worst_t = x.t;
        }
    }
    return b;
}

// ---------------------------------------------------- random ensembles

struct LabeledState {
    std::string kind;
    PhaseState state;
};

/*
 * Near-S seeds  +-(W + a rho + f, b rho + g)  and far seeds (c W + f, g),
 * kept only when the state lies in H_X.
 */
inline std::vector<LabeledState> random_hx_seeds(std::size_t count, std::uint64_t seed, double a_min, double a_max,
                                                 const DistanceParams& p, const Background& bg)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const GridPtr& grid = bg.grid();
    const double k = bg.k();
    std::vector<LabeledState> out;
    std::size_t attempts = 0;
    while (out.size() < count) {
        if (++attempts > 50 * count + 100) throw ExperimentError("random_hx_seeds: acceptance rate too low");
        const double pick = U(rng);
        const RadialField f0 = bump(grid, 6.0 * U(rng), 0.5 + 2.5 * U(rng));
        const RadialField g0 = bump(grid, 6.0 * U(rng), 0.5 + 2.5 * U(rng));
        PhaseState s;
        std::string kind;
        if (pick < 0.7) {
            const double a = (U(rng) < 0.5 ? -1.0 : 1.0) * a_min * std::pow(a_max / a_min, U(rng));
            // grazing seeds sit close to the stable direction b = -k a and pass near the tube
            const bool grazing = U(rng) < 0.5;
            const double ratio = grazing ? -(1.0 - std::pow(10.0, -1.0 - 3.0 * U(rng))) : 1.6 * U(rng) - 0.8;
            const double b = k * a * ratio;
            const double pert = grazing ? 0.0 : 0.05 * std::abs(a);
            RadialField u = bg.ground.W.axpy(a, bg.mode.rho()) + with_grad_norm(f0, pert * U(rng) + 1e-300);
            RadialField v = bg.mode.rho().scaled(b) + with_L2_norm(g0, pert * U(rng) + 1e-300);
            s = PhaseState(std::move(u), std::move(v), 0.0);
            kind = grazing ? "grazing" : "near";
        } else {
            const double c = U(rng) < 0.5 ? 0.4 + 0.55 * U(rng) : 1.05 + 0.3 * U(rng);
            RadialField u = bg.ground.W.scaled(c) + with_grad_norm(f0, 0.02 * U(rng));
            RadialField v = with_L2_norm(g0, 0.02 * U(rng));
            s = PhaseState(std::move(u), std::move(v), 0.0);
            kind = "far";
        }
        if (U(rng) < 0.5) s = s.negated();
        const double E = energy(s);
        if (!(E <= bg.J_W() + p.eps_star * p.eps_star)) continue;
        const DistanceReport d = distance_report(s, p, bg);
        if (!d.defined || !in_HX(E, bg.J_W(), d.d_S, p)) continue;
        out.push_back({kind, std::move(s)});
    }
    return out;
}

// ---------------------------------------------------- variational gap

struct VariationalSample {
    std::string kind;
    double E = 0.0, K = 0.0, grad_sq = 0.0, d_S = 0.0;
};

struct VariationalBand {
    double delta = 0.0;
    std::size_t calibration = 0, validation = 0;
    double max_negative_K = NAN;     // over K < 0 (all states with d_S >= delta)
    double min_positive_ratio = NAN; // min K / min(1, ||grad phi||^2) over K >= 0
    double kappa_hat = 0.0;
    double c_hat = 0.0;
    std::size_t violations = 0;
    std::vector<std::size_t> violating;   // indices into the ensemble

    bool pass() const { return kappa_hat > 0.0 && c_hat > 0.0 && violations == 0; }
};

struct VariationalReport {
    std::vector<VariationalSample> samples;
    std::vector<VariationalBand> bands;
    double safety = 0.5;
    bool pass() const
    {
        return !bands.empty() && std::all_of(bands.begin(), bands.end(), [](const VariationalBand& b) { return b.pass(); });
    }
};

/*
 * Ensemble members with E <= J(W) + eps*^2: near-S states with
 * log-uniform rho amplitude (so d_S spans the delta ladder), scaled
 * ground states, and scaled random bumps.
 */
inline std::vector<VariationalSample> variational_ensemble(std::size_t count, std::uint64_t seed, const DistanceParams& p,
                                                           const Background& bg)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const GridPtr& grid = bg.grid();
    const double JW = bg.J_W(), k = bg.k();
    std::vector<VariationalSample> out;
    std::size_t attempts = 0;
    while (out.size() < count) {
        if (++attempts > 50 * count + 100) throw ExperimentError("variational_ensemble: acceptance rate too low");
        const double pick = U(rng);
        PhaseState s;
        std::string kind;
        const RadialField f0 = bump(grid, 6.0 * U(rng), 0.5 + 2.5 * U(rng));
        if (pick < 0.5) {
            const double a = (U(rng) < 0.5 ? -1.0 : 1.0) * 0.2 * p.delta_star * std::pow(2.0 / (0.2 * p.delta_star), U(rng)) / k;
            const double amp = std::min(std::abs(a), 0.1);
            RadialField u = bg.ground.W.axpy(std::clamp(a, -0.5, 0.5), bg.mode.rho()) +
                            with_grad_norm(f0, 0.05 * amp * U(rng));
            s = PhaseState::at_rest(std::move(u));
            kind = "near";
        } else if (pick < 0.75) {
            const double c = U(rng) < 0.5 ? 0.05 + 0.9 * U(rng) : 1.05 + 0.5 * U(rng);
            s = PhaseState::at_rest(bg.ground.W.scaled(c) + with_grad_norm(f0, 0.05 * U(rng)));
            kind = "scaled";
        } else {
            const RadialField f1 = bump(grid, 6.0 * U(rng), 0.5 + 2.5 * U(rng));
            const RadialField phi = f0 + f1.scaled(2.0 * U(rng) - 1.0);
            const double lam = virial_root(phi);
            s = PhaseState::at_rest(phi.scaled(lam * (U(rng) < 0.5 ? 0.1 + 0.85 * U(rng) : 1.05 + 0.5 * U(rng))));
            kind = "bump";
        }
        if (U(rng) < 0.5) s = s.negated();
        const FunctionalReport fr = functionals(s);
        if (!(fr.E <= JW + p.eps_star * p.eps_star)) continue;
        const DistanceReport d = distance_report(s, p, bg);
        if (!d.defined) continue;
        out.push_back({kind, fr.E, fr.K, grad_sq(s.u), d.d_S});
    }
    return out;
}

/*
 * Even-indexed samples calibrate, odd-indexed samples validate.  With
 * safety s: kappa_hat = s min |K| over negative-K calibration states,
 * c_hat = s min K/||grad phi||^2 over positive-K calibration states.  A
 * validation state violates when -kappa_hat < K < min(kappa_hat, c_hat ||grad phi||^2).
 */
inline VariationalReport variational_scan(std::vector<VariationalSample> samples, const std::vector<double>& deltas,
                                          double safety = 0.5)
{
    VariationalReport rep;
    rep.samples = std::move(samples);
    rep.safety = safety;
    for (double delta : deltas) {
        VariationalBand b;
        b.delta = delta;
        double min_neg = INFINITY, min_pos_c = INFINITY;
        double max_neg_all = -INFINITY, min_pos_ratio = INFINITY;
        for (std::size_t i = 0; i < rep.samples.size(); ++i) {
            const VariationalSample& s = rep.samples[i];
            if (!(s.d_S >= delta)) continue;
            if (s.K < 0.0) max_neg_all = std::max(max_neg_all, s.K);
            else min_pos_ratio = std::min(min_pos_ratio, s.K / std::min(1.0, s.grad_sq));
            if (i % 2 != 0) continue;
            ++b.calibration;
            if (s.K < 0.0) min_neg = std::min(min_neg, -s.K);
            else if (s.grad_sq > 0.0) min_pos_c = std::min(min_pos_c, s.K / s.grad_sq);
        }
        b.max_negative_K = std::isfinite(max_neg_all) ? max_neg_all : NAN;
        b.min_positive_ratio = std::isfinite(min_pos_ratio) ? min_pos_ratio : NAN;
        b.kappa_hat = std::isfinite(min_neg) ? safety * min_neg : 0.0;
        b.c_hat = std::isfinite(min_pos_c) ? safety * min_pos_c : 0.0;
        for (std::size_t i = 1; i < rep.samples.size(); i += 2) {
            const VariationalSample& s = rep.samples[i];
            if (!(s.d_S >= delta)) continue;
            ++b.validation;
            const double upper = std::min(b.kappa_hat, b.c_hat * s.grad_sq);
            if (s.K > -b.kappa_hat && s.K < upper) {
                ++b.violations;
                b.violating.push_back(i);
            }
        }
        rep.bands.push_back(std::move(b));
    }
    return rep;
}

}  // namespace critwave
