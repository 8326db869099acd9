#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "critwave/functionals.hpp"
#include "critwave/modulation.hpp"
#include "critwave/radial_core.hpp"
#include "critwave/spectral.hpp"

namespace critwave {

class NumericalBlowup : public Error {
public:
    NumericalBlowup(const std::string& what, std::size_t step) : Error(what), step(step) {}
    std::size_t step;
};

struct EvolveConfig {
    double cfl = 0.5;
    double T = 20.0;
    int record_every = 8;
    double blowup_factor = 50.0;        // threshold = factor * ||grad W||^2
    double blowup_scale_cells = 4.0;    // 1/lambda below this many cells counts as unresolved
    double scatter_window = 4.0;
    double scatter_fraction = 0.99;
    double virial_radius = 0.0;         // cutoff radius of the virial weight; 0 selects R_max/4
    bool modulation = true;             // d_S, lambda, mu_S, Sigma per row

    double dt(const Grid& g) const { return cfl * g.h(); }
    double weight_radius(const Grid& g) const { return virial_radius > 0.0 ? virial_radius : 0.25 * g.r_max(); }

    void validate() const
    {
        if (!(cfl > 0.0 && cfl <= 0.9)) throw InputError("evolve: cfl must lie in (0, 0.9]");
        if (!(T > 0.0)) throw InputError("evolve: T must be positive");
        if (record_every < 1) throw InputError("evolve: record_every must be >= 1");
        if (!(blowup_factor > 1.0)) throw InputError("evolve: blowup_factor must exceed 1");
        if (!(scatter_window > 0.0)) throw InputError("evolve: scatter_window must be positive");
        if (!(scatter_fraction > 0.0 && scatter_fraction <= 1.0)) throw InputError("evolve: scatter_fraction in (0,1]");
    }
};

/*
 * Velocity Verlet for  mass u'' = -Q u + crit_mass |u|^{2*-2} u  on nodes >= 1,
 * node 0 slaved by (Qu)_0 = 0.  The last node carries the outgoing condition
 * u_t + u_r + (d-2)u/R = 0 as a damping term, centered in time.
 */
class Stepper {
public:
    Stepper(GridPtr grid, double dt) : grid_(std::move(grid)), dt_(dt)
    {
        const Grid& g = *grid_;
        const double bound = stiffness_spectral_bound(g);
        if (!(dt > 0.0) || dt * std::sqrt(bound) >= 2.0)
            throw InputError("step: dt " + std::to_string(dt) + " violates the CFL bound " +
                             std::to_string(2.0 / std::sqrt(bound)));
        const std::size_t n = g.size();
        ratio_.resize(n);
        inv_m_.resize(n);
        for (std::size_t i = 1; i < n; ++i) {
            inv_m_[i] = 1.0 / g.mass()[i];
            ratio_[i] = g.crit_mass()[i] / g.mass()[i];
        }
        beta_ = g.area() * std::pow(g.r_max(), g.dim() - 1) * inv_m_[n - 1];
        work_.resize(n);
        flux_.resize(n - 1);
    }

    double dt() const { return dt_; }
    const Grid& grid() const { return *grid_; }

    void acceleration(std::span<const double> u, std::span<double> a) const
    {
        const Grid& g = *grid_;
        const std::size_t n = g.size();
        for (std::size_t j = 0; j + 1 < n; ++j) flux_[j] = g.flux()[j] * g.grad_at(u.data(), j);
        std::fill(a.begin(), a.end(), 0.0);
        g.gradient_adjoint(flux_, a);
        a[n - 1] += g.tail_stiffness() * u[n - 1];
        const int d = g.dim();
        for (std::size_t i = 1; i < n; ++i) a[i] = -a[i] * inv_m_[i] + ratio_[i] * crit_weight(d, u[i]) * u[i];
        a[0] = 0.0;
    }

    // (u, v, a) at t -> t + dt; a must hold the acceleration at u on entry
    void advance(std::vector<double>& u, std::vector<double>& v, std::vector<double>& a) const
    {
        const Grid& g = *grid_;
        const std::size_t n = g.size(), L = n - 1;
        const double h = 0.5 * dt_;
        for (std::size_t i = 1; i < L; ++i) {
            v[i] += h * a[i];
            u[i] += dt_ * v[i];
        }
        v[L] += h * (a[L] - beta_ * v[L]);
        u[L] += dt_ * v[L];
        g.fix_origin(u);
        acceleration(u, a);
        for (std::size_t i = 1; i < L; ++i) v[i] += h * a[i];
        v[L] = (v[L] + h * a[L]) / (1.0 + h * beta_);
        g.fix_origin(v);
    }

    PhaseState step(const PhaseState& s) const
    {
        std::vector<double> u(s.u.vec()), v(s.udot.vec()), a(u.size());
        grid_->fix_origin(u);
        grid_->fix_origin(v);
        acceleration(u, a);
        advance(u, v, a);
        for (std::size_t i = 0; i < u.size(); ++i)
            if (!std::isfinite(u[i]) || !std::isfinite(v[i])) throw NumericalBlowup("numerical blow-up at step 0", 0);
        return PhaseState(RadialField(grid_, std::move(u)), RadialField(grid_, std::move(v)), s.t + dt_);
    }

private:
    GridPtr grid_;
    double dt_;
    double beta_ = 0.0;
    std::vector<double> ratio_, inv_m_;
    mutable std::vector<double> work_, flux_;
};

inline PhaseState step(const PhaseState& s, double dt) { return Stepper(s.grid_ptr(), dt).step(s); }

// evolve without diagnostics to time T exactly, with the largest dt <= cfl h dividing T
inline PhaseState integrate(const PhaseState& s, double T, double cfl)
{
    const Grid& g = s.grid();
    const auto steps = static_cast<std::size_t>(std::ceil(T / (cfl * g.h()) - 1e-9));
    if (steps == 0) return s;
    const Stepper st(s.grid_ptr(), T / static_cast<double>(steps));
    std::vector<double> u(s.u.vec()), v(s.udot.vec()), a(u.size());
    g.fix_origin(u);
    g.fix_origin(v);
    st.acceleration(u, a);
    for (std::size_t k = 0; k < steps; ++k) {
        st.advance(u, v, a);
        if (!std::isfinite(u[g.size() / 2]) || !std::isfinite(u[1]))
            throw NumericalBlowup("numerical blow-up at step " + std::to_string(k), k);
    }
    for (double x : u)
        if (!std::isfinite(x)) throw NumericalBlowup("numerical blow-up", steps);
    return PhaseState(RadialField(s.grid_ptr(), std::move(u)), RadialField(s.grid_ptr(), std::move(v)), s.t + T);
}

// 1/2 int_{|x| >= R} |grad u|^2 + udot^2
inline double exterior_energy(const PhaseState& s, double R)
{
    if (!(R >= 0.0)) throw InputError("exterior_energy: R must be nonnegative");
    const Grid& g = s.grid();
    const std::size_t n = g.size();
    const auto& u = s.u.vec();
    const double uR = u[n - 1];
    if (R > g.r_max()) return 0.5 * g.tail_stiffness() * uR * uR * std::pow(g.r_max() / R, g.dim() - 2);
    double e = g.tail_stiffness() * uR * uR;
    for (std::size_t j = 0; j + 1 < n; ++j)
        if (g.half_node(j) >= R) {
            const double gr = g.grad_at(u.data(), j);
            e += g.flux()[j] * gr * gr;
        }
    const auto& m = g.mass();
    for (std::size_t i = 0; i < n; ++i)
        if (g.r(i) >= R) e += m[i] * s.udot[i] * s.udot[i];
    return 0.5 * e;
}

inline RadialField virial_weight(const GridPtr& grid, double radius)
{
    return RadialField::sample(grid, [radius](double r) { return chi(r / radius); });
}

// V = <w udot | 2 r u_r + d u>
inline double virial_V(const PhaseState& s, const RadialField& w)
{
    const Grid& g = s.grid();
    const auto ur = radial_derivative(s.u.values(), g.h());
    const auto& m = g.mass();
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        acc += m[i] * w[i] * s.udot[i] * (2.0 * g.r(i) * ur[i] + g.dim() * s.u[i]);
    return acc;
}

// Y = <w udot | u>
inline double equipartition_Y(const PhaseState& s, const RadialField& w)
{
    const auto& m = s.grid().mass();
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) acc += m[i] * w[i] * s.udot[i] * s.u[i];
    return acc;
}

enum class Outcome { Scatters, BlowsUp, Undetermined, TrappedNearS };

inline std::string outcome_name(Outcome o, bool forward = true)
{
    const char* dir = forward ? "Forward" : "Backward";
    switch (o) {
    case Outcome::Scatters: return std::string("Scatters") + dir;
    case Outcome::BlowsUp: return std::string("BlowsUp") + dir;
    case Outcome::TrappedNearS: return "TrappedNearS";
    default: return "Undetermined";
    }
}

struct DiagnosticRow {
    double t = 0.0;
    double E = 0.0, K = 0.0;
    double grad_norm = 0.0, udot_norm = 0.0, crit_norm = 0.0;
    double d0 = NAN, d_S = NAN, lambda = NAN, mu_S = NAN;
    int Sigma = 0;      // 0: undefined
    int side = 0;       // +1 / -1 nearest copy of W, 0 unknown
    bool modulation_ok = false;
    double E_ext_cone = 0.0;   // E_ext(t, t/2)
    double E_ext_w = 0.0;      // E_ext(t, virial radius)
    double V = 0.0, Y = 0.0;
};

struct TrajectoryRecord {
    std::vector<DiagnosticRow> rows;
    Outcome outcome = Outcome::Undetermined;
    double outcome_time = NAN;
    std::string cause;
    double dt = 0.0;
    double h = 0.0;
    double E0 = 0.0;
    double virial_radius = 0.0;
    std::size_t steps = 0;
    PhaseState final_state;
};

inline DiagnosticRow diagnose(const PhaseState& s, const RadialField& w, double wr, const DistanceParams& p,
                              const Background& bg, bool modulation)
{
    DiagnosticRow r;
    r.t = s.t;
    const double g2 = grad_sq(s.u);
    const double c = crit_integral(s.u);
    const double k2 = inner(s.udot, s.udot);
    r.E = 0.5 * k2 + 0.5 * g2 - c / s.grid().pstar();
    r.K = g2 - c;
    r.grad_norm = std::sqrt(g2);
    r.udot_norm = std::sqrt(k2);
    r.crit_norm = std::pow(c, 1.0 / s.grid().pstar());
    r.E_ext_cone = exterior_energy(s, 0.5 * std::abs(s.t));
    r.E_ext_w = exterior_energy(s, wr);
    r.V = virial_V(s, w);
    r.Y = equipartition_Y(s, w);
    if (!modulation) return r;

    const DistanceReport dist = distance_report(s, p, bg, true);
    r.d0 = dist.d0_min();
    r.side = dist.nearest() == Side::Plus ? 1 : -1;
    if (dist.defined) r.d_S = dist.d_S;
    if (dist.dec) {
        r.modulation_ok = true;
        r.lambda = dist.dec->lambda;
        r.mu_S = dist.dec->mu;
    }
    try {
        r.Sigma = sign_Sigma_from(r.E, r.K, dist, p, bg).sigma;
    } catch (const ModulationError&) {
        r.Sigma = 0;
    }
    return r;
}

inline bool detect_blowup(const DiagnosticRow& row, double threshold, double h, double scale_cells)
{
    const double en = row.grad_norm * row.grad_norm + row.udot_norm * row.udot_norm;
    if (!std::isfinite(en)) return true;
    if (en <= threshold) return false;
    if (row.modulation_ok && std::isfinite(row.lambda)) return 1.0 / row.lambda < scale_cells * h;
    return true;
}

// trailing window: free energy outside r = t/2 above the given fraction of the total
// free energy, ||u||_{2*} nonincreasing, K >= 0
inline bool detect_scatter(const std::vector<DiagnosticRow>& rows, double window, double fraction)
{
    if (rows.empty()) return false;
    const double t_end = rows.back().t;
    if (t_end - rows.front().t < window) return false;
    std::size_t first = rows.size();
    while (first > 0 && rows[first - 1].t >= t_end - window) --first;
    if (rows.size() - first < 3) return false;
    for (std::size_t i = first; i < rows.size(); ++i) {
        const DiagnosticRow& r = rows[i];
        const double free = 0.5 * (r.grad_norm * r.grad_norm + r.udot_norm * r.udot_norm);
        if (r.E_ext_cone < fraction * free) return false;
        if (r.K < 0.0) return false;
        if (i > first && r.crit_norm > rows[i - 1].crit_norm) return false;
    }
    return true;
}

inline TrajectoryRecord evolve(const PhaseState& s0, const EvolveConfig& cfg, const DistanceParams& p,
                               const Background& bg)
{
    cfg.validate();
    const GridPtr& gp = s0.grid_ptr();
    const Grid& g = *gp;
    const Stepper st(gp, cfg.dt(g));
    const double wr = cfg.weight_radius(g);
    const RadialField w = virial_weight(gp, wr);
    const double threshold = cfg.blowup_factor * bg.ground.grad_sq;

    TrajectoryRecord rec;
    rec.dt = st.dt();
    rec.h = g.h();
    rec.virial_radius = wr;
    rec.E0 = energy(s0);

    std::vector<double> u(s0.u.vec()), v(s0.udot.vec()), a(u.size());
    g.fix_origin(u);
    g.fix_origin(v);
    st.acceleration(u, a);
    const auto steps = static_cast<std::size_t>(std::ceil(cfg.T / st.dt() - 1e-9));

    auto snapshot = [&](std::size_t n) {
        return PhaseState(RadialField(gp, u), RadialField(gp, v), s0.t + static_cast<double>(n) * st.dt());
    };

    bool done = false;
    for (std::size_t n = 0; n <= steps && !done; ++n) {
        if (n % static_cast<std::size_t>(cfg.record_every) == 0 || n == steps) {
            const PhaseState s = snapshot(n);
            rec.rows.push_back(diagnose(s, w, wr, p, bg, cfg.modulation));
            const DiagnosticRow& row = rec.rows.back();
            if (detect_blowup(row, threshold, g.h(), cfg.blowup_scale_cells)) {
                rec.outcome = Outcome::BlowsUp;
                rec.outcome_time = row.t;
                rec.cause = "energy norm above threshold";
                rec.final_state = s;
                done = true;
            } else if (detect_scatter(rec.rows, cfg.scatter_window, cfg.scatter_fraction)) {
                rec.outcome = Outcome::Scatters;
                rec.outcome_time = row.t;
                rec.cause = "outgoing energy, decaying critical norm, K >= 0";
                rec.final_state = s;
                done = true;
            } else if (n == steps) {
                rec.final_state = s;
                const bool near = cfg.modulation && std::isfinite(row.d_S) && row.d_S < p.delta_H;
                rec.outcome = near ? Outcome::TrappedNearS : Outcome::Undetermined;
                rec.outcome_time = row.t;
                rec.cause = "horizon reached";
                done = true;
            }
        }
        if (done) break;
        st.advance(u, v, a);
        rec.steps = n + 1;
        bool finite = true;
        for (std::size_t i = 0; i < u.size() && finite; ++i) finite = std::isfinite(u[i]) && std::isfinite(v[i]);
        if (!finite) {
            rec.outcome = Outcome::BlowsUp;
            rec.outcome_time = s0.t + static_cast<double>(n + 1) * st.dt();
            rec.cause = "nonfinite at step " + std::to_string(n + 1);
            done = true;
        }
    }
    return rec;
}

}  // namespace critwave
