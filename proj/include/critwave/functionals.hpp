#pragma once

#include <cmath>

#include "critwave/ground_state.hpp"
#include "critwave/radial_core.hpp"
#include "critwave/spectral.hpp"

namespace critwave {

struct FunctionalReport {
    double E = 0.0;
    double J = 0.0;
    double K = 0.0;
    double H = 0.0;
};

inline double static_energy(const RadialField& f)
{
    return 0.5 * grad_sq(f) - crit_integral(f) / f.grid().pstar();
}

inline double virial(const RadialField& f) { return grad_sq(f) - crit_integral(f); }

inline double h_functional(const RadialField& f) { return grad_sq(f) / f.grid().dim(); }

inline double energy(const PhaseState& s)
{
    return 0.5 * inner(s.udot, s.udot) + static_energy(s.u);
}

inline FunctionalReport functionals(const PhaseState& s)
{
    const double g = grad_sq(s.u);
    const double c = crit_integral(s.u);
    const double p = s.grid().pstar();
    FunctionalReport r;
    r.J = 0.5 * g - c / p;
    r.E = 0.5 * inner(s.udot, s.udot) + r.J;
    r.K = g - c;
    r.H = g / s.grid().dim();
    return r;
}

// lambda* > 0 with K(lambda* f) = 0
inline double virial_root(const RadialField& f)
{
    const double g = grad_sq(f);
    const double c = crit_integral(f);
    if (!(c > 0.0)) throw InputError("virial_root: zero field");
    return std::pow(g / c, 1.0 / (f.grid().pstar() - 2.0));
}

// ||grad f||^2 + (d/2-1) K(f) - ||grad W||^2
inline double sobolev_gap(const RadialField& f, const GroundStateFamily& fam)
{
    const double g = grad_sq(f);
    if (!(g > 0.0)) throw InputError("sobolev_gap: zero field");
    return g + (0.5 * f.grid().dim() - 1.0) * virial(f) - fam.grad_sq;
}

// grid value of J(W_lambda); equals J(W) in the continuum
inline double reference_energy(const Background& bg, double lambda)
{
    return lambda == 1.0 ? bg.J_W() : static_energy(W_lambda(bg.ground, lambda));
}

// mu_lambda(f) = <f - W_lambda | lambda^2 rho_lambda>
inline double mu_lambda(const RadialField& f, double lambda, const Background& bg)
{
    const RadialField v = f - W_lambda(bg.ground, lambda);
    return lambda * lambda * inner(v, bg.mode.rho_lambda(lambda));
}

inline double E_lambda(const PhaseState& s, double lambda, const Background& bg)
{
    const double mu = mu_lambda(s.u, lambda, bg);
    return energy(s) - reference_energy(bg, lambda) + bg.mode.k2() * mu * mu;
}

namespace detail {

// (|1+t|^p - 1 - p t - p(p-1)/2 t^2) / p, series for small t
inline double cubic_kernel(double p, double t)
{
    if (std::abs(t) < 0.05) {
        double c = (p - 1.0) * (p - 2.0) / 6.0;
        double tk = t * t * t;
        double s = 0.0;
        for (int j = 3; j < 40; ++j) {
            const double term = c * tk;
            s += term;
            if (std::abs(term) < 1e-18 * std::abs(s)) break;
            c *= (p - j) / (j + 1.0);
            tk *= t;
        }
        return s;
    }
    return (std::pow(std::abs(1.0 + t), p) - 1.0 - p * t - 0.5 * p * (p - 1.0) * t * t) / p;
}

}  // namespace detail

// C_lambda(v): superquadratic part of the potential energy at W_lambda
inline double cubic_remainder(const RadialField& v, double lambda, const Background& bg)
{
    const RadialField W = W_lambda(bg.ground, lambda);
    v.require_same_grid(W);
    const Grid& g = v.grid();
    const auto& mc = g.crit_mass();
    const double p = g.pstar();
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double w = W[i];
        if (w > 0.0 && std::abs(v[i]) < 1e3 * w) {
            s += mc[i] * std::pow(w, p) * detail::cubic_kernel(p, v[i] / w);
        } else {
            const double a = std::pow(std::abs(w + v[i]), p) - std::pow(std::abs(w), p);
            s += mc[i] * (a / p - std::pow(w, p - 1.0) * v[i] - 0.5 * (p - 1.0) * crit_weight(g.dim(), w) * v[i] * v[i]);
        }
    }
    return s;
}

struct ExpansionCheck {
    double direct = 0.0;      // E - J(W_lambda)
    double assembled = 0.0;   // 1/2[|udot|^2 - k^2 mu^2 + <L gamma|gamma>] - C(v)
    double mu = 0.0;
    double abs_diff = 0.0;
    double rel_diff = 0.0;    // abs_diff / |J(W)|
};

inline ExpansionCheck energy_expansion(const PhaseState& s, double lambda, const Background& bg)
{
    ExpansionCheck c;
    const RadialField v = s.u - W_lambda(bg.ground, lambda);
    c.mu = lambda * lambda * inner(v, bg.mode.rho_lambda(lambda));
    const RadialField gamma = v.axpy(-c.mu, bg.mode.rho_lambda(lambda));
    c.direct = energy(s) - reference_energy(bg, lambda);
    c.assembled = 0.5 * (inner(s.udot, s.udot) - bg.mode.k2() * c.mu * c.mu + linearized_form(gamma, lambda))
        - cubic_remainder(v, lambda, bg);
    c.abs_diff = std::abs(c.direct - c.assembled);
    c.rel_diff = c.abs_diff / std::abs(bg.J_W());
    return c;
}

}  // namespace critwave
