#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "critwave/functionals.hpp"
#include "critwave/ground_state.hpp"
#include "critwave/radial_core.hpp"
#include "critwave/spectral.hpp"

namespace critwave {

class ModulationError : public Error {
public:
    using Error::Error;
};

struct DistanceParams {
    double delta_E = 0.05;
    double C_E = 100.0;
    double delta_H = 0.01;
    double delta_M = 1e-3;
    double delta_star = 1e-4;
    double eps_star = 1e-5;
    double eps_v_ratio = 0.1;   // eps_V(delta) proxy = ratio * delta

    static DistanceParams defaults(double grad_norm_W)
    {
        DistanceParams p;
        p.delta_E = 0.05 * std::min(1.0, grad_norm_W);
        p.C_E = 20.0 * (1.0 + grad_norm_W);
        p.delta_H = 0.2 * p.delta_E;
        p.delta_M = 0.1 * p.delta_H;
        p.delta_star = 0.1 * p.delta_M;
        p.eps_star = 0.1 * p.delta_star;
        return p;
    }

    void validate(double grad_norm_W) const
    {
        if (!(delta_E > 0.0 && delta_E < std::min(1.0, grad_norm_W)))
            throw InputError("distance: need 0 < delta_E < min(1, ||grad W||)");
        if (!(C_E > 1.0 + grad_norm_W)) throw InputError("distance: need C_E > 1 + ||grad W||");
        if (!(eps_star > 0.0 && eps_star < delta_star && delta_star < delta_M && delta_M < delta_H && delta_H < delta_E))
            throw InputError("distance: need 0 < eps* < delta* < delta_M < delta_H < delta_E");
        if (!(eps_v_ratio > 0.0)) throw InputError("distance: eps_v_ratio must be positive");
    }
};

enum class Side { Plus = 1, Minus = -1 };

inline const char* side_name(Side s) { return s == Side::Plus ? "+S" : "-S"; }

// smooth cutoff: 1 on [0,1], 0 on [2,inf), normalized integral of exp(-1/(s(1-s))) between
inline double chi(double x)
{
    x = std::abs(x);
    if (x <= 1.0) return 1.0;
    if (x >= 2.0) return 0.0;
    using boost::math::quadrature::gauss_kronrod;
    auto bump = [](double s) { return s <= 0.0 || s >= 1.0 ? 0.0 : std::exp(-1.0 / (s * (1.0 - s))); };
    static const double total = gauss_kronrod<double, 61>::integrate(bump, 0.0, 1.0, 0, 1e-15);
    const double part = gauss_kronrod<double, 61>::integrate(bump, 0.0, x - 1.0, 0, 1e-15);
    return std::clamp(1.0 - part / total, 0.0, 1.0);
}

struct D0Result {
    double value = 0.0;
    double nu = 1.0;
    Side side = Side::Plus;
    bool at_scan_edge = false;   // "scale out of range"
};

namespace detail {

inline std::vector<double> side_values(const RadialField& f, Side side)
{
    std::vector<double> v(f.vec());
    if (side == Side::Minus)
        for (double& x : v) x = -x;
    return v;
}

inline D0Result d0_one_side(const PhaseState& s, Side side)
{
    const Grid& g = s.grid();
    const int d = g.dim();
    const std::size_t n = g.size();
    const std::vector<double> us = side_values(s.u, side);
    const double kin = inner(s.udot, s.udot);
    std::vector<double> diff(n);
    auto objective = [&](double x) {
        const double nu = std::exp(x);
        const double c = std::pow(nu, 0.5 * d - 1.0);
        for (std::size_t i = 0; i < n; ++i) diff[i] = us[i] - c * ground_profile(d, nu * g.r(i));
        return g.dirichlet(diff) + kin;
    };

    constexpr int scan = 41;
    const double lo = -10.0 * std::numbers::ln2, step = 0.5 * std::numbers::ln2;
    std::vector<double> vals(scan);
    int best = 0;
    for (int k = 0; k < scan; ++k) {
        vals[k] = objective(lo + step * k);
        if (vals[k] < vals[best]) best = k;
    }
    D0Result r;
    r.side = side;
    if (best == 0 || best == scan - 1) {
        r.at_scan_edge = true;
        r.nu = std::exp(lo + step * best);
        r.value = std::sqrt(std::max(vals[best], 0.0));
        return r;
    }

    constexpr double invphi = 0.6180339887498949;
    double a = lo + step * (best - 1), b = lo + step * (best + 1);
    double c = b - invphi * (b - a), e = a + invphi * (b - a);
    double fc = objective(c), fe = objective(e);
    while (b - a > 1e-6) {
        if (fc < fe) {
            b = e;
            e = c;
            fe = fc;
            c = b - invphi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + invphi * (b - a);
            fe = objective(e);
        }
    }
    const double x = fc < fe ? c : e;
    r.nu = std::exp(x);
    r.value = std::sqrt(std::max(std::min(fc, fe), 0.0));
    return r;
}

}  // namespace detail

inline D0Result d0_side(const PhaseState& s, Side side) { return detail::d0_one_side(s, side); }

// inf over nu of ||(u, udot) -/+ (W_nu, 0)||, smaller side; ties go to +S
inline D0Result d0(const PhaseState& s)
{
    const D0Result p = d0_side(s, Side::Plus);
    const D0Result m = d0_side(s, Side::Minus);
    return m.value < p.value ? m : p;
}

// F(lambda) = <u_side - W_lambda | Lambda* rho_lambda>
inline double orthogonality_function(const RadialField& u_side, double lambda, const Background& bg)
{
    const RadialField v = u_side - W_lambda(bg.ground, lambda);
    return inner(v, bg.mode.lambda_star_rho_lambda(lambda));
}

/*
 * Root of F in log(lambda) starting from nu_start.  A sign-change bracket
 * is grown geometrically around the start; Newton steps use
 *   dF/dlog(lambda) = -lambda^{-2}<Lambda W | Lambda* rho> + <u - W_lambda | (Lambda Lambda* rho)_lambda>
 * and fall back to bisection whenever they leave the bracket.
 */
inline double solve_lambda(const PhaseState& s, Side side, const Background& bg, double nu_start = 1.0)
{
    const RadialField us(s.grid_ptr(), detail::side_values(s.u, side));
    const double xmin = -10.0 * std::numbers::ln2, xmax = 10.0 * std::numbers::ln2;
    auto F = [&](double x) { return orthogonality_function(us, std::exp(x), bg); };
    auto dF = [&](double x) {
        const double lam = std::exp(x);
        const RadialField v = us - W_lambda(bg.ground, lam);
        return -bg.mode.nondegeneracy() / (lam * lam) + inner(v, bg.mode.lambda_lambda_star_rho_lambda(lam));
    };

    double x0 = std::clamp(std::log(nu_start), xmin, xmax);
    const double f0 = F(x0);
    if (f0 == 0.0) return std::exp(x0);

    double lo = x0, hi = x0, flo = f0;
    bool found = false;
    for (double step = 0.02; step < 20.0 && !found; step *= 2.0) {
        const double xl = std::max(x0 - step, xmin), xr = std::min(x0 + step, xmax);
        const double fl = F(xl), fr = F(xr);
        if (fl * f0 <= 0.0) {
            lo = xl; flo = fl; hi = x0;
            found = true;
        } else if (fr * f0 <= 0.0) {
            lo = x0; flo = f0; hi = xr;
            found = true;
        }
        if (xl == xmin && xr == xmax) break;
    }
    if (!found) throw ModulationError("modulation undefined: no sign change of the orthogonality function");

    const double scale = norm_grad(us) + 1.0;
    double x = x0;
    for (int it = 0; it < 200; ++it) {
        const double fx = F(x);
        if (std::abs(fx) <= 1e-15 * scale) break;
        if ((fx < 0.0) == (flo < 0.0)) { lo = x; flo = fx; } else { hi = x; }
        const double der = dF(x);
        double xn = x - fx / der;
        if (!(der > 0.0) || !(xn > std::min(lo, hi) && xn < std::max(lo, hi))) xn = 0.5 * (lo + hi);
        if (std::abs(xn - x) < 1e-15 * (1.0 + std::abs(x))) { x = xn; break; }
        x = xn;
    }
    return std::exp(x);
}

struct Decomposition {
    double lambda = 1.0;
    double mu = 0.0;               // mu_S
    RadialField gamma;
    Side side = Side::Plus;
    double E_S = 0.0;
    double d_S = 0.0;              // E_S^{1/2}, valid in the chi = 1 region
    double d0 = 0.0;
    double orth_residual = 0.0;    // |F(lambda)| / ||grad(u_side - W_lambda)||
};

inline Decomposition decompose(const PhaseState& s, Side side, const Background& bg, const D0Result* hint = nullptr)
{
    const D0Result dd = hint && hint->side == side ? *hint : d0_side(s, side);
    if (dd.value > 0.3 * bg.ground.grad_norm())
        throw ModulationError("modulation undefined: d0 above 0.3 ||grad W||");
    Decomposition out;
    out.side = side;
    out.d0 = dd.value;
    out.lambda = solve_lambda(s, side, bg, dd.nu);

    const RadialField us(s.grid_ptr(), detail::side_values(s.u, side));
    const RadialField udots(s.grid_ptr(), detail::side_values(s.udot, side));
    const RadialField Wl = W_lambda(bg.ground, out.lambda);
    const RadialField v = us - Wl;
    const RadialField rl = bg.mode.rho_lambda(out.lambda);
    out.mu = out.lambda * out.lambda * inner(v, rl);
    out.gamma = v.axpy(-out.mu, rl);
    const double JWl = out.lambda == 1.0 ? bg.J_W() : static_energy(Wl);
    out.E_S = energy(PhaseState(us, udots)) - JWl + bg.mode.k2() * out.mu * out.mu;
    out.d_S = std::sqrt(std::max(out.E_S, 0.0));
    const double vn = norm_grad(v);
    const double f = inner(v, bg.mode.lambda_star_rho_lambda(out.lambda));
    out.orth_residual = vn > 0.0 ? std::abs(f) / vn : std::abs(f);
    return out;
}

inline Decomposition decompose(const PhaseState& s, const Background& bg)
{
    const D0Result dd = d0(s);
    return decompose(s, dd.side, bg, &dd);
}

struct DistanceReport {
    double d_S = NAN;
    D0Result plus, minus;
    double chi_plus = 0.0, chi_minus = 0.0;
    std::optional<Decomposition> dec;   // nearest side, when modulation succeeded
    bool defined = true;
    std::string error;

    double d0_min() const { return std::min(plus.value, minus.value); }
    Side nearest() const { return minus.value < plus.value ? Side::Minus : Side::Plus; }
};

/*
 * d_S = chi(d0(+)/dE) E_S(+)^{1/2} + chi(d0(-)/dE) E_S(-)^{1/2}
 *       + (1 - chi(+) - chi(-)) C_E min(d0(+), d0(-)).
 * With want_modulation the nearest-side decomposition is attempted even
 * when both chi weights vanish (needed for lambda tracking).
 */
inline DistanceReport distance_report(const PhaseState& s, const DistanceParams& p, const Background& bg,
                                      bool want_modulation = false)
{
    DistanceReport rep;
    rep.plus = d0_side(s, Side::Plus);
    rep.minus = d0_side(s, Side::Minus);
    rep.chi_plus = chi(rep.plus.value / p.delta_E);
    rep.chi_minus = chi(rep.minus.value / p.delta_E);

    double tp = 0.0, tm = 0.0;
    std::optional<Decomposition> dp, dm;
    try {
        if (rep.chi_plus > 0.0) {
            dp = decompose(s, Side::Plus, bg, &rep.plus);
            tp = rep.chi_plus * dp->d_S;
        }
        if (rep.chi_minus > 0.0) {
            dm = decompose(s, Side::Minus, bg, &rep.minus);
            tm = rep.chi_minus * dm->d_S;
        }
    } catch (const ModulationError& e) {
        rep.defined = false;
        rep.error = std::string("distance undefined: ") + e.what();
        return rep;
    }
    const double far = (1.0 - (rep.chi_plus + rep.chi_minus)) * p.C_E * rep.d0_min();
    rep.d_S = (tp + tm) + far;

    const Side near = rep.nearest();
    if (near == Side::Plus && dp) rep.dec = dp;
    else if (near == Side::Minus && dm) rep.dec = dm;
    else if (want_modulation) {
        try {
            rep.dec = decompose(s, near, bg, near == Side::Plus ? &rep.plus : &rep.minus);
        } catch (const ModulationError&) {
        }
    }
    return rep;
}

inline double distance_dS(const PhaseState& s, const DistanceParams& p, const Background& bg)
{
    const DistanceReport r = distance_report(s, p, bg);
    if (!r.defined) throw ModulationError(r.error);
    return r.d_S;
}

class SigmaUndefined : public ModulationError {
public:
    using ModulationError::ModulationError;
};

struct SigmaReport {
    int sigma = 0;
    int k_sign = 0;            // sign K with sign 0 = +1
    bool mu_clause = false;    // d_S <= delta_M
    bool k_clause = false;     // E <= J(W) + eps_V(d_S)^2
    bool consistent = true;    // both clauses agree when both apply
    double d_S = 0.0;
    double mu_S = 0.0;
    double K = 0.0;
    double E = 0.0;
};

inline bool in_HX(double E, double J, double d_S, const DistanceParams& p)
{
    return E <= J + p.eps_star * p.eps_star && E < J + 0.5 * d_S * d_S;
}

inline SigmaReport sign_Sigma_from(double E, double K, const DistanceReport& dist, const DistanceParams& p,
                                   const Background& bg)
{
    if (!dist.defined) throw SigmaUndefined("Sigma undefined: " + dist.error);
    SigmaReport r;
    r.E = E;
    r.K = K;
    r.d_S = dist.d_S;
    if (!in_HX(E, bg.J_W(), r.d_S, p)) throw SigmaUndefined("Sigma undefined: state outside H_X");
    r.k_sign = K >= 0.0 ? 1 : -1;
    const double epsv = p.eps_v_ratio * r.d_S;
    r.k_clause = E <= bg.J_W() + epsv * epsv;
    r.mu_clause = r.d_S <= p.delta_M;
    if (r.mu_clause) {
        if (!dist.dec) throw SigmaUndefined("Sigma undefined: no modulation inside the delta_M tube");
        r.mu_S = dist.dec->mu;
        r.sigma = -r.mu_S >= 0.0 ? 1 : -1;
        if (r.k_clause) r.consistent = r.sigma == r.k_sign;
    } else {
        r.sigma = r.k_sign;
        if (dist.dec) r.mu_S = dist.dec->mu;
    }
    return r;
}

inline SigmaReport sign_Sigma(const PhaseState& s, const DistanceParams& p, const Background& bg)
{
    const FunctionalReport f = functionals(s);
    return sign_Sigma_from(f.E, f.K, distance_report(s, p, bg, true), p, bg);
}

struct EigendomReport {
    double ratio = 0.0;   // |mu_S| / d_S
    double mu_S = 0.0;
    double d_S = 0.0;
};

inline EigendomReport eigendom_check(const PhaseState& s, const DistanceParams& p, const Background& bg)
{
    const DistanceReport dist = distance_report(s, p, bg, true);
    if (!dist.defined || !dist.dec) throw InputError("eigendom_check: modulation undefined");
    const double E = energy(s);
    if (!(E - bg.J_W() <= 0.5 * dist.d_S * dist.d_S) || !(dist.d_S <= p.delta_E))
        throw InputError("eigendom_check: need E - J(W) <= d_S^2/2 and d_S <= delta_E");
    if (!(dist.d_S > 0.0)) throw InputError("eigendom_check: d_S is zero");
    EigendomReport r;
    r.mu_S = dist.dec->mu;
    r.d_S = dist.d_S;
    r.ratio = std::abs(r.mu_S) / r.d_S;
    return r;
}

}  // namespace critwave
