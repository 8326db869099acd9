#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "critwave/banded.hpp"
#include "critwave/ground_state.hpp"
#include "critwave/radial_core.hpp"

namespace critwave {

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_rayleigh)
        : Error(what), last_rayleigh(last_rayleigh) {}
    double last_rayleigh;
};

// full n x n stiffness Q (bandwidth 3)
inline SymBanded stiffness_matrix(const Grid& g)
{
    const std::size_t n = g.size();
    SymBanded Q(n, 3);
    const double c = 1.0 / (24.0 * g.h());
    for (std::size_t j = 0; j + 2 < n; ++j) {
        std::size_t idx[4] = {j == 0 ? 1 : j - 1, j, j + 1, j + 2};
        const double w[4] = {c, -27.0 * c, 27.0 * c, -c};
        // j = 0: the reflected ghost folds onto node 1
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b <= a; ++b) {
                const double v = g.flux()[j] * w[a] * w[b];
                if (idx[a] == idx[b] && a != b) Q.at(idx[a], idx[b]) += 2.0 * v;
                else Q.at(idx[a], idx[b]) += v;
            }
    }
    const std::size_t j = n - 2;
    const double fl = g.flux()[j] / (g.h() * g.h());
    Q.at(j, j) += fl;
    Q.at(j + 1, j + 1) += fl;
    Q.at(j + 1, j) -= fl;
    Q.at(n - 1, n - 1) += g.tail_stiffness();
    return Q;
}

// Q with node 0 eliminated (Schur complement), indexed by node - 1
inline SymBanded reduced_stiffness(const Grid& g)
{
    const SymBanded Q = stiffness_matrix(g);
    const std::size_t n = g.size();
    SymBanded R(n - 1, 3);
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = (i > 3 ? i - 3 : 1); j <= i; ++j) R.at(i - 1, j - 1) = Q.at(i, j);
    const double q00 = Q.at(0, 0);
    for (std::size_t i = 1; i <= 3; ++i)
        for (std::size_t j = 1; j <= i; ++j) R.at(i - 1, j - 1) -= Q.at(i, 0) * Q.at(0, j) / q00;
    return R;
}

// rigorous upper bound on the spectrum of M^{-1}Q (nodes >= 1)
inline double stiffness_spectral_bound(const Grid& g)
{
    SymBanded S = reduced_stiffness(g);
    const auto& m = g.mass();
    const std::size_t n = S.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = (i > 3 ? i - 3 : 0); j <= i; ++j) S.at(i, j) /= std::sqrt(m[i + 1] * m[j + 1]);
    return S.gershgorin_high();
}

inline std::vector<double> linear_potential(const GridPtr& grid, double lambda)
{
    const int d = grid->dim();
    const double p = grid->pstar();
    const RadialField W = sample_W_lambda(grid, lambda);
    std::vector<double> V(grid->size());
    for (std::size_t i = 0; i < V.size(); ++i) V[i] = (p - 1.0) * crit_weight(d, W[i]);
    return V;
}

/*
 * L f = -Delta f - (2*-1) W_lambda^{2*-2} f.  Away from the origin this is
 * (Q f - crit_mass V f) / mass, the operator whose weak form is used by the
 * eigen-solver.  with_potential = false gives -Delta.
 */
inline RadialField linearized_apply(const RadialField& f, double lambda = 1.0, bool with_potential = true)
{
    const Grid& g = f.grid();
    const std::size_t n = g.size();
    std::vector<double> V = with_potential ? linear_potential(f.grid_ptr(), lambda) : std::vector<double>(n, 0.0);
    std::vector<double> q(n);
    g.stiffness(f.values(), q);
    const auto& m = g.mass();
    const auto& mc = g.crit_mass();
    for (std::size_t i = 1; i < n; ++i) q[i] = (q[i] - mc[i] * V[i] * f[i]) / m[i];
    const double h2 = g.h() * g.h();
    q[0] = -g.dim() * (-2.0 * f[2] + 32.0 * f[1] - 30.0 * f[0]) / (12.0 * h2) - V[0] * f[0];
    return RadialField(f.grid_ptr(), std::move(q));
}

// <L f | f> in weak form
inline double linearized_form(const RadialField& f, double lambda = 1.0)
{
    const Grid& g = f.grid();
    const auto V = linear_potential(f.grid_ptr(), lambda);
    const auto& mc = g.crit_mass();
    double s = g.dirichlet(f.values());
    for (std::size_t i = 0; i < V.size(); ++i) s -= mc[i] * V[i] * f[i] * f[i];
    return s;
}

struct SpectralOptions {
    int max_iter = 4000;
    double rayleigh_tol = 1e-10;
    double residual_tol = 1e-10;
};

struct Eigenpair {
    double k = 0.0;
    RadialField rho;
    double residual = 0.0;
    std::size_t negative_count = 0;
    int iterations = 0;

    double k2() const { return k * k; }
};

// residual of L rho + k^2 rho relative to k^2, mass-weighted over nodes >= 1
inline double eigen_residual(const RadialField& rho, double k2, double lambda = 1.0)
{
    const Grid& g = rho.grid();
    const RadialField Lr = linearized_apply(rho, lambda);
    const auto& m = g.mass();
    const double ev = k2 * lambda * lambda;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 1; i < g.size(); ++i) {
        const double r = Lr[i] + ev * rho[i];
        num += m[i] * r * r;
        den += m[i] * rho[i] * rho[i];
    }
    return std::sqrt(num / den) / ev;
}

/*
 * Lowest eigenpair of S = M^{-1/2}(Q_red - diag(crit_mass V))M^{-1/2} by
 * inverse iteration with a shift below the spectrum.  -Delta_h is
 * nonnegative, so -max(V crit_mass/mass) bounds the spectrum from below.
 */
inline Eigenpair ground_eigenpair(const GroundStateFamily& fam, const SpectralOptions& opt = {})
{
    const Grid& g = *fam.grid;
    const std::size_t n = g.size();
    const auto& m = g.mass();
    const auto& mc = g.crit_mass();
    const auto V = linear_potential(fam.grid, 1.0);

    SymBanded S = reduced_stiffness(g);
    double vmax = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        S.at(i - 1, i - 1) -= mc[i] * V[i];
        vmax = std::max(vmax, mc[i] * V[i] / m[i]);
    }
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = (i > 3 ? i - 3 : 0); j <= i; ++j) S.at(i, j) /= std::sqrt(m[i + 1] * m[j + 1]);

    Eigenpair out;
    out.negative_count = BandedLDLT(S).negative_pivots();

    const double shift = -1.02 * vmax - 1e-3;
    SymBanded A = S;
    A.shift_diagonal(-shift);
    const BandedLDLT F(A);

    const std::size_t nn = n - 1;
    std::vector<double> y(nn), Sy(nn);
    for (std::size_t i = 0; i < nn; ++i) y[i] = std::sqrt(m[i + 1]) * fam.W[i + 1] * fam.W[i + 1];
    auto normalize = [&] {
        double s = 0.0;
        for (double v : y) s += v * v;
        s = 1.0 / std::sqrt(s);
        for (double& v : y) v *= s;
    };
    normalize();

    double rq = 0.0, rq_prev = INFINITY, res = INFINITY;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        F.solve(y);
        normalize();
        S.multiply(y, Sy);
        rq = 0.0;
        for (std::size_t i = 0; i < nn; ++i) rq += y[i] * Sy[i];
        res = 0.0;
        for (std::size_t i = 0; i < nn; ++i) res += (Sy[i] - rq * y[i]) * (Sy[i] - rq * y[i]);
        res = std::sqrt(res) / std::abs(rq);
        if (std::abs(rq - rq_prev) < opt.rayleigh_tol * std::abs(rq) && res < opt.residual_tol) break;
        rq_prev = rq;
    }
    if (it == opt.max_iter)
        throw ConvergenceError("ground_eigenpair: no convergence, last Rayleigh quotient " + std::to_string(rq), rq);
    if (!(rq < 0.0))
        throw ConvergenceError("ground_eigenpair: lowest eigenvalue is not negative", rq);

    std::vector<double> rho(n);
    for (std::size_t i = 1; i < n; ++i) rho[i] = y[i - 1] / std::sqrt(m[i]);
    g.fix_origin(rho);
    if (rho[1] < 0.0)
        for (double& v : rho) v = -v;

    out.k = std::sqrt(-rq);
    out.rho = RadialField(fam.grid, std::move(rho));
    out.residual = eigen_residual(out.rho, -rq);
    out.iterations = it + 1;
    return out;
}

struct CoercivityReport {
    double quad_form = 0.0;      // <L gamma | gamma>
    double grad_sq = 0.0;        // ||grad gamma||^2
    double pairing = 0.0;        // <gamma | Lambda* rho>
    double equiv_ratio = NAN;    // grad_sq / (pairing^2 + quad_form)
    bool ratio_defined = false;
};

/*
 * Unstable mode with its dilation family.  rho_lambda is renormalized so
 * that ||rho_lambda|| = 1/lambda holds exactly on the grid, which keeps
 * gamma orthogonal to rho_lambda by construction.
 */
class UnstableMode {
public:
    UnstableMode() = default;
    UnstableMode(const GroundStateFamily& fam, Eigenpair pair) : pair_(std::move(pair))
    {
        ls_rho_ = apply_Lambda_star(pair_.rho);
        lls_rho_ = apply_Lambda(ls_rho_);
        rho_i_ = Interpolant(pair_.rho, Tail::Zero);
        ls_i_ = Interpolant(ls_rho_, Tail::Zero);
        lls_i_ = Interpolant(lls_rho_, Tail::Zero);
        nondeg_ = inner(fam.LambdaW, ls_rho_);
    }

    const Eigenpair& pair() const { return pair_; }
    double k() const { return pair_.k; }
    double k2() const { return pair_.k * pair_.k; }
    const RadialField& rho() const { return pair_.rho; }
    const RadialField& lambda_star_rho() const { return ls_rho_; }
    // <Lambda W | Lambda* rho>, negative
    double nondegeneracy() const { return nondeg_; }

    RadialField rho_lambda(double lambda) const
    {
        if (lambda == 1.0) return pair_.rho;
        RadialField r = rho_i_.dilate(lambda);
        const double nr = norm_L2(r);
        return r.scaled(1.0 / (lambda * nr));
    }
    RadialField lambda_star_rho_lambda(double lambda) const
    {
        return lambda == 1.0 ? ls_rho_ : ls_i_.dilate(lambda);
    }
    RadialField lambda_lambda_star_rho_lambda(double lambda) const
    {
        return lambda == 1.0 ? lls_rho_ : lls_i_.dilate(lambda);
    }

    CoercivityReport coercivity(const RadialField& gamma_in) const
    {
        const double c = inner(gamma_in, pair_.rho);
        const RadialField gamma = gamma_in.axpy(-c, pair_.rho);
        CoercivityReport rep;
        rep.grad_sq = grad_sq(gamma);
        if (!(rep.grad_sq > 1e-28)) throw InputError("coercivity_check: zero field after projection");
        rep.quad_form = linearized_form(gamma);
        rep.pairing = inner(gamma, ls_rho_);
        const double den = rep.pairing * rep.pairing + rep.quad_form;
        if (den > 1e-14 * rep.grad_sq) {
            rep.equiv_ratio = rep.grad_sq / den;
            rep.ratio_defined = true;
        }
        return rep;
    }

private:
    Eigenpair pair_;
    RadialField ls_rho_, lls_rho_;
    Interpolant rho_i_, ls_i_, lls_i_;
    double nondeg_ = 0.0;
};

// ground state plus its unstable mode: the fixed context of every later module
struct Background {
    GroundStateFamily ground;
    UnstableMode mode;

    const GridPtr& grid() const { return ground.grid; }
    double J_W() const { return ground.J; }
    double k() const { return mode.k(); }
};

inline Background make_background(const GridPtr& grid, const SpectralOptions& opt = {})
{
    Background bg;
    bg.ground = make_W(grid);
    bg.mode = UnstableMode(bg.ground, ground_eigenpair(bg.ground, opt));
    return bg;
}

}  // namespace critwave
