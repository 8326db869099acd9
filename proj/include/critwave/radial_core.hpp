#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace critwave {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InputError : public Error {
public:
    using Error::Error;
};

inline double sphere_area(int d)
{
    return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

inline double critical_exponent(int d) { return 2.0 * d / (d - 2.0); }

// |u|^{p-2} for the two supported exponents without calling pow
inline double crit_weight(int d, double u)
{
    if (d == 3) {
        const double u2 = u * u;
        return u2 * u2;
    }
    const double c = std::cbrt(u);
    const double c2 = c * c;
    return c2 * c2;
}

/*
 * Uniform radial grid r_i = i h on [0, R].
 *
 * Gradients live on half nodes r_{j+1/2}.  The half-node difference is the
 * fourth-order staggered stencil (1, -27, 27, -1)/(24h) with even reflection
 * u_{-1} = u_1; the last half node uses the plain two-point difference.
 * The Dirichlet form is
 *
 *     Q(u, v) = sum_j flux_j (Du)_j (Dv)_j + tail u_{N-1} v_{N-1},
 *
 * where the tail term is the exact exterior energy of the harmonic
 * extension u_R (R/r)^{d-2}.  Node weights are trapezoid except near the
 * origin, where they are chosen so that -Q r^2 / mass = 2d exactly.  That
 * makes mass_0 = 0, so node 0 carries no inertia and is slaved to its
 * neighbours through (Qu)_0 = 0.
 */
class Grid {
public:
    Grid(int dim, std::size_t n, double r_max) : dim_(dim), n_(n), r_max_(r_max)
    {
        if (dim != 3 && dim != 5)
            throw InputError("grid: dimension must be 3 or 5, got " + std::to_string(dim));
        if (n < 16)
            throw InputError("grid: need at least 16 points, got " + std::to_string(n));
        if (!(r_max > 0.0) || !std::isfinite(r_max))
            throw InputError("grid: r_max must be positive");

        h_ = r_max / static_cast<double>(n - 1);
        area_ = sphere_area(dim);
        pstar_ = critical_exponent(dim);

        r_.resize(n);
        for (std::size_t i = 0; i < n; ++i) r_[i] = static_cast<double>(i) * h_;
        r_[n - 1] = r_max;

        flux_.resize(n - 1);
        for (std::size_t j = 0; j + 1 < n; ++j)
            flux_[j] = area_ * h_ * std::pow((static_cast<double>(j) + 0.5) * h_, dim - 1);
        tail_ = area_ * (dim - 2.0) * std::pow(r_max, dim - 2);

        build_mass();
        build_origin_row();
    }

    int dim() const { return dim_; }
    std::size_t size() const { return n_; }
    double r_max() const { return r_max_; }
    double h() const { return h_; }
    double area() const { return area_; }
    double pstar() const { return pstar_; }
    double r(std::size_t i) const { return r_[i]; }
    double half_node(std::size_t j) const { return (static_cast<double>(j) + 0.5) * h_; }
    const std::vector<double>& nodes() const { return r_; }
    const std::vector<double>& mass() const { return mass_; }
    const std::vector<double>& crit_mass() const { return crit_mass_; }
    const std::vector<double>& flux() const { return flux_; }
    double tail_stiffness() const { return tail_; }
    // energy of the harmonic exterior for a 2*-homogeneous integrand, per unit integrand
    double crit_tail() const { return area_ * std::pow(r_max_, dim_) / dim_; }

    bool operator==(const Grid& o) const
    {
        return dim_ == o.dim_ && n_ == o.n_ && r_max_ == o.r_max_;
    }

    double grad_at(const double* u, std::size_t j) const
    {
        if (j + 2 == n_) return (u[j + 1] - u[j]) / h_;
        const double um = j == 0 ? u[1] : u[j - 1];
        return (um - 27.0 * u[j] + 27.0 * u[j + 1] - u[j + 2]) / (24.0 * h_);
    }

    void gradient(std::span<const double> u, std::span<double> g) const
    {
        for (std::size_t j = 0; j + 1 < n_; ++j) g[j] = grad_at(u.data(), j);
    }

    // out += D^T g
    void gradient_adjoint(std::span<const double> g, std::span<double> out) const
    {
        const double c = 1.0 / (24.0 * h_);
        for (std::size_t j = 0; j + 2 < n_; ++j) {
            const double gj = g[j] * c;
            out[j == 0 ? 1 : j - 1] += gj;
            out[j] -= 27.0 * gj;
            out[j + 1] += 27.0 * gj;
            out[j + 2] -= gj;
        }
        const std::size_t j = n_ - 2;
        out[j + 1] += g[j] / h_;
        out[j] -= g[j] / h_;
    }

    // out = Q u
    void stiffness(std::span<const double> u, std::span<double> out) const
    {
        std::vector<double> g(n_ - 1);
        for (std::size_t j = 0; j + 1 < n_; ++j) g[j] = flux_[j] * grad_at(u.data(), j);
        std::fill(out.begin(), out.end(), 0.0);
        gradient_adjoint(g, out);
        out[n_ - 1] += tail_ * u[n_ - 1];
    }

    double dirichlet(std::span<const double> u, std::span<const double> v) const
    {
        double s = 0.0;
        for (std::size_t j = 0; j + 1 < n_; ++j)
            s += flux_[j] * grad_at(u.data(), j) * grad_at(v.data(), j);
        return s + tail_ * u[n_ - 1] * v[n_ - 1];
    }

    double dirichlet(std::span<const double> u) const
    {
        double s = 0.0;
        for (std::size_t j = 0; j + 1 < n_; ++j) {
            const double g = grad_at(u.data(), j);
            s += flux_[j] * g * g;
        }
        return s + tail_ * u[n_ - 1] * u[n_ - 1];
    }

    // Q_{0j}, j = 0..3
    const std::array<double, 4>& origin_row() const { return q0_; }

    double origin_value(std::span<const double> u) const
    {
        return -(q0_[1] * u[1] + q0_[2] * u[2] + q0_[3] * u[3]) / q0_[0];
    }

    void fix_origin(std::span<double> u) const { u[0] = origin_value(u); }

private:
    void build_mass()
    {
        const std::size_t n = n_;
        std::vector<double> m(n);
        for (std::size_t i = 0; i < n; ++i) m[i] = h_ * std::pow(r_[i], dim_ - 1);
        m[n - 1] *= 0.5;

        // consistent weights near the origin: exact Laplacian of r^2
        std::vector<double> r2(n), g(n - 1), q(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) r2[i] = r_[i] * r_[i];
        for (std::size_t j = 0; j + 1 < n; ++j)
            g[j] = h_ * std::pow(half_node(j), dim_ - 1) * grad_at(r2.data(), j);
        gradient_adjoint(g, q);
        for (std::size_t i = 1; i < 8; ++i) m[i] = -q[i] / (2.0 * dim_);
        m[0] = 0.0;

        double inner = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) inner += m[i];
        m[n - 1] = std::pow(r_max_, dim_) / dim_ - inner;

        for (double w : m)
            if (w < 0.0) throw InputError("grid: negative quadrature weight, grid too coarse");

        mass_.resize(n);
        for (std::size_t i = 0; i < n; ++i) mass_[i] = area_ * m[i];
        crit_mass_ = mass_;
        crit_mass_[n - 1] += crit_tail();
    }

    void build_origin_row()
    {
        std::vector<double> e(n_, 0.0), q(n_);
        for (std::size_t j = 0; j < 4; ++j) {
            std::fill(e.begin(), e.end(), 0.0);
            e[j] = 1.0;
            stiffness(e, q);
            q0_[j] = q[0];
        }
    }

    int dim_;
    std::size_t n_;
    double r_max_;
    double h_ = 0.0;
    double area_ = 0.0;
    double pstar_ = 0.0;
    double tail_ = 0.0;
    std::vector<double> r_, mass_, crit_mass_, flux_;
    std::array<double, 4> q0_{};
};

using GridPtr = std::shared_ptr<const Grid>;

inline GridPtr make_grid(int dim, std::size_t n, double r_max)
{
    return std::make_shared<const Grid>(dim, n, r_max);
}

inline double default_r_max(int dim) { return dim == 3 ? 64.0 : 32.0; }

// Samples of a radial function.  Values are fixed at construction.
class RadialField {
public:
    RadialField() = default;

    explicit RadialField(GridPtr grid) : grid_(std::move(grid))
    {
        if (!grid_) throw InputError("field: null grid");
        v_.assign(grid_->size(), 0.0);
    }

    RadialField(GridPtr grid, std::vector<double> values) : grid_(std::move(grid)), v_(std::move(values))
    {
        if (!grid_) throw InputError("field: null grid");
        if (v_.size() != grid_->size()) throw InputError("field: value count does not match grid");
        for (double x : v_)
            if (!std::isfinite(x)) throw InputError("field: non-finite sample");
    }

    template <class F>
    static RadialField sample(const GridPtr& grid, F&& f)
    {
        std::vector<double> v(grid->size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid->r(i));
        return RadialField(grid, std::move(v));
    }

    const Grid& grid() const { return *grid_; }
    const GridPtr& grid_ptr() const { return grid_; }
    std::span<const double> values() const { return v_; }
    const std::vector<double>& vec() const { return v_; }
    std::size_t size() const { return v_.size(); }
    double operator[](std::size_t i) const { return v_[i]; }
    bool empty() const { return !grid_; }

    void require_same_grid(const RadialField& o) const
    {
        if (!grid_ || !o.grid_ || !(*grid_ == *o.grid_))
            throw InputError("field: grids differ");
    }

    RadialField axpy(double a, const RadialField& x) const
    {
        require_same_grid(x);
        std::vector<double> w(v_);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += a * x.v_[i];
        return RadialField(grid_, std::move(w));
    }

    RadialField scaled(double a) const
    {
        std::vector<double> w(v_);
        for (double& x : w) x *= a;
        return RadialField(grid_, std::move(w));
    }

    friend RadialField operator+(const RadialField& a, const RadialField& b) { return a.axpy(1.0, b); }
    friend RadialField operator-(const RadialField& a, const RadialField& b) { return a.axpy(-1.0, b); }
    friend RadialField operator-(const RadialField& a) { return a.scaled(-1.0); }
    friend RadialField operator*(double s, const RadialField& a) { return a.scaled(s); }

private:
    GridPtr grid_;
    std::vector<double> v_;
};

struct PhaseState {
    RadialField u;
    RadialField udot;
    double t = 0.0;

    PhaseState() = default;
    PhaseState(RadialField u_, RadialField udot_, double t_ = 0.0)
        : u(std::move(u_)), udot(std::move(udot_)), t(t_)
    {
        u.require_same_grid(udot);
    }

    static PhaseState at_rest(RadialField u_) {
        RadialField z(u_.grid_ptr());
        return PhaseState(std::move(u_), std::move(z));
    }

    const Grid& grid() const { return u.grid(); }
    const GridPtr& grid_ptr() const { return u.grid_ptr(); }
    PhaseState negated() const { return PhaseState(-u, -udot, t); }
    PhaseState time_reversed() const { return PhaseState(u, -udot, t); }
};

inline double inner(const RadialField& f, const RadialField& g)
{
    f.require_same_grid(g);
    const auto& m = f.grid().mass();
    double s = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) s += m[i] * f[i] * g[i];
    return s;
}

inline double norm_L2(const RadialField& f) { return std::sqrt(inner(f, f)); }

inline double dirichlet(const RadialField& f, const RadialField& g)
{
    f.require_same_grid(g);
    return f.grid().dirichlet(f.values(), g.values());
}

inline double grad_sq(const RadialField& f) { return f.grid().dirichlet(f.values()); }

inline double norm_grad(const RadialField& f) { return std::sqrt(grad_sq(f)); }

// integral of |f|^{2*}, harmonic exterior included
inline double crit_integral(const RadialField& f)
{
    const Grid& g = f.grid();
    const auto& m = g.crit_mass();
    const double p = g.pstar();
    double s = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) s += m[i] * std::pow(std::abs(f[i]), p);
    return s;
}

inline double norm_crit(const RadialField& f) { return std::pow(crit_integral(f), 1.0 / f.grid().pstar()); }

// fourth-order node derivative, even at the origin, one-sided at R
inline std::vector<double> radial_derivative(std::span<const double> f, double h)
{
    const std::size_t n = f.size();
    std::vector<double> d(n);
    auto at = [&](std::ptrdiff_t i) { return f[static_cast<std::size_t>(i < 0 ? -i : i)]; };
    for (std::size_t i = 0; i + 2 < n; ++i) {
        const auto k = static_cast<std::ptrdiff_t>(i);
        d[i] = (at(k - 2) - 8.0 * at(k - 1) + 8.0 * at(k + 1) - at(k + 2)) / (12.0 * h);
    }
    d[n - 2] = (f[n - 1] - f[n - 3]) / (2.0 * h);
    d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    return d;
}

inline RadialField radial_derivative(const RadialField& f)
{
    return RadialField(f.grid_ptr(), radial_derivative(f.values(), f.grid().h()));
}

/*
 * Discrete Laplacian: -(Qf)_i / mass_i away from the origin; at r = 0 the
 * even fourth-order formula d f''(0).  The outermost value includes the
 * harmonic-tail closure and is not a pointwise approximation.
 */
inline RadialField laplacian(const RadialField& f)
{
    const Grid& g = f.grid();
    const std::size_t n = g.size();
    std::vector<double> q(n);
    g.stiffness(f.values(), q);
    const auto& m = g.mass();
    for (std::size_t i = 1; i < n; ++i) q[i] = -q[i] / m[i];
    const double h2 = g.h() * g.h();
    q[0] = g.dim() * (-2.0 * f[2] + 32.0 * f[1] - 30.0 * f[0]) / (12.0 * h2);
    return RadialField(f.grid_ptr(), std::move(q));
}

// Lambda f = r f_r + (d/2 - 1) f
inline RadialField apply_Lambda(const RadialField& f)
{
    const Grid& g = f.grid();
    auto d = radial_derivative(f.values(), g.h());
    const double c = 0.5 * g.dim() - 1.0;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = g.r(i) * d[i] + c * f[i];
    return RadialField(f.grid_ptr(), std::move(d));
}

// L^2 adjoint: Lambda* = -Lambda - 2
inline RadialField apply_Lambda_star(const RadialField& f)
{
    const Grid& g = f.grid();
    auto d = radial_derivative(f.values(), g.h());
    const double c = 0.5 * g.dim() + 1.0;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = -g.r(i) * d[i] - c * f[i];
    return RadialField(f.grid_ptr(), std::move(d));
}

enum class Tail { Zero, Harmonic };

/*
 * Cubic Hermite interpolant of grid samples.  Slopes are fourth-order
 * differences, then clipped by the Hyman filter wherever the data are
 * locally monotone.  Past R the value is 0 or f(R) (R/x)^{d-2}.
 */
class Interpolant {
public:
    Interpolant() = default;

    Interpolant(const RadialField& f, Tail tail) : grid_(f.grid_ptr()), f_(f.vec()), tail_(tail)
    {
        const std::size_t n = f_.size();
        const double h = grid_->h();
        s_ = radial_derivative(f_, h);
        s_[0] = 0.0;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double a = (f_[i] - f_[i - 1]) / h;
            const double b = (f_[i + 1] - f_[i]) / h;
            if (a * b <= 0.0) continue;
            double& s = s_[i];
            if (s * a <= 0.0) {
                s = 0.0;
                continue;
            }
            const double lim = 3.0 * std::min(std::abs(a), std::abs(b));
            if (std::abs(s) > lim) s = std::copysign(lim, a);
        }
        if (tail_ == Tail::Harmonic)
            s_[n - 1] = -(grid_->dim() - 2.0) * f_[n - 1] / grid_->r_max();
    }

    double operator()(double x) const
    {
        const Grid& g = *grid_;
        const std::size_t n = f_.size();
        x = std::abs(x);
        if (x >= g.r_max()) {
            if (tail_ == Tail::Zero) return x == g.r_max() ? f_[n - 1] : 0.0;
            return f_[n - 1] * std::pow(g.r_max() / x, g.dim() - 2);
        }
        const double h = g.h();
        std::size_t i = static_cast<std::size_t>(x / h);
        if (i > n - 2) i = n - 2;
        const double t = (x - static_cast<double>(i) * h) / h;
        const double t2 = t * t, t3 = t2 * t;
        const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
        const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
        return h00 * f_[i] + h10 * h * s_[i] + h01 * f_[i + 1] + h11 * h * s_[i + 1];
    }

    // T_lambda applied to the interpolated function, sampled on the grid
    RadialField dilate(double lambda) const
    {
        if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InputError("dilate: lambda must be positive");
        const Grid& g = *grid_;
        const double c = std::pow(lambda, 0.5 * g.dim() - 1.0);
        std::vector<double> v(f_.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = c * (*this)(lambda * g.r(i));
        return RadialField(grid_, std::move(v));
    }

private:
    GridPtr grid_;
    std::vector<double> f_, s_;
    Tail tail_ = Tail::Zero;
};

inline RadialField dilate(const RadialField& f, double lambda, Tail tail)
{
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InputError("dilate: lambda must be positive");
    if (lambda == 1.0) return f;
    return Interpolant(f, tail).dilate(lambda);
}

}  // namespace critwave
