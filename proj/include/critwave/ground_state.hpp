#pragma once

#include <cmath>
#include <numbers>

#include "critwave/radial_core.hpp"

namespace critwave {

// W(r) = (1 + r^2/(d(d-2)))^{1-d/2}
inline double ground_profile(int d, double r)
{
    const double s = 1.0 + r * r / (d * (d - 2.0));
    return d == 3 ? 1.0 / std::sqrt(s) : 1.0 / (s * std::sqrt(s));
}

// Lambda W = (d/2-1)(1+x)^{-d/2}(1-x), x = r^2/(d(d-2))
inline double ground_generator(int d, double r)
{
    const double x = r * r / (d * (d - 2.0));
    return (0.5 * d - 1.0) * std::pow(1.0 + x, -0.5 * d) * (1.0 - x);
}

// closed-form ||grad W||^2
inline double ground_grad_sq_exact(int d)
{
    constexpr double pi = std::numbers::pi;
    if (d == 3) return 3.0 * std::sqrt(3.0) * pi * pi / 4.0;
    return pi * pi * pi * std::pow(15.0, 2.5) / 32.0;
}

struct GroundStateFamily {
    GridPtr grid;
    RadialField W;
    RadialField LambdaW;
    double grad_sq = 0.0;   // ||grad W||^2
    double crit = 0.0;      // int W^{2*}
    double J = 0.0;         // static energy

    int dim() const { return grid->dim(); }
    double grad_norm() const { return std::sqrt(grad_sq); }
};

inline RadialField sample_W_lambda(const GridPtr& grid, double lambda)
{
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InputError("W_lambda: lambda must be positive");
    const int d = grid->dim();
    const double c = std::pow(lambda, 0.5 * d - 1.0);
    return RadialField::sample(grid, [&](double r) { return c * ground_profile(d, lambda * r); });
}

inline GroundStateFamily make_W(const GridPtr& grid)
{
    GroundStateFamily f;
    const int d = grid->dim();
    f.grid = grid;
    f.W = RadialField::sample(grid, [d](double r) { return ground_profile(d, r); });
    f.LambdaW = RadialField::sample(grid, [d](double r) { return ground_generator(d, r); });
    f.grad_sq = grad_sq(f.W);
    f.crit = crit_integral(f.W);
    f.J = 0.5 * f.grad_sq - f.crit / grid->pstar();
    return f;
}

inline RadialField W_lambda(const GroundStateFamily& fam, double lambda)
{
    if (lambda == 1.0) return fam.W;
    return sample_W_lambda(fam.grid, lambda);
}

// ||-Delta W - W^{2*-1}|| / ||W^{2*-1}|| over the interior (the three closure nodes at R excluded)
inline double static_residual(const GroundStateFamily& fam)
{
    const Grid& g = *fam.grid;
    const RadialField lap = laplacian(fam.W);
    const auto& m = g.mass();
    const double p = g.pstar();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i + 3 < g.size(); ++i) {
        const double f = std::pow(fam.W[i], p - 1.0);
        const double res = -lap[i] - f;
        const double w = i == 0 ? m[1] : m[i];
        num += w * res * res;
        den += w * f * f;
    }
    return std::sqrt(num / den);
}

}  // namespace critwave
