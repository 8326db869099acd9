#pragma once

#include <cmath>
#include <map>
#include <random>

#include "critwave/experiments.hpp"

namespace cwtest {

using namespace critwave;

// frozen from an adaptive DOP853 shooting run (rtol 1e-13), see test_spectral for the in-tree recomputation
inline constexpr double kK2Dim3 = 1.2103679049;
inline constexpr double kK2Dim5 = 0.3820190276;

inline const Background& background(int d, std::size_t n = 2048)
{
    static std::map<std::pair<int, std::size_t>, Background> cache;
    auto key = std::make_pair(d, n);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, make_background(make_grid(d, n, default_r_max(d)))).first;
    return it->second;
}

inline const Background& bg3() { return background(3); }

inline DistanceParams params(const Background& bg) { return DistanceParams::defaults(bg.ground.grad_norm()); }

// smooth random radial field: a few Gaussian bumps with random centers, widths and signs
inline RadialField random_field(const GridPtr& grid, std::mt19937_64& rng, double scale = 1.0)
{
    std::uniform_real_distribution<double> U(0.0, 1.0);
    RadialField f(grid);
    for (int j = 0; j < 3; ++j) {
        const double c = 8.0 * U(rng), w = 0.5 + 3.0 * U(rng), a = 2.0 * U(rng) - 1.0;
        f = f.axpy(scale * a, bump(grid, c, w));
    }
    return f;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace cwtest
