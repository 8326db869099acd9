#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace critwave {

// Symmetric band matrix, lower triangle stored row-wise: at(i, i-k) for k = 0..bw.
class SymBanded {
public:
    SymBanded() = default;
    SymBanded(std::size_t n, std::size_t bw) : n_(n), bw_(bw), a_(n * (bw + 1), 0.0) {}

    std::size_t size() const { return n_; }
    std::size_t bandwidth() const { return bw_; }

    double& at(std::size_t i, std::size_t j)
    {
        if (j > i) std::swap(i, j);
        return a_[i * (bw_ + 1) + (i - j)];
    }
    double at(std::size_t i, std::size_t j) const
    {
        if (j > i) std::swap(i, j);
        if (i - j > bw_) return 0.0;
        return a_[i * (bw_ + 1) + (i - j)];
    }

    void multiply(std::span<const double> x, std::span<double> y) const
    {
        for (std::size_t i = 0; i < n_; ++i) {
            double s = a_[i * (bw_ + 1)] * x[i];
            const std::size_t lo = i > bw_ ? i - bw_ : 0;
            for (std::size_t j = lo; j < i; ++j) s += a_[i * (bw_ + 1) + (i - j)] * x[j];
            y[i] = s;
        }
        for (std::size_t i = 0; i < n_; ++i) {
            const std::size_t lo = i > bw_ ? i - bw_ : 0;
            for (std::size_t j = lo; j < i; ++j) y[j] += a_[i * (bw_ + 1) + (i - j)] * x[i];
        }
    }

    void shift_diagonal(double s)
    {
        for (std::size_t i = 0; i < n_; ++i) a_[i * (bw_ + 1)] += s;
    }

    // lower Gershgorin bound
    double gershgorin_low() const { return gershgorin(-1.0); }
    double gershgorin_high() const { return gershgorin(1.0); }

private:
    double gershgorin(double sgn) const
    {
        std::vector<double> off(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            const std::size_t lo = i > bw_ ? i - bw_ : 0;
            for (std::size_t j = lo; j < i; ++j) {
                const double v = std::abs(a_[i * (bw_ + 1) + (i - j)]);
                off[i] += v;
                off[j] += v;
            }
        }
        double best = sgn > 0 ? -INFINITY : INFINITY;
        for (std::size_t i = 0; i < n_; ++i) {
            const double v = a_[i * (bw_ + 1)] + sgn * off[i];
            best = sgn > 0 ? std::max(best, v) : std::min(best, v);
        }
        return best;
    }

    std::size_t n_ = 0, bw_ = 0;
    std::vector<double> a_;
};

// A = L D L^T without pivoting; the count of negative pivots is the inertia.
class BandedLDLT {
public:
    explicit BandedLDLT(const SymBanded& A) : n_(A.size()), bw_(A.bandwidth()), l_(n_ * (bw_ + 1), 0.0), d_(n_)
    {
        for (std::size_t i = 0; i < n_; ++i) {
            const std::size_t lo = i > bw_ ? i - bw_ : 0;
            for (std::size_t j = lo; j < i; ++j) {
                double s = A.at(i, j);
                const std::size_t klo = std::max(lo, j > bw_ ? j - bw_ : 0);
                for (std::size_t k = klo; k < j; ++k) s -= L(i, k) * d_[k] * L(j, k);
                L(i, j) = s / d_[j];
            }
            double s = A.at(i, i);
            for (std::size_t k = lo; k < i; ++k) s -= L(i, k) * L(i, k) * d_[k];
            if (s == 0.0 || !std::isfinite(s)) throw std::runtime_error("banded LDLT: singular pivot");
            d_[i] = s;
        }
    }

    std::size_t negative_pivots() const
    {
        return static_cast<std::size_t>(std::count_if(d_.begin(), d_.end(), [](double x) { return x < 0.0; }));
    }

    void solve(std::span<double> x) const
    {
        for (std::size_t i = 0; i < n_; ++i) {
            const std::size_t lo = i > bw_ ? i - bw_ : 0;
            double s = x[i];
            for (std::size_t k = lo; k < i; ++k) s -= L(i, k) * x[k];
            x[i] = s;
        }
        for (std::size_t i = 0; i < n_; ++i) x[i] /= d_[i];
        for (std::size_t ii = n_; ii-- > 0;) {
            const std::size_t hi = std::min(n_ - 1, ii + bw_);
            double s = x[ii];
            for (std::size_t k = ii + 1; k <= hi; ++k) s -= L(k, ii) * x[k];
            x[ii] = s;
        }
    }

private:
    double& L(std::size_t i, std::size_t j) { return l_[i * (bw_ + 1) + (i - j)]; }
    double L(std::size_t i, std::size_t j) const { return l_[i * (bw_ + 1) + (i - j)]; }

    std::size_t n_, bw_;
    std::vector<double> l_, d_;
};

}  // namespace critwave
