#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace memheat::quad {

// Gauss-Legendre rule on [0,1]. Nodes/weights generated once via Newton
// iteration on the Legendre recurrence; cheap and avoids long tables.
struct GaussLegendre {
    std::vector<double> x, w;
    explicit GaussLegendre(int n) : x(n), w(n) {
        for (int i = 0; i < (n + 1) / 2; ++i) {
            double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
            double pp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = 0.0;
                for (int j = 0; j < n; ++j) {
                    double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
                }
                pp = n * (z * p0 - p1) / (z * z - 1.0);
                double dz = p0 / pp;
                z -= dz;
                if (std::fabs(dz) < 1e-16) break;
            }
            x[i] = 0.5 * (1.0 - z);
            x[n - 1 - i] = 0.5 * (1.0 + z);
            w[i] = w[n - 1 - i] = 1.0 / ((1.0 - z * z) * pp * pp);
        }
    }
};

inline const GaussLegendre& gl24() {
    static const GaussLegendre rule(24);
    return rule;
}

inline const GaussLegendre& gl12() {
    static const GaussLegendre rule(12);
    return rule;
}

inline const GaussLegendre& gl6() {
    static const GaussLegendre rule(6);
    return rule;
}

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i)
        acc += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
    return acc;
}

namespace detail {

// Integral over [x[i], x[i+1]] of the Lagrange cubic through nodes
// x[b..b+3]. Exact polynomial antiderivative, evaluated factor by factor.
inline double cubic_panel(std::span<const double> x, std::span<const double> y,
                          std::size_t i, std::size_t b) {
    const double lo = x[i], hi = x[i + 1];
    double acc = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        // expand prod_{k'!=k} (t - x[b+k']) in powers of t
        std::array<double, 4> c{1, 0, 0, 0};
        double denom = 1.0;
        for (std::size_t kp = 0; kp < 4; ++kp) {
            if (kp == k) continue;
            denom *= (x[b + k] - x[b + kp]);
            const double a = x[b + kp];
            std::array<double, 4> nc{};
            for (int p = 0; p < 3; ++p) {
                nc[p + 1] += c[p];
                nc[p] -= c[p] * a;
            }
            c = nc;
        }
        double panel = 0.0;
        double hip = hi, lop = lo;
        for (int p = 0; p < 4; ++p) {
            panel += c[p] * (hip - lop) / (p + 1);
            hip *= hi;
            lop *= lo;
        }
        acc += y[b + k] * panel / denom;
    }
    return acc;
}

} // namespace detail

// Composite integration on strictly increasing nodes using local 4-point
// Lagrange cubics (clamped stencils at the ends). Falls back to trapezoid
// when fewer than 4 nodes are given.
inline double integrate_cubic(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    assert(y.size() == n);
    if (n < 2) return 0.0;
    if (n < 4) return trapezoid(x, y);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        std::size_t b = (i == 0) ? 0 : i - 1;
        b = std::min(b, n - 4);
        acc += detail::cubic_panel(x, y, i, b);
    }
    return acc;
}

// Same, but stencils never straddle the given break points (indices into x).
// Used for integrands that are only piecewise smooth.
inline double integrate_cubic_segmented(std::span<const double> x,
                                        std::span<const double> y,
                                        std::span<const std::size_t> breaks) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    double acc = 0.0;
    std::size_t seg_start = 0;
    auto flush = [&](std::size_t lo, std::size_t hi) { // nodes [lo, hi]
        acc += integrate_cubic(x.subspan(lo, hi - lo + 1), y.subspan(lo, hi - lo + 1));
    };
    for (std::size_t br : breaks) {
        if (br <= seg_start || br >= n - 1) continue;
        flush(seg_start, br);
        seg_start = br;
    }
    flush(seg_start, n - 1);
    return acc;
}

// Cumulative integral at every node (prefix of integrate_cubic panels).
inline std::vector<double> cumulative_cubic(std::span<const double> x,
                                            std::span<const double> y) {
    const std::size_t n = x.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;
    if (n < 4) {
        for (std::size_t i = 1; i < n; ++i)
            out[i] = out[i - 1] + 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
        return out;
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
        std::size_t b = (i == 0) ? 0 : i - 1;
        b = std::min(b, n - 4);
        out[i + 1] = out[i] + detail::cubic_panel(x, y, i, b);
    }
    return out;
}

// Local cubic interpolation on strictly increasing nodes.
inline double interp_cubic(std::span<const double> x, std::span<const double> y, double xq) {
    const std::size_t n = x.size();
    if (n == 0) throw std::invalid_argument("interp_cubic: empty table");
    if (n == 1) return y[0];
    auto it = std::upper_bound(x.begin(), x.end(), xq);
    std::size_t i = (it == x.begin()) ? 0 : std::size_t(it - x.begin()) - 1;
    i = std::min(i, n - 2);
    if (n < 4) { // linear
        const double t = (xq - x[i]) / (x[i + 1] - x[i]);
        return y[i] * (1 - t) + y[i + 1] * t;
    }
    std::size_t b = (i == 0) ? 0 : i - 1;
    b = std::min(b, n - 4);
    double acc = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        double lk = 1.0;
        for (std::size_t kp = 0; kp < 4; ++kp) {
            if (kp == k) continue;
            lk *= (xq - x[b + kp]) / (x[b + k] - x[b + kp]);
        }
        acc += lk * y[b + k];
    }
    return acc;
}

// Derivative of the local cubic interpolant at a node index.
inline double deriv_cubic_at(std::span<const double> x, std::span<const double> y,
                             std::size_t i) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    if (n < 4) {
        std::size_t j = std::min(i, n - 2);
        return (y[j + 1] - y[j]) / (x[j + 1] - x[j]);
    }
    std::size_t b = (i == 0) ? 0 : i - 1;
    b = std::min(b, n - 4);
    const double xq = x[i];
    double acc = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        double denom = 1.0;
        for (std::size_t kp = 0; kp < 4; ++kp)
            if (kp != k) denom *= (x[b + k] - x[b + kp]);
        // d/dx prod_{k'!=k}(x - x_{k'}) at xq
        double dsum = 0.0;
        for (std::size_t m = 0; m < 4; ++m) {
            if (m == k) continue;
            double prod = 1.0;
            for (std::size_t kp = 0; kp < 4; ++kp)
                if (kp != k && kp != m) prod *= (xq - x[b + kp]);
            dsum += prod;
        }
        acc += y[b + k] * dsum / denom;
    }
    return acc;
}

// E_p = int_0^h u^p exp(-beta*u) du for p = 0..3. Series for small |beta|*h
// (the closed form loses all digits to cancellation there), upward recurrence
// otherwise. Works for real and complex beta.
template <class T>
std::array<T, 4> exp_moments(T beta, double h) {
    std::array<T, 4> E{};
    const double mag = std::abs(beta) * h;
    if (mag < 1.0) {
        const T z = -beta * h;
        for (int p = 0; p < 4; ++p) {
            double hp = std::pow(h, p + 1);
            T base = T(1);
            T sum = base / double(p + 1);
            for (int k = 1; k < 64; ++k) {
                base *= z / double(k);
                const T term = base / double(p + k + 1);
                sum += term;
                if (std::abs(term) < 1e-18 * std::abs(sum)) break;
            }
            E[p] = hp * sum;
        }
        return E;
    }
    const T eh = std::exp(-beta * h);
    E[0] = (T(1) - eh) / beta;
    double hp = h;
    for (int p = 1; p < 4; ++p) {
        E[p] = (double(p) * E[p - 1] - hp * eh) / beta;
        hp *= h;
    }
    return E;
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2) throw std::invalid_argument("fit_line: need at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double det = n * sxx - sx * sx;
    return {(n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det};
}

inline LinearFit fit_loglog(std::span<const double> x, std::span<const double> y) {
    std::vector<double> lx(x.size()), ly(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] <= 0 || y[i] <= 0)
            throw std::domain_error("fit_loglog: nonpositive data");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    return fit_line(lx, ly);
}

} // namespace memheat::quad
