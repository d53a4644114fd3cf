#include "memheat/resolvent.hpp"
#include "memheat/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace memheat::resolvent {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Coefficients of the Lagrange basis polynomials L_k(texp - u) expanded in
// powers of u, for stencil nodes tau[0..count-1].
struct StencilPoly {
    std::array<std::array<double, 4>, 4> c{};
    int count = 0;
};

StencilPoly lagrange_u_coeffs(std::span<const double> tau, double texp) {
    StencilPoly P;
    P.count = int(tau.size());
    for (int k = 0; k < P.count; ++k) {
        std::array<double, 4> poly{1, 0, 0, 0};
        double denom = 1.0;
        for (int kp = 0; kp < P.count; ++kp) {
            if (kp == k) continue;
            denom *= (tau[k] - tau[kp]);
            const double a = texp - tau[kp]; // factor (a - u)
            std::array<double, 4> np{};
            for (int p = 0; p < 3; ++p) {
                np[p] += poly[p] * a;
                np[p + 1] -= poly[p];
            }
            np[3] += poly[3] * a;
            poly = np;
        }
        for (int p = 0; p < 4; ++p) P.c[k][p] = poly[p] / denom;
    }
    return P;
}

enum class Flavor { FullKernel, Density };

// Produces the product-integration weights w[k] multiplying s at the stencil
// nodes, for one subinterval of one collocation row. Uniform in-segment pairs
// are cached by lag; everything else is computed directly from the moments.
class WeightEngine {
  public:
    WeightEngine(const kernels::MemoryKernel& kernel, const TimeGrid& grid, Flavor flavor)
        : kernel_(kernel), grid_(grid), flavor_(flavor), t_(grid.nodes()) {
        cacheA_.resize(grid.segments().size());
        cacheC_.assign(grid.segments().size(), {kNaN, kNaN, kNaN, kNaN});
    }

    // Weights for subinterval [t_i, t_{i+1}] of row m with stencil base b.
    std::array<double, 4> get(std::size_t m, std::size_t i, std::size_t b) {
        if (b == i - 1 && i >= 1) {
            const int s = enclosing_uniform(b, i + 2, m);
            if (s >= 0) {
                auto& lane = cacheA_[s];
                const std::size_t lag = m - i - 1;
                if (lane.size() <= lag) lane.resize(lag + 1, {kNaN, kNaN, kNaN, kNaN});
                if (std::isnan(lane[lag][0])) {
                    const double h = grid_.segments()[s].step;
                    const std::array<double, 4> tau{-2 * h, -h, 0.0, h};
                    lane[lag] = direct(double(lag) * h, h, tau);
                }
                return lane[lag];
            }
        } else if (b + 2 == i && i + 1 == m) {
            const int s = enclosing_uniform(b, i + 1, m);
            if (s >= 0) {
                if (std::isnan(cacheC_[s][0])) {
                    const double h = grid_.segments()[s].step;
                    const std::array<double, 4> tau{-3 * h, -2 * h, -h, 0.0};
                    cacheC_[s] = direct(0.0, h, tau);
                }
                return cacheC_[s];
            }
        }
        const double texp = t_[i + 1];
        std::array<double, 4> tau{};
        for (int k = 0; k < 4; ++k) tau[k] = t_[b + k] - texp;
        return direct(t_[m] - t_[i + 1], t_[i + 1] - t_[i], tau);
    }

    std::array<double, 4> direct(double sigma_a, double h,
                                 std::span<const double> tau_rel) const {
        const auto P = lagrange_u_coeffs(tau_rel, 0.0);
        const auto M = flavor_ == Flavor::FullKernel ? kernel_.moments_k(sigma_a, h)
                                                     : kernel_.moments_k1(sigma_a, h);
        std::array<double, 4> w{};
        for (int k = 0; k < P.count; ++k) {
            double acc = 0.0;
            for (int p = 0; p < 4; ++p) acc += P.c[k][p] * M[p];
            w[k] = acc;
        }
        return w;
    }

  private:
    // Segment whose uniform stretch contains nodes [lo, hi] and node m; -1 if none.
    int enclosing_uniform(std::size_t lo, std::size_t hi, std::size_t m) const {
        const auto& segs = grid_.segments();
        for (std::size_t s = 0; s < segs.size(); ++s) {
            if (segs[s].step <= 0.0) continue;
            const std::size_t first = segs[s].first;
            const std::size_t last = segs[s].first + segs[s].count - 1;
            if (lo >= first && hi <= last && m >= first && m <= last) return int(s);
        }
        return -1;
    }

    const kernels::MemoryKernel& kernel_;
    const TimeGrid& grid_;
    Flavor flavor_;
    std::span<const double> t_;
    std::vector<std::vector<std::array<double, 4>>> cacheA_;
    std::vector<std::array<double, 4>> cacheC_;
};

// Stencil base for subinterval i of collocation row m (forward march rule).
std::size_t solve_base(std::size_t m, std::size_t i) {
    if (i + 2 <= m) return i == 0 ? 0 : i - 1; // i <= m-2
    return m - 3;                              // last subinterval
}

// Stencil base for post-hoc quadratures where every node is known.
std::size_t natural_base(std::size_t i, std::size_t n_nodes) {
    std::size_t b = (i == 0) ? 0 : i - 1;
    return std::min(b, n_nodes - 4);
}

void solve_small(double mu, WeightEngine& W, std::span<const double> t,
                 std::vector<double>& s) {
    // grids with 2 or 3 nodes: linear/quadratic collocation
    const std::size_t n = t.size() - 1;
    for (std::size_t m = 1; m <= n; ++m) {
        double acc = 0.0, diag = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            std::array<double, 4> tau{};
            for (std::size_t k = 0; k <= n; ++k) tau[k] = t[k] - t[i + 1];
            const auto w = W.direct(t[m] - t[i + 1], t[i + 1] - t[i],
                                    std::span<const double>(tau.data(), n + 1));
            for (std::size_t k = 0; k <= n; ++k) {
                if (k < m)
                    acc += w[k] * s[k];
                else if (k == m)
                    diag += w[k];
            }
        }
        const double denom = 1.0 + mu * diag;
        if (std::fabs(denom) < 1e-12)
            throw std::runtime_error("solve_scalar_resolvent: ill-conditioned step");
        s[m] = (1.0 - mu * acc) / denom;
    }
}

} // namespace

TimeGrid TimeGrid::uniform(double T, std::size_t n) {
    if (!(T > 0) || n < 2) throw std::invalid_argument("TimeGrid::uniform: T > 0, n >= 2");
    TimeGrid g;
    const double h = T / double(n - 1);
    g.nodes_.resize(n);
    for (std::size_t i = 0; i < n; ++i) g.nodes_[i] = double(i) * h;
    g.segments_.push_back({0, n, h});
    return g;
}

TimeGrid TimeGrid::graded(double T, std::size_t n, double exponent) {
    if (!(T > 0) || n < 2 || !(exponent >= 1))
        throw std::invalid_argument("TimeGrid::graded: T > 0, n >= 2, exponent >= 1");
    if (exponent == 1.0) return uniform(T, n);
    TimeGrid g;
    g.grading_ = exponent;
    g.nodes_.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        g.nodes_[i] = T * std::pow(double(i) / double(n - 1), exponent);
    g.segments_.push_back({0, n, 0.0});
    return g;
}

TimeGrid TimeGrid::for_mode(double mu, const kernels::MemoryKernel& kernel,
                            std::size_t n) {
    const double k0 = kernel.k0();
    const double gamma = kernel.singularity_exponent();
    const double T_fast = -std::log(1e-8) / (std::max(mu, 1e-12) * k0);
    if (gamma == 0.0) return uniform(T_fast, n);

    const double g = std::max(2.0, 2.0 / (1.0 - gamma));
    const std::size_t n_g = std::min<std::size_t>(128, n / 8);
    const std::size_t n_u = n - (n_g + 1);
    // graded prefix ends where its local spacing matches the uniform step
    double h_u = T_fast / double(n_u);
    double t_cut = double(n_g) * h_u / g;
    h_u = (T_fast - t_cut) / double(n_u);

    TimeGrid grid;
    grid.grading_ = g;
    grid.nodes_.resize(n);
    for (std::size_t i = 0; i <= n_g; ++i)
        grid.nodes_[i] = t_cut * std::pow(double(i) / double(n_g), g);
    for (std::size_t k = 1; k <= n_u; ++k) grid.nodes_[n_g + k] = t_cut + double(k) * h_u;
    grid.segments_.push_back({0, n_g + 1, 0.0});
    grid.segments_.push_back({n_g, n_u + 1, h_u});
    return grid;
}

TimeGrid TimeGrid::extended_to(double T_new, std::size_t extra_nodes) const {
    if (!(T_new > T()) || extra_nodes < 1)
        throw std::invalid_argument("TimeGrid::extended_to: T_new > T, extra_nodes >= 1");
    TimeGrid g = *this;
    const std::size_t base = g.nodes_.size() - 1;
    const double T0 = g.nodes_.back();
    const double h = (T_new - T0) / double(extra_nodes);
    for (std::size_t k = 1; k <= extra_nodes; ++k) g.nodes_.push_back(T0 + double(k) * h);
    g.segments_.push_back({base, extra_nodes + 1, h});
    return g;
}

int TimeGrid::segment_of(std::size_t node) const {
    for (std::size_t s = 0; s < segments_.size(); ++s) {
        if (node >= segments_[s].first && node < segments_[s].first + segments_[s].count)
            return int(s);
    }
    return -1;
}

ScalarResolvent solve_scalar_resolvent(double mu, const kernels::MemoryKernel& kernel,
                                       const TimeGrid& grid, int mode) {
    if (!(mu >= 0)) throw std::invalid_argument("solve_scalar_resolvent: mu >= 0");
    const auto t = grid.nodes();
    const std::size_t n_nodes = t.size();
    const std::size_t n = n_nodes - 1;

    ScalarResolvent res;
    res.mode = mode;
    res.mu = mu;
    res.grid = grid;
    res.s.assign(n_nodes, 0.0);
    res.s[0] = 1.0;

    WeightEngine W(kernel, grid, Flavor::FullKernel);

    if (n <= 2) {
        solve_small(mu, W, t, res.s);
    } else {
        // coupled start: rows 1..3 collocated with the single cubic through
        // nodes {0,1,2,3}
        double A[3][3] = {{0}};
        double rhs[3] = {0};
        for (std::size_t m = 1; m <= 3; ++m) {
            std::array<double, 4> tot{};
            for (std::size_t i = 0; i < m; ++i) {
                std::array<double, 4> tau{};
                for (int k = 0; k < 4; ++k) tau[k] = t[k] - t[i + 1];
                const auto w = W.direct(t[m] - t[i + 1], t[i + 1] - t[i], tau);
                for (int k = 0; k < 4; ++k) tot[k] += w[k];
            }
            rhs[m - 1] = 1.0 - mu * tot[0] * res.s[0];
            for (int c = 1; c <= 3; ++c)
                A[m - 1][c - 1] = (std::size_t(c) == m ? 1.0 : 0.0) + mu * tot[c];
        }
        for (int c = 0; c < 3; ++c) { // partial-pivot elimination
            int piv = c;
            for (int r = c + 1; r < 3; ++r)
                if (std::fabs(A[r][c]) > std::fabs(A[piv][c])) piv = r;
            std::swap(A[piv], A[c]);
            std::swap(rhs[piv], rhs[c]);
            if (std::fabs(A[c][c]) < 1e-14)
                throw std::runtime_error("solve_scalar_resolvent: singular startup block");
            for (int r = c + 1; r < 3; ++r) {
                const double f = A[r][c] / A[c][c];
                for (int cc = c; cc < 3; ++cc) A[r][cc] -= f * A[c][cc];
                rhs[r] -= f * rhs[c];
            }
        }
        for (int r = 2; r >= 0; --r) {
            double acc = rhs[r];
            for (int c = r + 1; c < 3; ++c) acc -= A[r][c] * res.s[c + 1];
            res.s[r + 1] = acc / A[r][r];
        }

        for (std::size_t m = 4; m <= n; ++m) {
            double acc = 0.0, diag = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t b = solve_base(m, i);
                const auto w = W.get(m, i, b);
                for (int k = 0; k < 4; ++k) {
                    const std::size_t idx = b + k;
                    if (idx < m)
                        acc += w[k] * res.s[idx];
                    else
                        diag += w[k]; // idx == m by construction
                }
            }
            const double denom = 1.0 + mu * diag;
            if (std::fabs(denom) < 1e-12) {
                std::ostringstream os;
                os << "solve_scalar_resolvent: ill-conditioned step at node " << m;
                throw std::runtime_error(os.str());
            }
            res.s[m] = (1.0 - mu * acc) / denom;
        }
    }

    // s' from the differentiated scheme: s' = -mu (k0 s + k1 * s)
    res.s_prime.assign(n_nodes, 0.0);
    res.s_prime[0] = -mu * kernel.k0();
    if (n >= 1) {
        WeightEngine W1(kernel, grid, Flavor::Density);
        const bool small = n_nodes < 4;
        for (std::size_t m = 1; m <= n; ++m) {
            double conv = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                if (small) {
                    std::array<double, 4> tau{};
                    for (std::size_t k = 0; k < n_nodes; ++k) tau[k] = t[k] - t[i + 1];
                    const auto w = W1.direct(t[m] - t[i + 1], t[i + 1] - t[i],
                                             std::span<const double>(tau.data(), n_nodes));
                    for (std::size_t k = 0; k < n_nodes; ++k) conv += w[k] * res.s[k];
                } else {
                    const std::size_t b = natural_base(i, n_nodes);
                    const auto w = W1.get(m, i, b);
                    for (int k = 0; k < 4; ++k) conv += w[k] * res.s[b + k];
                }
            }
            res.s_prime[m] = -mu * (kernel.k0() * res.s[m] + conv);
        }
    }

    double sup = 0.0;
    for (double v : res.s) sup = std::max(sup, std::fabs(v));
    res.tail_value = res.s.back();
    res.truncated = std::fabs(res.tail_value) > 1e-6 * sup;
    return res;
}

ScalarResolvent solve_mode(double mu, const kernels::MemoryKernel& kernel, std::size_t n,
                           int mode, double horizon_cap) {
    if (horizon_cap <= 0.0) horizon_cap = 50.0 / kernel.k0();
    TimeGrid grid = TimeGrid::for_mode(mu, kernel, n);
    ScalarResolvent res = solve_scalar_resolvent(mu, kernel, grid, mode);
    for (int pass = 0; pass < 8; ++pass) {
        double sup = 0.0;
        for (double v : res.s) sup = std::max(sup, std::fabs(v));
        const double target = 1e-8 * sup;
        if (std::fabs(res.tail_value) <= target) break;
        if (grid.T() >= horizon_cap * (1.0 - 1e-12)) break;
        // memory kernels decay much slower than the exp(-mu k0 t) proxy; size
        // the extension from the measured tail rate instead of blind doubling
        double T_new = 2.0 * grid.T();
        const auto t = grid.nodes();
        const double t1 = 0.7 * grid.T();
        const double s1 = std::fabs(quad::interp_cubic(t, res.s, t1));
        const double sT = std::fabs(res.tail_value);
        if (s1 > sT && sT > 0) {
            const double rate = std::log(s1 / sT) / (grid.T() - t1);
            if (rate > 0)
                T_new = grid.T() + 1.2 * std::log(sT / target) / rate;
        }
        T_new = std::min(std::max(T_new, 1.25 * grid.T()), horizon_cap);
        grid = grid.extended_to(T_new, std::max<std::size_t>(n / 2, 64));
        res = solve_scalar_resolvent(mu, kernel, grid, mode);
    }
    return res;
}

std::vector<double> equation_residual(const ScalarResolvent& res,
                                      const kernels::MemoryKernel& kernel) {
    const auto t = res.grid.nodes();
    const std::size_t n_nodes = t.size();
    const std::size_t n = n_nodes - 1;
    WeightEngine W(kernel, res.grid, Flavor::FullKernel);
    std::vector<double> r(n_nodes, 0.0);
    for (std::size_t m = 1; m <= n; ++m) {
        double conv = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            if (n_nodes < 4 || m <= 3) {
                const std::size_t k_hi = std::min<std::size_t>(n_nodes - 1, 3);
                std::array<double, 4> tau{};
                for (std::size_t k = 0; k <= k_hi; ++k) tau[k] = t[k] - t[i + 1];
                const auto w = W.direct(t[m] - t[i + 1], t[i + 1] - t[i],
                                        std::span<const double>(tau.data(), k_hi + 1));
                for (std::size_t k = 0; k <= k_hi; ++k) conv += w[k] * res.s[k];
            } else {
                const std::size_t b = solve_base(m, i);
                const auto w = W.get(m, i, b);
                for (int k = 0; k < 4; ++k) conv += w[k] * res.s[b + k];
            }
        }
        r[m] = res.s[m] + res.mu * conv - 1.0;
    }
    return r;
}

EstimateSuite estimate_suite(const ScalarResolvent& res) {
    const auto t = res.grid.nodes();
    EstimateSuite e;
    e.truncated = res.truncated;
    std::vector<double> abs_s(t.size()), abs_sp(t.size()), t_sp(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        abs_s[i] = std::fabs(res.s[i]);
        abs_sp[i] = std::fabs(res.s_prime[i]);
        t_sp[i] = t[i] * abs_sp[i];
        e.sup_s = std::max(e.sup_s, abs_s[i]);
    }
    e.int_abs_s = quad::integrate_cubic(t, abs_s);
    e.int_abs_sprime = quad::integrate_cubic(t, abs_sp);
    e.int_t_sprime = quad::integrate_cubic(t, t_sp);
    return e;
}

LaplaceValue laplace_transform(const ScalarResolvent& res, double lambda) {
    if (!(lambda > 0)) throw std::domain_error("laplace_transform: lambda > 0");
    const auto t = res.grid.nodes();
    const std::size_t n_nodes = t.size();
    LaplaceValue out;
    double acc = 0.0;
    // exact transform of the local cubic interpolant of s on each subinterval
    for (std::size_t i = 0; i + 1 < n_nodes; ++i) {
        const double h = t[i + 1] - t[i];
        const auto E = quad::exp_moments(lambda, h);
        if (n_nodes < 4) {
            const double slope = (res.s[i + 1] - res.s[i]) / h;
            acc += std::exp(-lambda * t[i]) * (res.s[i] * E[0] + slope * E[1]);
            continue;
        }
        const std::size_t b = std::min(i == 0 ? 0 : i - 1, n_nodes - 4);
        // expand sum_k s_k L_k(t_i + u) in powers of u
        std::array<double, 4> c{};
        for (std::size_t k = 0; k < 4; ++k) {
            std::array<double, 4> poly{1, 0, 0, 0};
            double denom = 1.0;
            for (std::size_t kp = 0; kp < 4; ++kp) {
                if (kp == k) continue;
                denom *= (t[b + k] - t[b + kp]);
                const double a0 = t[i] - t[b + kp]; // factor (a0 + u)
                std::array<double, 4> np{};
                for (int p = 0; p < 3; ++p) {
                    np[p] += poly[p] * a0;
                    np[p + 1] += poly[p];
                }
                np[3] += poly[3] * a0;
                poly = np;
            }
            for (int p = 0; p < 4; ++p) c[p] += res.s[b + k] * poly[p] / denom;
        }
        double panel = 0.0;
        for (int p = 0; p < 4; ++p) panel += c[p] * E[p];
        acc += std::exp(-lambda * t[i]) * panel;
    }
    // flat extrapolation beyond the horizon
    acc += std::exp(-lambda * t.back()) * res.s.back() / lambda;
    out.value = acc;
    out.tail_flagged = std::fabs(res.s.back()) > 1e-6;
    return out;
}

double laplace_identity_residual(const ScalarResolvent& res,
                                 const kernels::MemoryKernel& kernel, double lambda) {
    if (!(lambda > 0))
        throw std::domain_error("laplace_identity_residual: lambda > 0");
    const double shat = laplace_transform(res, lambda).value;
    const double dk = kernel.k0() + kernel.laplace_k1({lambda, 0.0}).real();
    return std::fabs(shat * (lambda + res.mu * dk) - 1.0);
}

double double_square_integral(const ScalarResolvent& res, double T) {
    const auto t = res.grid.nodes();
    if (!(T > 0) || T > t.back() * (1.0 + 1e-12))
        throw std::invalid_argument("double_square_integral: need 0 < T <= horizon");
    std::vector<double> x, y;
    x.reserve(t.size());
    y.reserve(t.size());
    for (std::size_t i = 0; i < t.size() && t[i] < T; ++i) {
        x.push_back(t[i]);
        y.push_back((T - t[i]) * res.s[i] * res.s[i]);
    }
    x.push_back(T); // integrand vanishes at sigma = T
    y.push_back(0.0);
    return quad::integrate_cubic(x, y);
}

} // namespace memheat::resolvent
