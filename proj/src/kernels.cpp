#include "memheat/kernels.hpp"
#include "memheat/quadrature.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace memheat::kernels {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double require_positive_time(double t, const char* who) {
    if (!(t > 0.0)) {
        std::ostringstream os;
        os << who << ": requires t > 0, got t = " << t;
        throw std::domain_error(os.str());
    }
    return t;
}

// All four moments int_lo^hi u^p f(u) du in one pass over shared evaluations,
// refined by bisection until the GL24 value is stable.
template <class F>
std::array<double, 4> adaptive_moments(const F& f, double lo, double hi, int depth = 0) {
    const auto& g = quad::gl24();
    auto panel = [&](double a, double b) {
        std::array<double, 4> m{};
        const double w = b - a;
        for (int q = 0; q < 24; ++q) {
            const double u = a + w * g.x[q];
            const double fv = f(u) * w * g.w[q];
            double up = 1.0;
            for (int p = 0; p < 4; ++p) {
                m[p] += fv * up;
                up *= u;
            }
        }
        return m;
    };
    const auto whole = panel(lo, hi);
    const double mid = 0.5 * (lo + hi);
    auto left = panel(lo, mid), right = panel(mid, hi);
    double err = 0.0, scale = 0.0;
    for (int p = 0; p < 4; ++p) {
        err = std::max(err, std::fabs(whole[p] - left[p] - right[p]));
        scale = std::max(scale, std::fabs(left[p] + right[p]));
    }
    if (depth >= 24 || err <= 1e-14 * std::max(scale, 1e-300)) {
        for (int p = 0; p < 4; ++p) left[p] += right[p];
        return left;
    }
    auto lm = adaptive_moments(f, lo, mid, depth + 1);
    auto rm = adaptive_moments(f, mid, hi, depth + 1);
    for (int p = 0; p < 4; ++p) lm[p] += rm[p];
    return lm;
}

double lower_gamma(double a, double x) { return boost::math::tgamma_lower(a, x); }
double upper_gamma(double a, double x) { return boost::math::tgamma(a, x); }

} // namespace

struct MemoryKernel::Cache {
    std::once_flag built;
    std::vector<double> t, K1; // cumulative int_0^t k1 for custom kernels
};

std::string to_string(KernelFamily f) {
    switch (f) {
        case KernelFamily::Heat: return "heat";
        case KernelFamily::Exponential: return "exponential";
        case KernelFamily::WeaklySingular: return "singular";
        case KernelFamily::Table: return "table";
        case KernelFamily::Custom: return "custom";
    }
    return "unknown";
}

MemoryKernel MemoryKernel::heat(double k0) {
    if (!(k0 > 0)) throw std::invalid_argument("MemoryKernel: k0 must be positive");
    MemoryKernel k;
    k.family_ = KernelFamily::Heat;
    k.k0_ = k0;
    k.amp_ = 0.0;
    k.rate_ = 1.0;
    k.gamma_ = 0.0;
    return k;
}

MemoryKernel MemoryKernel::exponential(double k0, double amplitude, double rate) {
    if (!(k0 > 0)) throw std::invalid_argument("MemoryKernel: k0 must be positive");
    if (!(amplitude >= 0) || !(rate > 0))
        throw std::invalid_argument("MemoryKernel::exponential: need amplitude >= 0, rate > 0");
    MemoryKernel k;
    k.family_ = amplitude == 0.0 ? KernelFamily::Heat : KernelFamily::Exponential;
    k.k0_ = k0;
    k.amp_ = amplitude;
    k.rate_ = rate;
    k.gamma_ = 0.0;
    return k;
}

MemoryKernel MemoryKernel::weakly_singular(double k0, double amplitude, double rate,
                                           double gamma) {
    if (!(k0 > 0)) throw std::invalid_argument("MemoryKernel: k0 must be positive");
    if (!(amplitude >= 0) || !(rate > 0) || !(gamma >= 0) || !(gamma < 1))
        throw std::invalid_argument(
            "MemoryKernel::weakly_singular: need amplitude >= 0, rate > 0, gamma in [0,1)");
    if (gamma == 0.0) return exponential(k0, amplitude, rate);
    MemoryKernel k;
    k.family_ = KernelFamily::WeaklySingular;
    k.k0_ = k0;
    k.amp_ = amplitude;
    k.rate_ = rate;
    k.gamma_ = gamma;
    return k;
}

MemoryKernel MemoryKernel::from_table(double k0, std::vector<double> t,
                                      std::vector<double> k1) {
    if (!(k0 > 0)) throw std::invalid_argument("MemoryKernel: k0 must be positive");
    if (t.size() != k1.size() || t.size() < 2)
        throw std::invalid_argument("MemoryKernel::from_table: need >= 2 matching samples");
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(t[i] > 0) || (i > 0 && !(t[i] > t[i - 1])))
            throw std::invalid_argument("MemoryKernel::from_table: t must be strictly increasing and positive");
    }
    MemoryKernel k;
    k.family_ = KernelFamily::Table;
    k.k0_ = k0;
    k.gamma_ = 0.0;
    k.tab_t_ = std::move(t);
    k.tab_k1_ = std::move(k1);
    return k;
}

MemoryKernel MemoryKernel::custom(double k0, Fn k1, Fn k1_prime, double gamma) {
    if (!(k0 > 0)) throw std::invalid_argument("MemoryKernel: k0 must be positive");
    if (!k1) throw std::invalid_argument("MemoryKernel::custom: k1 callback required");
    if (!(gamma >= 0) || !(gamma < 1))
        throw std::invalid_argument("MemoryKernel::custom: gamma in [0,1)");
    MemoryKernel k;
    k.cache_ = std::make_shared<Cache>();
    k.family_ = KernelFamily::Custom;
    k.k0_ = k0;
    k.gamma_ = gamma;
    k.k1_ = std::move(k1);
    k.k1_prime_ = std::move(k1_prime);
    k.fd_prime_ = !k.k1_prime_;
    return k;
}

double MemoryKernel::eval_k1(double t) const {
    require_positive_time(t, "eval_k1");
    switch (family_) {
        case KernelFamily::Heat: return 0.0;
        case KernelFamily::Exponential: return amp_ * std::exp(-rate_ * t);
        case KernelFamily::WeaklySingular:
            return amp_ * std::exp(-rate_ * t) * std::pow(t, -gamma_);
        case KernelFamily::Table: {
            if (t >= tab_t_.back()) return 0.0;
            if (t <= tab_t_.front()) return tab_k1_.front();
            auto it = std::upper_bound(tab_t_.begin(), tab_t_.end(), t);
            std::size_t i = std::size_t(it - tab_t_.begin()) - 1;
            const double w = (t - tab_t_[i]) / (tab_t_[i + 1] - tab_t_[i]);
            return tab_k1_[i] * (1 - w) + tab_k1_[i + 1] * w;
        }
        case KernelFamily::Custom: return k1_(t);
    }
    return 0.0;
}

double MemoryKernel::eval_k1_prime(double t) const {
    require_positive_time(t, "eval_k1_prime");
    switch (family_) {
        case KernelFamily::Heat: return 0.0;
        case KernelFamily::Exponential: return -rate_ * amp_ * std::exp(-rate_ * t);
        case KernelFamily::WeaklySingular:
            return amp_ * std::exp(-rate_ * t) * std::pow(t, -gamma_) *
                   (-rate_ - gamma_ / t);
        case KernelFamily::Table: {
            if (t >= tab_t_.back() || t < tab_t_.front()) return 0.0;
            auto it = std::upper_bound(tab_t_.begin(), tab_t_.end(), t);
            std::size_t i = std::size_t(it - tab_t_.begin());
            i = (i == 0) ? 0 : i - 1;
            return (tab_k1_[i + 1] - tab_k1_[i]) / (tab_t_[i + 1] - tab_t_[i]);
        }
        case KernelFamily::Custom:
            if (k1_prime_) return k1_prime_(t);
            { // central difference fallback, flagged via k1_prime_is_finite_difference()
                const double h = t * 1e-5;
                return (k1_(t + h) - k1_(t - h)) / (2 * h);
            }
    }
    return 0.0;
}

void MemoryKernel::ensure_k1_cache() const {
    std::call_once(cache_->built, [this] {
        const std::size_t n = 20000;
        const double T = 64.0;
        const double g = std::max(2.0, 2.0 / (1.0 - gamma_));
        auto& c = *cache_;
        c.t.resize(n + 1);
        c.K1.resize(n + 1);
        c.t[0] = 0.0;
        c.K1[0] = 0.0;
        for (std::size_t i = 1; i <= n; ++i)
            c.t[i] = T * std::pow(double(i) / n, g);
        boost::math::quadrature::tanh_sinh<double> ts;
        c.K1[1] = ts.integrate(k1_, 0.0, c.t[1]);
        const auto& gl = quad::gl24();
        for (std::size_t i = 2; i <= n; ++i) {
            double acc = 0.0;
            const double a = c.t[i - 1], w = c.t[i] - c.t[i - 1];
            for (int q = 0; q < 24; ++q) acc += k1_(a + w * gl.x[q]) * gl.w[q];
            c.K1[i] = c.K1[i - 1] + acc * w;
        }
    });
}

double MemoryKernel::eval_K1(double t) const {
    if (t <= 0.0) return 0.0;
    switch (family_) {
        case KernelFamily::Heat: return 0.0;
        case KernelFamily::Exponential: return -(amp_ / rate_) * std::expm1(-rate_ * t);
        case KernelFamily::WeaklySingular: {
            const double alpha = 1.0 - gamma_;
            return amp_ / std::pow(rate_, alpha) * lower_gamma(alpha, rate_ * t);
        }
        case KernelFamily::Table: {
            double acc = 0.0;
            double prev_t = 0.0, prev_v = tab_k1_.front();
            for (std::size_t i = 0; i < tab_t_.size(); ++i) {
                const double ti = tab_t_[i], vi = tab_k1_[i];
                if (t <= ti) {
                    const double v_at = prev_v + (vi - prev_v) * (t - prev_t) / (ti - prev_t);
                    return acc + 0.5 * (prev_v + v_at) * (t - prev_t);
                }
                acc += 0.5 * (prev_v + vi) * (ti - prev_t);
                prev_t = ti;
                prev_v = vi;
            }
            return acc; // zero density beyond the table
        }
        case KernelFamily::Custom: {
            ensure_k1_cache();
            const auto& c = *cache_;
            if (t <= c.t.back()) return quad::interp_cubic(c.t, c.K1, t);
            boost::math::quadrature::exp_sinh<double> es;
            double err;
            return c.K1.back() + es.integrate(k1_, c.t.back(), t == kInf ? kInf : t,
                                              1e-12, &err);
        }
    }
    return 0.0;
}

double MemoryKernel::rho(double t) const {
    if (t < 0.0) throw std::domain_error("rho: requires t >= 0");
    switch (family_) {
        case KernelFamily::Heat: return 0.0;
        case KernelFamily::Exponential: return (amp_ / rate_) * std::exp(-rate_ * t);
        case KernelFamily::WeaklySingular: {
            const double alpha = 1.0 - gamma_;
            return amp_ / std::pow(rate_, alpha) * upper_gamma(alpha, rate_ * t);
        }
        case KernelFamily::Table: {
            const double total = eval_K1(tab_t_.back());
            return std::max(0.0, total - eval_K1(t));
        }
        case KernelFamily::Custom: {
            double err = 0.0, val = 0.0;
            try {
                if (t < 1.0) {
                    boost::math::quadrature::tanh_sinh<double> ts;
                    val = ts.integrate(k1_, t, 1.0);
                    boost::math::quadrature::exp_sinh<double> es;
                    val += es.integrate(k1_, 1.0, kInf, 1e-10, &err);
                } else {
                    boost::math::quadrature::exp_sinh<double> es;
                    val = es.integrate(k1_, t, kInf, 1e-10, &err);
                }
            } catch (const std::exception& e) {
                throw std::runtime_error(std::string("rho: tail quadrature failed (kernel "
                                                     "violates integrability h1): ") +
                                         e.what());
            }
            if (!std::isfinite(val) || err > 1e-6 * std::max(1.0, std::fabs(val)))
                throw std::runtime_error("rho: tail quadrature did not converge "
                                         "(kernel violates integrability h1)");
            return val;
        }
    }
    return 0.0;
}

Complex MemoryKernel::laplace_k1(Complex lambda) const {
    switch (family_) {
        case KernelFamily::Heat: return {0.0, 0.0};
        case KernelFamily::Exponential: return amp_ / (rate_ + lambda);
        case KernelFamily::WeaklySingular: {
            const double alpha = 1.0 - gamma_;
            return amp_ * boost::math::tgamma(alpha) / std::pow(rate_ + lambda, alpha);
        }
        case KernelFamily::Table: {
            // exact transform of the piecewise-linear density
            Complex acc = 0.0;
            double prev_t = 0.0, prev_v = tab_k1_.front();
            for (std::size_t i = 0; i < tab_t_.size(); ++i) {
                const double h = tab_t_[i] - prev_t;
                if (h > 0) {
                    const double slope = (tab_k1_[i] - prev_v) / h;
                    const auto E = quad::exp_moments(lambda, h);
                    acc += std::exp(-lambda * prev_t) * (prev_v * E[0] + slope * E[1]);
                }
                prev_t = tab_t_[i];
                prev_v = tab_k1_[i];
            }
            return acc;
        }
        case KernelFamily::Custom: {
            boost::math::quadrature::tanh_sinh<double> ts;
            boost::math::quadrature::exp_sinh<double> es;
            auto f = [&](double t) { return std::exp(-lambda * t) * k1_(t); };
            return ts.integrate(f, 0.0, 1.0) + es.integrate(f, 1.0, kInf);
        }
    }
    return {0.0, 0.0};
}

Complex MemoryKernel::laplace_k(Complex lambda) const {
    if (!(lambda.real() > 0.0))
        throw std::domain_error("laplace_k: requires Re lambda > 0");
    return (k0_ + laplace_k1(lambda)) / lambda;
}

Complex MemoryKernel::laplace_dk(Complex lambda) const {
    return k0_ + laplace_k1(lambda);
}

std::array<double, 4> MemoryKernel::moments_k(double a, double h) const {
    if (!(a >= 0) || !(h > 0)) throw std::domain_error("moments_k: need a >= 0, h > 0");
    std::array<double, 4> m{};
    // instantaneous part k0 * h^{p+1}/(p+1)
    double hp = h;
    for (int p = 0; p < 4; ++p) {
        m[p] = k0_ * hp / (p + 1);
        hp *= h;
    }
    switch (family_) {
        case KernelFamily::Heat: return m;
        case KernelFamily::Exponential: {
            // K1(a+u) = (amp/rate)(1 - e^{-rate(a+u)})
            const double kinf = amp_ / rate_;
            const auto E = quad::exp_moments(rate_, h);
            const double ea = std::exp(-rate_ * a);
            hp = h;
            for (int p = 0; p < 4; ++p) {
                m[p] += kinf * (hp / (p + 1) - ea * E[p]);
                hp *= h;
            }
            return m;
        }
        case KernelFamily::WeaklySingular: {
            // K1(a+u) = (amp/rate^alpha) * gamma_lower(alpha, rate(a+u))
            const double alpha = 1.0 - gamma_;
            const double d = rate_;
            const double pref = amp_ / std::pow(d, alpha);
            const double g_ah = lower_gamma(alpha, d * (a + h));
            if (a == 0.0) {
                double hp1 = h; // h^{p+1}
                double dp1 = d;
                for (int p = 0; p < 4; ++p) {
                    m[p] += pref / (p + 1) *
                            (hp1 * g_ah - lower_gamma(alpha + p + 1, d * h) / dp1);
                    hp1 *= h;
                    dp1 *= d;
                }
                return m;
            }
            // integration by parts: S_p = h^{p+1} g(a+h)/(p+1)
            //                        - d^alpha e^{-da}/(p+1) * int u^{p+1}(a+u)^{alpha-1}e^{-du}
            // far from the singularity the integrand is nearly polynomial, so
            // the quadrature order can drop
            const auto& gl = (a < 8 * h) ? quad::gl24() : (a < 128 * h ? quad::gl12() : quad::gl6());
            std::array<double, 4> R{};
            for (std::size_t q = 0; q < gl.x.size(); ++q) {
                const double u = h * gl.x[q];
                const double base = std::pow(a + u, alpha - 1.0) * std::exp(-d * u) *
                                    h * gl.w[q];
                double up = u; // u^{p+1}
                for (int p = 0; p < 4; ++p) {
                    R[p] += base * up;
                    up *= u;
                }
            }
            const double da = std::pow(d, alpha) * std::exp(-d * a);
            double hp1 = h; // h^{p+1}
            for (int p = 0; p < 4; ++p) {
                m[p] += pref / (p + 1) * (hp1 * g_ah - da * R[p]);
                hp1 *= h;
            }
            return m;
        }
        case KernelFamily::Table:
        case KernelFamily::Custom: {
            if (family_ == KernelFamily::Custom) ensure_k1_cache();
            auto f = [this](double u) { return eval_K1(u); };
            std::array<double, 4> s{};
            if (family_ == KernelFamily::Table) {
                // piecewise-quadratic K1: integrate exactly between table breaks
                std::vector<double> cuts{a, a + h};
                for (double tb : tab_t_)
                    if (tb > a && tb < a + h) cuts.push_back(tb);
                std::sort(cuts.begin(), cuts.end());
                const auto& gl = quad::gl24();
                for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
                    const double lo = cuts[c], w = cuts[c + 1] - cuts[c];
                    for (int q = 0; q < 24; ++q) {
                        const double t = lo + w * gl.x[q];
                        const double fv = f(t) * w * gl.w[q];
                        const double u = t - a;
                        double up = 1.0;
                        for (int p = 0; p < 4; ++p) {
                            s[p] += fv * up;
                            up *= u;
                        }
                    }
                }
            } else {
                s = adaptive_moments([&](double u) { return f(a + u); }, 0.0, h);
            }
            for (int p = 0; p < 4; ++p) m[p] += s[p];
            return m;
        }
    }
    return m;
}

std::array<double, 4> MemoryKernel::moments_k1(double a, double h) const {
    if (!(a >= 0) || !(h > 0)) throw std::domain_error("moments_k1: need a >= 0, h > 0");
    std::array<double, 4> m{};
    switch (family_) {
        case KernelFamily::Heat: return m;
        case KernelFamily::Exponential: {
            const auto E = quad::exp_moments(rate_, h);
            const double p0 = amp_ * std::exp(-rate_ * a);
            for (int p = 0; p < 4; ++p) m[p] = p0 * E[p];
            return m;
        }
        case KernelFamily::WeaklySingular: {
            const double alpha = 1.0 - gamma_;
            const double d = rate_;
            if (a == 0.0) {
                // int_0^h u^{p-gamma} e^{-du} du = gamma_lower(p+alpha, dh)/d^{p+alpha}
                for (int p = 0; p < 4; ++p)
                    m[p] = amp_ * lower_gamma(p + alpha, d * h) / std::pow(d, p + alpha);
                return m;
            }
            const auto& gl = (a < 8 * h) ? quad::gl24() : (a < 128 * h ? quad::gl12() : quad::gl6());
            for (std::size_t q = 0; q < gl.x.size(); ++q) {
                const double u = h * gl.x[q];
                const double base = amp_ * std::exp(-d * (a + u)) *
                                    std::pow(a + u, -gamma_) * h * gl.w[q];
                double up = 1.0;
                for (int p = 0; p < 4; ++p) {
                    m[p] += base * up;
                    up *= u;
                }
            }
            return m;
        }
        case KernelFamily::Table: {
            std::vector<double> cuts{a, a + h};
            for (double tb : tab_t_)
                if (tb > a && tb < a + h) cuts.push_back(tb);
            std::sort(cuts.begin(), cuts.end());
            const auto& gl = quad::gl24();
            for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
                const double lo = cuts[c], w = cuts[c + 1] - cuts[c];
                if (w <= 0) continue;
                for (int q = 0; q < 24; ++q) {
                    const double t = lo + w * gl.x[q];
                    const double fv = eval_k1(t) * w * gl.w[q];
                    const double u = t - a;
                    double up = 1.0;
                    for (int p = 0; p < 4; ++p) {
                        m[p] += fv * up;
                        up *= u;
                    }
                }
            }
            return m;
        }
        case KernelFamily::Custom: {
            if (a == 0.0 && gamma_ > 0.0) {
                boost::math::quadrature::tanh_sinh<double> ts;
                for (int p = 0; p < 4; ++p)
                    m[p] = ts.integrate(
                        [&](double u) { return std::pow(u, double(p)) * k1_(u); }, 0.0, h);
                return m;
            }
            return adaptive_moments([&](double u) { return k1_(a + u); }, 0.0, h);
        }
    }
    return m;
}

SectorialityReport sectoriality(const MemoryKernel& kernel, const FrequencyScan& scan) {
    if (scan.points < 2 || !(scan.omega_max > scan.omega_min) || !(scan.omega_min > 0))
        throw std::invalid_argument("sectoriality: bad scan grid");
    SectorialityReport rep;
    rep.scan_omegas.resize(scan.points);
    const double lw0 = std::log(scan.omega_min), lw1 = std::log(scan.omega_max);
    int argmax = 0;
    for (int i = 0; i < scan.points; ++i) {
        const double w = std::exp(lw0 + (lw1 - lw0) * i / (scan.points - 1));
        rep.scan_omegas[i] = w;
        const Complex v = kernel.laplace_dk(Complex(scan.epsilon, w));
        const double arg = std::fabs(std::arg(v));
        if (arg > rep.theta) {
            rep.theta = arg;
            argmax = i;
        }
    }
    rep.delta = 1.0 + (2.0 / M_PI) * rep.theta;
    rep.attained_at = rep.scan_omegas[argmax];
    rep.at_grid_boundary = (argmax == 0 || argmax == scan.points - 1);
    rep.degenerate = (rep.delta <= 1.0 + 1e-12) || (rep.delta >= 2.0 - 1e-12);
    return rep;
}

KernelValidationReport validate_kernel(const MemoryKernel& kernel,
                                       std::span<const double> grid) {
    if (grid.size() < 4 || !(grid[0] > 0))
        throw std::invalid_argument("validate_kernel: grid must start at t > 0 with >= 4 nodes");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1]))
            throw std::invalid_argument("validate_kernel: grid must be strictly increasing");

    KernelValidationReport rep;
    rep.k1_prime_from_finite_difference = kernel.k1_prime_is_finite_difference();

    std::vector<double> v(grid.size()), d(grid.size());
    double scale = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        v[i] = kernel.eval_k1(grid[i]);
        d[i] = -kernel.eval_k1_prime(grid[i]);
        scale = std::max(scale, std::fabs(v[i]));
    }
    const double slack = 1e-12 * std::max(1.0, scale);

    for (std::size_t i = 0; i < grid.size() && rep.h2.pass; ++i) {
        if (v[i] < -slack) {
            rep.h2 = {false, grid[i], "k1 negative"};
        } else if (i > 0 && v[i] > v[i - 1] + slack) {
            rep.h2 = {false, grid[i], "k1 increases"};
        }
    }

    double dscale = 0.0;
    for (double x : d) dscale = std::max(dscale, std::fabs(x));
    const double dslack = 1e-10 * std::max(1.0, dscale);
    for (std::size_t i = 0; i < grid.size() && rep.h3.pass; ++i) {
        if (i > 0 && d[i] > d[i - 1] + dslack)
            rep.h3 = {false, grid[i], "-k1' increases"};
    }
    for (std::size_t i = 0; i + 2 < grid.size() && rep.h3.pass; ++i) {
        const double dd1 = (d[i + 1] - d[i]) / (grid[i + 1] - grid[i]);
        const double dd2 = (d[i + 2] - d[i + 1]) / (grid[i + 2] - grid[i + 1]);
        const double second = (dd2 - dd1) / (grid[i + 2] - grid[i]);
        if (second < -1e-10 * std::max(1.0, dscale))
            rep.h3 = {false, grid[i + 1], "-k1' not convex (negative second divided difference)"};
    }

    try {
        rep.rho0 = kernel.rho(0.0);
        if (!std::isfinite(rep.rho0)) rep.h1 = {false, 0.0, "rho(0) not finite"};
    } catch (const std::exception& e) {
        rep.h1 = {false, 0.0, e.what()};
    }
    return rep;
}

std::string KernelValidationReport::to_json() const {
    std::ostringstream os;
    auto cond = [&os](const char* name, const ConditionCheck& c) {
        os << "\"" << name << "\":{\"pass\":" << (c.pass ? "true" : "false");
        if (c.violation_at) os << ",\"first_violation_at\":" << *c.violation_at;
        if (!c.detail.empty()) os << ",\"detail\":\"" << c.detail << "\"";
        os << "}";
    };
    os << "{";
    cond("h1", h1);
    os << ",";
    cond("h2", h2);
    os << ",";
    cond("h3", h3);
    os << ",\"rho0\":" << rho0
       << ",\"k1_prime_from_finite_difference\":"
       << (k1_prime_from_finite_difference ? "true" : "false")
       << ",\"pass\":" << (pass() ? "true" : "false") << "}";
    return os.str();
}

} // namespace memheat::kernels
