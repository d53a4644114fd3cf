#pragma once

#include <array>
#include <complex>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace memheat::kernels {

using Complex = std::complex<double>;

enum class KernelFamily { Heat, Exponential, WeaklySingular, Table, Custom };

std::string to_string(KernelFamily f);

// Memory kernel of creep type: k(t) = k0 + int_0^t k1(s) ds with k0 > 0 and
// k1 a nonnegative, nonincreasing relaxation density, possibly with an
// integrable t^{-gamma} singularity at the origin (0 <= gamma < 1).
//
// The built-in families carry closed forms for k1, K1 = int_0^t k1, the tail
// rho(t) = int_t^inf k1, the Laplace transform of k1, and local moments
// int_0^h u^p k(a+u) du; everything not registered falls back to adaptive
// quadrature. Instances are immutable after construction.
class MemoryKernel {
  public:
    using Fn = std::function<double(double)>;

    static MemoryKernel heat(double k0);
    static MemoryKernel exponential(double k0, double amplitude, double rate);
    // k1(t) = amplitude * exp(-rate*t) * t^{-gamma}, 0 <= gamma < 1, rate > 0.
    static MemoryKernel weakly_singular(double k0, double amplitude, double rate,
                                        double gamma);
    // Piecewise-linear k1 given by samples at strictly increasing t > 0;
    // zero beyond the last sample, constant extension of the first value to 0+.
    static MemoryKernel from_table(double k0, std::vector<double> t,
                                   std::vector<double> k1);
    static MemoryKernel custom(double k0, Fn k1, Fn k1_prime, double gamma);

    KernelFamily family() const { return family_; }
    double k0() const { return k0_; }
    double singularity_exponent() const { return gamma_; }
    bool k1_prime_is_finite_difference() const { return fd_prime_; }
    double amplitude() const { return amp_; }
    double rate() const { return rate_; }

    double eval_k1(double t) const; // throws std::domain_error for t <= 0
    double eval_k1_prime(double t) const;
    double eval_K1(double t) const; // int_0^t k1
    double eval_k(double t) const { return k0_ + eval_K1(t); }

    // rho(t) = int_t^inf k1; closed form when registered, adaptive tail
    // quadrature (rel. tol 1e-10) otherwise. Non-convergence means the kernel
    // violates h1 and is reported as std::runtime_error.
    double rho(double t) const;

    Complex laplace_k1(Complex lambda) const;
    // Transform of the kernel function itself: k0/lambda + k1hat/lambda.
    Complex laplace_k(Complex lambda) const; // requires Re lambda > 0
    // Transform of the measure dk = k0*delta_0 + k1 dt: k0 + k1hat(lambda).
    Complex laplace_dk(Complex lambda) const;

    // Exact local moments m[p] = int_0^h u^p k(a+u) du, p = 0..3, a >= 0.
    std::array<double, 4> moments_k(double a, double h) const;
    // Same against the density k1 (integrable singularity at a = 0 handled).
    std::array<double, 4> moments_k1(double a, double h) const;

  private:
    MemoryKernel() = default;
    void ensure_k1_cache() const;

    KernelFamily family_ = KernelFamily::Custom;
    double k0_ = 1.0;
    double gamma_ = 0.0;
    double amp_ = 0.0;  // builtin families
    double rate_ = 1.0; // builtin families
    Fn k1_, k1_prime_;
    bool fd_prime_ = false;
    // table kernels
    std::vector<double> tab_t_, tab_k1_;
    // lazily built cumulative K1 interpolant for custom kernels
    struct Cache;
    std::shared_ptr<Cache> cache_;
};

struct FrequencyScan {
    double omega_min = 1e-4;
    double omega_max = 1e6;
    int points = 2000;
    double epsilon = 1e-8; // offset keeping Re lambda > 0
};

// theta = sup |arg(lambda * khat(lambda))| over the scan line lambda =
// epsilon + i*omega; the scanned symbol is k0 + k1hat(lambda), the transform
// of the kernel measure, which keeps delta = 1 + (2/pi) theta in [1,2].
struct SectorialityReport {
    double theta = 0.0;
    double delta = 1.0;
    double attained_at = 0.0;     // omega of the supremum
    bool at_grid_boundary = false;
    bool degenerate = false;      // delta outside the open interval (1,2)
    std::vector<double> scan_omegas;
};

SectorialityReport sectoriality(const MemoryKernel& kernel,
                                const FrequencyScan& scan = {});

struct ConditionCheck {
    bool pass = true;
    std::optional<double> violation_at; // first offending grid point
    std::string detail;
};

struct KernelValidationReport {
    ConditionCheck h1; // k1 integrable: rho(0) finite
    ConditionCheck h2; // k1 >= 0 and nonincreasing
    ConditionCheck h3; // -k1' nonincreasing and convex
    double rho0 = 0.0;
    bool k1_prime_from_finite_difference = false;
    bool pass() const { return h1.pass && h2.pass && h3.pass; }
    std::string to_json() const;
};

// Checks Hypothesis-style conditions h1-h3 on a strictly increasing grid
// with t[0] > 0. Failures are report entries, not exceptions.
KernelValidationReport validate_kernel(const MemoryKernel& kernel,
                                       std::span<const double> grid);

} // namespace memheat::kernels
