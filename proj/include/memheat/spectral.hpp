#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace memheat::spectral {

enum class Domain { Interval, Rectangle }; // (0,pi) and (0,pi)^2

std::string to_string(Domain d);

std::vector<double> dirichlet_eigenvalues(Domain domain, int N);
std::vector<double> noise_spectrum(std::span<const double> mu, double q, double scale);

// Smallest theta in (delta-1, 1) on a 0.05 granularity, honoring 1+theta > delta.
double default_theta(double delta);

struct NoiseModel {
    double q = 0.0;
    double scale = 1.0;
    bool tabulated = false; // no tail model -> trace verdict undetermined
};

struct SpectralBasis {
    Domain domain = Domain::Interval;
    int N = 0;
    std::vector<double> mu;     // Dirichlet eigenvalues, nondecreasing, mu[0] > 0
    std::vector<double> lambda; // noise covariance eigenvalues, >= 0
    NoiseModel noise;
    std::vector<std::array<int, 2>> index; // (j,m) per mode; m = 0 on the interval

    static SpectralBasis make(Domain domain, int N, double q, double scale);
    static SpectralBasis from_tables(Domain domain, std::vector<double> mu,
                                     std::vector<double> lambda);
};

enum class TraceVerdict { Converges, Diverges, Undetermined };

std::string to_string(TraceVerdict v);

struct TraceReport {
    double exponent = 0.0; // (1+theta)/delta - 1
    std::vector<double> terms;
    std::vector<double> partial_sums;
    double tail_bound = 0.0; // integral-test bound on the remainder past N
    TraceVerdict verdict = TraceVerdict::Undetermined;
    std::string to_json() const;
};

// Partial sums of lambda_j / mu_j^{(1+theta)/delta - 1} plus an analytic tail
// bound for power-law spectra. Requires 1 + theta > delta.
TraceReport trace_condition(const SpectralBasis& basis, double theta, double delta);

// Collocation between spectral coefficients and point values on a physical
// grid (2x oversampled sine collocation; tensorized on the rectangle).
class PhysicalGrid {
  public:
    PhysicalGrid() = default;
    static PhysicalGrid make(const SpectralBasis& basis, int oversample = 2);

    std::size_t points() const { return weights_.size(); }
    // v_phys[p] = sum_j vhat[j] e_j(xi_p)
    void to_physical(std::span<const double> vhat, std::span<double> vphys) const;
    // vhat[j] = sum_p w_p f[p] e_j(xi_p)
    void to_modes(std::span<const double> f, std::span<double> vhat) const;
    double quadrature(std::span<const double> f) const; // int f dxi
    int modes() const { return n_modes_; }

  private:
    int n_modes_ = 0;
    std::vector<double> weights_;
    std::vector<double> basis_eval_; // [p * n_modes + j] = e_j(xi_p)
};

} // namespace memheat::spectral
