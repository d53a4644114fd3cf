#pragma once

#include "memheat/evolution.hpp"
#include "memheat/kernels.hpp"
#include "memheat/resolvent.hpp"
#include "memheat/rng.hpp"
#include "memheat/spectral.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace memheat::stochastic {

struct NoiseSpec {
    spectral::SpectralBasis basis;
    std::uint64_t seed = 0;
    int n_paths = 1;
    double dt = 1e-3;

    void validate() const;
};

// Ensemble of v-coefficient snapshots at the requested output times.
// Reproducible bit-exactly from (seed, n_paths, dt, N): every increment is a
// counter-RNG draw keyed by (seed, path, mode, step), so path i is unchanged
// when the ensemble grows and fills are schedule independent.
struct PathEnsemble {
    std::vector<double> times;
    int n_paths = 0;
    int n_modes = 0;
    std::vector<double> values; // [path][time][mode]
    std::vector<std::uint32_t> stream_ids;

    double at(int p, int k, int j) const {
        return values[(std::size_t(p) * times.size() + k) * n_modes + j];
    }
    double& at(int p, int k, int j) {
        return values[(std::size_t(p) * times.size() + k) * n_modes + j];
    }
    double mean(int k, int j) const;
    double variance(int k, int j) const; // unbiased, over paths
};

struct NonlinearTerm {
    std::function<double(double, double)> f; // (t, x)
    double lipschitz = 0.0;
    std::string name = "zero";
    bool is_zero() const { return !f; }

    static NonlinearTerm zero() { return {}; }
    static NonlinearTerm sine(double amplitude, double frequency);
    static NonlinearTerm linear(double offset, double slope);
    static NonlinearTerm saturating(double amplitude); // amplitude * tanh(x)
};

struct LipschitzReport {
    bool lipschitz_ok = true;
    bool growth_ok = true;
    double worst_lipschitz_ratio = 0.0; // sup |f(x)-f(y)| / (L |x-y|)
    double worst_growth_ratio = 0.0;    // sup |f(x)| / (L (1+|x|))
    bool pass() const { return lipschitz_ok && growth_ok; }
};

LipschitzReport validate_nonlinearity(const NonlinearTerm& f, std::uint64_t seed,
                                      int samples = 512, double range = 10.0);

// Left-point Ito discretization of the stochastic convolution
//   (W_A)_j(t_m) = sum_{i<m} s_j(t_m - t_i) sqrt(lambda_j) dbeta_{j,i}.
PathEnsemble sample_stochastic_convolution(const NoiseSpec& spec,
                                           const std::vector<resolvent::ScalarResolvent>& res,
                                           double t_max,
                                           std::span<const double> output_times);

// diag(Q_t): lambda_j int_0^t s_j(sigma)^2 dsigma per mode.
std::vector<double> analytic_convolution_covariance(
    const std::vector<resolvent::ScalarResolvent>& res,
    const spectral::SpectralBasis& basis, double t);

enum class Method { ExpEuler, Picard };

// Optional control drift: fills R_j(t, vhat) per mode; it enters the dynamics
// as sqrt(Q) (R dt + dW), i.e. with the same lag weights as the noise.
using ControlDrift =
    std::function<void(double, std::span<const double>, std::span<double>)>;

struct SimulateOptions {
    Method method = Method::ExpEuler;
    double T = 1.0;
    std::vector<double> output_times; // snapped to the step grid
    ControlDrift control_drift;       // ExpEuler only
    int max_picard_iterations = 50;
    double picard_tolerance = 1e-8;
};

struct SimulationResult {
    PathEnsemble ensemble;
    // Picard diagnostics: gap sequence per window (ensemble L2 norms of
    // successive iterate differences) and the per-window contraction ratio.
    std::vector<std::vector<double>> window_gaps;
    std::vector<double> window_ratios;
    double window_length = 0.0;
};

// Mild solution of dX = (A X + F(X)) dt + sqrt(Q) dW by variation of
// parameters on the eigenbasis: the deterministic part (initial value +
// history forcing) is the shared evolution::deterministic_v_trajectory, the
// nonlinearity is integrated with exact resolvent weights and left-point
// evaluation, and the noise is the left-point Ito convolution above.
SimulationResult simulate_mild_solution(const evolution::HistoryState& state0,
                                        const NonlinearTerm& f, const NoiseSpec& spec,
                                        const kernels::MemoryKernel& kernel,
                                        const std::vector<resolvent::ScalarResolvent>& res,
                                        const SimulateOptions& opt);

struct PicardDiagnostics {
    std::vector<std::vector<double>> iterate_gaps;
    double rate_estimate = 0.0; // pooled median of consecutive gap ratios
};

PicardDiagnostics picard_diagnostics(const SimulationResult& run);

} // namespace memheat::stochastic
