#pragma once

#include "memheat/evolution.hpp"
#include "memheat/kernels.hpp"
#include "memheat/resolvent.hpp"
#include "memheat/spectral.hpp"
#include "memheat/stochastic.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace memheat::control {

// Pointwise problem data. When the running cost is quadratic in gamma and the
// drift map affine, the Hamiltonian minimizer is closed form; otherwise the
// general callbacks are searched numerically on the compact control interval.
struct PointwiseMaps {
    using Fn2 = std::function<double(double, double)>; // (t, v)
    using Fn3 = std::function<double(double, double, double)>; // (t, v, gamma)

    bool structured = true;
    Fn2 r0, r1;             // r = r0 + r1 * gamma
    Fn2 ell0, ell1, ell2;   // ell = ell0 + ell1 g + ell2 g^2, ell2 >= 0
    Fn3 r_general, ell_general;
    std::function<double(double)> phi, phi_prime;
    double r_bound = 1.0; // |r| <= C uniformly (Girsanov requires boundedness)
    double phi_growth_L = 1.0;
    int phi_growth_k = 1;
};

// Scalar benchmark state or a truncated spectral state; the cost and drift
// evaluators integrate over the physical domain in the spectral case.
struct ControlProblem {
    PointwiseMaps maps;
    double gamma_min = -1.0;
    double gamma_max = 1.0;
    double horizon = 1.0;
    bool scalar_state = true;
    spectral::SpectralBasis basis;     // spectral problems only (truncated)
    spectral::PhysicalGrid phys;       // built lazily by make_spectral

    static ControlProblem scalar(PointwiseMaps maps, double gamma_min, double gamma_max,
                                 double horizon);
    static ControlProblem spectral_truncation(PointwiseMaps maps, double gamma_min,
                                              double gamma_max, double horizon,
                                              const spectral::SpectralBasis& basis);

    int dim() const { return scalar_state ? 1 : basis.N; }
    double running_cost(double t, std::span<const double> X, double gamma) const;
    void drift_R(double t, std::span<const double> X, double gamma,
                 std::span<double> out) const;
    double terminal_cost(std::span<const double> X) const;
    // sup_{gamma in U} |R| at the given state, the Lipschitz constant of the
    // Hamiltonian in Z (C_U of the structured problems)
    double control_set_bound(double t, std::span<const double> X) const;
};

struct HamiltonianResult {
    double psi = 0.0;
    double gamma_star = 0.0;
};

// psi(t,X,Z) = min_{gamma in U} { L(t,X,gamma) + <Z, R(t,X,gamma)> }.
// Closed form for structured data (clipped stationary point), otherwise a
// 64-point grid scan refined by golden section; ties break to the smaller gamma.
HamiltonianResult hamiltonian(const ControlProblem& problem, double t,
                              std::span<const double> X, std::span<const double> Z);

// Monomial features of total degree <= degree on dim variables.
struct FeatureBasis {
    int dim = 1;
    int degree = 2;
    std::vector<std::vector<int>> exponents; // one multi-index per feature

    static FeatureBasis make(int dim, int degree);
    int count() const { return int(exponents.size()); }
    void eval(std::span<const double> X, std::span<double> out) const;
};

struct ForwardPaths {
    int n_paths = 0;
    int steps = 0;
    int dim = 0;
    double dt = 0.0;
    std::vector<double> X;  // [path][step 0..steps][dim]
    std::vector<double> dW; // [path][step 0..steps-1][dim]

    double x(int p, int k, int d) const {
        return X[(std::size_t(p) * (steps + 1) + k) * dim + d];
    }
    double w(int p, int k, int d) const {
        return dW[(std::size_t(p) * steps + k) * dim + d];
    }
};

// Open-loop or feedback control evaluated along a path.
using GammaEval = std::function<double(int step, std::span<const double> X)>;

class ForwardModel {
  public:
    virtual ~ForwardModel() = default;
    virtual int dim() const = 0;
    // Reference-measure paths when gamma is null, controlled paths otherwise.
    virtual ForwardPaths simulate(int n_paths, int steps, double T, std::uint64_t seed,
                                  const ControlProblem* problem,
                                  const GammaEval* gamma) const = 0;
};

// dX = a X dt + b (R dt + dW): the LQ benchmark dynamics (control and noise
// share the coefficient b, the sqrt(Q)-structure of the drift).
class ScalarLinearSde final : public ForwardModel {
  public:
    ScalarLinearSde(double a, double b, double x0) : a_(a), b_(b), x0_(x0) {}
    int dim() const override { return 1; }
    ForwardPaths simulate(int n_paths, int steps, double T, std::uint64_t seed,
                          const ControlProblem* problem,
                          const GammaEval* gamma) const override;
    double a() const { return a_; }
    double b() const { return b_; }
    double x0() const { return x0_; }

  private:
    double a_, b_, x0_;
};

// Truncated spectral dynamics driven by the mild-solution simulator.
class SpdeTruncation final : public ForwardModel {
  public:
    SpdeTruncation(kernels::MemoryKernel kernel, spectral::SpectralBasis basis,
                   stochastic::NonlinearTerm f, evolution::HistoryState state0,
                   std::vector<resolvent::ScalarResolvent> res);
    int dim() const override { return basis_.N; }
    ForwardPaths simulate(int n_paths, int steps, double T, std::uint64_t seed,
                          const ControlProblem* problem,
                          const GammaEval* gamma) const override;

  private:
    kernels::MemoryKernel kernel_;
    spectral::SpectralBasis basis_;
    stochastic::NonlinearTerm f_;
    evolution::HistoryState state0_;
    std::vector<resolvent::ScalarResolvent> res_;
};

struct FeedbackPolicy {
    FeatureBasis features;
    double dt = 0.0;
    // z_coeffs[k] holds dim vectors of feature coefficients for step k
    std::vector<std::vector<std::vector<double>>> z_coeffs;
    std::shared_ptr<const ControlProblem> problem;

    void z_at(int step, std::span<const double> X, std::span<double> Z) const;
    double gamma(int step, std::span<const double> X) const; // always in U
};

struct StepDiagnostic {
    int step = 0;
    bool rank_deficient = false;
    int rank = 0;
};

struct FbsdeResult {
    double Y0 = 0.0;
    FeedbackPolicy policy;
    std::vector<StepDiagnostic> diagnostics;
    std::vector<double> Y0_history; // one entry per Picard sweep
    int sweeps = 0;
};

struct FbsdeOptions {
    int n_paths = 10000;
    int steps = 50;
    std::uint64_t seed = 1;
    int feature_degree = 2;
    int max_sweeps = 20;
    double y0_tolerance = 1e-4;
};

// Backward least-squares Monte Carlo for the FBSDE: regress Z from the
// martingale increment, regress the conditional expectation of
// Y_{k+1} + psi(t_k, X_k, Z_k) dt, and Picard-iterate the Z field until Y0
// settles. Y0 approximates u(0, X0), the optimal cost.
FbsdeResult fbsde_solve(const ControlProblem& problem, const ForwardModel& model,
                        const FbsdeOptions& opt);

struct CostEstimate {
    double J = 0.0;
    double std_error = 0.0;
};

// Monte Carlo cost of a control (feedback policy or open-loop gamma(t)).
// With use_girsanov the paths are sampled under the reference measure and
// reweighted by the stochastic exponential instead of redrifting the state.
CostEstimate cost_functional(const ControlProblem& problem, const ForwardModel& model,
                             const GammaEval& gamma, int n_paths, int steps,
                             std::uint64_t seed, bool use_girsanov = false);

// exp( sum R dW - 1/2 sum |R|^2 dt ) per path along reference-measure paths.
std::vector<double> girsanov_weights(const ControlProblem& problem,
                                     const ForwardPaths& paths, const GammaEval& gamma);

struct RiccatiSolution {
    std::vector<double> t;
    std::vector<double> P;
    double P0 = 0.0;
    double integral_P = 0.0;
    bool blew_up = false;
    double a = 0.0, b = 1.0;

    double optimal_cost(double x0) const { return P0 * x0 * x0 + b * b * integral_P; }
    double gain(double time) const; // optimal feedback gamma = -b P(t) X
};

// Backward Riccati ODE P' = -2aP - q + b^2 P^2, P(T) = p_T, integrated by RK4.
RiccatiSolution lq_riccati_oracle(double a, double b, double q, double p_T, double T,
                                  double dt = 1e-4);

struct LowerBoundEntry {
    double J = 0.0;
    double std_error = 0.0;
    bool violation = false; // J < Y0 - 3 se
};

struct LowerBoundReport {
    std::vector<LowerBoundEntry> entries;
    int violations = 0;
};

// Y0 <= J(X0, U) spot check over m random piecewise-constant admissible
// controls (fixed seed); violations at the 3-standard-error level.
LowerBoundReport verify_value_lower_bound(const ControlProblem& problem,
                                          const ForwardModel& model, double Y0,
                                          int m_controls, int n_paths, int steps,
                                          std::uint64_t seed);

} // namespace memheat::control
