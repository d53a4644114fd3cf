#pragma once

#include "memheat/kernels.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace memheat::resolvent {

// Time grid for the scalar resolvent equations. Built from segments so the
// solver can recognize uniform stretches and reuse convolution weights by
// lag; an optional graded prefix resolves weakly singular kernels near 0.
class TimeGrid {
  public:
    struct Segment {
        std::size_t first = 0; // index of the segment's first node
        std::size_t count = 0; // number of nodes in the segment (>= 2)
        double step = 0.0;     // uniform step, 0 for the graded prefix
    };

    static TimeGrid uniform(double T, std::size_t n);
    static TimeGrid graded(double T, std::size_t n, double exponent);
    // Graded prefix (when the kernel is singular) + a fine uniform stretch
    // covering the fast transient exp(-mu k0 t).
    static TimeGrid for_mode(double mu, const kernels::MemoryKernel& kernel,
                             std::size_t n = 2000);

    // Append a uniform segment reaching T_new (used by the adaptive horizon).
    TimeGrid extended_to(double T_new, std::size_t extra_nodes) const;

    std::span<const double> nodes() const { return nodes_; }
    const std::vector<Segment>& segments() const { return segments_; }
    double T() const { return nodes_.back(); }
    std::size_t size() const { return nodes_.size(); }
    double grading() const { return grading_; }
    int segment_of(std::size_t node) const;

  private:
    std::vector<double> nodes_;
    std::vector<Segment> segments_;
    double grading_ = 1.0;
};

struct ScalarResolvent {
    int mode = 0;
    double mu = 0.0;
    TimeGrid grid;
    std::vector<double> s;       // s_j at the nodes, s[0] = 1
    std::vector<double> s_prime; // scheme derivative, s'(0+) = -mu k0
    bool truncated = false;      // |s(T)| still above the decay tolerance
    double tail_value = 0.0;     // s at the final node
};

// Solves s + mu * (k*s) = 1 by product integration: the convolution kernel k
// is integrated exactly (local moments) against a piecewise-cubic interpolant
// of s, marched forward one node at a time after a coupled 3-node start.
// The derivative is read off the differentiated scheme,
//   s' = -mu (k0 s + k1*s),
// with the same product-integration treatment of k1.
ScalarResolvent solve_scalar_resolvent(double mu, const kernels::MemoryKernel& kernel,
                                       const TimeGrid& grid, int mode = 0);

// solve on TimeGrid::for_mode, doubling the horizon until |s(T)| has decayed
// below 1e-8 * sup|s| (capped at horizon_cap; the cap trips the truncation flag).
ScalarResolvent solve_mode(double mu, const kernels::MemoryKernel& kernel,
                           std::size_t n = 2000, int mode = 0,
                           double horizon_cap = 0.0);

// Residual of the discrete product-integration form at every node,
// recomputed independently of the forward march.
std::vector<double> equation_residual(const ScalarResolvent& res,
                                      const kernels::MemoryKernel& kernel);

struct EstimateSuite {
    double sup_s = 0.0;
    double int_abs_sprime = 0.0;
    double int_t_sprime = 0.0;
    double int_abs_s = 0.0;
    bool truncated = false;
};

EstimateSuite estimate_suite(const ScalarResolvent& res);

struct LaplaceValue {
    double value = 0.0;
    bool tail_flagged = false; // |s(T)| > 1e-6: flat-extrapolation tail unreliable
};

// shat(lambda) by exact transform of the piecewise-linear interpolant plus the
// flat-extrapolation tail e^{-lambda T} s(T)/lambda.
LaplaceValue laplace_transform(const ScalarResolvent& res, double lambda);

// | shat(lambda) * (lambda + mu * (k0 + k1hat(lambda))) - 1 |, the transform
// identity of the resolvent equation.
double laplace_identity_residual(const ScalarResolvent& res,
                                 const kernels::MemoryKernel& kernel, double lambda);

// int_0^T dtau int_0^tau s^2(sigma) dsigma; evaluated as int_0^T (T-sigma) s^2.
double double_square_integral(const ScalarResolvent& res, double T);

} // namespace memheat::resolvent
