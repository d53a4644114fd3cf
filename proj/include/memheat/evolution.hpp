#pragma once

#include "memheat/kernels.hpp"
#include "memheat/resolvent.hpp"
#include "memheat/spectral.hpp"

#include <span>
#include <vector>

namespace memheat::evolution {

// Lag grid for the history component. The first node is s = 0, so the domain
// condition eta(0) = v is stored, not extrapolated; a graded stretch near 0
// resolves the rho-weighted norms of singular kernels, a uniform stretch
// covers the tail until rho has decayed to 1e-8 * rho(0).
struct HistoryGrid {
    std::vector<double> s;
    static HistoryGrid standard(const kernels::MemoryKernel& kernel,
                                std::size_t target_nodes = 1200);
    std::size_t size() const { return s.size(); }
    double S_max() const { return s.back(); }
};

// Spectral coordinates of the pair (v, eta): current temperature plus past
// history eta(s) ~ v(t-s). kinks records lag positions where eta is only C^0
// (splice points left by semigroup applications); quadratures split there.
struct HistoryState {
    std::vector<double> v;                 // N
    std::vector<std::vector<double>> eta;  // N rows, one per mode, length M
    HistoryGrid grid;
    std::vector<double> kinks;

    std::size_t modes() const { return v.size(); }

    static HistoryState zero_history(std::vector<double> v, HistoryGrid grid);
    // eta_j(s) = v_j e^{-rate s}
    static HistoryState exponential_history(std::vector<double> v, double rate,
                                            HistoryGrid grid);

    // ||x||^2 = ||v||^2 + sum_j mu_j int rho(s) eta_j(s)^2 ds
    double energy_norm_sq(const spectral::SpectralBasis& basis,
                          const kernels::MemoryKernel& kernel) const;
    double domain_condition_error() const; // max_j |eta_j(0) - v_j|
};

struct HistoryForcing {
    std::vector<std::vector<double>> h; // [mode][time]
    bool tail_flagged = false;          // history not decayed inside the grid
};

// h_j(t) = -mu_j int_0^inf k(t+sigma) eta_j(sigma) dsigma on the given times.
HistoryForcing history_forcing(const HistoryState& state,
                               const kernels::MemoryKernel& kernel,
                               const spectral::SpectralBasis& basis,
                               std::span<const double> times);

// v_j(tau) = s_j(tau) v_j(0) + int_0^tau s_j(tau - r) h_j(r) dr on the given
// times; the single implementation both semigroup_apply and the stochastic
// simulator route through, so their deterministic parts agree path-wise.
std::vector<std::vector<double>> deterministic_v_trajectory(
    const HistoryState& state, const std::vector<resolvent::ScalarResolvent>& res,
    const kernels::MemoryKernel& kernel, const spectral::SpectralBasis& basis,
    std::span<const double> times);

// e^{tA} in spectral coordinates: v by the variation-of-parameters formula,
// history by eta^t(s) = v(t-s) for s <= t and the shifted original history
// eta(s-t) beyond.
HistoryState semigroup_apply(double t, const HistoryState& state,
                             const std::vector<resolvent::ScalarResolvent>& res,
                             const kernels::MemoryKernel& kernel,
                             const spectral::SpectralBasis& basis);

struct DissipativityCheck {
    double form_value = 0.0; // <A phi, phi>
    double lambda0 = 0.0;    // max{0, -k0 + ((1-eps/2)/(1-eps)) rho(0)}
    double bound = 0.0;      // lambda0 ||phi||^2
    double norm_sq = 0.0;
    bool satisfied = false;  // form <= bound + 1e-8 ||phi||^2
};

// Quadratic form <A phi, phi> assembled from its three terms
//   -k0 ||v||_{H1}^2 - sum_j mu_j v_j int k1 eta_j - sum_j mu_j int rho eta_j eta_j'
// with eta' from local cubic differentiation on the lag grid. States violating
// the domain condition eta(0) = v are rejected.
DissipativityCheck quasi_dissipativity_form(const HistoryState& state,
                                            const kernels::MemoryKernel& kernel,
                                            const spectral::SpectralBasis& basis,
                                            double epsilon);

} // namespace memheat::evolution
