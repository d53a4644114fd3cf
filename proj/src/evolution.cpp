#include "memheat/evolution.hpp"
#include "memheat/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace memheat::evolution {

namespace {

// indices of the lag nodes nearest the kink positions (for segmented quadrature)
std::vector<std::size_t> kink_indices(const HistoryGrid& grid,
                                      std::span<const double> kinks) {
    std::vector<std::size_t> idx;
    for (double kp : kinks) {
        if (kp <= 0.0 || kp >= grid.S_max()) continue;
        auto it = std::lower_bound(grid.s.begin(), grid.s.end(), kp);
        if (it != grid.s.end()) idx.push_back(std::size_t(it - grid.s.begin()));
    }
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return idx;
}

} // namespace

HistoryGrid HistoryGrid::standard(const kernels::MemoryKernel& kernel,
                                  std::size_t target_nodes) {
    if (target_nodes < 16) target_nodes = 16;
    // tail horizon: rho(S) < 1e-8 rho(0), capped for very slowly decaying tails
    const double rho0 = kernel.rho(0.0);
    double S = 1.0;
    if (rho0 > 0.0) {
        while (S < 256.0 && kernel.rho(S) > 1e-8 * rho0) S *= 1.5;
    } else {
        S = 8.0; // no memory: keep a short grid, only eta itself matters
    }
    HistoryGrid g;
    const std::size_t n_geo = target_nodes / 6;   // geometric part on [1e-3, 1]
    const double s_min = 1e-3;
    const double s_mid = std::min(1.0, 0.25 * S);
    g.s.push_back(0.0);
    const double r = std::pow(s_mid / s_min, 1.0 / double(n_geo - 1));
    for (std::size_t i = 0; i < n_geo; ++i) g.s.push_back(s_min * std::pow(r, double(i)));
    const std::size_t n_u = target_nodes - g.s.size();
    const double h = (S - s_mid) / double(n_u);
    for (std::size_t k = 1; k <= n_u; ++k) g.s.push_back(s_mid + double(k) * h);
    return g;
}

HistoryState HistoryState::zero_history(std::vector<double> v, HistoryGrid grid) {
    // Note eta == 0 with v != 0 sits outside D(A); that is fine for the mild
    // formulation, and quasi_dissipativity_form rejects such states.
    HistoryState st;
    st.grid = std::move(grid);
    st.eta.assign(v.size(), std::vector<double>(st.grid.size(), 0.0));
    st.v = std::move(v);
    return st;
}

HistoryState HistoryState::exponential_history(std::vector<double> v, double rate,
                                               HistoryGrid grid) {
    HistoryState st;
    st.grid = std::move(grid);
    st.eta.resize(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
        st.eta[j].resize(st.grid.size());
        for (std::size_t i = 0; i < st.grid.size(); ++i)
            st.eta[j][i] = v[j] * std::exp(-rate * st.grid.s[i]);
    }
    st.v = std::move(v);
    return st;
}

double HistoryState::domain_condition_error() const {
    double err = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j)
        err = std::max(err, std::fabs(eta[j][0] - v[j]));
    return err;
}

double HistoryState::energy_norm_sq(const spectral::SpectralBasis& basis,
                                    const kernels::MemoryKernel& kernel) const {
    double out = 0.0;
    for (double x : v) out += x * x;
    const auto breaks = kink_indices(grid, kinks);
    std::vector<double> w(grid.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double rho = kernel.rho(grid.s[i]);
            w[i] = rho * eta[j][i] * eta[j][i];
        }
        out += basis.mu[j] * quad::integrate_cubic_segmented(grid.s, w, breaks);
    }
    return out;
}

HistoryForcing history_forcing(const HistoryState& state,
                               const kernels::MemoryKernel& kernel,
                               const spectral::SpectralBasis& basis,
                               std::span<const double> times) {
    const std::size_t N = state.modes();
    if (basis.mu.size() < N)
        throw std::invalid_argument("history_forcing: basis smaller than state");
    HistoryForcing out;
    out.h.assign(N, std::vector<double>(times.size(), 0.0));

    // tail check: history should have decayed inside the lag grid
    for (std::size_t j = 0; j < N && !out.tail_flagged; ++j) {
        double peak = 0.0;
        for (double e : state.eta[j]) peak = std::max(peak, std::fabs(e));
        if (peak > 0 && std::fabs(state.eta[j].back()) > 1e-6 * peak)
            out.tail_flagged = true;
    }

    const auto breaks = kink_indices(state.grid, state.kinks);
    const auto& s = state.grid.s;
    std::vector<double> integrand(s.size());
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
        const double t = times[ti];
        std::vector<double> kvals(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) kvals[i] = kernel.eval_k(t + s[i]);
        for (std::size_t j = 0; j < N; ++j) {
            for (std::size_t i = 0; i < s.size(); ++i)
                integrand[i] = kvals[i] * state.eta[j][i];
            out.h[j][ti] =
                -basis.mu[j] * quad::integrate_cubic_segmented(s, integrand, breaks);
        }
    }
    return out;
}

std::vector<std::vector<double>> deterministic_v_trajectory(
    const HistoryState& state, const std::vector<resolvent::ScalarResolvent>& res,
    const kernels::MemoryKernel& kernel, const spectral::SpectralBasis& basis,
    std::span<const double> times) {
    const std::size_t N = state.modes();
    if (res.size() < N)
        throw std::invalid_argument("deterministic_v_trajectory: missing resolvents");
    double t_max = 0.0;
    for (double t : times) t_max = std::max(t_max, t);
    for (std::size_t j = 0; j < N; ++j)
        if (t_max > res[j].grid.T() * (1.0 + 1e-12))
            throw std::invalid_argument("deterministic_v_trajectory: t beyond resolvent horizon");

    // zero history shortcut: h == 0, v_j(t) = s_j(t) v_j
    bool history_zero = true;
    for (std::size_t j = 0; j < N && history_zero; ++j)
        for (std::size_t i = 1; i < state.grid.size() && history_zero; ++i)
            if (state.eta[j][i] != 0.0) history_zero = false;

    std::vector<std::vector<double>> v(N, std::vector<double>(times.size(), 0.0));
    if (history_zero) {
        for (std::size_t j = 0; j < N; ++j)
            for (std::size_t ti = 0; ti < times.size(); ++ti)
                v[j][ti] = quad::interp_cubic(res[j].grid.nodes(), res[j].s, times[ti]) *
                           state.v[j];
        return v;
    }

    // master sample of h_j on a dense uniform grid of [0, t_max]
    const std::size_t n_h = 2048;
    std::vector<double> tq(n_h + 1);
    const double hq = t_max > 0 ? t_max / double(n_h) : 1.0;
    for (std::size_t i = 0; i <= n_h; ++i) tq[i] = double(i) * hq;
    const auto forcing = history_forcing(state, kernel, basis, tq);

    std::vector<double> integrand(n_h + 1);
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
        const double t = times[ti];
        if (t == 0.0) {
            for (std::size_t j = 0; j < N; ++j) v[j][ti] = state.v[j];
            continue;
        }
        // quadrature nodes on [0, t]: reuse the master spacing
        const std::size_t nq = std::clamp<std::size_t>(std::size_t(t / hq) + 1, 8, n_h);
        std::vector<double> tau(nq + 1);
        for (std::size_t i = 0; i <= nq; ++i) tau[i] = t * double(i) / double(nq);
        for (std::size_t j = 0; j < N; ++j) {
            const auto sg = res[j].grid.nodes();
            for (std::size_t i = 0; i <= nq; ++i) {
                const double sval = quad::interp_cubic(sg, res[j].s, t - tau[i]);
                const double hval = quad::interp_cubic(tq, forcing.h[j], tau[i]);
                integrand[i] = sval * hval;
            }
            v[j][ti] = quad::interp_cubic(sg, res[j].s, t) * state.v[j] +
                       quad::integrate_cubic(std::span<const double>(tau),
                                             std::span<const double>(integrand.data(), nq + 1));
        }
    }
    return v;
}

HistoryState semigroup_apply(double t, const HistoryState& state,
                             const std::vector<resolvent::ScalarResolvent>& res,
                             const kernels::MemoryKernel& kernel,
                             const spectral::SpectralBasis& basis) {
    if (t < 0) throw std::invalid_argument("semigroup_apply: t >= 0");
    if (t == 0.0) return state;
    const std::size_t N = state.modes();

    // v(t) and v(t - s_i) for every lag node below t, in one call
    std::vector<double> targets;
    targets.push_back(t);
    std::vector<std::size_t> lag_of_target;
    for (std::size_t i = 0; i < state.grid.size(); ++i) {
        if (state.grid.s[i] <= t) {
            targets.push_back(t - state.grid.s[i]);
            lag_of_target.push_back(i);
        }
    }
    const auto traj = deterministic_v_trajectory(state, res, kernel, basis, targets);

    HistoryState out;
    out.grid = state.grid;
    out.v.resize(N);
    out.eta.assign(N, std::vector<double>(state.grid.size(), 0.0));
    for (std::size_t j = 0; j < N; ++j) {
        out.v[j] = traj[j][0];
        for (std::size_t k = 0; k < lag_of_target.size(); ++k)
            out.eta[j][lag_of_target[k]] = traj[j][k + 1];
        for (std::size_t i = 0; i < state.grid.size(); ++i) {
            const double s = state.grid.s[i];
            if (s <= t) continue;
            // shifted original history eta(s - t)
            out.eta[j][i] = quad::interp_cubic(state.grid.s, state.eta[j], s - t);
        }
    }
    out.kinks.push_back(t); // splice between fresh and shifted history
    for (double kp : state.kinks)
        if (kp + t < out.grid.S_max()) out.kinks.push_back(kp + t);
    return out;
}

DissipativityCheck quasi_dissipativity_form(const HistoryState& state,
                                            const kernels::MemoryKernel& kernel,
                                            const spectral::SpectralBasis& basis,
                                            double epsilon) {
    if (!(epsilon > 0) || !(epsilon < 1))
        throw std::invalid_argument("quasi_dissipativity_form: epsilon in (0,1)");
    const std::size_t N = state.modes();
    double vscale = 0.0;
    for (double x : state.v) vscale = std::max(vscale, std::fabs(x));
    if (state.domain_condition_error() > 1e-6 * std::max(1.0, vscale))
        throw std::invalid_argument(
            "quasi_dissipativity_form: state violates the domain condition eta(0) = v");

    const auto& s = state.grid.s;
    const auto breaks = kink_indices(state.grid, state.kinks);
    DissipativityCheck out;

    double term1 = 0.0, term2 = 0.0, term3 = 0.0;
    std::vector<double> w(s.size()), etap(s.size());
    for (std::size_t j = 0; j < N; ++j) {
        const double mu = basis.mu[j];
        term1 -= kernel.k0() * mu * state.v[j] * state.v[j];

        // int k1(r) eta_j(r) dr by product integration (exact k1 moments
        // against the piecewise-linear history)
        double Ij = 0.0;
        for (std::size_t i = 0; i + 1 < s.size(); ++i) {
            const double h = s[i + 1] - s[i];
            const auto M = kernel.moments_k1(s[i], h);
            Ij += state.eta[j][i] * (M[0] - M[1] / h) + state.eta[j][i + 1] * (M[1] / h);
        }
        term2 -= mu * state.v[j] * Ij;

        // int rho(r) eta_j eta_j' dr with eta' from the local cubic interpolant
        for (std::size_t i = 0; i < s.size(); ++i)
            etap[i] = quad::deriv_cubic_at(s, state.eta[j], i);
        for (std::size_t i = 0; i < s.size(); ++i)
            w[i] = kernel.rho(s[i]) * state.eta[j][i] * etap[i];
        term3 -= mu * quad::integrate_cubic_segmented(s, w, breaks);
    }

    out.form_value = term1 + term2 + term3;
    out.norm_sq = state.energy_norm_sq(basis, kernel);
    out.lambda0 =
        std::max(0.0, -kernel.k0() +
                          (1.0 - epsilon / 2.0) / (1.0 - epsilon) * kernel.rho(0.0));
    out.bound = out.lambda0 * out.norm_sq;
    out.satisfied = out.form_value <= out.bound + 1e-8 * out.norm_sq;
    return out;
}

} // namespace memheat::evolution
