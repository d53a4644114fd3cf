#include "memheat/stochastic.hpp"
#include "memheat/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace memheat::stochastic {

namespace {

std::size_t snap_step(double t, double dt, std::size_t K, const char* who) {
    const double raw = t / dt;
    const auto k = std::size_t(std::llround(raw));
    if (k > K || std::fabs(raw - double(k)) > 1e-9 * std::max(1.0, raw)) {
        std::ostringstream os;
        os << who << ": time " << t << " is not on the step grid (dt = " << dt << ")";
        throw std::invalid_argument(os.str());
    }
    return k;
}

// s_j sampled at integer lags of the step grid
std::vector<double> lag_table(const resolvent::ScalarResolvent& r, double dt,
                              std::size_t K) {
    std::vector<double> S(K + 1);
    const auto g = r.grid.nodes();
    for (std::size_t l = 0; l <= K; ++l)
        S[l] = quad::interp_cubic(g, r.s, std::min(double(l) * dt, g.back()));
    return S;
}

// int s_j over one step at integer lags: G[l] = int_{(l-1)dt}^{l dt} s_j
std::vector<double> step_integral_table(const resolvent::ScalarResolvent& r, double dt,
                                        std::size_t K) {
    const auto g = r.grid.nodes();
    const auto cum = quad::cumulative_cubic(g, r.s);
    std::vector<double> V(K + 1);
    for (std::size_t l = 0; l <= K; ++l)
        V[l] = quad::interp_cubic(g, cum, std::min(double(l) * dt, g.back()));
    std::vector<double> G(K + 1, 0.0);
    for (std::size_t l = 1; l <= K; ++l) G[l] = V[l] - V[l - 1];
    return G;
}

} // namespace

void NoiseSpec::validate() const {
    if (!(dt > 0)) throw std::invalid_argument("NoiseSpec: dt > 0");
    if (n_paths < 1) throw std::invalid_argument("NoiseSpec: n_paths >= 1");
    if (basis.N < 1) throw std::invalid_argument("NoiseSpec: empty basis");
}

double PathEnsemble::mean(int k, int j) const {
    double acc = 0.0;
    for (int p = 0; p < n_paths; ++p) acc += at(p, k, j);
    return acc / n_paths;
}

double PathEnsemble::variance(int k, int j) const {
    if (n_paths < 2) return 0.0;
    const double m = mean(k, j);
    double acc = 0.0;
    for (int p = 0; p < n_paths; ++p) {
        const double d = at(p, k, j) - m;
        acc += d * d;
    }
    return acc / (n_paths - 1);
}

NonlinearTerm NonlinearTerm::sine(double amplitude, double frequency) {
    NonlinearTerm t;
    t.f = [amplitude, frequency](double, double x) {
        return amplitude * std::sin(frequency * x);
    };
    t.lipschitz = std::fabs(amplitude * frequency);
    t.name = "sine";
    return t;
}

NonlinearTerm NonlinearTerm::linear(double offset, double slope) {
    NonlinearTerm t;
    t.f = [offset, slope](double, double x) { return offset + slope * x; };
    t.lipschitz = std::max(std::fabs(slope), std::fabs(offset));
    t.name = "linear";
    return t;
}

NonlinearTerm NonlinearTerm::saturating(double amplitude) {
    NonlinearTerm t;
    t.f = [amplitude](double, double x) { return amplitude * std::tanh(x); };
    t.lipschitz = std::fabs(amplitude);
    t.name = "saturating";
    return t;
}

LipschitzReport validate_nonlinearity(const NonlinearTerm& f, std::uint64_t seed,
                                      int samples, double range) {
    LipschitzReport rep;
    if (f.is_zero()) return rep;
    if (!(f.lipschitz > 0)) {
        rep.lipschitz_ok = rep.growth_ok = false;
        return rep;
    }
    rng::CounterRng gen(seed);
    for (int i = 0; i < samples; ++i) {
        const double t = gen.uniform(i, 0, 0, rng::Salt::Generic);
        const double x = range * (2 * gen.uniform(i, 1, 0, rng::Salt::Generic) - 1);
        const double y = range * (2 * gen.uniform(i, 2, 0, rng::Salt::Generic) - 1);
        const double fx = f.f(t, x), fy = f.f(t, y);
        if (x != y) {
            const double r = std::fabs(fx - fy) / (f.lipschitz * std::fabs(x - y));
            rep.worst_lipschitz_ratio = std::max(rep.worst_lipschitz_ratio, r);
        }
        const double g = std::fabs(fx) / (f.lipschitz * (1.0 + std::fabs(x)));
        rep.worst_growth_ratio = std::max(rep.worst_growth_ratio, g);
    }
    rep.lipschitz_ok = rep.worst_lipschitz_ratio <= 1.0 + 1e-9;
    rep.growth_ok = rep.worst_growth_ratio <= 1.0 + 1e-9;
    return rep;
}

PathEnsemble sample_stochastic_convolution(const NoiseSpec& spec,
                                           const std::vector<resolvent::ScalarResolvent>& res,
                                           double t_max,
                                           std::span<const double> output_times) {
    spec.validate();
    const int N = spec.basis.N;
    if (int(res.size()) < N)
        throw std::invalid_argument("sample_stochastic_convolution: missing resolvents");
    const auto K = snap_step(t_max, spec.dt, std::size_t(-1), "sample_stochastic_convolution");
    std::vector<std::size_t> out_idx;
    for (double t : output_times)
        out_idx.push_back(snap_step(t, spec.dt, K, "sample_stochastic_convolution"));

    std::vector<std::vector<double>> S(N);
    for (int j = 0; j < N; ++j) S[j] = lag_table(res[j], spec.dt, K);

    PathEnsemble ens;
    ens.times.assign(output_times.begin(), output_times.end());
    ens.n_paths = spec.n_paths;
    ens.n_modes = N;
    ens.values.assign(std::size_t(spec.n_paths) * out_idx.size() * N, 0.0);
    ens.stream_ids.resize(spec.n_paths);
    for (int p = 0; p < spec.n_paths; ++p) ens.stream_ids[p] = std::uint32_t(p);

    const rng::CounterRng gen(spec.seed);
    const double sqdt = std::sqrt(spec.dt);

#pragma omp parallel
    {
        std::vector<double> incr(K); // dbeta for one (path, mode)
#pragma omp for schedule(dynamic, 1)
        for (int p = 0; p < spec.n_paths; ++p) {
            for (int j = 0; j < N; ++j) {
                const double sqlam = std::sqrt(spec.basis.lambda[j]);
                for (std::size_t i = 0; i < K; ++i)
                    incr[i] = sqdt * gen.normal(std::uint32_t(p), std::uint32_t(j),
                                                std::uint32_t(i),
                                                rng::Salt::NoiseIncrement);
                for (std::size_t k = 0; k < out_idx.size(); ++k) {
                    const std::size_t m = out_idx[k];
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i)
                        acc += S[j][m - i] * sqlam * incr[i];
                    ens.at(p, int(k), j) = acc;
                }
            }
        }
    }
    return ens;
}

std::vector<double> analytic_convolution_covariance(
    const std::vector<resolvent::ScalarResolvent>& res,
    const spectral::SpectralBasis& basis, double t) {
    if (t < 0) throw std::invalid_argument("analytic_convolution_covariance: t >= 0");
    std::vector<double> var(basis.N, 0.0);
    if (t == 0.0) return var;
    for (int j = 0; j < basis.N; ++j) {
        const auto g = res[j].grid.nodes();
        if (t > g.back() * (1.0 + 1e-12))
            throw std::invalid_argument("analytic_convolution_covariance: t beyond horizon");
        std::vector<double> x, y;
        for (std::size_t i = 0; i < g.size() && g[i] < t; ++i) {
            x.push_back(g[i]);
            y.push_back(res[j].s[i] * res[j].s[i]);
        }
        const double st = quad::interp_cubic(g, res[j].s, std::min(t, g.back()));
        x.push_back(t);
        y.push_back(st * st);
        var[j] = basis.lambda[j] * quad::integrate_cubic(x, y);
    }
    return var;
}

SimulationResult simulate_mild_solution(const evolution::HistoryState& state0,
                                        const NonlinearTerm& f, const NoiseSpec& spec,
                                        const kernels::MemoryKernel& kernel,
                                        const std::vector<resolvent::ScalarResolvent>& res,
                                        const SimulateOptions& opt) {
    spec.validate();
    const int N = spec.basis.N;
    if (int(state0.modes()) != N)
        throw std::invalid_argument("simulate_mild_solution: state/basis size mismatch");
    if (int(res.size()) < N)
        throw std::invalid_argument("simulate_mild_solution: missing resolvents");
    if (!f.is_zero()) {
        const auto lip = validate_nonlinearity(f, spec.seed ^ 0x5eedu);
        if (!lip.pass())
            throw std::invalid_argument(
                "simulate_mild_solution: nonlinearity fails its declared Lipschitz/growth bounds");
    }
    if (opt.method == Method::Picard && opt.control_drift)
        throw std::invalid_argument("simulate_mild_solution: control drift requires ExpEuler");

    const std::size_t K = snap_step(opt.T, spec.dt, std::size_t(-1), "simulate_mild_solution");
    if (K == 0) throw std::invalid_argument("simulate_mild_solution: empty horizon");
    std::vector<std::size_t> out_idx;
    for (double t : opt.output_times)
        out_idx.push_back(snap_step(t, spec.dt, K, "simulate_mild_solution"));

    std::vector<double> step_times(K + 1);
    for (std::size_t m = 0; m <= K; ++m) step_times[m] = double(m) * spec.dt;

    // deterministic part: initial value + history forcing (shared with the
    // semigroup so the f == 0 decomposition identity is exact)
    const auto det =
        evolution::deterministic_v_trajectory(state0, res, kernel, spec.basis, step_times);

    std::vector<std::vector<double>> S(N), G(N);
    for (int j = 0; j < N; ++j) {
        S[j] = lag_table(res[j], spec.dt, K);
        G[j] = step_integral_table(res[j], spec.dt, K);
    }

    const auto grid = spectral::PhysicalGrid::make(spec.basis);
    const rng::CounterRng gen(spec.seed);
    const double sqdt = std::sqrt(spec.dt);

    // Picard windows: restart the fixed-point iteration every T_step
    const double L = f.is_zero() ? 0.0 : f.lipschitz;
    double T_step = opt.T;
    if (opt.method == Method::Picard)
        T_step = std::min(L > 0 ? 0.5 / L : opt.T, 0.1 * opt.T);
    std::size_t win_len = std::max<std::size_t>(1, std::size_t(std::round(T_step / spec.dt)));
    const std::size_t n_windows = (K + win_len - 1) / win_len;

    SimulationResult result;
    result.window_length = double(win_len) * spec.dt;
    const int max_it = opt.max_picard_iterations;

    // per-path gap records, reduced serially afterwards for determinism
    std::vector<std::vector<double>> path_gapsq;
    if (opt.method == Method::Picard)
        path_gapsq.assign(spec.n_paths, std::vector<double>(n_windows * max_it, 0.0));

    PathEnsemble ens;
    ens.times = opt.output_times;
    ens.n_paths = spec.n_paths;
    ens.n_modes = N;
    ens.values.assign(std::size_t(spec.n_paths) * out_idx.size() * N, 0.0);
    ens.stream_ids.resize(spec.n_paths);
    for (int p = 0; p < spec.n_paths; ++p) ens.stream_ids[p] = std::uint32_t(p);

    std::string abort_message;

#pragma omp parallel
    {
        std::vector<std::vector<double>> incr(N, std::vector<double>(K));
        std::vector<double> v((K + 1) * N), base((K + 1) * N), Fj(K * N), Rj(K * N);
        std::vector<double> vphys(grid.points()), fphys(grid.points()), fhat(N);

#pragma omp for schedule(dynamic, 1)
        for (int p = 0; p < spec.n_paths; ++p) {
            for (int j = 0; j < N; ++j)
                for (std::size_t i = 0; i < K; ++i)
                    incr[j][i] = sqdt * gen.normal(std::uint32_t(p), std::uint32_t(j),
                                                   std::uint32_t(i),
                                                   rng::Salt::NoiseIncrement);

            // base = deterministic part + noise convolution (fixed across iterates)
            for (int j = 0; j < N; ++j) base[j] = det[j][0];
            for (std::size_t m = 1; m <= K; ++m) {
                for (int j = 0; j < N; ++j) {
                    const double sqlam = std::sqrt(spec.basis.lambda[j]);
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i)
                        acc += S[j][m - i] * sqlam * incr[j][i];
                    base[m * N + j] = det[j][m] + acc;
                }
            }

            auto eval_fr = [&](std::size_t i) { // nonlinearity + control at step i
                const double t = double(i) * spec.dt;
                if (!f.is_zero()) {
                    grid.to_physical(std::span<const double>(&v[i * N], N), vphys);
                    for (std::size_t q = 0; q < vphys.size(); ++q)
                        fphys[q] = f.f(t, vphys[q]);
                    grid.to_modes(fphys, fhat);
                    for (int j = 0; j < N; ++j) Fj[i * N + j] = fhat[j];
                } else {
                    for (int j = 0; j < N; ++j) Fj[i * N + j] = 0.0;
                }
                if (opt.control_drift)
                    opt.control_drift(t, std::span<const double>(&v[i * N], N),
                                      std::span<double>(&Rj[i * N], N));
            };

            for (int j = 0; j < N; ++j) v[j] = state0.v[j];

            for (std::size_t w = 0; w < n_windows; ++w) {
                const std::size_t a = w * win_len;
                const std::size_t b = std::min(K, a + win_len);
                // start the window from the F-free prediction
                for (std::size_t m = a + 1; m <= b; ++m) {
                    for (int j = 0; j < N; ++j) {
                        double acc = base[m * N + j];
                        for (std::size_t i = 0; i < a; ++i) {
                            acc += G[j][m - i] * Fj[i * N + j];
                            if (opt.control_drift)
                                acc += S[j][m - i] * std::sqrt(spec.basis.lambda[j]) *
                                       Rj[i * N + j] * spec.dt;
                        }
                        v[m * N + j] = acc;
                        base[m * N + j] = acc; // frozen part for this window
                    }
                }
                if (f.is_zero() && !opt.control_drift) continue;

                if (opt.method == Method::ExpEuler) {
                    for (std::size_t m = a + 1; m <= b; ++m) {
                        eval_fr(m - 1);
                        for (int j = 0; j < N; ++j) {
                            double acc = base[m * N + j];
                            for (std::size_t i = a; i < m; ++i) {
                                acc += G[j][m - i] * Fj[i * N + j];
                                if (opt.control_drift)
                                    acc += S[j][m - i] * std::sqrt(spec.basis.lambda[j]) *
                                           Rj[i * N + j] * spec.dt;
                            }
                            v[m * N + j] = acc;
                        }
                    }
                    continue;
                }

                // Picard iteration on the window, common random numbers
                double prev_gap = -1.0;
                int rising = 0;
                for (int it = 0; it < max_it; ++it) {
                    for (std::size_t i = a; i < b; ++i) eval_fr(i);
                    double gapsq = 0.0, scale = 0.0;
                    for (std::size_t m = a + 1; m <= b; ++m) {
                        for (int j = 0; j < N; ++j) {
                            double acc = base[m * N + j];
                            for (std::size_t i = a; i < m; ++i)
                                acc += G[j][m - i] * Fj[i * N + j];
                            const double d = acc - v[m * N + j];
                            gapsq += d * d * spec.dt;
                            scale += acc * acc * spec.dt;
                            v[m * N + j] = acc;
                        }
                    }
                    path_gapsq[p][w * max_it + it] = gapsq;
                    const double gap = std::sqrt(gapsq);
                    if (gap <= opt.picard_tolerance * (1.0 + std::sqrt(scale))) break;
                    if (prev_gap >= 0 && gap > prev_gap) {
                        if (++rising >= 2) {
                            std::ostringstream os;
                            os << "simulate_mild_solution: Picard iteration not contracting "
                               << "in window " << w << " (gap " << prev_gap << " -> " << gap
                               << ")";
#pragma omp critical
                            abort_message = os.str();
                            break;
                        }
                    } else {
                        rising = 0;
                    }
                    prev_gap = gap;
                }
                // final pass so later windows see converged F values
                for (std::size_t i = a; i < b; ++i) eval_fr(i);
            }

            for (std::size_t k = 0; k < out_idx.size(); ++k)
                for (int j = 0; j < N; ++j)
                    ens.at(p, int(k), j) = v[out_idx[k] * N + j];
        }
    }

    if (!abort_message.empty()) throw std::runtime_error(abort_message);

    if (opt.method == Method::Picard) {
        result.window_gaps.assign(n_windows, {});
        for (std::size_t w = 0; w < n_windows; ++w) {
            for (int it = 0; it < max_it; ++it) {
                double acc = 0.0;
                for (int p = 0; p < spec.n_paths; ++p) acc += path_gapsq[p][w * max_it + it];
                if (acc == 0.0 && it > 0) break;
                result.window_gaps[w].push_back(std::sqrt(acc / spec.n_paths));
            }
            // contraction ratio: median of consecutive gap ratios in the window
            std::vector<double> ratios;
            const auto& gaps = result.window_gaps[w];
            for (std::size_t i = 0; i + 1 < gaps.size(); ++i)
                if (gaps[i] > 0 && gaps[i + 1] > 0) ratios.push_back(gaps[i + 1] / gaps[i]);
            if (ratios.empty()) {
                result.window_ratios.push_back(0.0);
            } else {
                std::sort(ratios.begin(), ratios.end());
                result.window_ratios.push_back(ratios[ratios.size() / 2]);
            }
        }
    }

    result.ensemble = std::move(ens);
    return result;
}

PicardDiagnostics picard_diagnostics(const SimulationResult& run) {
    PicardDiagnostics d;
    d.iterate_gaps = run.window_gaps;
    std::vector<double> ratios;
    for (const auto& gaps : run.window_gaps)
        for (std::size_t i = 0; i + 1 < gaps.size(); ++i)
            if (gaps[i] > 0 && gaps[i + 1] > 0) ratios.push_back(gaps[i + 1] / gaps[i]);
    if (!ratios.empty()) {
        std::sort(ratios.begin(), ratios.end());
        d.rate_estimate = ratios[ratios.size() / 2];
    }
    return d;
}

} // namespace memheat::stochastic
