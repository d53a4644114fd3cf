#include "memheat/control.hpp"
#include "memheat/quadrature.hpp"
#include "memheat/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace memheat::control {

namespace {

double clip(double x, double lo, double hi) { return std::min(hi, std::max(lo, x)); }

} // namespace

ControlProblem ControlProblem::scalar(PointwiseMaps maps, double gamma_min,
                                      double gamma_max, double horizon) {
    if (!(gamma_min < gamma_max))
        throw std::invalid_argument("ControlProblem: gamma_min < gamma_max");
    if (!(horizon > 0)) throw std::invalid_argument("ControlProblem: horizon > 0");
    ControlProblem p;
    p.maps = std::move(maps);
    p.gamma_min = gamma_min;
    p.gamma_max = gamma_max;
    p.horizon = horizon;
    p.scalar_state = true;
    return p;
}

ControlProblem ControlProblem::spectral_truncation(PointwiseMaps maps, double gamma_min,
                                                   double gamma_max, double horizon,
                                                   const spectral::SpectralBasis& basis) {
    ControlProblem p = scalar(std::move(maps), gamma_min, gamma_max, horizon);
    p.scalar_state = false;
    p.basis = basis;
    p.phys = spectral::PhysicalGrid::make(basis);
    return p;
}

double ControlProblem::running_cost(double t, std::span<const double> X,
                                    double gamma) const {
    auto ell = [&](double v) {
        if (maps.structured)
            return maps.ell0(t, v) + maps.ell1(t, v) * gamma +
                   maps.ell2(t, v) * gamma * gamma;
        return maps.ell_general(t, v, gamma);
    };
    if (scalar_state) return ell(X[0]);
    std::vector<double> vphys(phys.points()), lv(phys.points());
    phys.to_physical(X, vphys);
    for (std::size_t q = 0; q < vphys.size(); ++q) lv[q] = ell(vphys[q]);
    return phys.quadrature(lv);
}

void ControlProblem::drift_R(double t, std::span<const double> X, double gamma,
                             std::span<double> out) const {
    auto r = [&](double v) {
        if (maps.structured) return maps.r0(t, v) + maps.r1(t, v) * gamma;
        return maps.r_general(t, v, gamma);
    };
    if (scalar_state) {
        out[0] = r(X[0]);
        return;
    }
    std::vector<double> vphys(phys.points()), rv(phys.points());
    phys.to_physical(X, vphys);
    for (std::size_t q = 0; q < vphys.size(); ++q) rv[q] = r(vphys[q]);
    phys.to_modes(rv, out);
}

double ControlProblem::terminal_cost(std::span<const double> X) const {
    if (scalar_state) return maps.phi(X[0]);
    std::vector<double> vphys(phys.points()), pv(phys.points());
    phys.to_physical(X, vphys);
    for (std::size_t q = 0; q < vphys.size(); ++q) pv[q] = maps.phi(vphys[q]);
    return phys.quadrature(pv);
}

double ControlProblem::control_set_bound(double t, std::span<const double> X) const {
    std::vector<double> R(dim());
    double bound = 0.0;
    for (double g : {gamma_min, gamma_max, 0.5 * (gamma_min + gamma_max)}) {
        drift_R(t, X, g, R);
        double norm = 0.0;
        for (double v : R) norm += v * v;
        bound = std::max(bound, std::sqrt(norm));
    }
    return bound;
}

HamiltonianResult hamiltonian(const ControlProblem& problem, double t,
                              std::span<const double> X, std::span<const double> Z) {
    const int n = problem.dim();
    if (int(X.size()) != n || int(Z.size()) != n)
        throw std::invalid_argument("hamiltonian: X/Z dimension mismatch");

    std::vector<double> R(n);
    auto total = [&](double gamma) {
        double v = problem.running_cost(t, X, gamma);
        problem.drift_R(t, X, gamma, R);
        for (int d = 0; d < n; ++d) v += Z[d] * R[d];
        return v;
    };

    const double lo = problem.gamma_min, hi = problem.gamma_max;
    if (problem.maps.structured) {
        // total(gamma) = A + B gamma + C gamma^2 with C >= 0: sample at three
        // points to recover the coefficients exactly, then clip the stationary
        // point into U and compare against the endpoints.
        const double f_lo = total(lo), f_hi = total(hi), f_mid = total(0.5 * (lo + hi));
        const double h = 0.5 * (hi - lo);
        const double C = (f_lo + f_hi - 2 * f_mid) / (2 * h * h);
        const double B_at_mid = (f_hi - f_lo) / (2 * h);
        HamiltonianResult best{f_lo, lo};
        if (f_hi < best.psi - 0.0) best = {f_hi, hi};
        if (C > 0) {
            const double g = clip(0.5 * (lo + hi) - B_at_mid / (2 * C), lo, hi);
            const double fg = total(g);
            if (fg < best.psi || (fg == best.psi && g < best.gamma_star)) best = {fg, g};
        }
        // tie toward the smaller gamma
        if (std::fabs(f_lo - best.psi) <= 0.0 && lo < best.gamma_star) best = {f_lo, lo};
        return best;
    }

    // grid scan + golden section
    constexpr int grid_n = 64;
    double best_g = lo, best_v = total(lo);
    for (int i = 1; i < grid_n; ++i) {
        const double g = lo + (hi - lo) * double(i) / (grid_n - 1);
        const double v = total(g);
        if (v < best_v - 1e-15) {
            best_v = v;
            best_g = g;
        }
    }
    const double cell = (hi - lo) / (grid_n - 1);
    double a = std::max(lo, best_g - cell), b = std::min(hi, best_g + cell);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = total(c), fd = total(d);
    while (b - a > 1e-8) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = total(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = total(d);
        }
    }
    const double g = 0.5 * (a + b);
    const double v = total(g);
    if (v < best_v) {
        best_v = v;
        best_g = g;
    }
    return {best_v, best_g};
}

FeatureBasis FeatureBasis::make(int dim, int degree) {
    if (dim < 1 || dim > 4 || degree < 1 || degree > 3)
        throw std::invalid_argument("FeatureBasis: desk scale is dim <= 4, degree <= 3");
    FeatureBasis fb;
    fb.dim = dim;
    fb.degree = degree;
    std::vector<int> idx(dim, 0);
    // enumerate multi-indices with total degree <= degree
    std::function<void(int, int)> rec = [&](int pos, int remaining) {
        if (pos == dim) {
            fb.exponents.push_back(idx);
            return;
        }
        for (int e = 0; e <= remaining; ++e) {
            idx[pos] = e;
            rec(pos + 1, remaining - e);
        }
        idx[pos] = 0;
    };
    rec(0, degree);
    return fb;
}

void FeatureBasis::eval(std::span<const double> X, std::span<double> out) const {
    for (std::size_t f = 0; f < exponents.size(); ++f) {
        double v = 1.0;
        for (int d = 0; d < dim; ++d)
            for (int e = 0; e < exponents[f][d]; ++e) v *= X[d];
        out[f] = v;
    }
}

ForwardPaths ScalarLinearSde::simulate(int n_paths, int steps, double T,
                                       std::uint64_t seed, const ControlProblem* problem,
                                       const GammaEval* gamma) const {
    ForwardPaths out;
    out.n_paths = n_paths;
    out.steps = steps;
    out.dim = 1;
    out.dt = T / steps;
    out.X.assign(std::size_t(n_paths) * (steps + 1), 0.0);
    out.dW.assign(std::size_t(n_paths) * steps, 0.0);
    const rng::CounterRng gen(seed);
    const double sqdt = std::sqrt(out.dt);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n_paths; ++p) {
        double x = x0_;
        out.X[std::size_t(p) * (steps + 1)] = x;
        for (int k = 0; k < steps; ++k) {
            const double dw =
                sqdt * gen.normal(std::uint32_t(p), 0, std::uint32_t(k),
                                  rng::Salt::NoiseIncrement);
            out.dW[std::size_t(p) * steps + k] = dw;
            double drift = a_ * x;
            if (gamma && problem) {
                const double g = (*gamma)(k, std::span<const double>(&x, 1));
                double R = 0.0;
                problem->drift_R(k * out.dt, std::span<const double>(&x, 1), g,
                                 std::span<double>(&R, 1));
                drift += b_ * R;
            }
            x += drift * out.dt + b_ * dw;
            out.X[std::size_t(p) * (steps + 1) + k + 1] = x;
        }
    }
    return out;
}

SpdeTruncation::SpdeTruncation(kernels::MemoryKernel kernel,
                               spectral::SpectralBasis basis, stochastic::NonlinearTerm f,
                               evolution::HistoryState state0,
                               std::vector<resolvent::ScalarResolvent> res)
    : kernel_(std::move(kernel)),
      basis_(std::move(basis)),
      f_(std::move(f)),
      state0_(std::move(state0)),
      res_(std::move(res)) {
    if (basis_.N > 4)
        throw std::invalid_argument("SpdeTruncation: control truncation is n <= 4");
}

ForwardPaths SpdeTruncation::simulate(int n_paths, int steps, double T,
                                      std::uint64_t seed, const ControlProblem* problem,
                                      const GammaEval* gamma) const {
    stochastic::NoiseSpec spec;
    spec.basis = basis_;
    spec.seed = seed;
    spec.n_paths = n_paths;
    spec.dt = T / steps;

    stochastic::SimulateOptions opt;
    opt.method = stochastic::Method::ExpEuler;
    opt.T = T;
    opt.output_times.resize(steps + 1);
    for (int k = 0; k <= steps; ++k) opt.output_times[k] = k * spec.dt;
    if (gamma && problem) {
        opt.control_drift = [problem, gamma, dt = spec.dt](
                                double t, std::span<const double> vhat,
                                std::span<double> R) {
            const int step = int(std::llround(t / dt));
            const double g = (*gamma)(step, vhat);
            problem->drift_R(t, vhat, g, R);
        };
    }
    const auto run =
        stochastic::simulate_mild_solution(state0_, f_, spec, kernel_, res_, opt);

    ForwardPaths out;
    out.n_paths = n_paths;
    out.steps = steps;
    out.dim = basis_.N;
    out.dt = spec.dt;
    out.X.resize(std::size_t(n_paths) * (steps + 1) * basis_.N);
    out.dW.resize(std::size_t(n_paths) * steps * basis_.N);
    const rng::CounterRng gen(seed);
    const double sqdt = std::sqrt(spec.dt);
    for (int p = 0; p < n_paths; ++p) {
        for (int k = 0; k <= steps; ++k)
            for (int j = 0; j < basis_.N; ++j)
                out.X[(std::size_t(p) * (steps + 1) + k) * basis_.N + j] =
                    run.ensemble.at(p, k, j);
        for (int k = 0; k < steps; ++k)
            for (int j = 0; j < basis_.N; ++j)
                out.dW[(std::size_t(p) * steps + k) * basis_.N + j] =
                    sqdt * gen.normal(std::uint32_t(p), std::uint32_t(j),
                                      std::uint32_t(k), rng::Salt::NoiseIncrement);
    }
    return out;
}

void FeedbackPolicy::z_at(int step, std::span<const double> X, std::span<double> Z) const {
    const int nf = features.count();
    std::vector<double> phi(nf);
    features.eval(X, phi);
    const auto& ck = z_coeffs[std::min<std::size_t>(step, z_coeffs.size() - 1)];
    for (std::size_t d = 0; d < ck.size(); ++d) {
        double acc = 0.0;
        for (int f = 0; f < nf; ++f) acc += ck[d][f] * phi[f];
        Z[d] = acc;
    }
}

double FeedbackPolicy::gamma(int step, std::span<const double> X) const {
    std::vector<double> Z(problem->dim());
    z_at(step, X, Z);
    return hamiltonian(*problem, step * dt, X, Z).gamma_star;
}

FbsdeResult fbsde_solve(const ControlProblem& problem, const ForwardModel& model,
                        const FbsdeOptions& opt) {
    const int n = model.dim();
    if (n > 4) throw std::invalid_argument("fbsde_solve: truncation n <= 4");
    const int steps = opt.steps;
    const double T = problem.horizon;
    const double dt = T / steps;

    const auto paths = model.simulate(opt.n_paths, steps, T, opt.seed, nullptr, nullptr);
    const auto fb = FeatureBasis::make(n, opt.feature_degree);
    const int nf = fb.count();

    // feature matrices per step (step 0 is deterministic; handled by plain means)
    std::vector<Eigen::MatrixXd> Phi(steps);
    std::vector<Eigen::ColPivHouseholderQR<Eigen::MatrixXd>> qr(steps);
    FbsdeResult result;
    for (int k = 1; k < steps; ++k) {
        Phi[k].resize(opt.n_paths, nf);
        std::vector<double> feats(nf);
        for (int p = 0; p < opt.n_paths; ++p) {
            fb.eval(std::span<const double>(&paths.X[(std::size_t(p) * (steps + 1) + k) * n], n),
                    feats);
            for (int f = 0; f < nf; ++f) Phi[k](p, f) = feats[f];
        }
        qr[k].compute(Phi[k]);
        if (qr[k].rank() < nf)
            result.diagnostics.push_back({k, true, int(qr[k].rank())});
    }

    std::vector<double> term(opt.n_paths);
    for (int p = 0; p < opt.n_paths; ++p)
        term[p] = problem.terminal_cost(
            std::span<const double>(&paths.X[(std::size_t(p) * (steps + 1) + steps) * n], n));

    FeedbackPolicy policy;
    policy.features = fb;
    policy.dt = dt;
    policy.problem = std::make_shared<ControlProblem>(problem);
    policy.z_coeffs.assign(steps, std::vector<std::vector<double>>(
                                      n, std::vector<double>(nf, 0.0)));

    std::vector<double> Y(opt.n_paths), Yprev_sweep; // per-path values at step k+1
    std::vector<std::vector<double>> Y_by_step(steps + 1,
                                               std::vector<double>(opt.n_paths, 0.0));
    // sweep 0 runs with Z == 0; later sweeps regress Z from the previous
    // sweep's Y field (Picard over Z)
    double Y0 = 0.0, Y0_prev = 0.0;
    std::vector<double> Zk(n), Xk(n), feats(nf);
    Eigen::VectorXd target(opt.n_paths);

    for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
        const bool have_prev = sweep > 0;
        std::vector<std::vector<double>> Yprev;
        if (have_prev) Yprev = Y_by_step;

        Y_by_step[steps] = term;
        for (int k = steps - 1; k >= 0; --k) {
            // Z regression: E[ Y_{k+1} dW_k / dt | X_k ]
            if (k >= 1) {
                const auto& Ynext = have_prev ? Yprev[k + 1] : Y_by_step[k + 1];
                for (int d = 0; d < n; ++d) {
                    for (int p = 0; p < opt.n_paths; ++p)
                        target(p) = Ynext[p] * paths.w(p, k, d) / dt;
                    const Eigen::VectorXd beta = qr[k].solve(target);
                    for (int f = 0; f < nf; ++f) policy.z_coeffs[k][d][f] = beta(f);
                }
            } else {
                // X_0 deterministic: Z_0 is the plain mean
                const auto& Ynext = have_prev ? Yprev[1] : Y_by_step[1];
                for (int d = 0; d < n; ++d) {
                    double acc = 0.0;
                    for (int p = 0; p < opt.n_paths; ++p)
                        acc += Ynext[p] * paths.w(p, 0, d) / dt;
                    acc /= opt.n_paths;
                    for (int f = 0; f < nf; ++f) policy.z_coeffs[0][d][f] = 0.0;
                    policy.z_coeffs[0][d][0] = acc; // constant feature
                }
            }

            // driver target: Y_{k+1} + psi(t_k, X_k, Z_k) dt
            for (int p = 0; p < opt.n_paths; ++p) {
                for (int d = 0; d < n; ++d)
                    Xk[d] = paths.x(p, k, d);
                policy.z_at(k, Xk, Zk);
                const auto ham = hamiltonian(problem, k * dt, Xk, Zk);
                target(p) = Y_by_step[k + 1][p] + ham.psi * dt;
            }
            if (k >= 1) {
                const Eigen::VectorXd beta = qr[k].solve(target);
                const Eigen::VectorXd fitted = Phi[k] * beta;
                for (int p = 0; p < opt.n_paths; ++p) Y_by_step[k][p] = fitted(p);
            } else {
                double acc = 0.0;
                for (int p = 0; p < opt.n_paths; ++p) acc += target(p);
                acc /= opt.n_paths;
                for (int p = 0; p < opt.n_paths; ++p) Y_by_step[0][p] = acc;
            }
        }
        Y0_prev = Y0;
        Y0 = Y_by_step[0][0];
        result.Y0_history.push_back(Y0);
        result.sweeps = sweep + 1;
        if (sweep > 0 && std::fabs(Y0 - Y0_prev) < opt.y0_tolerance) break;
    }

    result.Y0 = Y0;
    result.policy = std::move(policy);
    return result;
}

CostEstimate cost_functional(const ControlProblem& problem, const ForwardModel& model,
                             const GammaEval& gamma, int n_paths, int steps,
                             std::uint64_t seed, bool use_girsanov) {
    const double T = problem.horizon;
    const double dt = T / steps;
    const int n = model.dim();
    const GammaEval* drift = use_girsanov ? nullptr : &gamma;
    const auto paths = model.simulate(n_paths, steps, T, seed, &problem, drift);

    std::vector<double> weights;
    if (use_girsanov) weights = girsanov_weights(problem, paths, gamma);

    double sum = 0.0, sumsq = 0.0;
    std::vector<double> Xk(n);
    for (int p = 0; p < n_paths; ++p) {
        double cost = 0.0;
        for (int k = 0; k < steps; ++k) {
            for (int d = 0; d < n; ++d) Xk[d] = paths.x(p, k, d);
            const double g = gamma(k, Xk);
            cost += problem.running_cost(k * dt, Xk, g) * dt;
        }
        for (int d = 0; d < n; ++d) Xk[d] = paths.x(p, steps, d);
        cost += problem.terminal_cost(Xk);
        if (use_girsanov) cost *= weights[p];
        if (!std::isfinite(cost)) {
            std::ostringstream os;
            os << "cost_functional: non-finite sample on path " << p;
            throw std::runtime_error(os.str());
        }
        sum += cost;
        sumsq += cost * cost;
    }
    CostEstimate est;
    est.J = sum / n_paths;
    const double var = std::max(0.0, sumsq / n_paths - est.J * est.J);
    est.std_error = std::sqrt(var / n_paths);
    return est;
}

std::vector<double> girsanov_weights(const ControlProblem& problem,
                                     const ForwardPaths& paths, const GammaEval& gamma) {
    const int n = paths.dim;
    std::vector<double> out(paths.n_paths);
    std::vector<double> Xk(n), R(n);
    for (int p = 0; p < paths.n_paths; ++p) {
        double logw = 0.0;
        for (int k = 0; k < paths.steps; ++k) {
            for (int d = 0; d < n; ++d) Xk[d] = paths.x(p, k, d);
            const double g = gamma(k, Xk);
            problem.drift_R(k * paths.dt, Xk, g, R);
            for (int d = 0; d < n; ++d)
                logw += R[d] * paths.w(p, k, d) - 0.5 * R[d] * R[d] * paths.dt;
        }
        out[p] = std::exp(logw);
    }
    return out;
}

RiccatiSolution lq_riccati_oracle(double a, double b, double q, double p_T, double T,
                                  double dt) {
    if (!(T > 0) || !(dt > 0)) throw std::invalid_argument("lq_riccati_oracle: T, dt > 0");
    const int steps = int(std::ceil(T / dt));
    const double h = T / steps;
    RiccatiSolution sol;
    sol.a = a;
    sol.b = b;
    sol.t.resize(steps + 1);
    sol.P.resize(steps + 1);
    // integrate backward via tau = T - t
    auto f = [&](double u) { return 2 * a * u + q - b * b * u * u; };
    double u = p_T;
    sol.t[steps] = T;
    sol.P[steps] = p_T;
    for (int i = 1; i <= steps; ++i) {
        const double k1 = f(u);
        const double k2 = f(u + 0.5 * h * k1);
        const double k3 = f(u + 0.5 * h * k2);
        const double k4 = f(u + h * k3);
        u += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        if (!std::isfinite(u) || std::fabs(u) > 1e8) {
            sol.blew_up = true;
            u = std::copysign(1e8, u);
        }
        sol.t[steps - i] = T - i * h;
        sol.P[steps - i] = u;
    }
    sol.P0 = sol.P[0];
    sol.integral_P = quad::integrate_cubic(sol.t, sol.P);
    return sol;
}

double RiccatiSolution::gain(double time) const {
    return -b * quad::interp_cubic(t, P, time);
}

LowerBoundReport verify_value_lower_bound(const ControlProblem& problem,
                                          const ForwardModel& model, double Y0,
                                          int m_controls, int n_paths, int steps,
                                          std::uint64_t seed) {
    LowerBoundReport rep;
    const rng::CounterRng gen(seed);
    constexpr int pieces = 10;
    for (int c = 0; c < m_controls; ++c) {
        std::array<double, pieces> vals{};
        for (int s = 0; s < pieces; ++s)
            vals[s] = problem.gamma_min +
                      (problem.gamma_max - problem.gamma_min) *
                          gen.uniform(std::uint32_t(c), std::uint32_t(s), 0,
                                      rng::Salt::ControlSample);
        GammaEval open_loop = [vals, steps](int step, std::span<const double>) {
            const int piece = std::min(pieces - 1, step * pieces / steps);
            return vals[piece];
        };
        const auto est = cost_functional(problem, model, open_loop, n_paths, steps,
                                         seed + 7919 * (c + 1));
        LowerBoundEntry e;
        e.J = est.J;
        e.std_error = est.std_error;
        e.violation = est.J < Y0 - 3.0 * est.std_error;
        if (e.violation) ++rep.violations;
        rep.entries.push_back(e);
    }
    return rep;
}

} // namespace memheat::control
