#include "memheat/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace memheat::spectral {

std::string to_string(Domain d) {
    return d == Domain::Interval ? "interval" : "rectangle";
}

std::string to_string(TraceVerdict v) {
    switch (v) {
        case TraceVerdict::Converges: return "converges";
        case TraceVerdict::Diverges: return "diverges";
        case TraceVerdict::Undetermined: return "undetermined";
    }
    return "undetermined";
}

namespace {

std::vector<std::array<int, 2>> mode_indices(Domain domain, int N) {
    std::vector<std::array<int, 2>> idx;
    if (domain == Domain::Interval) {
        for (int j = 1; j <= N; ++j) idx.push_back({j, 0});
        return idx;
    }
    int K = int(std::ceil(std::sqrt(double(2 * N)))) + 2;
    std::vector<std::array<int, 2>> all;
    for (int j = 1; j <= K; ++j)
        for (int m = 1; m <= K; ++m) all.push_back({j, m});
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        const long va = long(a[0]) * a[0] + long(a[1]) * a[1];
        const long vb = long(b[0]) * b[0] + long(b[1]) * b[1];
        if (va != vb) return va < vb;
        return a < b;
    });
    all.resize(N);
    return all;
}

} // namespace

std::vector<double> dirichlet_eigenvalues(Domain domain, int N) {
    if (N < 1) throw std::invalid_argument("dirichlet_eigenvalues: N >= 1");
    auto idx = mode_indices(domain, N);
    std::vector<double> mu(N);
    for (int i = 0; i < N; ++i)
        mu[i] = double(idx[i][0]) * idx[i][0] + double(idx[i][1]) * idx[i][1];
    return mu;
}

std::vector<double> noise_spectrum(std::span<const double> mu, double q, double scale) {
    if (q < 0) throw std::invalid_argument("noise_spectrum: q >= 0");
    std::vector<double> lam(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) lam[i] = scale * std::pow(mu[i], -q);
    return lam;
}

double default_theta(double delta) {
    double th = std::ceil((delta - 1.0) / 0.05) * 0.05;
    if (th <= delta - 1.0 + 1e-12) th += 0.05;
    if (!(th < 1.0))
        throw std::domain_error("default_theta: no admissible theta < 1 (delta too close to 2)");
    return th;
}

SpectralBasis SpectralBasis::make(Domain domain, int N, double q, double scale) {
    SpectralBasis b;
    b.domain = domain;
    b.N = N;
    b.index = mode_indices(domain, N);
    b.mu = dirichlet_eigenvalues(domain, N);
    b.lambda = noise_spectrum(b.mu, q, scale);
    b.noise = {q, scale, false};
    return b;
}

SpectralBasis SpectralBasis::from_tables(Domain domain, std::vector<double> mu,
                                         std::vector<double> lambda) {
    if (mu.empty() || mu.size() != lambda.size())
        throw std::invalid_argument("SpectralBasis: mu/lambda size mismatch");
    if (!(mu.front() > 0)) throw std::invalid_argument("SpectralBasis: mu_1 > 0 required");
    for (std::size_t i = 1; i < mu.size(); ++i)
        if (mu[i] < mu[i - 1]) throw std::invalid_argument("SpectralBasis: mu nondecreasing");
    for (double l : lambda)
        if (l < 0) throw std::invalid_argument("SpectralBasis: lambda >= 0");
    SpectralBasis b;
    b.domain = domain;
    b.N = int(mu.size());
    b.mu = std::move(mu);
    b.lambda = std::move(lambda);
    b.index = mode_indices(domain, b.N);
    b.noise = {0.0, 1.0, true};
    return b;
}

TraceReport trace_condition(const SpectralBasis& basis, double theta, double delta) {
    if (!(theta > 0) || !(theta < 1))
        throw std::invalid_argument("trace_condition: theta in (0,1)");
    if (!(1.0 + theta > delta))
        throw std::invalid_argument("trace_condition: requires 1 + theta > delta");
    TraceReport rep;
    rep.exponent = (1.0 + theta) / delta - 1.0;
    rep.terms.resize(basis.N);
    rep.partial_sums.resize(basis.N);
    double acc = 0.0;
    for (int j = 0; j < basis.N; ++j) {
        rep.terms[j] = basis.lambda[j] / std::pow(basis.mu[j], rep.exponent);
        acc += rep.terms[j];
        rep.partial_sums[j] = acc;
    }
    if (basis.noise.tabulated) {
        rep.verdict = TraceVerdict::Undetermined;
        return rep;
    }
    // power-law spectrum: term_j = scale * mu_j^{-(q+e)} with mu_j ~ c_d j^{2/d};
    // integral test on j gives the monotone tail bound.
    const int d = basis.domain == Domain::Interval ? 1 : 2;
    const double qe = basis.noise.q + rep.exponent;
    const double p = 2.0 * qe / d;
    if (p <= 1.0) {
        rep.verdict = rep.terms.empty() || rep.terms.back() > 0
                          ? TraceVerdict::Diverges
                          : TraceVerdict::Undetermined;
        rep.tail_bound = std::numeric_limits<double>::infinity();
        return rep;
    }
    double c_d = 1.0; // interval: mu_j = j^2 exactly
    if (basis.domain == Domain::Rectangle) {
        // monotone lower envelope of mu_j / j keeps the bound one-sided
        c_d = basis.mu[0];
        for (int j = 0; j < basis.N; ++j)
            c_d = std::min(c_d, basis.mu[j] / double(j + 1));
    }
    rep.tail_bound = basis.noise.scale * std::pow(c_d, -qe) *
                     std::pow(double(basis.N), 1.0 - p) / (p - 1.0);
    rep.verdict = TraceVerdict::Converges;
    return rep;
}

std::string TraceReport::to_json() const {
    std::ostringstream os;
    os.precision(17);
    os << "{\"exponent\":" << exponent << ",\"verdict\":\"" << to_string(verdict)
       << "\",\"tail_bound\":" << tail_bound << ",\"rows\":[";
    for (std::size_t j = 0; j < terms.size(); ++j) {
        if (j) os << ",";
        os << "{\"j\":" << j + 1 << ",\"term\":" << terms[j]
           << ",\"partial_sum\":" << partial_sums[j] << "}";
    }
    os << "]}";
    return os.str();
}

PhysicalGrid PhysicalGrid::make(const SpectralBasis& basis, int oversample) {
    if (oversample < 2) oversample = 2;
    PhysicalGrid g;
    g.n_modes_ = basis.N;
    int jmax = 1;
    for (const auto& jm : basis.index) jmax = std::max({jmax, jm[0], jm[1]});
    const int P = oversample * (jmax + 1);
    const double norm1 = std::sqrt(2.0 / M_PI);
    if (basis.domain == Domain::Interval) {
        g.weights_.assign(P - 1, M_PI / P);
        g.basis_eval_.resize(std::size_t(P - 1) * basis.N);
        for (int p = 1; p < P; ++p) {
            const double xi = M_PI * p / P;
            for (int j = 0; j < basis.N; ++j)
                g.basis_eval_[std::size_t(p - 1) * basis.N + j] =
                    norm1 * std::sin(basis.index[j][0] * xi);
        }
    } else {
        const double w2 = (M_PI / P) * (M_PI / P);
        const double norm2 = 2.0 / M_PI;
        g.weights_.assign(std::size_t(P - 1) * (P - 1), w2);
        g.basis_eval_.resize(g.weights_.size() * basis.N);
        std::size_t pt = 0;
        for (int p = 1; p < P; ++p) {
            for (int r = 1; r < P; ++r, ++pt) {
                const double xi = M_PI * p / P, zeta = M_PI * r / P;
                for (int j = 0; j < basis.N; ++j)
                    g.basis_eval_[pt * basis.N + j] =
                        norm2 * std::sin(basis.index[j][0] * xi) *
                        std::sin(basis.index[j][1] * zeta);
            }
        }
    }
    return g;
}

void PhysicalGrid::to_physical(std::span<const double> vhat, std::span<double> vphys) const {
    for (std::size_t p = 0; p < weights_.size(); ++p) {
        double acc = 0.0;
        for (int j = 0; j < n_modes_; ++j) acc += vhat[j] * basis_eval_[p * n_modes_ + j];
        vphys[p] = acc;
    }
}

void PhysicalGrid::to_modes(std::span<const double> f, std::span<double> vhat) const {
    for (int j = 0; j < n_modes_; ++j) vhat[j] = 0.0;
    for (std::size_t p = 0; p < weights_.size(); ++p) {
        const double fw = f[p] * weights_[p];
        for (int j = 0; j < n_modes_; ++j) vhat[j] += fw * basis_eval_[p * n_modes_ + j];
    }
}

double PhysicalGrid::quadrature(std::span<const double> f) const {
    double acc = 0.0;
    for (std::size_t p = 0; p < weights_.size(); ++p) acc += f[p] * weights_[p];
    return acc;
}

} // namespace memheat::spectral
