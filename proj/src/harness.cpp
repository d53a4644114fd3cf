#include "memheat/harness.hpp"
#include "memheat/quadrature.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace memheat::harness {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path().empty() ? "." : p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + p.string() + " for writing");
    os << text;
}

std::string read_text(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["kernel"] = {{"type", c.kernel_type},
                   {"k0", c.kernel_k0},
                   {"amplitude", c.kernel_amplitude},
                   {"rate", c.kernel_rate},
                   {"gamma", c.kernel_gamma}};
    if (!c.kernel_table_t.empty()) {
        j["kernel"]["table"] = {{"t", c.kernel_table_t}, {"k1", c.kernel_table_k1}};
    }
    j["basis"] = {{"domain", spectral::to_string(c.basis.domain)},
                  {"N", c.basis.N},
                  {"noise", {{"q", c.basis.noise.q}, {"scale", c.basis.noise.scale}}}};
    j["grid"] = {{"nodes", c.grid_nodes}, {"horizon", c.grid_horizon}};
    j["noise"] = {{"seed", c.seed}, {"n_paths", c.n_paths}, {"dt", c.dt}};
    j["nonlinearity"] = {{"type", c.f_type},
                         {"amplitude", c.f_amplitude},
                         {"frequency", c.f_frequency},
                         {"offset", c.f_offset},
                         {"slope", c.f_slope}};
    j["initial"] = {{"amplitude", c.initial_amplitude},
                    {"decay", c.initial_decay},
                    {"history", {{"type", c.history_type}, {"rate", c.history_rate}}}};
    j["simulate"] = {{"horizon", c.sim_horizon},
                     {"outputs", c.sim_outputs},
                     {"method", c.sim_method},
                     {"dump_paths", c.dump_paths}};
    j["semigroup"] = {{"times", c.semigroup_times}};
    j["resolvent"] = {{"modes", c.resolvent_modes}, {"lambdas", c.resolvent_lambdas}};
    j["covariance"] = {{"t", c.covariance_t}};
    j["control"] = {{"benchmark", c.benchmark},
                    {"lq",
                     {{"a", c.lq_a},
                      {"b", c.lq_b},
                      {"q", c.lq_q},
                      {"p_T", c.lq_pT},
                      {"T", c.lq_T},
                      {"x0", c.lq_x0}}},
                    {"U", {c.u_min, c.u_max}},
                    {"truncation", c.control_truncation},
                    {"degree", c.control_degree},
                    {"steps", c.control_steps},
                    {"n_paths", c.control_paths},
                    {"m_controls", c.m_controls}};
    j["out"] = c.out_dir.string();
    return j;
}

void finalize_config(ExperimentConfig& cfg, std::vector<std::string>& errors) {
    try {
        if (cfg.kernel_type == "heat") {
            cfg.kernel = kernels::MemoryKernel::heat(cfg.kernel_k0);
        } else if (cfg.kernel_type == "exponential") {
            cfg.kernel = kernels::MemoryKernel::exponential(cfg.kernel_k0,
                                                            cfg.kernel_amplitude,
                                                            cfg.kernel_rate);
        } else if (cfg.kernel_type == "singular") {
            cfg.kernel = kernels::MemoryKernel::weakly_singular(
                cfg.kernel_k0, cfg.kernel_amplitude, cfg.kernel_rate, cfg.kernel_gamma);
        } else if (cfg.kernel_type == "table") {
            cfg.kernel = kernels::MemoryKernel::from_table(cfg.kernel_k0,
                                                           cfg.kernel_table_t,
                                                           cfg.kernel_table_k1);
        } else {
            errors.push_back("kernel.type: unknown value '" + cfg.kernel_type + "'");
        }
    } catch (const std::exception& e) {
        errors.push_back(std::string("kernel: ") + e.what());
    }
    try {
        if (cfg.f_type == "zero") {
            cfg.f = stochastic::NonlinearTerm::zero();
        } else if (cfg.f_type == "sine") {
            cfg.f = stochastic::NonlinearTerm::sine(cfg.f_amplitude, cfg.f_frequency);
        } else if (cfg.f_type == "linear") {
            cfg.f = stochastic::NonlinearTerm::linear(cfg.f_offset, cfg.f_slope);
        } else if (cfg.f_type == "saturating") {
            cfg.f = stochastic::NonlinearTerm::saturating(cfg.f_amplitude);
        } else {
            errors.push_back("nonlinearity.type: unknown value '" + cfg.f_type + "'");
        }
    } catch (const std::exception& e) {
        errors.push_back(std::string("nonlinearity: ") + e.what());
    }
    cfg.raw_json = config_to_json(cfg).dump(2);
}

} // namespace

bool parse_config(const std::string& json_text, ExperimentConfig& cfg,
                  std::vector<std::string>& errors) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const std::exception& e) {
        errors.push_back(std::string("config is not valid JSON: ") + e.what());
        return false;
    }
    if (root.contains("config")) root = root["config"]; // manifest round-trip

    auto num = [&](const json& o, const char* key, double dflt, const char* where) {
        if (!o.contains(key)) return dflt;
        if (!o[key].is_number()) {
            errors.push_back(std::string(where) + "." + key + ": expected a number");
            return dflt;
        }
        return o[key].get<double>();
    };
    auto str = [&](const json& o, const char* key, std::string dflt, const char* where) {
        if (!o.contains(key)) return dflt;
        if (!o[key].is_string()) {
            errors.push_back(std::string(where) + "." + key + ": expected a string");
            return dflt;
        }
        return o[key].get<std::string>();
    };

    std::string domain = "interval";
    int N = 8;
    double q = 1.0, scale = 1.0;
    if (root.contains("kernel")) {
        const auto& k = root["kernel"];
        cfg.kernel_type = str(k, "type", cfg.kernel_type, "kernel");
        cfg.kernel_k0 = num(k, "k0", cfg.kernel_k0, "kernel");
        cfg.kernel_amplitude = num(k, "amplitude", cfg.kernel_amplitude, "kernel");
        cfg.kernel_rate = num(k, "rate", cfg.kernel_rate, "kernel");
        cfg.kernel_gamma = num(k, "gamma", cfg.kernel_gamma, "kernel");
        if (k.contains("table")) {
            try {
                cfg.kernel_table_t = k["table"]["t"].get<std::vector<double>>();
                cfg.kernel_table_k1 = k["table"]["k1"].get<std::vector<double>>();
            } catch (const std::exception&) {
                errors.push_back("kernel.table: expected arrays 't' and 'k1'");
            }
        }
    }
    if (root.contains("basis")) {
        const auto& b = root["basis"];
        domain = str(b, "domain", domain, "basis");
        N = int(num(b, "N", N, "basis"));
        if (b.contains("noise")) {
            q = num(b["noise"], "q", q, "basis.noise");
            scale = num(b["noise"], "scale", scale, "basis.noise");
        }
    }
    if (domain != "interval" && domain != "rectangle")
        errors.push_back("basis.domain: expected 'interval' or 'rectangle'");
    if (N < 1) errors.push_back("basis.N: must be >= 1");
    if (errors.empty()) {
        cfg.basis = spectral::SpectralBasis::make(
            domain == "interval" ? spectral::Domain::Interval
                                 : spectral::Domain::Rectangle,
            std::max(1, N), q, scale);
    }
    if (root.contains("grid")) {
        cfg.grid_nodes = std::size_t(num(root["grid"], "nodes", double(cfg.grid_nodes), "grid"));
        cfg.grid_horizon = num(root["grid"], "horizon", cfg.grid_horizon, "grid");
        if (cfg.grid_nodes < 8) errors.push_back("grid.nodes: must be >= 8");
    }
    if (root.contains("noise")) {
        const auto& n = root["noise"];
        cfg.seed = std::uint64_t(num(n, "seed", double(cfg.seed), "noise"));
        cfg.n_paths = int(num(n, "n_paths", cfg.n_paths, "noise"));
        cfg.dt = num(n, "dt", cfg.dt, "noise");
        if (cfg.n_paths < 1) errors.push_back("noise.n_paths: must be >= 1");
        if (!(cfg.dt > 0)) errors.push_back("noise.dt: must be > 0");
    }
    if (root.contains("nonlinearity")) {
        const auto& f = root["nonlinearity"];
        cfg.f_type = str(f, "type", cfg.f_type, "nonlinearity");
        cfg.f_amplitude = num(f, "amplitude", cfg.f_amplitude, "nonlinearity");
        cfg.f_frequency = num(f, "frequency", cfg.f_frequency, "nonlinearity");
        cfg.f_offset = num(f, "offset", cfg.f_offset, "nonlinearity");
        cfg.f_slope = num(f, "slope", cfg.f_slope, "nonlinearity");
    }
    if (root.contains("initial")) {
        const auto& i = root["initial"];
        cfg.initial_amplitude = num(i, "amplitude", cfg.initial_amplitude, "initial");
        cfg.initial_decay = num(i, "decay", cfg.initial_decay, "initial");
        if (i.contains("history")) {
            cfg.history_type = str(i["history"], "type", cfg.history_type, "initial.history");
            cfg.history_rate = num(i["history"], "rate", cfg.history_rate, "initial.history");
        }
    }
    if (cfg.history_type != "zero" && cfg.history_type != "exponential")
        errors.push_back("initial.history.type: expected 'zero' or 'exponential'");
    if (root.contains("simulate")) {
        const auto& s = root["simulate"];
        cfg.sim_horizon = num(s, "horizon", cfg.sim_horizon, "simulate");
        cfg.sim_outputs = int(num(s, "outputs", cfg.sim_outputs, "simulate"));
        cfg.sim_method = str(s, "method", cfg.sim_method, "simulate");
        if (s.contains("dump_paths")) cfg.dump_paths = s["dump_paths"].get<bool>();
        if (cfg.sim_method != "exp_euler" && cfg.sim_method != "picard")
            errors.push_back("simulate.method: expected 'exp_euler' or 'picard'");
    }
    if (root.contains("semigroup") && root["semigroup"].contains("times")) {
        try {
            cfg.semigroup_times = root["semigroup"]["times"].get<std::vector<double>>();
        } catch (const std::exception&) {
            errors.push_back("semigroup.times: expected an array of numbers");
        }
    }
    if (root.contains("resolvent")) {
        cfg.resolvent_modes = int(num(root["resolvent"], "modes", cfg.resolvent_modes, "resolvent"));
        if (root["resolvent"].contains("lambdas")) {
            try {
                cfg.resolvent_lambdas =
                    root["resolvent"]["lambdas"].get<std::vector<double>>();
            } catch (const std::exception&) {
                errors.push_back("resolvent.lambdas: expected an array of numbers");
            }
        }
    }
    if (root.contains("covariance"))
        cfg.covariance_t = num(root["covariance"], "t", cfg.covariance_t, "covariance");
    if (root.contains("control")) {
        const auto& c = root["control"];
        cfg.benchmark = str(c, "benchmark", cfg.benchmark, "control");
        if (c.contains("lq")) {
            const auto& l = c["lq"];
            cfg.lq_a = num(l, "a", cfg.lq_a, "control.lq");
            cfg.lq_b = num(l, "b", cfg.lq_b, "control.lq");
            cfg.lq_q = num(l, "q", cfg.lq_q, "control.lq");
            cfg.lq_pT = num(l, "p_T", cfg.lq_pT, "control.lq");
            cfg.lq_T = num(l, "T", cfg.lq_T, "control.lq");
            cfg.lq_x0 = num(l, "x0", cfg.lq_x0, "control.lq");
        }
        if (c.contains("U")) {
            try {
                auto u = c["U"].get<std::vector<double>>();
                if (u.size() != 2 || !(u[0] < u[1]))
                    errors.push_back("control.U: expected [min, max] with min < max");
                else {
                    cfg.u_min = u[0];
                    cfg.u_max = u[1];
                }
            } catch (const std::exception&) {
                errors.push_back("control.U: expected [min, max]");
            }
        }
        cfg.control_truncation = int(num(c, "truncation", cfg.control_truncation, "control"));
        cfg.control_degree = int(num(c, "degree", cfg.control_degree, "control"));
        cfg.control_steps = int(num(c, "steps", cfg.control_steps, "control"));
        cfg.control_paths = int(num(c, "n_paths", cfg.control_paths, "control"));
        cfg.m_controls = int(num(c, "m_controls", cfg.m_controls, "control"));
        if (cfg.control_truncation < 1 || cfg.control_truncation > 4)
            errors.push_back("control.truncation: desk scale is 1..4");
        if (cfg.control_degree < 1 || cfg.control_degree > 3)
            errors.push_back("control.degree: desk scale is 1..3");
    }
    if (root.contains("out")) cfg.out_dir = root["out"].get<std::string>();

    finalize_config(cfg, errors);
    return errors.empty();
}

namespace {

void write_manifest(const ExperimentConfig& cfg, const std::string& command) {
    json m;
    m["version"] = kVersion;
    m["command"] = command;
    m["config"] = json::parse(cfg.raw_json);
    write_text(cfg.out_dir / "manifest.json", m.dump(2) + "\n");
}

evolution::HistoryState make_initial_state(const ExperimentConfig& cfg) {
    std::vector<double> v(cfg.basis.N);
    for (int j = 0; j < cfg.basis.N; ++j)
        v[j] = cfg.initial_amplitude * std::pow(double(j + 1), -cfg.initial_decay);
    auto grid = evolution::HistoryGrid::standard(cfg.kernel);
    if (cfg.history_type == "zero")
        return evolution::HistoryState::zero_history(std::move(v), std::move(grid));
    return evolution::HistoryState::exponential_history(std::move(v), cfg.history_rate,
                                                        std::move(grid));
}

std::vector<resolvent::ScalarResolvent> solve_resolvents(const ExperimentConfig& cfg,
                                                         int n_modes,
                                                         double min_horizon) {
    std::vector<resolvent::ScalarResolvent> res(n_modes);
    const auto mu = cfg.basis.mu;
#pragma omp parallel for schedule(dynamic, 1)
    for (int j = 0; j < n_modes; ++j) {
        if (cfg.grid_horizon > 0) {
            res[j] = resolvent::solve_scalar_resolvent(
                mu[j], cfg.kernel,
                resolvent::TimeGrid::uniform(cfg.grid_horizon, cfg.grid_nodes), j + 1);
        } else {
            res[j] = resolvent::solve_mode(mu[j], cfg.kernel, cfg.grid_nodes, j + 1);
        }
        while (res[j].grid.T() < min_horizon) {
            const auto extended = res[j].grid.extended_to(
                std::max(min_horizon, 1.5 * res[j].grid.T()),
                std::max<std::size_t>(cfg.grid_nodes / 2, 64));
            res[j] = resolvent::solve_scalar_resolvent(mu[j], cfg.kernel, extended, j + 1);
        }
    }
    return res;
}

int cmd_validate_kernel(const ExperimentConfig& cfg) {
    std::vector<double> grid(240);
    for (std::size_t i = 0; i < grid.size(); ++i)
        grid[i] = 1e-3 * std::pow(20.0 / 1e-3, double(i) / double(grid.size() - 1));
    const auto rep = kernels::validate_kernel(cfg.kernel, grid);
    write_text(cfg.out_dir / "validation.json", rep.to_json() + "\n");

    const auto sect = kernels::sectoriality(cfg.kernel);
    json sj = {{"theta", sect.theta},
               {"delta", sect.delta},
               {"attained_at", sect.attained_at},
               {"at_grid_boundary", sect.at_grid_boundary},
               {"degenerate", sect.degenerate}};
    write_text(cfg.out_dir / "sectoriality.json", sj.dump(2) + "\n");

    double theta_h = 0.05;
    try {
        theta_h = spectral::default_theta(sect.delta);
    } catch (const std::exception&) {
    }
    if (1.0 + theta_h > sect.delta) {
        const auto trace = spectral::trace_condition(cfg.basis, theta_h, sect.delta);
        write_text(cfg.out_dir / "trace.json", trace.to_json() + "\n");
        std::ostringstream csv;
        csv << "j,term,partial_sum\n";
        for (std::size_t j = 0; j < trace.terms.size(); ++j)
            csv << (j + 1) << "," << format_double(trace.terms[j]) << ","
                << format_double(trace.partial_sums[j]) << "\n";
        write_text(cfg.out_dir / "trace.csv", csv.str());
    }
    write_manifest(cfg, "validate-kernel");
    std::cout << "kernel " << kernels::to_string(cfg.kernel.family())
              << ": h1=" << (rep.h1.pass ? "pass" : "FAIL")
              << " h2=" << (rep.h2.pass ? "pass" : "FAIL")
              << " h3=" << (rep.h3.pass ? "pass" : "FAIL") << " theta=" << sect.theta
              << " delta=" << sect.delta << "\n";
    return rep.pass() ? 0 : 1;
}

int cmd_resolvent(const ExperimentConfig& cfg) {
    const int M = cfg.resolvent_modes;
    ExperimentConfig local = cfg;
    if (cfg.basis.N < M)
        local.basis = spectral::SpectralBasis::make(cfg.basis.domain, M, cfg.basis.noise.q,
                                                    cfg.basis.noise.scale);
    const auto res = solve_resolvents(local, M, 1.0);

    json est = json::array();
    std::vector<double> mus, intabs;
    for (int j = 0; j < M; ++j) {
        std::ostringstream csv;
        csv << "t,s,s_prime\n";
        const auto t = res[j].grid.nodes();
        for (std::size_t i = 0; i < t.size(); ++i)
            csv << format_double(t[i]) << "," << format_double(res[j].s[i]) << ","
                << format_double(res[j].s_prime[i]) << "\n";
        write_text(cfg.out_dir / ("resolvent_mode_" + std::to_string(j + 1) + ".csv"),
                   csv.str());

        const auto suite = resolvent::estimate_suite(res[j]);
        json row = {{"j", j + 1},
                    {"mu", res[j].mu},
                    {"sup_s", suite.sup_s},
                    {"int_abs_sprime", suite.int_abs_sprime},
                    {"int_t_sprime", suite.int_t_sprime},
                    {"int_abs_s", suite.int_abs_s},
                    {"truncated", suite.truncated},
                    {"double_square_T1", resolvent::double_square_integral(res[j], 1.0)}};
        json lap = json::object();
        for (double lam : cfg.resolvent_lambdas)
            lap[format_double(lam)] =
                resolvent::laplace_identity_residual(res[j], cfg.kernel, lam);
        row["laplace_residual"] = lap;
        est.push_back(row);
        mus.push_back(res[j].mu);
        intabs.push_back(suite.int_abs_s);
    }
    json out = {{"modes", est}};
    if (M >= 3) {
        const auto fit = quad::fit_loglog(mus, intabs);
        out["int_abs_s_loglog_slope"] = fit.slope;
    }
    write_text(cfg.out_dir / "estimates.json", out.dump(2) + "\n");
    write_manifest(cfg, "resolvent");
    std::cout << "resolvent: " << M << " modes solved\n";
    return 0;
}

int cmd_semigroup(const ExperimentConfig& cfg) {
    double t_max = 0.0;
    for (double t : cfg.semigroup_times) t_max = std::max(t_max, t);
    const auto res = solve_resolvents(cfg, cfg.basis.N, t_max * 1.01 + 1e-9);
    const auto state0 = make_initial_state(cfg);

    for (std::size_t k = 0; k < cfg.semigroup_times.size(); ++k) {
        const auto st = evolution::semigroup_apply(cfg.semigroup_times[k], state0, res,
                                                   cfg.kernel, cfg.basis);
        std::ostringstream csv;
        csv << "mode,v";
        for (std::size_t i = 0; i < st.grid.size(); ++i)
            csv << ",eta_" << format_double(st.grid.s[i]);
        csv << "\n";
        for (std::size_t j = 0; j < st.modes(); ++j) {
            csv << (j + 1) << "," << format_double(st.v[j]);
            for (double e : st.eta[j]) csv << "," << format_double(e);
            csv << "\n";
        }
        write_text(cfg.out_dir / ("semigroup_snapshot_" + std::to_string(k) + ".csv"),
                   csv.str());
    }

    if (cfg.history_type == "exponential") {
        const auto check =
            evolution::quasi_dissipativity_form(state0, cfg.kernel, cfg.basis, 0.5);
        json dj = {{"form_value", check.form_value},
                   {"lambda0", check.lambda0},
                   {"bound", check.bound},
                   {"norm_sq", check.norm_sq},
                   {"satisfied", check.satisfied}};
        write_text(cfg.out_dir / "dissipativity.json", dj.dump(2) + "\n");
    }
    write_manifest(cfg, "semigroup");
    std::cout << "semigroup: " << cfg.semigroup_times.size() << " snapshots\n";
    return 0;
}

int cmd_simulate(const ExperimentConfig& cfg) {
    stochastic::NoiseSpec spec{cfg.basis, cfg.seed, cfg.n_paths, cfg.dt};
    const std::size_t steps = std::size_t(std::llround(cfg.sim_horizon / cfg.dt));
    if (steps == 0) {
        std::cerr << "simulate: horizon shorter than dt\n";
        return 2;
    }
    const double T = double(steps) * cfg.dt;
    const auto res = solve_resolvents(cfg, cfg.basis.N, T * 1.01 + 1e-9);
    const auto state0 = make_initial_state(cfg);

    stochastic::SimulateOptions opt;
    opt.method = cfg.sim_method == "picard" ? stochastic::Method::Picard
                                            : stochastic::Method::ExpEuler;
    opt.T = T;
    const int n_out = std::max(1, cfg.sim_outputs);
    for (int k = 1; k <= n_out; ++k) {
        const std::size_t step = std::max<std::size_t>(1, steps * k / n_out);
        const double t = double(step) * cfg.dt;
        if (opt.output_times.empty() || opt.output_times.back() < t)
            opt.output_times.push_back(t);
    }
    const auto run =
        stochastic::simulate_mild_solution(state0, cfg.f, spec, cfg.kernel, res, opt);

    std::ostringstream csv;
    csv << "time,mode,mean,variance\n";
    for (std::size_t k = 0; k < run.ensemble.times.size(); ++k)
        for (int j = 0; j < run.ensemble.n_modes; ++j)
            csv << format_double(run.ensemble.times[k]) << "," << (j + 1) << ","
                << format_double(run.ensemble.mean(int(k), j)) << ","
                << format_double(run.ensemble.variance(int(k), j)) << "\n";
    write_text(cfg.out_dir / "ensemble_stats.csv", csv.str());

    if (cfg.dump_paths) {
        json hdr = {{"shape", {cfg.n_paths, run.ensemble.times.size(), cfg.basis.N}},
                    {"order", "path,time,mode"},
                    {"dtype", "float64"},
                    {"seed", cfg.seed},
                    {"dt", cfg.dt}};
        write_text(cfg.out_dir / "paths_header.json", hdr.dump(2) + "\n");
        std::ofstream bin(cfg.out_dir / "paths.bin", std::ios::binary);
        bin.write(reinterpret_cast<const char*>(run.ensemble.values.data()),
                  std::streamsize(run.ensemble.values.size() * sizeof(double)));
    }
    if (opt.method == stochastic::Method::Picard) {
        const auto diag = stochastic::picard_diagnostics(run);
        json pj = {{"rate_estimate", diag.rate_estimate},
                   {"window_gaps", diag.iterate_gaps},
                   {"window_length", run.window_length}};
        write_text(cfg.out_dir / "picard.json", pj.dump(2) + "\n");
    }
    write_manifest(cfg, "simulate");
    std::cout << "simulate: " << cfg.n_paths << " paths, " << steps << " steps\n";
    return 0;
}

int cmd_covariance(const ExperimentConfig& cfg) {
    const double t = cfg.covariance_t;
    const auto res = solve_resolvents(cfg, cfg.basis.N, t * 1.01 + 1e-9);
    const auto var = stochastic::analytic_convolution_covariance(res, cfg.basis, t);

    double trace = 0.0;
    for (double v : var) trace += v;
    const auto sect = kernels::sectoriality(cfg.kernel);
    json tj;
    try {
        const double theta_h = spectral::default_theta(sect.delta);
        const auto rep = spectral::trace_condition(cfg.basis, theta_h, sect.delta);
        tj = {{"verdict", spectral::to_string(rep.verdict)},
              {"theta", theta_h},
              {"delta", sect.delta}};
    } catch (const std::exception& e) {
        tj = {{"verdict", "undetermined"}, {"error", e.what()}};
    }

    std::ostringstream csv;
    csv << "j,lambda,variance\n";
    for (int j = 0; j < cfg.basis.N; ++j)
        csv << (j + 1) << "," << format_double(cfg.basis.lambda[j]) << ","
            << format_double(var[j]) << "\n";
    write_text(cfg.out_dir / "covariance.csv", csv.str());
    json cj = {{"t", t}, {"trace", trace}, {"trace_condition", tj}};
    write_text(cfg.out_dir / "covariance.json", cj.dump(2) + "\n");
    write_manifest(cfg, "covariance");
    std::cout << "covariance: trace(Q_t) = " << trace << " at t = " << t << "\n";
    return 0;
}

control::ControlProblem lq_problem(const ExperimentConfig& cfg) {
    control::PointwiseMaps maps;
    const double q = cfg.lq_q, pT = cfg.lq_pT;
    maps.structured = true;
    maps.r0 = [](double, double) { return 0.0; };
    maps.r1 = [](double, double) { return 1.0; };
    maps.ell0 = [q](double, double v) { return q * v * v; };
    maps.ell1 = [](double, double) { return 0.0; };
    maps.ell2 = [](double, double) { return 1.0; };
    maps.phi = [pT](double v) { return pT * v * v; };
    maps.phi_prime = [pT](double v) { return 2 * pT * v; };
    maps.r_bound = std::max(std::fabs(cfg.u_min), std::fabs(cfg.u_max));
    return control::ControlProblem::scalar(std::move(maps), cfg.u_min, cfg.u_max,
                                           cfg.lq_T);
}

int cmd_control(const ExperimentConfig& cfg) {
    if (cfg.benchmark != "lq") {
        std::cerr << "control: unknown benchmark '" << cfg.benchmark
                  << "' (supported: lq)\n";
        return 2;
    }
    const auto problem = lq_problem(cfg);
    const control::ScalarLinearSde model(cfg.lq_a, cfg.lq_b, cfg.lq_x0);
    const auto riccati =
        control::lq_riccati_oracle(cfg.lq_a, cfg.lq_b, cfg.lq_q, cfg.lq_pT, cfg.lq_T);
    const double optimal = riccati.optimal_cost(cfg.lq_x0);

    control::FbsdeOptions fopt;
    fopt.n_paths = cfg.control_paths;
    fopt.steps = cfg.control_steps;
    fopt.seed = cfg.seed;
    fopt.feature_degree = cfg.control_degree;
    const auto fb = control::fbsde_solve(problem, model, fopt);

    control::GammaEval feedback = [&fb](int step, std::span<const double> X) {
        return fb.policy.gamma(step, X);
    };
    const auto rollout = control::cost_functional(problem, model, feedback,
                                                  cfg.control_paths, cfg.control_steps,
                                                  cfg.seed + 1);
    const auto lb = control::verify_value_lower_bound(problem, model, fb.Y0,
                                                      cfg.m_controls, cfg.control_paths,
                                                      cfg.control_steps, cfg.seed + 2);

    std::ostringstream csv;
    csv << "control,J,std_error,violation\n";
    for (std::size_t c = 0; c < lb.entries.size(); ++c)
        csv << c << "," << format_double(lb.entries[c].J) << ","
            << format_double(lb.entries[c].std_error) << ","
            << (lb.entries[c].violation ? 1 : 0) << "\n";
    write_text(cfg.out_dir / "lower_bound.csv", csv.str());

    const double tmid = 0.5 * cfg.lq_T;
    json cj = {{"Y0", fb.Y0},
               {"riccati_value", optimal},
               {"Y0_relative_error", std::fabs(fb.Y0 - optimal) / std::fabs(optimal)},
               {"rollout_J", rollout.J},
               {"rollout_std_error", rollout.std_error},
               {"rollout_relative_error",
                std::fabs(rollout.J - optimal) / std::fabs(optimal)},
               {"riccati_P0", riccati.P0},
               {"riccati_gain_mid", riccati.gain(tmid)},
               {"sweeps", fb.sweeps},
               {"lower_bound_violations", lb.violations},
               {"rank_deficient_steps", fb.diagnostics.size()}};
    write_text(cfg.out_dir / "control.json", cj.dump(2) + "\n");
    write_manifest(cfg, "control");
    std::cout << "control lq: Y0 = " << fb.Y0 << " riccati = " << optimal
              << " rollout = " << rollout.J << " violations = " << lb.violations << "\n";
    return lb.violations == 0 ? 0 : 1;
}

} // namespace

int emit_report(const fs::path& out_dir) {
    json summary;
    std::vector<std::string> missing;
    auto load_json = [&](const char* file, const char* family) {
        const fs::path p = out_dir / file;
        if (!fs::exists(p)) {
            summary[family] = nullptr;
            missing.push_back(file);
            return;
        }
        try {
            summary[family] = json::parse(read_text(p));
        } catch (const std::exception& e) {
            summary[family] = {{"error", e.what()}};
        }
    };
    load_json("validation.json", "kernel_validation");
    load_json("sectoriality.json", "sectoriality");
    load_json("trace.json", "trace_condition");
    load_json("estimates.json", "resolvent_estimates");
    load_json("covariance.json", "covariance");
    load_json("control.json", "control");
    // simulation family: ensemble stats + optional picard diagnostics
    json sim;
    const fs::path stats = out_dir / "ensemble_stats.csv";
    if (fs::exists(stats)) {
        const auto text = read_text(stats);
        sim["ensemble_stats_rows"] = std::count(text.begin(), text.end(), '\n') - 1;
    } else {
        missing.push_back("ensemble_stats.csv");
    }
    const fs::path pic = out_dir / "picard.json";
    if (fs::exists(pic)) {
        try {
            sim["picard"] = json::parse(read_text(pic));
        } catch (const std::exception&) {
        }
    }
    const fs::path diss = out_dir / "dissipativity.json";
    if (fs::exists(diss)) {
        try {
            sim["dissipativity"] = json::parse(read_text(diss));
        } catch (const std::exception&) {
        }
    }
    summary["simulation"] = sim.empty() ? json(nullptr) : sim;
    summary["missing"] = missing;
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    std::cout << "report: " << (7 - missing.size()) << "/7 families present\n";
    return 0;
}

int run_command(int argc, const char* const* argv) {
    CLI::App app{"spectral-Galerkin simulator for stochastic heat equations with memory"};
    app.require_subcommand(1);

    std::string config_path, out_override;
    std::int64_t seed_override = -1;
    int workers = 0, modes_override = 0, paths_override = 0;
    double dt_override = 0.0;
    std::string benchmark_override;

    app.add_option("--config", config_path, "configuration JSON (or a manifest)");
    app.add_option("--out", out_override, "output directory");
    app.add_option("--seed", seed_override, "RNG seed");
    app.add_option("--workers", workers, "worker threads (outputs are identical)");
    app.add_option("--modes", modes_override, "number of modes");
    app.add_option("--paths", paths_override, "Monte Carlo paths");
    app.add_option("--dt", dt_override, "time step");
    app.add_option("--benchmark", benchmark_override, "control benchmark name");

    auto* c_validate = app.add_subcommand("validate-kernel", "check h1-h3 and sectoriality");
    auto* c_resolvent = app.add_subcommand("resolvent", "solve scalar resolvents");
    auto* c_semigroup = app.add_subcommand("semigroup", "evolve a state, emit snapshots");
    auto* c_simulate = app.add_subcommand("simulate", "sample mild solutions");
    auto* c_covariance = app.add_subcommand("covariance", "stochastic convolution covariance");
    auto* c_control = app.add_subcommand("control", "optimal-control synthesis");
    auto* c_report = app.add_subcommand("report", "aggregate run artifacts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

#ifdef _OPENMP
    if (workers > 0) omp_set_num_threads(workers);
#endif

    ExperimentConfig cfg;
    std::vector<std::string> errors;
    std::string text = "{}";
    if (!config_path.empty()) {
        try {
            text = read_text(config_path);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
    }
    parse_config(text, cfg, errors);
    if (!errors.empty()) {
        std::cerr << "config errors:\n";
        for (const auto& e : errors) std::cerr << "  - " << e << "\n";
        return 2;
    }
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (seed_override >= 0) cfg.seed = std::uint64_t(seed_override);
    if (modes_override > 0) {
        cfg.resolvent_modes = modes_override;
        cfg.basis = spectral::SpectralBasis::make(cfg.basis.domain, modes_override,
                                                  cfg.basis.noise.q, cfg.basis.noise.scale);
    }
    if (paths_override > 0) {
        cfg.n_paths = paths_override;
        cfg.control_paths = paths_override;
    }
    if (dt_override > 0) cfg.dt = dt_override;
    if (!benchmark_override.empty()) cfg.benchmark = benchmark_override;
    cfg.raw_json = config_to_json(cfg).dump(2);

    try {
        if (c_validate->parsed()) return cmd_validate_kernel(cfg);
        if (c_resolvent->parsed()) return cmd_resolvent(cfg);
        if (c_semigroup->parsed()) return cmd_semigroup(cfg);
        if (c_simulate->parsed()) return cmd_simulate(cfg);
        if (c_covariance->parsed()) return cmd_covariance(cfg);
        if (c_control->parsed()) return cmd_control(cfg);
        if (c_report->parsed()) return emit_report(cfg.out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace memheat::harness
