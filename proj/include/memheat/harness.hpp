#pragma once

#include "memheat/control.hpp"
#include "memheat/evolution.hpp"
#include "memheat/kernels.hpp"
#include "memheat/resolvent.hpp"
#include "memheat/spectral.hpp"
#include "memheat/stochastic.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace memheat::harness {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 1 validation failure, 2 usage/config error.
int run_command(int argc, const char* const* argv);

// Aggregates the artifacts found in a run directory into summary.json.
// Missing artifacts are listed; a partial report is still produced.
int emit_report(const std::filesystem::path& out_dir);

std::string format_double(double v); // 17 significant digits

// Resolved experiment configuration (parsed and defaulted from JSON).
struct ExperimentConfig {
    std::string raw_json; // resolved config echoed into the manifest

    std::string kernel_type = "exponential";
    double kernel_k0 = 1.0, kernel_amplitude = 1.0, kernel_rate = 1.0,
           kernel_gamma = 0.5;
    std::vector<double> kernel_table_t, kernel_table_k1;
    kernels::MemoryKernel kernel = kernels::MemoryKernel::exponential(1.0, 1.0, 1.0);

    spectral::SpectralBasis basis;
    std::uint64_t seed = 1;
    int n_paths = 1000;
    double dt = 1e-3;
    std::size_t grid_nodes = 2000;
    double grid_horizon = 0.0; // 0: per-mode adaptive

    // nonlinearity
    std::string f_type = "zero";
    double f_amplitude = 1.0, f_frequency = 1.0, f_offset = 0.0, f_slope = 0.0;
    stochastic::NonlinearTerm f;

    // initial state
    double initial_amplitude = 1.0;
    double initial_decay = 2.0; // v_j = amplitude * j^{-decay}
    std::string history_type = "exponential";
    double history_rate = 1.0;

    // simulate
    double sim_horizon = 1.0;
    int sim_outputs = 8;
    std::string sim_method = "exp_euler";
    bool dump_paths = false;

    std::vector<double> semigroup_times{0.3, 0.8};
    int resolvent_modes = 8;
    std::vector<double> resolvent_lambdas{0.5, 1.0, 10.0};
    double covariance_t = 1.0;

    // control
    std::string benchmark = "lq";
    double lq_a = 0.0, lq_b = 1.0, lq_q = 1.0, lq_pT = 0.0, lq_T = 1.0, lq_x0 = 1.0;
    double u_min = -10.0, u_max = 10.0;
    int control_truncation = 1;
    int control_degree = 2;
    int control_steps = 50;
    int control_paths = 10000;
    int m_controls = 20;

    std::filesystem::path out_dir = "out";
};

// Parses a config JSON (or a manifest: the "config" object is unwrapped).
// Collects itemized diagnostics instead of stopping at the first problem.
bool parse_config(const std::string& json_text, ExperimentConfig& cfg,
                  std::vector<std::string>& errors);

} // namespace memheat::harness
