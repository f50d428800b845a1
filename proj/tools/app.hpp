#pragma once

#include <cstdint>
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "deconv/model.hpp"
#include "deconv/simulation.hpp"

namespace deconv::app {

enum ExitCode : int { kOk = 0, kInternal = 1, kValidation = 2, kIo = 3, kAssertion = 4 };

struct SweepSpec {
    std::string param;  // beta | r | L | mu | p | alpha | n
    std::size_t index = 0;
    double from = 0.0, to = 0.0;
    std::size_t steps = 2;
    bool operator==(const SweepSpec&) const = default;
};

struct RunConfig {
    std::size_t d = 1;
    double p = 2.0;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string output = ".";
    int verbosity = 0;

    NoiseLaw noise_law = NoiseLaw::none;
    double noise_scale = 1.0;
    double alpha = 0.0;

    int kernel_ell = 2;
    int kernel_m = 0;  // 0: smoothest base required by the noise
    double kernel_radius = 1.0;

    GridMode grid_mode = GridMode::isotropic;
    std::optional<int> grid_k_min, grid_k_max;  // both or neither

    // estimate
    std::string data;
    std::vector<double> eval_lo, eval_hi;  // empty: sample range
    std::size_t eval_count = 101;
    bool traces = false;

    // rates
    std::vector<double> beta, r, L;
    std::optional<double> rates_alpha;
    std::optional<std::vector<double>> rates_mu;
    std::size_t rates_n = 1000;
    std::optional<SweepSpec> sweep;

    // simulate
    DensitySpec density{"tensor_spline", {1}};
    std::vector<std::size_t> sample_sizes{1024, 2048};
    std::vector<std::size_t> replications;
    EvalWindow window;
    EstimatorKind estimator = EstimatorKind::adaptive;
    std::vector<int> fixed_exponents;
    double constant_value = 0.0;
    FitForm fit_form = FitForm::delta;

    bool operator==(const RunConfig&) const = default;

    // Unknown keys anywhere raise ValidationError.
    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::ordered_json to_json() const;

    NoiseSpec noise() const;
    KernelSpec kernel() const;
    std::optional<GridSpec> grid() const;
    RateInputs rate_inputs() const;
    ExperimentPlan plan() const;
};

RunConfig load_config(const std::string& path);

struct SimulateOptions {
    bool assert_rate = false;
    bool inject_constant = false;  // replace the estimator by a constant to exercise the failure path
};

// Each command writes into cfg.output and returns an exit code; errors are thrown.
int cmd_estimate(const RunConfig& cfg, std::ostream& out);
int cmd_rates(const RunConfig& cfg, bool sweep, std::ostream& out);
int cmd_simulate(const RunConfig& cfg, const SimulateOptions& opt, std::ostream& out);
int cmd_check(const RunConfig& cfg, std::ostream& out);

// Full command line; maps exceptions to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace deconv::app
