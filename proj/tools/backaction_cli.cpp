// Command-line scenario runner.
//
// Exit codes: 0 all checks passed, 1 a check failed, 2 execution or config error.

#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "backaction/config.hpp"
#include "backaction/scenarios.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitError = 2;

const char* kOutputHelp = R"(Outputs (written to the output directory):
  summary.json                 config echo, results, built-in checks, overall pass flag
  run.log                      human-readable log (deterministic)
  linewidth_narrowing:
    linewidth.csv              cooperativity,expected_fwhm_hz,eigen_fwhm_hz,fit_fwhm_hz,fit_center_hz,parseval_error,error
    spectra/linewidth_C*.csv   freq_hz,psd_per_hz
  masing_threshold:
    masing.csv                 cooperativity,peak_power_photons_per_s,peak_frequency_hz,stationary_tone,limit_cycle_amplitude,parseval_error,error
    spectra/masing_C*.csv      freq_hz,psd_per_hz
  injection_power_sweep / injection_frequency_sweep / arnold_tongue:
    <name>.csv                 p_inj,detuning,locked,beat_or_phase
                               (W at the source, Hz from the free-running tone, 0/1,
                                beat omega_out - omega_inj in Hz when unlocked or output phase in rad when locked)
    <name>_diagnostics.csv     power_dbc,detuning_hz,locked,phase_excursion,drift_rate_hz,phase_variance,analytic_range_hz,error
    <name>_boundary.csv        p_inj,power_dbc,lower_hz,upper_hz,half_width_hz,analytic_half_width_hz,bracketed
                               (frequency sweep and tongue; <name> is power_sweep, frequency_sweep or tongue)
  single_run:
    trajectory.csv             t,re_a,im_a,re_b,im_b (pump frame; or trajectory.bin: float64 rows, same columns)
    spectrum.csv               freq_hz,psd_per_hz
Spectrum frequencies are envelope frequencies in the simulation frame: a component
exp(i 2 pi f t) of the output envelope appears at f.)";

void print_errors(const backaction::ConfigError& e) {
    std::cerr << "invalid config:\n";
    for (const auto& msg : e.errors()) std::cerr << "  " << msg << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamical-backaction maser simulator: scenario runner"};
    app.footer(kOutputHelp);
    app.require_subcommand(1);

    std::string config_path;
    std::string output_dir;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    auto* run = app.add_subcommand("run", "run the scenario named in a config file");
    run->add_option("config", config_path, "config file")->required();
    auto* out_opt = run->add_option("--output-dir", output_dir, "output directory (overrides output_dir)");
    auto* seed_opt = run->add_option("--seed", seed, "master seed (overrides sim.seed)");
    run->add_option("--jobs", jobs, "worker threads for independent grid points (0: all cores)")
        ->default_val(1);

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "check a config file and print the resolved settings");
    validate->add_option("config", validate_path, "config file")->required();

    auto* list = app.add_subcommand("list-scenarios", "list scenario names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitPass : kExitError;
    }

    try {
        if (*list) {
            for (const auto& s : backaction::kScenarios) std::cout << s.name << "  " << s.description << '\n';
            return kExitPass;
        }
        if (*validate) {
            const auto cfg = backaction::load_config(validate_path);
            std::cout << backaction::detail::config_json(cfg).dump(2) << '\n';
            return kExitPass;
        }
        auto cfg = backaction::load_config(config_path);
        if (*out_opt) cfg.output_dir = output_dir;
        if (*seed_opt) cfg.sim.seed = seed;
        cfg.jobs = jobs;
        const auto result = backaction::run_scenario(cfg, &std::cout);
        return result.passed() ? kExitPass : kExitCheckFailed;
    } catch (const backaction::ConfigError& e) {
        print_errors(e);
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
}
