#pragma once

// Scenario configuration: flat `key = value` text. A `[section]` header
// prefixes the keys below it, so `[system]` + `kappa_0 = 1e5` is the same as
// `system.kappa_0 = 1e5`. Frequencies and rates are given in Hz and stored in
// rad/s. Lists are comma separated. `#` and `;` start comments. Unknown keys
// are errors, and every problem in a file is reported at once.

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "backaction/system_params.hpp"
#include "backaction/units.hpp"

namespace backaction {

enum class Scenario {
    linewidth_narrowing,
    masing_threshold,
    injection_power_sweep,
    injection_frequency_sweep,
    arnold_tongue,
    single_run,
};

struct ScenarioInfo {
    Scenario scenario;
    const char* name;
    const char* description;
};

inline constexpr ScenarioInfo kScenarios[] = {
    {Scenario::linewidth_narrowing, "linewidth_narrowing",
     "emitted linewidth of the linear model against cooperativity below threshold; extrapolated threshold"},
    {Scenario::masing_threshold, "masing_threshold",
     "emission peak power of the nonlinear model below and above threshold; limit cycle above it"},
    {Scenario::injection_power_sweep, "injection_power_sweep",
     "lock state against injected power at one detuning; lock threshold power"},
    {Scenario::injection_frequency_sweep, "injection_frequency_sweep",
     "lock state and beat frequency against detuning at one injected power; locking band"},
    {Scenario::arnold_tongue, "arnold_tongue",
     "lock map over injected power and detuning; boundary half-width against power on log axes"},
    {Scenario::single_run, "single_run",
     "one nonlinear trajectory with optional injected tone; trajectory, spectrum and limit-cycle summary"},
};

inline const char* to_string(Scenario s) {
    for (const auto& info : kScenarios) {
        if (info.scenario == s) return info.name;
    }
    return "unknown";
}

inline std::optional<Scenario> parse_scenario(std::string_view name) {
    for (const auto& info : kScenarios) {
        if (name == info.name) return info.scenario;
    }
    return std::nullopt;
}

enum class TrajectoryFormat { csv, binary, none };

struct SweepConfig {
    std::vector<double> cooperativities;
    std::vector<double> power_dbc;  // P_inj / P_mas in dB
    std::vector<double> detunings;  // omega_inj - omega_mas, rad/s
    std::size_t averages = 200;
};

struct SimConfig {
    double duration = 0.0;  // s; 0 selects 3000 / kappa
    double dt = 0.0;        // s; 0 selects the stability bound
    std::uint64_t seed = 1;  // fixed default; runs never draw entropy
    std::size_t record_stride = 4;
};

struct LockConfig {
    double alpha = 1.0;
    int refine_steps = 4;
    double adler_times = 60.0;
    double min_duration = 0.0;  // s; 0 selects 1000 / kappa
    double max_excursion = 3.141592653589793;
    double max_drift_fraction = 0.01;
};

struct InjectionConfig {
    std::optional<double> power_dbc;  // none: no injected tone
    double detuning = 0.0;            // omega_inj - omega_mas, rad/s
};

struct OutputConfig {
    TrajectoryFormat trajectory = TrajectoryFormat::csv;
    std::size_t trajectory_stride = 10;
};

struct ScenarioConfig {
    Scenario scenario = Scenario::single_run;
    SystemParams system = default_device();
    double cooperativity = 0.0;  // resolved pump setting
    std::optional<double> pump_power_dbm;
    SweepConfig sweep;
    SimConfig sim;
    LockConfig lock;
    InjectionConfig injection;
    OutputConfig output;
    std::string output_dir = "output";
    unsigned jobs = 1;
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> errors)
        : std::runtime_error(join(errors)), errors_(std::move(errors)) {}
    const std::vector<std::string>& errors() const { return errors_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s;
        for (const auto& e : v) s += (s.empty() ? "" : "\n") + e;
        return s;
    }
    std::vector<std::string> errors_;
};

struct ConfigKey {
    const char* key;
    const char* help;
};

inline constexpr ConfigKey kConfigKeys[] = {
    {"scenario", "one of the scenario names (default single_run)"},
    {"output_dir", "directory for CSV, JSON and log outputs (default output)"},
    {"system.omega_c", "cavity resonance, Hz"},
    {"system.kappa_0", "intrinsic cavity decay, Hz"},
    {"system.kappa_ex", "external coupling, Hz"},
    {"system.omega_m", "mechanical resonance, Hz"},
    {"system.gamma_m", "mechanical decay including auxiliary damping, Hz"},
    {"system.g0", "vacuum coupling, Hz"},
    {"system.pump_detuning", "pump offset from the upper sideband, Hz"},
    {"system.noise_quanta_cavity", "cavity bath occupation"},
    {"system.noise_quanta_mech", "mechanical bath occupation"},
    {"system.allow_unresolved_sidebands", "accept omega_m/kappa < 10 (true/false)"},
    {"pump.cooperativity", "pump setting as cooperativity C = 4 g^2 / (kappa gamma_m)"},
    {"pump.power_dbm", "pump setting as power at the device input, dBm (excludes pump.cooperativity)"},
    {"sweep.cooperativities", "list of C values"},
    {"sweep.power_dbc", "list of injected powers relative to the free-running output, dB"},
    {"sweep.detunings", "list of injection detunings omega_inj - omega_mas, Hz"},
    {"sweep.averages", "Welch segments per linewidth spectrum"},
    {"sim.duration", "run length, s (0: 3000/kappa)"},
    {"sim.dt", "integration step, s (0: stability bound)"},
    {"sim.seed", "master seed (integer)"},
    {"sim.record_stride", "keep every n-th step of nonlinear runs"},
    {"lock.alpha", "fraction of the injected source power reaching the device"},
    {"lock.refine_steps", "bisection steps per locking edge"},
    {"lock.adler_times", "injected-run length in units of 2 / analytic locking range"},
    {"lock.min_duration", "minimum injected-run length, s (0: 1000/kappa)"},
    {"lock.max_excursion", "lock criterion: max phase excursion, rad"},
    {"lock.max_drift_fraction", "lock criterion: max drift as a fraction of the analytic range"},
    {"injection.power_dbc", "single_run: injected power relative to the free-running output, dB"},
    {"injection.detuning", "single_run: injection detuning omega_inj - omega_mas, Hz"},
    {"output.trajectory", "single_run trajectory dump: csv, binary or none"},
    {"output.trajectory_stride", "single_run: write every n-th recorded sample"},
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string unquote(std::string s) {
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

inline std::string strip_comment(const std::string& line) {
    char quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quote) {
            if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '#' || c == ';') {
            return line.substr(0, i);
        }
    }
    return line;
}

inline std::optional<double> to_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
    return v;
}

struct Entry {
    std::string value;
    int line = 0;
};

class Reader {
public:
    Reader(std::map<std::string, Entry> entries, std::vector<std::string>& errors)
        : entries_(std::move(entries)), errors_(errors) {}

    const Entry* find(const std::string& key) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? nullptr : &it->second;
    }

    std::string where(const std::string& key) const {
        const Entry* e = find(key);
        return key + (e ? " (line " + std::to_string(e->line) + ")" : "");
    }

    void error(const std::string& key, const std::string& what) { errors_.push_back(where(key) + ": " + what); }

    std::optional<double> number(const std::string& key) {
        const Entry* e = find(key);
        if (!e) return std::nullopt;
        const auto v = to_double(e->value);
        if (!v) error(key, "expected a number, got '" + e->value + "'");
        return v;
    }

    template <class T>
    void number(const std::string& key, T& out, double scale = 1.0) {
        if (auto v = number(key)) out = static_cast<T>(*v * scale);
    }

    template <class T>
    void count(const std::string& key, T& out, double min) {
        const auto v = number(key);
        if (!v) return;
        if (*v != std::floor(*v) || *v < min || *v > 9.0e15) {
            error(key, "expected an integer >= " + format(min));
            return;
        }
        out = static_cast<T>(*v);
    }

    void flag(const std::string& key, bool& out) {
        const Entry* e = find(key);
        if (!e) return;
        std::string v = e->value;
        std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
        if (v == "true" || v == "yes" || v == "1") {
            out = true;
        } else if (v == "false" || v == "no" || v == "0") {
            out = false;
        } else {
            error(key, "expected true or false, got '" + e->value + "'");
        }
    }

    std::optional<std::vector<double>> list(const std::string& key, double scale = 1.0) {
        const Entry* e = find(key);
        if (!e) return std::nullopt;
        std::vector<double> out;
        std::stringstream ss(e->value);
        std::string item;
        bool ok = true;
        while (std::getline(ss, item, ',')) {
            const auto v = to_double(trim(item));
            if (!v) {
                error(key, "list item '" + trim(item) + "' is not a number");
                ok = false;
                continue;
            }
            out.push_back(*v * scale);
        }
        if (ok && out.empty()) {
            error(key, "list must not be empty");
            ok = false;
        }
        return ok ? std::optional(out) : std::nullopt;
    }

    static std::string format(double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    }

private:
    std::map<std::string, Entry> entries_;
    std::vector<std::string>& errors_;
};

inline std::vector<double> symmetric_grid_hz(std::initializer_list<double> magnitudes_hz) {
    std::vector<double> out{0.0};
    for (double m : magnitudes_hz) {
        out.push_back(hz_to_rad(-m));
        out.push_back(hz_to_rad(m));
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Grids used when a scenario's sweep keys are absent, sized for the default device.
inline void apply_sweep_defaults(ScenarioConfig& c) {
    auto& s = c.sweep;
    switch (c.scenario) {
        case Scenario::linewidth_narrowing:
            if (s.cooperativities.empty()) s.cooperativities = {0.0, 0.2, 0.5, 0.8};
            break;
        case Scenario::masing_threshold:
            if (s.cooperativities.empty()) s.cooperativities = {0.8, 1.2};
            break;
        case Scenario::injection_power_sweep:
            if (s.power_dbc.empty()) {
                for (int i = 0; i <= 10; ++i) s.power_dbc.push_back(-45.0 + 2.5 * i);
            }
            if (s.detunings.empty()) s.detunings = {hz_to_rad(5e3)};
            break;
        case Scenario::injection_frequency_sweep:
            if (s.power_dbc.empty()) s.power_dbc = {-30.0};
            if (s.detunings.empty()) {
                for (int i = -20; i <= 20; ++i) s.detunings.push_back(hz_to_rad(1e3 * i));
            }
            break;
        case Scenario::arnold_tongue:
            if (s.power_dbc.empty()) s.power_dbc = {-40.0, -35.0, -30.0, -25.0, -20.0};
            if (s.detunings.empty()) s.detunings = symmetric_grid_hz({0.5e3, 1e3, 2e3, 4e3, 8e3, 16e3, 32e3, 64e3});
            break;
        case Scenario::single_run:
            break;
    }
}

}  // namespace detail

inline constexpr double kDefaultPumpCooperativity = 1.5;

inline ScenarioConfig parse_config(std::istream& in) {
    std::vector<std::string> errors;
    std::map<std::string, detail::Entry> entries;
    std::string section;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = detail::trim(detail::strip_comment(raw));
        if (line.empty()) continue;
        const std::string at = "line " + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') {
                errors.push_back(at + "unterminated section header");
                continue;
            }
            section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back(at + "expected key = value");
            continue;
        }
        std::string key = detail::trim(std::string_view(line).substr(0, eq));
        if (key.empty()) {
            errors.push_back(at + "missing key");
            continue;
        }
        if (!section.empty()) key = section + "." + key;
        const std::string value = detail::unquote(detail::trim(std::string_view(line).substr(eq + 1)));
        if (const auto it = entries.find(key); it != entries.end()) {
            errors.push_back(at + "duplicate key " + key + " (first set on line " + std::to_string(it->second.line) + ")");
            continue;
        }
        const bool known = std::any_of(std::begin(kConfigKeys), std::end(kConfigKeys),
                                       [&](const ConfigKey& k) { return key == k.key; });
        if (!known) {
            errors.push_back(at + "unknown key " + key);
            continue;
        }
        entries[key] = {value, line_no};
    }

    detail::Reader r(std::move(entries), errors);
    ScenarioConfig c;

    if (const auto* e = r.find("scenario")) {
        if (const auto s = parse_scenario(e->value)) {
            c.scenario = *s;
        } else {
            r.error("scenario", "unknown scenario '" + e->value + "'");
        }
    }
    if (const auto* e = r.find("output_dir")) {
        if (e->value.empty()) r.error("output_dir", "must not be empty");
        c.output_dir = e->value;
    }

    auto& p = c.system;
    r.number("system.omega_c", p.omega_c, kTwoPi);
    r.number("system.kappa_0", p.kappa_0, kTwoPi);
    r.number("system.kappa_ex", p.kappa_ex, kTwoPi);
    r.number("system.omega_m", p.omega_m, kTwoPi);
    r.number("system.gamma_m", p.gamma_m, kTwoPi);
    r.number("system.g0", p.g0, kTwoPi);
    r.number("system.pump_detuning", p.pump_detuning, kTwoPi);
    r.number("system.noise_quanta_cavity", p.noise_quanta_cavity);
    r.number("system.noise_quanta_mech", p.noise_quanta_mech);
    r.flag("system.allow_unresolved_sidebands", p.allow_unresolved_sidebands);

    // Parameter checks, reported against the config keys.
    const std::pair<const char*, double> rates[] = {
        {"omega_c", p.omega_c}, {"kappa_0", p.kappa_0}, {"kappa_ex", p.kappa_ex},
        {"omega_m", p.omega_m}, {"gamma_m", p.gamma_m}, {"g0", p.g0},
    };
    bool rates_ok = true;
    for (const auto& [name, value] : rates) {
        if (!(value > 0.0)) {
            r.error(std::string("system.") + name, "must be positive, got " + detail::Reader::format(rad_to_hz(value)) + " Hz");
            rates_ok = false;
        }
    }
    if (!(p.noise_quanta_cavity >= 0.0)) r.error("system.noise_quanta_cavity", "must be >= 0");
    if (!(p.noise_quanta_mech >= 0.0)) r.error("system.noise_quanta_mech", "must be >= 0");
    if (rates_ok) {
        if (!(p.omega_m / p.gamma_m > 1.0)) r.error("system.gamma_m", "mechanical quality factor omega_m/gamma_m must exceed 1");
        if (!p.allow_unresolved_sidebands && p.sideband_resolution() < kMinSidebandResolution) {
            r.error("system.omega_m",
                    "sideband resolution omega_m/kappa = " + detail::Reader::format(p.sideband_resolution()) +
                        " is below " + detail::Reader::format(kMinSidebandResolution) +
                        "; the rotating-frame model requires resolved sidebands "
                        "(set system.allow_unresolved_sidebands = true to proceed)");
        }
    }

    const auto coop = r.number("pump.cooperativity");
    c.pump_power_dbm = r.number("pump.power_dbm");
    if (coop && c.pump_power_dbm) {
        r.error("pump.power_dbm", "give either pump.cooperativity or pump.power_dbm, not both");
    }
    if (coop && !(*coop >= 0.0)) r.error("pump.cooperativity", "must be >= 0");
    if (rates_ok && errors.empty()) {
        if (c.pump_power_dbm) {
            p.g = pump_to_multiphoton_g(dbm_to_watts(*c.pump_power_dbm), p);
            c.cooperativity = 4.0 * p.g * p.g / (p.kappa() * p.gamma_m);
        } else {
            c.cooperativity = coop.value_or(kDefaultPumpCooperativity);
            p.g = coupling_for_cooperativity(p, c.cooperativity);
        }
    }

    if (auto v = r.list("sweep.cooperativities")) {
        c.sweep.cooperativities = *v;
        for (double x : *v) {
            if (!(x >= 0.0)) r.error("sweep.cooperativities", "values must be >= 0");
            if (c.scenario == Scenario::linewidth_narrowing && x >= 1.0) {
                r.error("sweep.cooperativities", "linewidth_narrowing needs C < 1 (below threshold)");
            }
        }
    }
    if (auto v = r.list("sweep.power_dbc")) c.sweep.power_dbc = *v;
    if (auto v = r.list("sweep.detunings", kTwoPi)) c.sweep.detunings = *v;
    r.count("sweep.averages", c.sweep.averages, 2);

    r.number("sim.duration", c.sim.duration);
    r.number("sim.dt", c.sim.dt);
    if (c.sim.duration < 0.0) r.error("sim.duration", "must be >= 0");
    if (c.sim.dt < 0.0) r.error("sim.dt", "must be >= 0");
    r.count("sim.seed", c.sim.seed, 0);
    r.count("sim.record_stride", c.sim.record_stride, 1);

    r.number("lock.alpha", c.lock.alpha);
    if (!(c.lock.alpha > 0.0 && c.lock.alpha <= 1.0)) r.error("lock.alpha", "must lie in (0, 1]");
    r.count("lock.refine_steps", c.lock.refine_steps, 0);
    r.number("lock.adler_times", c.lock.adler_times);
    if (!(c.lock.adler_times > 0.0)) r.error("lock.adler_times", "must be positive");
    r.number("lock.min_duration", c.lock.min_duration);
    if (c.lock.min_duration < 0.0) r.error("lock.min_duration", "must be >= 0");
    r.number("lock.max_excursion", c.lock.max_excursion);
    if (!(c.lock.max_excursion > 0.0)) r.error("lock.max_excursion", "must be positive");
    r.number("lock.max_drift_fraction", c.lock.max_drift_fraction);
    if (!(c.lock.max_drift_fraction > 0.0)) r.error("lock.max_drift_fraction", "must be positive");

    c.injection.power_dbc = r.number("injection.power_dbc");
    r.number("injection.detuning", c.injection.detuning, kTwoPi);

    if (const auto* e = r.find("output.trajectory")) {
        if (e->value == "csv") {
            c.output.trajectory = TrajectoryFormat::csv;
        } else if (e->value == "binary") {
            c.output.trajectory = TrajectoryFormat::binary;
        } else if (e->value == "none") {
            c.output.trajectory = TrajectoryFormat::none;
        } else {
            r.error("output.trajectory", "expected csv, binary or none, got '" + e->value + "'");
        }
    }
    r.count("output.trajectory_stride", c.output.trajectory_stride, 1);

    if (c.scenario == Scenario::injection_power_sweep && c.sweep.detunings.size() > 1) {
        r.error("sweep.detunings", "injection_power_sweep takes a single detuning");
    }
    if (c.scenario == Scenario::injection_frequency_sweep && c.sweep.power_dbc.size() > 1) {
        r.error("sweep.power_dbc", "injection_frequency_sweep takes a single injected power");
    }
    const bool injects = c.scenario == Scenario::injection_power_sweep ||
                         c.scenario == Scenario::injection_frequency_sweep || c.scenario == Scenario::arnold_tongue ||
                         (c.scenario == Scenario::single_run && c.injection.power_dbc);
    if (injects && errors.empty() && !(c.cooperativity > 1.0)) {
        r.error(r.find("pump.power_dbm") ? "pump.power_dbm" : "pump.cooperativity",
                "injection locking needs a pump above threshold (C > 1), got C = " +
                    detail::Reader::format(c.cooperativity));
    }

    if (!errors.empty()) throw ConfigError(std::move(errors));
    detail::apply_sweep_defaults(c);
    return c;
}

inline ScenarioConfig parse_config_string(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({path + ": cannot open config file"});
    return parse_config(in);
}

}  // namespace backaction
