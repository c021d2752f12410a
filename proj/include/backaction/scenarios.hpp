#pragma once

// Named experiments driven by a ScenarioConfig. Each run writes CSV data, a
// JSON summary with built-in checks and a plain-text log into the output
// directory. All files are written from the calling thread after the
// parallel work has finished, so outputs are identical for any job count.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "backaction/arnold_tongue.hpp"
#include "backaction/backaction.hpp"
#include "backaction/config.hpp"
#include "backaction/linewidth.hpp"
#include "backaction/parallel.hpp"
#include "backaction/simulate.hpp"
#include "backaction/spectrum.hpp"

namespace backaction {

using Json = nlohmann::ordered_json;

inline constexpr double kMaxPointFailureFraction = 0.2;
inline constexpr double kMaxParsevalError = 0.01;
inline constexpr double kMinMasingJumpDb = 30.0;
inline constexpr double kThresholdTolerance = 0.05;
inline constexpr double kLinewidthTolerance = 0.05;
inline constexpr double kSlopeMin = 0.45;
inline constexpr double kSlopeMax = 0.55;
inline constexpr double kMinSlopeDecades = 1.5;
inline constexpr double kMaxTongueAsymmetry = 0.2;  // |edge center| / half-width

struct Check {
    std::string name;
    bool passed = false;
    double value = 0.0;
    std::string limit;
};

struct ScenarioResult {
    Json summary;
    std::vector<Check> checks;
    std::vector<std::string> files;
    std::size_t total_points = 0;
    std::size_t failed_points = 0;

    bool passed() const {
        for (const auto& c : checks) {
            if (!c.passed) return false;
        }
        return true;
    }
};

// Deterministic run log: lines are appended from the calling thread only and
// carry no wall-clock information.
class RunLog {
public:
    explicit RunLog(std::ostream* echo = nullptr) : echo_(echo) {}

    void line(const std::string& s) {
        text_ += s + "\n";
        if (echo_) *echo_ << s << std::endl;
    }
    const std::string& text() const { return text_; }

private:
    std::ostream* echo_;
    std::string text_;
};

namespace detail {

inline std::string fmt(double x) { return format_number(x); }

inline Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json optional_number(const std::optional<double>& x) { return x ? number_or_null(*x) : Json(nullptr); }

class OutputDir {
public:
    explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    void write(const std::string& name, const std::function<void(std::ostream&)>& body, ScenarioResult& result,
               bool binary = false) {
        const auto path = dir_ / name;
        std::filesystem::create_directories(path.parent_path());
        std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
        if (!os) throw std::runtime_error("cannot write " + path.string());
        body(os);
        if (!os) throw std::runtime_error("write failed: " + path.string());
        result.files.push_back(name);
    }

    const std::filesystem::path& path() const { return dir_; }

private:
    std::filesystem::path dir_;
};

inline void add_check(ScenarioResult& r, RunLog& log, std::string name, bool passed, double value, std::string limit) {
    log.line("check " + name + ": " + (passed ? "PASS" : "FAIL") + " (value " + fmt(value) + ", limit " + limit + ")");
    r.checks.push_back({std::move(name), passed, value, std::move(limit)});
}

inline void add_failure_check(ScenarioResult& r, RunLog& log) {
    const double frac =
        r.total_points ? static_cast<double>(r.failed_points) / static_cast<double>(r.total_points) : 0.0;
    add_check(r, log, "point_failure_fraction", frac <= kMaxPointFailureFraction, frac,
              "<= " + fmt(kMaxPointFailureFraction));
}

inline double default_duration(const ScenarioConfig& c) {
    return c.sim.duration > 0.0 ? c.sim.duration : 3000.0 / c.system.kappa();
}

inline std::string label(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", x);
    return buf;
}

// ---------------------------------------------------------------------------

inline void run_linewidth(const ScenarioConfig& c, OutputDir& out, ScenarioResult& r, RunLog& log) {
    LinewidthSettings s;
    s.seed = c.sim.seed;
    s.dt = c.sim.dt;
    s.averages = c.sweep.averages;
    s.keep_spectra = true;
    s.jobs = c.jobs;
    const double kappa = c.system.kappa();
    log.line("linewidth sweep over " + std::to_string(c.sweep.cooperativities.size()) + " cooperativities, kappa = " +
             fmt(rad_to_hz(kappa)) + " Hz, gamma_m/kappa = " + fmt(c.system.gamma_m / kappa));
    const LinewidthTable t = linewidth_vs_cooperativity(c.system, c.sweep.cooperativities, s);

    r.total_points = t.rows.size();
    double worst_rel = 0.0;
    double worst_parseval = 0.0;
    Json rows = Json::array();
    for (const auto& row : t.rows) {
        Json j;
        j["cooperativity"] = row.cooperativity;
        j["expected_fwhm_hz"] = rad_to_hz(row.expected_fwhm);
        j["eigen_fwhm_hz"] = rad_to_hz(row.eigen_fwhm);
        if (row.fit) {
            const double rel = std::abs(row.fit->fwhm - row.expected_fwhm) / row.expected_fwhm;
            worst_rel = std::max(worst_rel, rel);
            worst_parseval = std::max(worst_parseval, row.parseval_error);
            j["fit_fwhm_hz"] = rad_to_hz(row.fit->fwhm);
            j["fit_center_hz"] = rad_to_hz(row.fit->center);
            j["relative_error"] = rel;
            j["parseval_error"] = row.parseval_error;
            log.line("C = " + fmt(row.cooperativity) + ": fwhm " + fmt(rad_to_hz(row.fit->fwhm)) + " Hz, kappa(1-C) " +
                     fmt(rad_to_hz(row.expected_fwhm)) + " Hz, eigenvalue " + fmt(rad_to_hz(row.eigen_fwhm)) + " Hz");
        } else {
            ++r.failed_points;
            j["error"] = row.error;
            log.line("C = " + fmt(row.cooperativity) + ": failed: " + row.error);
        }
        rows.push_back(j);
    }

    out.write("linewidth.csv", [&](std::ostream& os) {
        os << "cooperativity,expected_fwhm_hz,eigen_fwhm_hz,fit_fwhm_hz,fit_center_hz,parseval_error,error\n";
        for (const auto& row : t.rows) {
            os << fmt(row.cooperativity) << ',' << fmt(rad_to_hz(row.expected_fwhm)) << ','
               << fmt(rad_to_hz(row.eigen_fwhm)) << ',' << (row.fit ? fmt(rad_to_hz(row.fit->fwhm)) : "") << ','
               << (row.fit ? fmt(rad_to_hz(row.fit->center)) : "") << ',' << fmt(row.parseval_error) << ','
               << '"' << row.error << '"' << '\n';
        }
    }, r);
    for (const auto& row : t.rows) {
        if (row.spectrum) {
            out.write("spectra/linewidth_C" + label(row.cooperativity) + ".csv",
                      [&](std::ostream& os) { write_spectrum_csv(os, *row.spectrum); }, r);
        }
    }

    const auto threshold = t.threshold_cooperativity();
    r.summary["rows"] = rows;
    r.summary["threshold_C"] = optional_number(threshold);
    r.summary["resolution_bandwidth_hz"] = rad_to_hz(t.resolution_bandwidth);
    r.summary["segment_length"] = t.segment_len;
    r.summary["dt_s"] = t.dt;
    add_check(r, log, "threshold_C", threshold && std::abs(*threshold - 1.0) <= kThresholdTolerance,
              threshold.value_or(NAN), "1 +- " + fmt(kThresholdTolerance));
    add_check(r, log, "fwhm_vs_kappa_1_minus_C", worst_rel <= kLinewidthTolerance, worst_rel,
              "<= " + fmt(kLinewidthTolerance));
    add_check(r, log, "parseval", worst_parseval <= kMaxParsevalError, worst_parseval, "<= " + fmt(kMaxParsevalError));
    add_failure_check(r, log);
}

// ---------------------------------------------------------------------------

struct EmissionRow {
    double cooperativity = 0.0;
    double peak_power = 0.0;  // photons/s
    double peak_frequency = 0.0;
    double parseval_error = 0.0;
    bool diverged = false;
    std::optional<LimitCycle> limit_cycle;
    std::string limit_cycle_note;
    std::optional<Spectrum> spectrum;
    std::string error;
};

// Emission of the nonlinear model in a band of +-3 kappa around the pump offset,
// which keeps the pump itself (at zero envelope frequency) out of the peak search.
inline EmissionRow emission_at(const SystemParams& base, double cooperativity, double duration, double dt,
                               std::size_t stride, std::uint64_t seed) {
    EmissionRow row;
    row.cooperativity = cooperativity;
    try {
        const SystemParams p = with_cooperativity(base, cooperativity);
        SimSettings sim;
        sim.duration = duration;
        sim.dt = dt > 0.0 ? dt : max_stable_dt(p, Frame::pump_rotating);
        sim.seed = seed;
        sim.record_stride = stride;
        const DriveSpec drive = noise_drive(p);
        const auto traj = simulate_nonlinear(p, drive, pump_amplitude_for_g(p.g, p), sim);
        row.diverged = traj.diverged();
        if (row.diverged) throw std::runtime_error("trajectory diverged");
        const auto out = output_field(traj, p, drive);
        const double kappa = p.kappa();
        auto spec = tail_spectrum(out, traj.dt(), kappa / 64.0);
        const FrequencyBand band{p.pump_offset() - 3.0 * kappa, p.pump_offset() + 3.0 * kappa};
        row.peak_power = emission_peak_power(spec, band);
        const auto lo = std::lower_bound(spec.freqs.begin(), spec.freqs.end(), band.lo) - spec.freqs.begin();
        const auto hi = std::upper_bound(spec.freqs.begin(), spec.freqs.end(), band.hi) - spec.freqs.begin();
        const auto peak = std::max_element(spec.psd.begin() + lo, spec.psd.begin() + hi) - spec.psd.begin();
        row.peak_frequency = spec.freqs[static_cast<std::size_t>(peak)];
        row.parseval_error = spec.parseval_error();
        row.spectrum = std::move(spec);
        try {
            row.limit_cycle = limit_cycle_summary(traj);
        } catch (const NoLimitCycle& e) {
            row.limit_cycle_note = e.what();
        }
    } catch (const std::exception& e) {
        row.error = e.what();
    }
    return row;
}

inline void run_masing(const ScenarioConfig& c, OutputDir& out, ScenarioResult& r, RunLog& log) {
    const auto& cs = c.sweep.cooperativities;
    const double duration = default_duration(c);
    log.line("masing sweep over " + std::to_string(cs.size()) + " cooperativities, duration " + fmt(duration) + " s");
    std::vector<EmissionRow> rows(cs.size());
    parallel_for(cs.size(), c.jobs, [&](std::size_t i) {
        rows[i] = emission_at(c.system, cs[i], duration, c.sim.dt, c.sim.record_stride, derive_seed(c.sim.seed, i));
    });
    r.total_points = rows.size();

    Json jrows = Json::array();
    double worst_parseval = 0.0;
    bool stationary_above = true;
    std::size_t above = 0;
    const EmissionRow* below_best = nullptr;  // largest C < 1
    const EmissionRow* above_best = nullptr;  // smallest C > 1
    for (const auto& row : rows) {
        Json j;
        j["cooperativity"] = row.cooperativity;
        if (!row.error.empty()) {
            ++r.failed_points;
            j["error"] = row.error;
            log.line("C = " + fmt(row.cooperativity) + ": failed: " + row.error);
            jrows.push_back(j);
            continue;
        }
        worst_parseval = std::max(worst_parseval, row.parseval_error);
        j["peak_power_photons_per_s"] = row.peak_power;
        j["peak_frequency_hz"] = rad_to_hz(row.peak_frequency);
        j["parseval_error"] = row.parseval_error;
        j["stationary_tone"] = row.limit_cycle.has_value();
        if (row.limit_cycle) {
            j["limit_cycle_amplitude"] = row.limit_cycle->amplitude;
            j["limit_cycle_frequency_hz"] = rad_to_hz(row.limit_cycle->frequency);
        }
        jrows.push_back(j);
        log.line("C = " + fmt(row.cooperativity) + ": peak " + fmt(row.peak_power) + " photons/s at " +
                 fmt(rad_to_hz(row.peak_frequency)) + " Hz" +
                 (row.limit_cycle ? ", limit cycle |a| = " + fmt(row.limit_cycle->amplitude) : ""));
        if (row.cooperativity > 1.0) {
            ++above;
            stationary_above = stationary_above && row.limit_cycle.has_value();
            if (!above_best || row.cooperativity < above_best->cooperativity) above_best = &row;
        } else if (row.cooperativity < 1.0) {
            if (!below_best || row.cooperativity > below_best->cooperativity) below_best = &row;
        }
    }

    out.write("masing.csv", [&](std::ostream& os) {
        os << "cooperativity,peak_power_photons_per_s,peak_frequency_hz,stationary_tone,limit_cycle_amplitude,"
              "parseval_error,error\n";
        for (const auto& row : rows) {
            os << fmt(row.cooperativity) << ',' << fmt(row.peak_power) << ',' << fmt(rad_to_hz(row.peak_frequency))
               << ',' << (row.limit_cycle ? 1 : 0) << ',' << (row.limit_cycle ? fmt(row.limit_cycle->amplitude) : "")
               << ',' << fmt(row.parseval_error) << ',' << '"' << row.error << '"' << '\n';
        }
    }, r);
    for (const auto& row : rows) {
        if (row.spectrum) {
            out.write("spectra/masing_C" + label(row.cooperativity) + ".csv",
                      [&](std::ostream& os) { write_spectrum_csv(os, *row.spectrum); }, r);
        }
    }

    r.summary["rows"] = jrows;
    double jump = NAN;
    if (below_best && above_best && below_best->peak_power > 0.0) {
        jump = power_ratio_db(above_best->peak_power, below_best->peak_power);
        r.summary["jump_from_C"] = below_best->cooperativity;
        r.summary["jump_to_C"] = above_best->cooperativity;
    }
    r.summary["emission_jump_db"] = number_or_null(jump);
    add_check(r, log, "emission_jump_db", std::isfinite(jump) && jump >= kMinMasingJumpDb, jump,
              ">= " + fmt(kMinMasingJumpDb));
    add_check(r, log, "stationary_tone_above_threshold", above > 0 && stationary_above, static_cast<double>(above),
              "limit cycle at every C > 1");
    add_check(r, log, "parseval", worst_parseval <= kMaxParsevalError, worst_parseval, "<= " + fmt(kMaxParsevalError));
    add_failure_check(r, log);
}

// ---------------------------------------------------------------------------

inline TongueSettings tongue_settings(const ScenarioConfig& c) {
    TongueSettings s;
    for (double dbc : c.sweep.power_dbc) s.power_ratios.push_back(std::pow(10.0, dbc / 10.0));
    s.detunings = c.sweep.detunings;
    s.alpha = c.lock.alpha;
    s.refine_steps = c.lock.refine_steps;
    s.min_duration = c.lock.min_duration;
    s.adler_times = c.lock.adler_times;
    s.reference_duration = c.sim.duration;
    s.dt = c.sim.dt;
    s.record_stride = c.sim.record_stride;
    s.seed = c.sim.seed;
    s.jobs = c.jobs;
    s.criteria.max_excursion = c.lock.max_excursion;
    s.criteria.max_drift_fraction = c.lock.max_drift_fraction;
    return s;
}

// Lab frequency of an injected tone, for converting photon flux to watts.
inline double injected_lab_frequency(const SystemParams& p, const MaserReference& ref, double detuning) {
    return p.pump_frequency() + injected_detuning_for(ref, detuning);
}

inline double point_watts(const SystemParams& p, const MaserReference& ref, const TonguePoint& pt) {
    return photon_flux_to_watts(pt.p_inj, injected_lab_frequency(p, ref, pt.detuning));
}

inline void write_tongue_points(OutputDir& out, const std::string& name, const ScenarioConfig& c,
                                const ArnoldTongue& t, ScenarioResult& r) {
    out.write(name + ".csv", [&](std::ostream& os) {
        os << "p_inj,detuning,locked,beat_or_phase\n";
        for (const auto& pt : t.points) {
            const double v = pt.locked ? pt.locked_phase.value_or(NAN)
                                       : (pt.beat_frequency ? rad_to_hz(*pt.beat_frequency) : NAN);
            os << fmt(point_watts(c.system, t.reference, pt)) << ',' << fmt(rad_to_hz(pt.detuning)) << ','
               << (pt.locked ? 1 : 0) << ',' << fmt(v) << '\n';
        }
    }, r);
    out.write(name + "_diagnostics.csv", [&](std::ostream& os) {
        os << "power_dbc,detuning_hz,locked,phase_excursion,drift_rate_hz,phase_variance,analytic_range_hz,error\n";
        for (const auto& pt : t.points) {
            const auto& d = pt.diagnostics;
            os << fmt(10.0 * std::log10(pt.power_ratio)) << ',' << fmt(rad_to_hz(pt.detuning)) << ','
               << (pt.locked ? 1 : 0) << ',' << fmt(d.phase_excursion) << ',' << fmt(rad_to_hz(d.drift_rate)) << ','
               << fmt(d.phase_variance) << ',' << fmt(rad_to_hz(pt.analytic_range)) << ',' << '"' << pt.error
               << '"' << '\n';
        }
    }, r);
}

inline void write_tongue_boundary(OutputDir& out, const std::string& name, const ScenarioConfig& c,
                                  const ArnoldTongue& t, ScenarioResult& r) {
    out.write(name + "_boundary.csv", [&](std::ostream& os) {
        os << "p_inj,power_dbc,lower_hz,upper_hz,half_width_hz,analytic_half_width_hz,bracketed\n";
        for (const auto& b : t.boundary) {
            const double watts = photon_flux_to_watts(b.p_inj, injected_lab_frequency(c.system, t.reference, 0.0));
            os << fmt(watts) << ',' << fmt(10.0 * std::log10(b.power_ratio)) << ','
               << (b.lower ? fmt(rad_to_hz(*b.lower)) : "") << ',' << (b.upper ? fmt(rad_to_hz(*b.upper)) : "")
               << ',' << fmt(rad_to_hz(b.half_width())) << ',' << fmt(rad_to_hz(b.analytic_half_width)) << ','
               << (b.bracketed ? 1 : 0) << '\n';
        }
    }, r);
}

inline Json reference_json(const ScenarioConfig& c, const MaserReference& ref) {
    Json j;
    j["frequency_offset_hz"] = rad_to_hz(ref.frequency - c.system.pump_offset());
    j["output_power_photons_per_s"] = ref.output_power;
    j["output_power_w"] = photon_flux_to_watts(ref.output_power, c.system.pump_frequency() - ref.frequency);
    j["amplitude"] = ref.amplitude;
    j["parseval_error"] = ref.parseval_error;
    return j;
}

inline void log_points(const ArnoldTongue& t, RunLog& log) {
    for (const auto& pt : t.points) {
        std::string s = "P/Pmas = " + fmt(10.0 * std::log10(pt.power_ratio)) + " dB, detuning " +
                        fmt(rad_to_hz(pt.detuning)) + " Hz: ";
        if (!pt.error.empty()) {
            s += "failed: " + pt.error;
        } else if (pt.locked) {
            s += "locked, phase " + fmt(pt.locked_phase.value_or(NAN));
        } else {
            s += "unlocked, beat " + fmt(rad_to_hz(pt.beat_frequency.value_or(NAN))) + " Hz";
        }
        log.line(s);
    }
}

inline void log_boundary(const ArnoldTongue& t, RunLog& log) {
    for (const auto& b : t.boundary) {
        log.line("P/Pmas = " + fmt(10.0 * std::log10(b.power_ratio)) + " dB: edges " +
                 (b.lower ? fmt(rad_to_hz(*b.lower)) : "-") + " .. " + (b.upper ? fmt(rad_to_hz(*b.upper)) : "-") +
                 " Hz, half-width " + fmt(rad_to_hz(b.half_width())) + " Hz (formula " +
                 fmt(rad_to_hz(b.analytic_half_width)) + " Hz)" + (b.bracketed ? "" : ", not bracketed"));
    }
}

// Worst |edge center| / half-width over bracketed powers.
inline double tongue_asymmetry(const ArnoldTongue& t) {
    double worst = 0.0;
    for (const auto& b : t.boundary) {
        if (b.bracketed && b.half_width() > 0.0) worst = std::max(worst, std::abs(b.center()) / b.half_width());
    }
    return worst;
}

inline ArnoldTongue run_tongue_common(const ScenarioConfig& c, RunLog& log, ScenarioResult& r) {
    const TongueSettings s = tongue_settings(c);
    log.line("pump C = " + fmt(c.cooperativity) + ", " + std::to_string(s.power_ratios.size()) + " powers x " +
             std::to_string(s.detunings.size()) + " detunings");
    const double pump = pump_amplitude_for_g(c.system.g, c.system);
    ArnoldTongue t = arnold_tongue(c.system, pump, s);
    log.line("free-running tone at pump offset + " + fmt(rad_to_hz(t.reference.frequency - c.system.pump_offset())) +
             " Hz, output " + fmt(t.reference.output_power) + " photons/s");
    log_points(t, log);
    r.total_points = t.points.size();
    r.failed_points = t.failed_points;
    r.summary["reference"] = reference_json(c, t.reference);
    return t;
}

inline void run_tongue(const ScenarioConfig& c, OutputDir& out, ScenarioResult& r, RunLog& log) {
    const ArnoldTongue t = run_tongue_common(c, log, r);
    log_boundary(t, log);
    write_tongue_points(out, "tongue", c, t, r);
    write_tongue_boundary(out, "tongue", c, t, r);

    Json b = Json::array();
    for (const auto& e : t.boundary) {
        Json j;
        j["power_dbc"] = 10.0 * std::log10(e.power_ratio);
        j["lower_hz"] = e.lower ? Json(rad_to_hz(*e.lower)) : Json(nullptr);
        j["upper_hz"] = e.upper ? Json(rad_to_hz(*e.upper)) : Json(nullptr);
        j["half_width_hz"] = rad_to_hz(e.half_width());
        j["analytic_half_width_hz"] = rad_to_hz(e.analytic_half_width);
        j["bracketed"] = e.bracketed;
        b.push_back(j);
    }
    r.summary["boundary"] = b;
    const double slope = t.slope_fit ? t.slope_fit->slope : NAN;
    r.summary["boundary_slope"] = number_or_null(slope);
    r.summary["fitted_decades"] = t.fitted_decades;
    const double asym = tongue_asymmetry(t);
    r.summary["asymmetry"] = asym;
    add_check(r, log, "boundary_slope", std::isfinite(slope) && slope >= kSlopeMin && slope <= kSlopeMax, slope,
              "[" + fmt(kSlopeMin) + ", " + fmt(kSlopeMax) + "]");
    add_check(r, log, "fitted_decades", t.fitted_decades >= kMinSlopeDecades, t.fitted_decades,
              ">= " + fmt(kMinSlopeDecades));
    add_check(r, log, "tongue_symmetry", asym <= kMaxTongueAsymmetry, asym, "<= " + fmt(kMaxTongueAsymmetry));
    bool zero_row_unlocked = true;
    for (const auto& pt : t.points) {
        if (pt.power_ratio == 0.0 && pt.locked) zero_row_unlocked = false;
    }
    add_check(r, log, "zero_power_unlocked", zero_row_unlocked, zero_row_unlocked ? 1.0 : 0.0,
              "no lock without injection");
    add_failure_check(r, log);
}

inline void run_frequency_sweep(const ScenarioConfig& c, OutputDir& out, ScenarioResult& r, RunLog& log) {
    const ArnoldTongue t = run_tongue_common(c, log, r);
    log_boundary(t, log);
    write_tongue_points(out, "frequency_sweep", c, t, r);
    write_tongue_boundary(out, "frequency_sweep", c, t, r);
    const auto& b = t.boundary.front();
    r.summary["lower_hz"] = b.lower ? Json(rad_to_hz(*b.lower)) : Json(nullptr);
    r.summary["upper_hz"] = b.upper ? Json(rad_to_hz(*b.upper)) : Json(nullptr);
    r.summary["locking_range_hz"] = rad_to_hz(2.0 * b.half_width());
    r.summary["analytic_locking_range_hz"] = rad_to_hz(2.0 * b.analytic_half_width);

    // Pulling: an unlocked output sits strictly between the free-running and
    // the injected frequency, i.e. beat / (omega_mas - omega_inj) in (0, 1).
    std::size_t unlocked = 0;
    std::size_t pulled = 0;
    for (const auto& pt : t.points) {
        if (!pt.error.empty() || pt.locked || !pt.beat_frequency || pt.detuning == 0.0) continue;
        ++unlocked;
        const double ratio = *pt.beat_frequency / (-pt.detuning);
        if (ratio > 0.0 && ratio < 1.0) ++pulled;
    }
    bool zero_locked = false;
    bool has_zero = false;
    for (const auto& pt : t.points) {
        if (pt.detuning == 0.0) {
            has_zero = true;
            zero_locked = pt.locked;
        }
    }
    const double asym = tongue_asymmetry(t);
    r.summary["asymmetry"] = asym;
    r.summary["pulled_fraction"] = unlocked ? static_cast<double>(pulled) / static_cast<double>(unlocked) : 1.0;
    if (has_zero) add_check(r, log, "locked_at_zero_detuning", zero_locked, zero_locked ? 1.0 : 0.0, "locked");
    add_check(r, log, "band_bracketed", b.bracketed, b.bracketed ? 1.0 : 0.0, "both edges inside the grid");
    add_check(r, log, "band_symmetry", b.bracketed && asym <= kMaxTongueAsymmetry, asym,
              "<= " + fmt(kMaxTongueAsymmetry));
    add_check(r, log, "frequency_pulling", pulled == unlocked, static_cast<double>(pulled),
              "all " + std::to_string(unlocked) + " unlocked points pulled");
    add_failure_check(r, log);
}

inline void run_power_sweep(const ScenarioConfig& c, OutputDir& out, ScenarioResult& r, RunLog& log) {
    ScenarioConfig cc = c;
    cc.lock.refine_steps = 0;  // a single detuning has no edges to refine
    const ArnoldTongue t = run_tongue_common(cc, log, r);
    write_tongue_points(out, "power_sweep", c, t, r);

    // Points ordered by power; locking must be monotone in power.
    std::vector<const TonguePoint*> pts;
    for (const auto& pt : t.points) {
        if (pt.error.empty()) pts.push_back(&pt);
    }
    std::sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->power_ratio < b->power_ratio; });
    bool monotone = true;
    bool seen_locked = false;
    const TonguePoint* last_unlocked = nullptr;
    const TonguePoint* first_locked = nullptr;
    for (const auto* pt : pts) {
        if (pt->locked) {
            if (!seen_locked) first_locked = pt;
            seen_locked = true;
        } else {
            if (seen_locked) monotone = false;
            if (!seen_locked) last_unlocked = pt;
        }
    }
    const double d = c.sweep.detunings.front();
    const double analytic =
        locking_threshold_power(c.system.kappa_ex, c.lock.alpha, d, t.reference.output_power) / t.reference.output_power;
    r.summary["detuning_hz"] = rad_to_hz(d);
    r.summary["analytic_threshold_dbc"] = analytic > 0.0 ? Json(10.0 * std::log10(analytic)) : Json(nullptr);
    const bool bracketed = first_locked && last_unlocked;
    if (bracketed) {
        const double measured = std::sqrt(first_locked->power_ratio * last_unlocked->power_ratio);
        r.summary["threshold_dbc"] = 10.0 * std::log10(measured);
        log.line("lock threshold between " + fmt(10.0 * std::log10(last_unlocked->power_ratio)) + " and " +
                 fmt(10.0 * std::log10(first_locked->power_ratio)) + " dBc (formula " +
                 fmt(10.0 * std::log10(analytic)) + " dBc)");
    } else {
        r.summary["threshold_dbc"] = nullptr;
    }
    add_check(r, log, "lock_monotone_in_power", monotone, monotone ? 1.0 : 0.0, "no unlock above a locked power");
    add_check(r, log, "threshold_bracketed", bracketed, bracketed ? 1.0 : 0.0, "locked and unlocked powers present");
    add_failure_check(r, log);
}

// ---------------------------------------------------------------------------

inline void run_single(const ScenarioConfig& c, OutputDir& out, ScenarioResult& r, RunLog& log) {
    const SystemParams& p = c.system;
    const double pump = pump_amplitude_for_g(p.g, p);
    const double kappa = p.kappa();
    SimSettings sim;
    sim.duration = default_duration(c);
    sim.dt = c.sim.dt > 0.0 ? c.sim.dt : max_stable_dt(p, Frame::pump_rotating);
    sim.seed = derive_seed(c.sim.seed, 0);
    sim.record_stride = c.sim.record_stride;
    DriveSpec drive = noise_drive(p);
    log.line("single run at C = " + fmt(c.cooperativity) + ", duration " + fmt(sim.duration) + " s, dt " +
             fmt(sim.dt) + " s");

    std::optional<MaserReference> ref;
    double analytic_range = 0.0;
    if (c.injection.power_dbc) {
        SimSettings rs = sim;
        rs.seed = derive_seed(c.sim.seed, 1);
        ref = free_running_reference(p, pump, rs);
        const double p_inj = std::pow(10.0, *c.injection.power_dbc / 10.0) * ref->output_power;
        analytic_range = locking_range(p.kappa_ex, c.lock.alpha, p_inj, ref->output_power);
        drive.injected_amplitude = std::sqrt(c.lock.alpha * p_inj);
        drive.injected_detuning = injected_detuning_for(*ref, c.injection.detuning);
        sim.initial.a = ref->final_a;
        sim.initial.b = ref->final_b;
        r.summary["reference"] = reference_json(c, *ref);
        log.line("injected tone " + fmt(*c.injection.power_dbc) + " dBc at detuning " +
                 fmt(rad_to_hz(c.injection.detuning)) + " Hz");
    }
    r.total_points = 1;
    const auto traj = simulate_nonlinear(p, drive, pump, sim);
    r.summary["diverged"] = traj.diverged();
    r.summary["samples"] = traj.size();
    r.summary["sample_interval_s"] = traj.dt();

    if (c.output.trajectory == TrajectoryFormat::csv) {
        out.write("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, traj, c.output.trajectory_stride); },
                  r);
    } else if (c.output.trajectory == TrajectoryFormat::binary) {
        out.write("trajectory.bin",
                  [&](std::ostream& os) { write_trajectory_binary(os, traj, c.output.trajectory_stride); }, r, true);
    }

    double parseval = NAN;
    if (!traj.diverged()) {
        const auto field = output_field(traj, p, drive);
        const auto spec = tail_spectrum(field, traj.dt(), kappa / 64.0);
        parseval = spec.parseval_error();
        const FrequencyBand band{p.pump_offset() - 3.0 * kappa, p.pump_offset() + 3.0 * kappa};
        r.summary["emission_peak_power_photons_per_s"] = emission_peak_power(spec, band);
        r.summary["parseval_error"] = parseval;
        out.write("spectrum.csv", [&](std::ostream& os) { write_spectrum_csv(os, spec); }, r);
        try {
            const auto lc = limit_cycle_summary(traj);
            r.summary["limit_cycle"] = {{"amplitude", lc.amplitude},
                                        {"frequency_offset_hz", rad_to_hz(lc.frequency - p.pump_offset())}};
            log.line("limit cycle |a| = " + fmt(lc.amplitude) + " at pump offset + " +
                     fmt(rad_to_hz(lc.frequency - p.pump_offset())) + " Hz");
        } catch (const NoLimitCycle& e) {
            r.summary["limit_cycle"] = nullptr;
            log.line(e.what());
        }
        if (ref) {
            const auto lock = detect_lock(traj, p, drive, analytic_range);
            r.summary["locked"] = lock.locked;
            r.summary["locked_phase"] = optional_number(lock.locked_phase);
            r.summary["beat_hz"] = lock.beat_frequency ? Json(rad_to_hz(-*lock.beat_frequency)) : Json(nullptr);
            r.summary["phase_variance"] = lock.diagnostics.phase_variance;
            log.line(lock.locked ? "locked" : "unlocked");
        }
    } else {
        r.failed_points = 1;
    }
    add_check(r, log, "not_diverged", !traj.diverged(), traj.diverged() ? 1.0 : 0.0, "finite trajectory");
    add_check(r, log, "parseval", std::isfinite(parseval) && parseval <= kMaxParsevalError, parseval,
              "<= " + fmt(kMaxParsevalError));
}

inline Json config_json(const ScenarioConfig& c) {
    const auto& p = c.system;
    Json j;
    j["scenario"] = to_string(c.scenario);
    j["system"] = {{"omega_c_hz", rad_to_hz(p.omega_c)},
                   {"kappa_0_hz", rad_to_hz(p.kappa_0)},
                   {"kappa_ex_hz", rad_to_hz(p.kappa_ex)},
                   {"omega_m_hz", rad_to_hz(p.omega_m)},
                   {"gamma_m_hz", rad_to_hz(p.gamma_m)},
                   {"g0_hz", rad_to_hz(p.g0)},
                   {"pump_detuning_hz", rad_to_hz(p.pump_detuning)},
                   {"noise_quanta_cavity", p.noise_quanta_cavity},
                   {"noise_quanta_mech", p.noise_quanta_mech}};
    j["pump"] = {{"cooperativity", c.cooperativity}, {"g_hz", rad_to_hz(p.g)}};
    if (c.pump_power_dbm) j["pump"]["power_dbm"] = *c.pump_power_dbm;
    Json detunings = Json::array();
    for (double d : c.sweep.detunings) detunings.push_back(rad_to_hz(d));
    j["sweep"] = {{"cooperativities", c.sweep.cooperativities},
                  {"power_dbc", c.sweep.power_dbc},
                  {"detunings_hz", detunings},
                  {"averages", c.sweep.averages}};
    j["sim"] = {{"duration", c.sim.duration},
                {"dt", c.sim.dt},
                {"seed", c.sim.seed},
                {"record_stride", c.sim.record_stride}};
    j["lock"] = {{"alpha", c.lock.alpha},
                 {"refine_steps", c.lock.refine_steps},
                 {"adler_times", c.lock.adler_times},
                 {"min_duration", c.lock.min_duration},
                 {"max_excursion", c.lock.max_excursion},
                 {"max_drift_fraction", c.lock.max_drift_fraction}};
    j["injection"] = {{"power_dbc", optional_number(c.injection.power_dbc)},
                      {"detuning_hz", rad_to_hz(c.injection.detuning)}};
    const char* formats[] = {"csv", "binary", "none"};
    j["output"] = {{"trajectory", formats[static_cast<int>(c.output.trajectory)]},
                   {"trajectory_stride", c.output.trajectory_stride}};
    // The output directory is left out so that reruns elsewhere produce identical files.
    return j;
}

}  // namespace detail

inline ScenarioResult run_scenario(const ScenarioConfig& cfg, std::ostream* echo = nullptr) {
    ScenarioResult r;
    RunLog log(echo);
    detail::OutputDir out(cfg.output_dir);
    log.line(std::string("scenario ") + to_string(cfg.scenario) + ", seed " + std::to_string(cfg.sim.seed));
    r.summary["scenario"] = to_string(cfg.scenario);
    r.summary["config"] = detail::config_json(cfg);

    switch (cfg.scenario) {
        case Scenario::linewidth_narrowing: detail::run_linewidth(cfg, out, r, log); break;
        case Scenario::masing_threshold: detail::run_masing(cfg, out, r, log); break;
        case Scenario::injection_power_sweep: detail::run_power_sweep(cfg, out, r, log); break;
        case Scenario::injection_frequency_sweep: detail::run_frequency_sweep(cfg, out, r, log); break;
        case Scenario::arnold_tongue: detail::run_tongue(cfg, out, r, log); break;
        case Scenario::single_run: detail::run_single(cfg, out, r, log); break;
    }

    Json checks = Json::array();
    for (const auto& c : r.checks) {
        checks.push_back({{"name", c.name}, {"passed", c.passed}, {"value", detail::number_or_null(c.value)},
                          {"limit", c.limit}});
    }
    r.summary["total_points"] = r.total_points;
    r.summary["failed_points"] = r.failed_points;
    r.summary["checks"] = checks;
    r.summary["passed"] = r.passed();
    log.line(std::string("result: ") + (r.passed() ? "PASS" : "FAIL"));

    out.write("summary.json", [&](std::ostream& os) { os << r.summary.dump(2) << '\n'; }, r);
    out.write("run.log", [&](std::ostream& os) { os << log.text(); }, r);
    return r;
}

}  // namespace backaction
