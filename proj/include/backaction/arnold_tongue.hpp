#pragma once

// Injection locking of the simulated maser over a grid of injected powers and
// detunings. Powers are given relative to the free-running output power P_mas
// and detunings relative to the free-running frequency, both measured from a
// reference run, so the grid does not depend on the unknown absolute
// attenuation between source and device.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "backaction/adler.hpp"
#include "backaction/lock.hpp"
#include "backaction/parallel.hpp"
#include "backaction/random.hpp"
#include "backaction/simulate.hpp"
#include "backaction/spectrum.hpp"

namespace backaction {

struct MaserReference {
    double frequency = 0.0;       // envelope frequency of the free-running tone in the pump frame, rad/s
    double amplitude = 0.0;       // mean |a| over the final half
    double output_power = 0.0;    // emitted photons/s in the spectral peak
    double parseval_error = 0.0;  // of the spectrum used for output_power
    double resolution_bandwidth = 0.0;
    cdouble final_a;
    cdouble final_b;
};

// Lab-frame detuning omega_inj - omega_mas maps to the envelope frequency
// nu_mas - detuning; a tone at envelope nu has injected_detuning = -nu.
inline double injected_detuning_for(const MaserReference& ref, double lab_detuning) {
    return -(ref.frequency - lab_detuning);
}

// Free-running run above threshold: tone frequency, output power and the final
// state used to start each injected run on the limit cycle.
inline MaserReference free_running_reference(const SystemParams& params, double pump_amplitude,
                                             const SimSettings& sim) {
    const DriveSpec drive = noise_drive(params);
    const auto traj = simulate_nonlinear(params, drive, pump_amplitude, sim);
    if (traj.info().diverged) throw std::runtime_error("free-running reference run diverged");
    const LimitCycle lc = limit_cycle_summary(traj);

    MaserReference ref;
    ref.frequency = lc.frequency;
    ref.amplitude = lc.amplitude;
    ref.final_a = traj.a().back();
    ref.final_b = traj.b().back();

    const auto out = output_field(traj, params, drive);
    const double kappa = params.kappa();
    const auto spec = tail_spectrum(out, traj.dt(), kappa / 64.0);
    ref.parseval_error = spec.parseval_error();
    ref.resolution_bandwidth = spec.resolution_bandwidth;
    ref.output_power = emission_peak_power(spec, FrequencyBand{lc.frequency - 2.0 * kappa, lc.frequency + 2.0 * kappa});
    if (!(ref.output_power > 0.0)) throw std::runtime_error("free-running reference has no emission peak");
    return ref;
}

struct TongueSettings {
    std::vector<double> power_ratios;  // P_inj / P_mas at the source
    std::vector<double> detunings;     // omega_inj - omega_mas, rad/s
    double alpha = 1.0;                // fraction of the source power reaching the device
    int refine_steps = 4;              // bisection steps on each boundary
    double min_duration = 0.0;         // s per point; 0 selects 1000 / kappa
    double adler_times = 60.0;         // per-point duration in units of 2 / analytic locking range
    double reference_duration = 0.0;   // s; 0 selects 3000 / kappa
    double dt = 0.0;                   // 0 selects the stability bound in the pump frame
    std::size_t record_stride = 4;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    LockCriteria criteria;
};

struct TonguePoint {
    std::size_t power_index = 0;
    double power_ratio = 0.0;
    double p_inj = 0.0;     // photons/s at the source
    double detuning = 0.0;  // omega_inj - omega_mas, rad/s
    double analytic_range = 0.0;
    bool locked = false;
    std::optional<double> locked_phase;    // output phase relative to the tone
    std::optional<double> beat_frequency;  // omega_out - omega_inj in the lab frame, rad/s
    LockDiagnostics diagnostics;
    std::string error;
};

struct TongueBoundary {
    double power_ratio = 0.0;
    double p_inj = 0.0;
    double analytic_half_width = 0.0;
    std::optional<double> lower;  // most negative locked detuning (refined)
    std::optional<double> upper;
    bool bracketed = false;       // both edges lie between a locked and an unlocked detuning

    double half_width() const { return lower && upper ? 0.5 * (*upper - *lower) : 0.0; }
    double center() const { return lower && upper ? 0.5 * (*upper + *lower) : 0.0; }
};

struct ArnoldTongue {
    MaserReference reference;
    std::vector<TonguePoint> points;  // power-major, detunings in the given order
    std::vector<TongueBoundary> boundary;
    std::optional<LineFit> slope_fit;  // log10(half width) against log10(P_inj)
    double fitted_decades = 0.0;
    std::size_t failed_points = 0;
    std::size_t fit_points = 0;

    double failure_fraction() const {
        return points.empty() ? 0.0 : static_cast<double>(failed_points) / static_cast<double>(points.size());
    }
};

inline double tongue_point_duration(const SystemParams& params, const TongueSettings& s, double analytic_range) {
    const double floor = s.min_duration > 0.0 ? s.min_duration : 1000.0 / params.kappa();
    if (!(analytic_range > 0.0)) return floor;
    return std::max(floor, s.adler_times / (0.5 * analytic_range));
}

// One injected run started on the reference limit cycle.
inline TonguePoint simulate_tongue_point(const SystemParams& params, double pump_amplitude, const MaserReference& ref,
                                         double power_ratio, double detuning, const TongueSettings& s,
                                         std::uint64_t seed) {
    TonguePoint pt;
    pt.power_ratio = power_ratio;
    pt.p_inj = power_ratio * ref.output_power;
    pt.detuning = detuning;
    try {
        if (!(power_ratio >= 0.0)) throw std::invalid_argument("injected power ratio must be >= 0");
        pt.analytic_range = locking_range(params.kappa_ex, s.alpha, pt.p_inj, ref.output_power);
        DriveSpec drive = noise_drive(params);
        drive.injected_amplitude = std::sqrt(s.alpha * pt.p_inj);
        drive.injected_detuning = injected_detuning_for(ref, detuning);

        SimSettings sim;
        sim.dt = s.dt > 0.0 ? s.dt : max_stable_dt(params, Frame::pump_rotating);
        sim.duration = tongue_point_duration(params, s, pt.analytic_range);
        sim.seed = seed;
        sim.record_stride = s.record_stride;
        sim.initial.a = ref.final_a;
        sim.initial.b = ref.final_b;
        const auto traj = simulate_nonlinear(params, drive, pump_amplitude, sim);
        if (traj.info().diverged) throw std::runtime_error("injected run diverged");
        const LockResult r = detect_lock(traj, params, drive, pt.analytic_range, s.criteria);
        pt.locked = r.locked;
        pt.locked_phase = r.locked_phase;
        // The demodulated drift is an envelope frequency; lab frequencies run the other way.
        if (r.beat_frequency) pt.beat_frequency = -*r.beat_frequency;
        pt.diagnostics = r.diagnostics;
    } catch (const std::exception& e) {
        pt.locked = false;
        pt.error = e.what();
    }
    return pt;
}

namespace detail {

inline constexpr std::uint64_t kGridStream = 1;
inline constexpr std::uint64_t kRefineStream = 2;
inline constexpr std::uint64_t kReferenceStream = 3;

// Moves one edge of the locked band by bisection between a locked and an
// unlocked detuning; returns the midpoint of the final bracket.
inline double refine_edge(const SystemParams& params, double pump_amplitude, const MaserReference& ref,
                          double power_ratio, double locked_d, double unlocked_d, const TongueSettings& s,
                          std::uint64_t seed) {
    for (int step = 0; step < s.refine_steps; ++step) {
        const double mid = 0.5 * (locked_d + unlocked_d);
        const auto pt = simulate_tongue_point(params, pump_amplitude, ref, power_ratio, mid, s,
                                              derive_seed(seed, static_cast<std::uint64_t>(step)));
        if (!pt.error.empty()) break;
        (pt.locked ? locked_d : unlocked_d) = mid;
    }
    return s.refine_steps > 0 ? 0.5 * (locked_d + unlocked_d) : locked_d;
}

}  // namespace detail

inline ArnoldTongue arnold_tongue(const SystemParams& params, double pump_amplitude, const TongueSettings& s) {
    if (s.power_ratios.empty() || s.detunings.empty()) throw std::invalid_argument("tongue grids must be nonempty");
    if (!(s.alpha > 0.0 && s.alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
    ArnoldTongue out;

    SimSettings ref_sim;
    ref_sim.dt = s.dt > 0.0 ? s.dt : max_stable_dt(params, Frame::pump_rotating);
    ref_sim.duration = s.reference_duration > 0.0 ? s.reference_duration : 3000.0 / params.kappa();
    ref_sim.seed = derive_seed(s.seed, detail::kReferenceStream);
    ref_sim.record_stride = s.record_stride;
    out.reference = free_running_reference(params, pump_amplitude, ref_sim);

    const std::size_t np = s.power_ratios.size();
    const std::size_t nd = s.detunings.size();
    out.points.resize(np * nd);
    const std::uint64_t grid_seed = derive_seed(s.seed, detail::kGridStream);
    parallel_for(out.points.size(), s.jobs, [&](std::size_t k) {
        const std::size_t i = k / nd;
        out.points[k] = simulate_tongue_point(params, pump_amplitude, out.reference, s.power_ratios[i],
                                              s.detunings[k % nd], s, derive_seed(grid_seed, k));
        out.points[k].power_index = i;
    });
    for (const auto& pt : out.points) out.failed_points += pt.error.empty() ? 0 : 1;

    // Edges: outermost locked detuning on each side, bracketed by the next
    // grid detuning outward when that one is unlocked.
    std::vector<double> sorted = s.detunings;
    std::sort(sorted.begin(), sorted.end());
    out.boundary.resize(np);
    struct Edge {
        std::optional<double> locked;
        std::optional<double> unlocked;
    };
    std::vector<Edge> edges(2 * np);
    for (std::size_t i = 0; i < np; ++i) {
        auto& b = out.boundary[i];
        b.power_ratio = s.power_ratios[i];
        b.p_inj = b.power_ratio * out.reference.output_power;
        b.analytic_half_width =
            0.5 * locking_range(params.kappa_ex, s.alpha, b.p_inj, out.reference.output_power);
        auto locked_at = [&](double d) -> std::optional<bool> {
            for (std::size_t j = 0; j < nd; ++j) {
                const auto& pt = out.points[i * nd + j];
                if (pt.detuning == d) return pt.error.empty() ? std::optional<bool>(pt.locked) : std::nullopt;
            }
            return std::nullopt;
        };
        std::optional<std::size_t> lo_idx;
        std::optional<std::size_t> hi_idx;
        for (std::size_t j = 0; j < sorted.size(); ++j) {
            if (locked_at(sorted[j]).value_or(false)) {
                if (!lo_idx) lo_idx = j;
                hi_idx = j;
            }
        }
        if (!lo_idx) continue;
        edges[2 * i].locked = sorted[*lo_idx];
        if (*lo_idx > 0 && locked_at(sorted[*lo_idx - 1]) == std::optional<bool>(false))
            edges[2 * i].unlocked = sorted[*lo_idx - 1];
        edges[2 * i + 1].locked = sorted[*hi_idx];
        if (*hi_idx + 1 < sorted.size() && locked_at(sorted[*hi_idx + 1]) == std::optional<bool>(false))
            edges[2 * i + 1].unlocked = sorted[*hi_idx + 1];
    }

    std::vector<std::optional<double>> refined(2 * np);
    const std::uint64_t refine_seed = derive_seed(s.seed, detail::kRefineStream);
    parallel_for(edges.size(), s.jobs, [&](std::size_t e) {
        const auto& edge = edges[e];
        if (!edge.locked) return;
        if (!edge.unlocked) {
            refined[e] = edge.locked;
            return;
        }
        refined[e] = detail::refine_edge(params, pump_amplitude, out.reference, s.power_ratios[e / 2], *edge.locked,
                                         *edge.unlocked, s, derive_seed(refine_seed, e));
    });
    for (std::size_t i = 0; i < np; ++i) {
        auto& b = out.boundary[i];
        b.lower = refined[2 * i];
        b.upper = refined[2 * i + 1];
        b.bracketed = edges[2 * i].unlocked.has_value() && edges[2 * i + 1].unlocked.has_value();
    }

    std::vector<double> lx;
    std::vector<double> ly;
    for (const auto& b : out.boundary) {
        if (b.bracketed && b.p_inj > 0.0 && b.half_width() > 0.0) {
            lx.push_back(std::log10(b.p_inj));
            ly.push_back(std::log10(b.half_width()));
        }
    }
    out.fit_points = lx.size();
    if (lx.size() >= 2) {
        out.slope_fit = fit_line(lx, ly);
        const auto [mn, mx] = std::minmax_element(lx.begin(), lx.end());
        out.fitted_decades = *mx - *mn;
    }
    return out;
}

}  // namespace backaction
