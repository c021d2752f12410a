#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "backaction/simulate.hpp"
#include "backaction/spectrum.hpp"

namespace backaction {

struct LockCriteria {
    double discard_fraction = 0.25;     // leading transient dropped before analysis
    double max_excursion = std::numbers::pi;
    double max_drift_fraction = 0.01;   // of the analytic locking range
    double smoothing_periods = 4.0;     // filter hop, in carrier periods, for pump-frame runs
    std::size_t min_samples = 16;
};

struct LockDiagnostics {
    double phase_excursion = 0.0;  // max - min of the demodulated phase
    double drift_rate = 0.0;       // mean phase drift, rad/s
    double phase_variance = 0.0;   // variance about the least-squares trend, rad^2
    double analysis_time = 0.0;
    double analytic_range = 0.0;
    double max_excursion = 0.0;
    double max_drift = 0.0;
    std::size_t samples = 0;
};

struct LockResult {
    bool locked = false;
    std::optional<double> locked_phase;
    std::optional<double> beat_frequency;  // rad/s, envelope frequency of the output minus that of the tone
    LockDiagnostics diagnostics;
};

struct PhaseSeries {
    double dt = 0.0;
    double t0 = 0.0;
    std::vector<double> phase;
};

inline double detrended_variance(std::span<const double> y) {
    if (y.size() < 3) return 0.0;
    const double n = static_cast<double>(y.size());
    const double mi = 0.5 * (n - 1.0);
    double my = 0.0;
    for (double v : y) my += v;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double di = static_cast<double>(i) - mi;
        sxx += di * di;
        sxy += di * (y[i] - my);
    }
    const double slope = sxy / sxx;
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - my - slope * (static_cast<double>(i) - mi);
        ss += r * r;
    }
    return ss / n;
}

// Phase of the output field relative to a reference rotating at `frequency`
// (envelope convention exp(i w t)) after dropping the leading transient.
// Pump-frame runs carry the pump and its mixing products at multiples of the
// carrier; a boxcar over whole carrier periods removes them first.
inline PhaseSeries demodulated_output_phase(const ComplexTrajectory& traj, const SystemParams& params,
                                            const DriveSpec& drive, double frequency,
                                            const LockCriteria& crit = {}) {
    const auto out = output_field(traj, params, drive);
    const auto first = static_cast<std::size_t>(crit.discard_fraction * static_cast<double>(out.size()));
    std::span<const cdouble> window(out.data() + first, out.size() - first);
    const auto shifted = shift_frequency(window, traj.dt(), traj.time(first), frequency);

    // Hann-weighted blocks of 2 * block samples, hop `block`: leakage of the
    // pump and its harmonics falls off fast even when a block is not a whole
    // number of carrier periods.
    std::size_t block = 1;
    if (traj.frame() == Frame::pump_rotating && frequency != 0.0) {
        block = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(crit.smoothing_periods * kTwoPi / (std::abs(frequency) * traj.dt()))));
    }
    const std::size_t width = block > 1 ? 2 * block : 1;
    const std::size_t blocks = shifted.size() >= width ? (shifted.size() - width) / block + 1 : 0;
    if (blocks < crit.min_samples) throw std::invalid_argument("trajectory too short for the lock analysis window");
    std::vector<double> w(width, 1.0);
    if (width > 1) w = make_window(Window::hann, width);
    double wsum = 0.0;
    for (double v : w) wsum += v;
    std::vector<cdouble> averaged(blocks);
    for (std::size_t k = 0; k < blocks; ++k) {
        cdouble s{};
        for (std::size_t i = 0; i < width; ++i) s += w[i] * shifted[k * block + i];
        averaged[k] = s / wsum;
    }
    PhaseSeries ps;
    ps.dt = traj.dt() * static_cast<double>(block);
    ps.t0 = traj.time(first) + 0.5 * traj.dt() * static_cast<double>(width - 1);
    ps.phase = unwrapped_phase(averaged);
    return ps;
}

// Locked iff the demodulated phase stays within `max_excursion` and drifts by
// less than max_drift_fraction of the analytic locking range per unit time.
inline LockResult detect_lock(const ComplexTrajectory& traj, const SystemParams& params, const DriveSpec& drive,
                              double analytic_range, const LockCriteria& crit = {}) {
    // The injected tone is exp(-i injected_detuning t) in the envelope convention.
    const double tone_frequency = -drive.injected_detuning;
    const PhaseSeries ps = demodulated_output_phase(traj, params, drive, tone_frequency, crit);

    LockResult r;
    auto& d = r.diagnostics;
    const auto [lo, hi] = std::minmax_element(ps.phase.begin(), ps.phase.end());
    d.samples = ps.phase.size();
    d.analysis_time = ps.dt * static_cast<double>(ps.phase.size() - 1);
    d.phase_excursion = *hi - *lo;
    d.drift_rate = (ps.phase.back() - ps.phase.front()) / d.analysis_time;
    d.phase_variance = detrended_variance(ps.phase);
    d.analytic_range = analytic_range;
    d.max_excursion = crit.max_excursion;
    d.max_drift = crit.max_drift_fraction * analytic_range;

    r.locked = d.phase_excursion < d.max_excursion && std::abs(d.drift_rate) < d.max_drift;
    if (r.locked) {
        double mean = 0.0;
        for (double v : ps.phase) mean += v;
        mean /= static_cast<double>(ps.phase.size());
        r.locked_phase = std::remainder(mean, kTwoPi);
    } else {
        r.beat_frequency = d.drift_rate;
    }
    return r;
}

}  // namespace backaction
