#pragma once

// Adler phase model of an injected oscillator:
//   d phi/dt + (w_inj - w_mas) = -(locking_range / 2) sin(phi)

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "backaction/units.hpp"

namespace backaction {

struct AdlerParams {
    double detuning = 0.0;       // w_inj - w_mas, rad/s
    double locking_range = 0.0;  // full width, rad/s
    double phi0 = 0.0;
};

struct PhaseTrajectory {
    double dt = 0.0;
    std::vector<double> phase;  // unwrapped

    double time(std::size_t i) const { return dt * static_cast<double>(i); }
};

inline double adler_rate(const AdlerParams& p, double phi) {
    return -p.detuning - 0.5 * p.locking_range * std::sin(phi);
}

inline PhaseTrajectory integrate_adler(const AdlerParams& p, double duration, double dt) {
    if (!(p.locking_range >= 0.0)) throw std::invalid_argument("locking range must be >= 0");
    if (!(dt > 0.0) || !(duration > 0.0)) throw std::invalid_argument("dt and duration must be positive");
    const double fastest = std::max(std::abs(p.detuning), p.locking_range);
    if (dt * fastest > 0.05 * (1.0 + 1e-12)) {
        throw std::invalid_argument("integrate_adler: dt * max(|detuning|, locking_range) exceeds 0.05");
    }
    const auto n = static_cast<std::size_t>(std::llround(duration / dt));
    PhaseTrajectory out;
    out.dt = dt;
    out.phase.reserve(n + 1);
    double phi = p.phi0;
    out.phase.push_back(phi);
    for (std::size_t i = 0; i < n; ++i) {
        const double k1 = adler_rate(p, phi);
        const double k2 = adler_rate(p, phi + 0.5 * dt * k1);
        const double k3 = adler_rate(p, phi + 0.5 * dt * k2);
        const double k4 = adler_rate(p, phi + dt * k3);
        phi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.phase.push_back(phi);
    }
    return out;
}

// Stable fixed point sin(phi) = -2 detuning / locking_range with cos(phi) > 0,
// or nothing when the tone lies outside the locking range.
inline std::optional<double> locked_phase(const AdlerParams& p) {
    // A zero range has no restoring term, so nothing is locked.
    if (!(p.locking_range > 0.0) || std::abs(p.detuning) > 0.5 * p.locking_range) return std::nullopt;
    return std::asin(std::clamp(-2.0 * p.detuning / p.locking_range, -1.0, 1.0));
}

// Mean phase-slip rate outside the locking range.
inline double adler_beat_frequency(const AdlerParams& p) {
    const double half = 0.5 * p.locking_range;
    const double d2 = p.detuning * p.detuning - half * half;
    return d2 > 0.0 ? std::sqrt(d2) : 0.0;
}

// Full locking range 2 kappa_ex sqrt(alpha P_inj / P_mas).
inline double locking_range(double kappa_ex, double alpha, double p_inj, double p_mas) {
    if (!(p_mas > 0.0)) throw std::invalid_argument("maser power must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
    if (!(p_inj >= 0.0)) throw std::invalid_argument("injected power must be >= 0");
    if (!(kappa_ex >= 0.0)) throw std::invalid_argument("kappa_ex must be >= 0");
    return 2.0 * kappa_ex * std::sqrt(alpha * p_inj / p_mas);
}

// Injected power at which a tone `detuning` away from the maser just locks.
inline double locking_threshold_power(double kappa_ex, double alpha, double detuning, double p_mas) {
    const double ratio = detuning / kappa_ex;
    return p_mas * ratio * ratio / alpha;
}

struct SlipMeasurement {
    bool slipping = false;
    double beat_frequency = 0.0;  // |mean slip rate| over whole slips, rad/s
    std::size_t slips = 0;
};

// Counts whole 2 pi slips after `skip` samples and times them.
inline SlipMeasurement measure_slips(const PhaseTrajectory& traj, std::size_t skip = 0) {
    SlipMeasurement m;
    if (traj.phase.size() < skip + 2) return m;
    const double start = traj.phase[skip];
    std::optional<double> first_time;
    double last_time = 0.0;
    std::size_t crossings = 0;
    long last_level = 0;
    for (std::size_t i = skip + 1; i < traj.phase.size(); ++i) {
        const double rel = traj.phase[i] - start;
        const auto level = static_cast<long>(std::trunc(rel / kTwoPi));
        if (level != last_level && std::abs(level) > std::abs(last_level)) {
            // Interpolated crossing time of the new level.
            const double target = static_cast<double>(level) * kTwoPi;
            const double prev = traj.phase[i - 1] - start;
            const double frac = (target - prev) / (rel - prev);
            const double t = traj.time(i - 1) + frac * traj.dt;
            if (!first_time) {
                first_time = t;
            } else {
                ++crossings;
                last_time = t;
            }
            last_level = level;
        }
    }
    if (first_time && crossings > 0) {
        m.slipping = true;
        m.slips = crossings;
        m.beat_frequency = kTwoPi * static_cast<double>(crossings) / (last_time - *first_time);
    } else if (first_time) {
        m.slipping = true;
        m.slips = 1;
    }
    return m;
}

}  // namespace backaction
