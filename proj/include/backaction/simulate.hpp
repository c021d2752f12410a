#pragma once

// Stochastic coupled-mode integrators.
//
// Linear model (sideband-rotating frame), state (a*, b):
//   d a*/dt = (i delta - kappa/2) a* + i g b + sqrt(kappa_ex) s_inj* + xi_a*
//   d b /dt = -gamma_m/2 b - i g a* + xi_b
// Nonlinear model (pump-rotating frame), Delta = omega_m + delta:
//   d a/dt = (i Delta - kappa/2) a + i g0 a (b + b*) + sqrt(kappa_ex) (s_pump + s_inj) + xi_a
//   d b/dt = (-i omega_m - gamma_m/2) b + i g0 |a|^2 + xi_b
// Noise: <xi(t) xi*(t')> = N r delta(t - t') with N the noise quanta and r the
// decay rate of the mode it drives, so an undriven, uncoupled mode settles to
// <|a|^2> = N.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "backaction/random.hpp"
#include "backaction/system_params.hpp"
#include "backaction/trajectory.hpp"

namespace backaction {

inline constexpr double kMaxStepProduct = 0.05;
inline constexpr double kOverflowGuard = 1e12;

struct InitialState {
    std::optional<cdouble> a;
    std::optional<cdouble> b;
};

struct SimSettings {
    double duration = 0.0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::size_t record_stride = 1;  // keep every n-th integration step
    InitialState initial;
};

class StepSizeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class FrameMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline double fastest_rate(const SystemParams& p, Frame frame) {
    double r = std::max({p.kappa(), p.gamma_m, p.g, std::abs(p.pump_detuning)});
    if (frame == Frame::pump_rotating) r = std::max(r, p.omega_m);
    return r;
}

inline void check_step_size(const SystemParams& p, double dt, Frame frame) {
    if (!(dt > 0.0)) throw StepSizeError("dt must be positive");
    const double product = dt * fastest_rate(p, frame);
    if (product > kMaxStepProduct * (1.0 + 1e-12)) {
        throw StepSizeError("dt * fastest rate = " + std::to_string(product) + " exceeds " +
                            std::to_string(kMaxStepProduct) + " in the " + to_string(frame) + " frame");
    }
}

// Largest step satisfying the stability bound, rounded down by `margin`.
inline double max_stable_dt(const SystemParams& p, Frame frame, double margin = 1.0) {
    return margin * kMaxStepProduct / fastest_rate(p, frame);
}

namespace detail {

struct ModeState {
    cdouble a;
    cdouble b;
};

inline ModeState operator+(ModeState x, ModeState y) { return {x.a + y.a, x.b + y.b}; }
inline ModeState operator*(double s, ModeState x) { return {s * x.a, s * x.b}; }

template <class Drift>
ModeState rk4_step(const Drift& f, double t, const ModeState& x, double dt) {
    const ModeState k1 = f(t, x);
    const ModeState k2 = f(t + 0.5 * dt, x + (0.5 * dt) * k1);
    const ModeState k3 = f(t + 0.5 * dt, x + (0.5 * dt) * k2);
    const ModeState k4 = f(t + dt, x + dt * k3);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline std::size_t step_count(const SimSettings& s) {
    if (!(s.duration > 0.0)) throw std::invalid_argument("duration must be positive");
    if (s.record_stride == 0) throw std::invalid_argument("record_stride must be >= 1");
    const auto n = static_cast<std::size_t>(std::llround(s.duration / s.dt));
    if (n / s.record_stride < 1) throw std::invalid_argument("duration too short for two recorded samples");
    return n;
}

// Integrates `drift` with RK4 for the deterministic part; when `euler` is set
// the drift uses a single Euler evaluation instead. Additive noise increments
// are added after the drift step. `to_cavity` maps the state's first slot to
// the recorded cavity envelope a.
template <class Drift, class ToCavity>
ComplexTrajectory integrate(const Drift& drift, ModeState x, const SimSettings& s, double noise_a_rate,
                            double noise_b_rate, bool euler, Frame frame, TrajectoryInfo info,
                            const ToCavity& to_cavity) {
    const std::size_t n = step_count(s);
    const std::size_t stride = s.record_stride;
    std::vector<cdouble> a;
    std::vector<cdouble> b;
    a.reserve(n / stride + 1);
    b.reserve(n / stride + 1);
    a.push_back(to_cavity(x.a));
    b.push_back(x.b);

    const double sigma_a = std::sqrt(noise_a_rate * s.dt);
    const double sigma_b = std::sqrt(noise_b_rate * s.dt);
    const bool noisy = sigma_a > 0.0 || sigma_b > 0.0;
    ComplexNormal normal(s.seed);

    for (std::size_t i = 0; i < n; ++i) {
        const double t = s.dt * static_cast<double>(i);
        if (euler) {
            x = x + s.dt * drift(t, x);
        } else {
            x = rk4_step(drift, t, x, s.dt);
        }
        if (noisy) {
            x.a += sigma_a * normal();
            x.b += sigma_b * normal();
        }
        const bool finite = std::isfinite(x.a.real()) && std::isfinite(x.a.imag()) && std::isfinite(x.b.real()) &&
                            std::isfinite(x.b.imag());
        if (!finite || std::abs(x.a) > kOverflowGuard) {
            info.diverged = true;
            break;
        }
        if ((i + 1) % stride == 0) {
            a.push_back(to_cavity(x.a));
            b.push_back(x.b);
        }
    }
    if (a.size() < 2) {
        a.push_back(to_cavity(x.a));
        b.push_back(x.b);
    }
    return ComplexTrajectory(s.dt * static_cast<double>(stride), 0.0, std::move(a), std::move(b), s.seed, frame,
                             info);
}

}  // namespace detail

// Euler-Maruyama when any noise is present, RK4 otherwise. A run whose cavity
// amplitude exceeds the overflow guard stops early and is flagged diverged.
inline ComplexTrajectory simulate_linear(const SystemParams& params, const DriveSpec& drive,
                                         const SimSettings& settings) {
    params.validated();
    drive.validate();
    check_step_size(params, settings.dt, Frame::sideband_rotating);

    const double kappa = params.kappa();
    const double gamma = params.gamma_m;
    const double g = params.g;
    const double root_kex = std::sqrt(params.kappa_ex);
    const cdouble cavity_pole(-0.5 * kappa, params.pump_detuning);
    const cdouble ig(0.0, g);

    auto drift = [&](double t, const detail::ModeState& x) -> detail::ModeState {
        return {cavity_pole * x.a + ig * x.b + root_kex * std::conj(drive.injected_field(t)),
                -0.5 * gamma * x.b - ig * x.a};
    };

    detail::ModeState x0{std::conj(settings.initial.a.value_or(cdouble{})), settings.initial.b.value_or(cdouble{})};
    const double rate_a = drive.noise_quanta_cavity * kappa;
    const double rate_b = drive.noise_quanta_mech * gamma;
    TrajectoryInfo info;
    info.frame_offset = params.pump_detuning;
    return detail::integrate(drift, x0, settings, rate_a, rate_b, rate_a > 0.0 || rate_b > 0.0,
                             Frame::sideband_rotating, info, [](cdouble ac) { return std::conj(ac); });
}

// Static (time-independent) solution of the nonlinear equations under a pump
// alone, including the radiation-pressure displacement of the mechanics.
inline detail::ModeState static_steady_state(const SystemParams& p, double pump_amplitude) {
    const double delta = p.pump_offset();
    const cdouble drive = std::sqrt(p.kappa_ex) * pump_amplitude;
    const cdouble mech_pole(0.5 * p.gamma_m, p.omega_m);
    cdouble a{};
    cdouble b{};
    for (int it = 0; it < 200; ++it) {
        const cdouble a_next = drive / cdouble(0.5 * p.kappa(), -(delta + 2.0 * p.g0 * b.real()));
        const cdouble b_next = cdouble(0.0, p.g0 * std::norm(a_next)) / mech_pole;
        const bool done = std::abs(a_next - a) <= 1e-15 * std::abs(a_next) && std::abs(b_next - b) <= 1e-15 * std::abs(b_next);
        a = a_next;
        b = b_next;
        if (done) break;
    }
    return {a, b};
}

// Full classical equations in the pump frame. The deterministic part uses RK4
// and noise enters as additive Wiener increments after each step. Saturation
// above threshold comes from the complete coupling terms.
inline ComplexTrajectory simulate_nonlinear(const SystemParams& params, const DriveSpec& drive,
                                            double pump_amplitude, const SimSettings& settings) {
    params.validated();
    drive.validate();
    if (!(pump_amplitude >= 0.0)) throw std::invalid_argument("pump amplitude must be >= 0");
    check_step_size(params, settings.dt, Frame::pump_rotating);

    const double kappa = params.kappa();
    const double g0 = params.g0;
    const double root_kex = std::sqrt(params.kappa_ex);
    const cdouble cavity_pole(-0.5 * kappa, params.pump_offset());
    const cdouble mech_pole(-0.5 * params.gamma_m, -params.omega_m);
    const cdouble pump_in = root_kex * pump_amplitude;

    auto drift = [&](double t, const detail::ModeState& x) -> detail::ModeState {
        const double position = 2.0 * x.b.real();
        const cdouble da = (cavity_pole + cdouble(0.0, g0 * position)) * x.a + pump_in +
                           root_kex * drive.injected_field(t);
        const cdouble db = mech_pole * x.b + cdouble(0.0, g0 * std::norm(x.a));
        return {da, db};
    };

    const detail::ModeState ss = static_steady_state(params, pump_amplitude);
    detail::ModeState x0{settings.initial.a.value_or(ss.a), settings.initial.b.value_or(ss.b)};
    TrajectoryInfo info;
    info.frame_offset = params.pump_offset();
    info.pump_amplitude = pump_amplitude;
    return detail::integrate(drift, x0, settings, drive.noise_quanta_cavity * kappa,
                             drive.noise_quanta_mech * params.gamma_m, false, Frame::pump_rotating, info,
                             [](cdouble a) { return a; });
}

// Field leaving the external port: a_out = s_in - sqrt(kappa_ex) a, with s_in
// the deterministic input (pump and injected tone). Units sqrt(photons/s).
inline std::vector<cdouble> output_field(const ComplexTrajectory& traj, const SystemParams& params,
                                         const DriveSpec& drive) {
    const double expected_offset =
        traj.frame() == Frame::pump_rotating ? params.pump_offset() : params.pump_detuning;
    const double scale = std::max({1.0, std::abs(expected_offset), std::abs(traj.info().frame_offset)});
    if (std::abs(expected_offset - traj.info().frame_offset) > 1e-9 * scale) {
        throw FrameMismatch("trajectory frame offset does not match the supplied parameters");
    }
    const double root_kex = std::sqrt(params.kappa_ex);
    std::vector<cdouble> out(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const cdouble s_in = traj.info().pump_amplitude + drive.injected_field(traj.time(i));
        out[i] = s_in - root_kex * traj.a()[i];
    }
    return out;
}

struct LimitCycle {
    double amplitude = 0.0;  // mean |a| over the final half, sqrt(photons)
    double frequency = 0.0;  // rad/s, slope of the unwrapped phase of a
};

class NoLimitCycle : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kLimitCycleDriftTolerance = 0.01;

// Unwrapped phase of a complex series.
inline std::vector<double> unwrapped_phase(std::span<const cdouble> x) {
    std::vector<double> phase(x.size());
    double prev = 0.0;
    double offset = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double raw = std::arg(x[i]);
        if (i > 0) {
            const double jump = raw - prev;
            if (jump > std::numbers::pi) offset -= kTwoPi;
            if (jump < -std::numbers::pi) offset += kTwoPi;
        }
        prev = raw;
        phase[i] = raw + offset;
    }
    return phase;
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

// Ordinary least squares y = intercept + slope * x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line needs >= 2 matching points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_line: degenerate abscissa");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

// Slope of a uniformly sampled series against time (t = i * dt).
inline double uniform_slope(std::span<const double> y, double dt) {
    const double n = static_cast<double>(y.size());
    const double mi = 0.5 * (n - 1.0);
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double di = static_cast<double>(i) - mi;
        sxx += di * di;
        sxy += di * y[i];
    }
    return sxy / sxx / dt;
}

inline LimitCycle limit_cycle_summary(const ComplexTrajectory& traj) {
    const std::size_t n = traj.size();
    if (n < 8) throw NoLimitCycle("no limit cycle: trajectory too short");
    const std::size_t half = n / 2;
    const std::size_t q3 = half + (n - half) / 2;
    auto mean_abs = [&](std::size_t from, std::size_t to) {
        double s = 0.0;
        for (std::size_t i = from; i < to; ++i) s += std::abs(traj.a()[i]);
        return s / static_cast<double>(to - from);
    };
    const double m3 = mean_abs(half, q3);
    const double m4 = mean_abs(q3, n);
    if (!(m4 > 0.0) || std::abs(m4 - m3) > kLimitCycleDriftTolerance * m4) {
        throw NoLimitCycle("no limit cycle: amplitude drifts by " + std::to_string(std::abs(m4 - m3) / m4 * 100.0) +
                           "% between the last two quarters");
    }
    const auto phase = unwrapped_phase(traj.a().subspan(half));
    return {mean_abs(half, n), uniform_slope(phase, traj.dt())};
}

}  // namespace backaction
