#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "backaction/units.hpp"

namespace backaction {

class ParameterError : public std::invalid_argument {
public:
    explicit ParameterError(std::vector<std::string> violations)
        : std::invalid_argument(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::ostringstream os;
        for (std::size_t i = 0; i < v.size(); ++i) {
            os << (i ? "; " : "") << v[i];
        }
        return os.str();
    }
    std::vector<std::string> violations_;
};

inline constexpr double kMinSidebandResolution = 10.0;

// Two-mode (cavity + mechanics) model with a pump near the upper motional
// sideband. Every rate and frequency is an angular quantity in rad/s.
struct SystemParams {
    double omega_c = 0.0;        // cavity resonance
    double kappa_0 = 0.0;        // intrinsic cavity energy decay
    double kappa_ex = 0.0;       // external coupling
    double omega_m = 0.0;        // mechanical resonance
    double gamma_m = 0.0;        // mechanical energy decay (after any auxiliary damping)
    double g0 = 0.0;             // vacuum optomechanical coupling
    double pump_detuning = 0.0;  // offset from the upper sideband, Delta = omega_m + pump_detuning
    double g = 0.0;              // multiphoton coupling g0 * |alpha_0|
    double noise_quanta_cavity = 0.0;
    double noise_quanta_mech = 0.0;
    bool allow_unresolved_sidebands = false;

    double kappa() const { return kappa_0 + kappa_ex; }
    double sideband_resolution() const { return omega_m / kappa(); }
    double pump_offset() const { return omega_m + pump_detuning; }
    double pump_frequency() const { return omega_c + pump_offset(); }

    std::vector<std::string> violations() const {
        std::vector<std::string> out;
        auto positive = [&](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                out.push_back(std::string(name) + " must be positive and finite");
            }
        };
        positive(omega_c, "omega_c");
        positive(kappa_0, "kappa_0");
        positive(kappa_ex, "kappa_ex");
        positive(omega_m, "omega_m");
        positive(gamma_m, "gamma_m");
        positive(g0, "g0");
        if (!(g >= 0.0) || !std::isfinite(g)) out.push_back("g must be non-negative and finite");
        if (!std::isfinite(pump_detuning)) out.push_back("pump_detuning must be finite");
        if (!(noise_quanta_cavity >= 0.0)) out.push_back("noise_quanta_cavity must be >= 0");
        if (!(noise_quanta_mech >= 0.0)) out.push_back("noise_quanta_mech must be >= 0");
        if (omega_m > 0.0 && gamma_m > 0.0 && !(omega_m / gamma_m > 1.0)) {
            out.push_back("mechanical quality factor omega_m/gamma_m must exceed 1");
        }
        if (omega_m > 0.0 && kappa() > 0.0 && !allow_unresolved_sidebands &&
            sideband_resolution() < kMinSidebandResolution) {
            std::ostringstream os;
            os << "sideband resolution omega_m/kappa = " << sideband_resolution()
               << " is below " << kMinSidebandResolution
               << "; the rotating-frame model requires resolved sidebands (set the override to proceed)";
            out.push_back(os.str());
        }
        return out;
    }

    const SystemParams& validated() const {
        if (auto v = violations(); !v.empty()) throw ParameterError(std::move(v));
        return *this;
    }
};

// Device defaults: omega_c = 2pi 4.08 GHz, omega_m = 2pi 6.5 MHz, g0 = 2pi 60 Hz,
// gamma_eff = 2pi 440 kHz and kappa = gamma_eff / 2.5, split evenly between
// intrinsic and external loss.
inline SystemParams default_device() {
    SystemParams p;
    p.omega_c = hz_to_rad(4.08e9);
    p.omega_m = hz_to_rad(6.5e6);
    p.g0 = hz_to_rad(60.0);
    p.gamma_m = hz_to_rad(440e3);
    const double kappa = p.gamma_m / 2.5;
    p.kappa_0 = 0.5 * kappa;
    p.kappa_ex = 0.5 * kappa;
    p.noise_quanta_cavity = 1.0;
    p.noise_quanta_mech = 1.0;
    return p;
}

inline SystemParams with_coupling(SystemParams p, double g) {
    p.g = g;
    return p;
}

// g such that 4 g^2 / (kappa gamma_m) equals the requested cooperativity.
inline double coupling_for_cooperativity(const SystemParams& p, double cooperativity) {
    if (!(cooperativity >= 0.0)) throw std::invalid_argument("cooperativity must be >= 0");
    return 0.5 * std::sqrt(cooperativity * p.kappa() * p.gamma_m);
}

inline SystemParams with_cooperativity(SystemParams p, double cooperativity) {
    p.g = coupling_for_cooperativity(p, cooperativity);
    return p;
}

// Intracavity pump photons per unit pump photon flux: kappa_ex / ((kappa/2)^2 + Delta^2).
inline double pump_photons_per_flux(const SystemParams& p) {
    const double half = 0.5 * p.kappa();
    const double delta = p.pump_offset();
    return p.kappa_ex / (half * half + delta * delta);
}

inline double pump_to_multiphoton_g(double pump_watts, const SystemParams& p) {
    if (!(pump_watts >= 0.0)) throw std::invalid_argument("pump power must be non-negative");
    const double flux = watts_to_photon_flux(pump_watts, p.pump_frequency());
    return p.g0 * std::sqrt(pump_photons_per_flux(p) * flux);
}

inline double pump_power_for_g(double g, const SystemParams& p) {
    const double n = (g / p.g0) * (g / p.g0);
    return photon_flux_to_watts(n / pump_photons_per_flux(p), p.pump_frequency());
}

// Pump field amplitude (sqrt(photons/s)) at the input port that yields coupling g.
inline double pump_amplitude_for_g(double g, const SystemParams& p) {
    const double n = (g / p.g0) * (g / p.g0);
    return std::sqrt(n / pump_photons_per_flux(p));
}

}  // namespace backaction
