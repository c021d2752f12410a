#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace backaction {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kHbar = 1.054571817e-34;  // J s

constexpr double hz_to_rad(double f_hz) { return kTwoPi * f_hz; }
constexpr double rad_to_hz(double w) { return w / kTwoPi; }

inline double dbm_to_watts(double p_dbm) { return 1e-3 * std::pow(10.0, p_dbm / 10.0); }

inline double watts_to_dbm(double p_watts) {
    if (!(p_watts > 0.0)) {
        throw std::invalid_argument("watts_to_dbm: power must be positive");
    }
    return 10.0 * std::log10(p_watts / 1e-3);
}

inline double power_ratio_db(double numerator, double denominator) {
    return 10.0 * std::log10(numerator / denominator);
}

// Photon flux (photons/s) of a tone at angular frequency omega carrying p_watts.
inline double watts_to_photon_flux(double p_watts, double omega) { return p_watts / (kHbar * omega); }
inline double photon_flux_to_watts(double flux, double omega) { return flux * kHbar * omega; }

}  // namespace backaction
