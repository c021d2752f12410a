#pragma once

// Closed-form dynamical-backaction algebra for the linearized two-mode model
// and the exact 2x2 linear-stability check it is measured against.

#include <cmath>
#include <complex>
#include <stdexcept>
#include <utility>

#include "backaction/system_params.hpp"

namespace backaction {

using cdouble = std::complex<double>;

struct SelfEnergy {
    double damping_shift = 0.0;    // change of the energy decay rate
    double frequency_shift = 0.0;  // shift of the resonance (eigenvalue imaginary part)
};

inline double cooperativity(const SystemParams& p) { return 4.0 * p.g * p.g / (p.kappa() * p.gamma_m); }

// Backaction on the cavity with the mechanics adiabatically eliminated
// (gamma_m >> kappa). Sigma = g^2 / (gamma_m/2 - i delta).
inline SelfEnergy cavity_self_energy(const SystemParams& p, double delta) {
    const cdouble sigma = p.g * p.g / cdouble(0.5 * p.gamma_m, -delta);
    return {-2.0 * sigma.real(), -sigma.imag()};
}

// Backaction on the mechanics with the cavity adiabatically eliminated
// (kappa >> gamma_m). Sigma = g^2 / (kappa/2 - i delta). The detuning sits on
// the cavity in the drift matrix, so the mechanical frequency shift carries
// the opposite sign: mechanical(kappa, gamma, delta) == cavity(gamma, kappa, -delta).
inline SelfEnergy mechanical_self_energy(const SystemParams& p, double delta) {
    const cdouble sigma = p.g * p.g / cdouble(0.5 * p.kappa(), -delta);
    return {-2.0 * sigma.real(), sigma.imag()};
}

// Eigenvalues of M = [[i delta - kappa/2, i g], [-i g, -gamma_m/2]] acting on
// (a*, b). The first element has the larger real part.
inline std::pair<cdouble, cdouble> linear_eigenvalues(const SystemParams& p, double delta) {
    const cdouble m11(-0.5 * p.kappa(), delta);
    const cdouble m22(-0.5 * p.gamma_m, 0.0);
    const cdouble half_trace = 0.5 * (m11 + m22);
    const cdouble half_diff = 0.5 * (m11 - m22);
    const double g2 = p.g * p.g;
    // (lambda - m11)(lambda - m22) = (i g)(-i g) = g^2
    const cdouble root = std::sqrt(half_diff * half_diff + g2);
    // Larger-magnitude root first, the other through the product to avoid cancellation.
    const cdouble q = (std::real(std::conj(half_trace) * root) >= 0.0) ? half_trace + root : half_trace - root;
    const cdouble det = m11 * m22 - g2;
    cdouble l1 = q;
    cdouble l2 = (q == cdouble(0.0)) ? cdouble(0.0) : det / q;
    if (l2.real() > l1.real()) std::swap(l1, l2);
    return {l1, l2};
}

inline double masing_threshold_g(const SystemParams& p) { return 0.5 * std::sqrt(p.kappa() * p.gamma_m); }

// Auxiliary-mode sideband cooling expressed as a damping substitution.
inline double effective_mechanical_damping(double gamma_m, double aux_cooperativity) {
    if (!(aux_cooperativity >= 0.0)) {
        throw std::invalid_argument("auxiliary cooperativity must be non-negative");
    }
    return gamma_m * (1.0 + aux_cooperativity);
}

}  // namespace backaction
