#pragma once

#include <complex>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "backaction/system_params.hpp"

namespace backaction {

using cdouble = std::complex<double>;

// sideband_rotating: both envelopes slow, cavity frame at the emission sideband.
// pump_rotating: frame at the pump frequency, mechanics keeps its omega_m rotation.
enum class Frame { sideband_rotating, pump_rotating };

inline const char* to_string(Frame f) {
    return f == Frame::sideband_rotating ? "sideband-rotating" : "pump-rotating";
}

// Deterministic drive applied on top of the pump. The injected tone enters
// through the external port as injected_amplitude * exp(-i injected_detuning t)
// in the simulation frame, so injected_detuning is omega_inj minus the frame
// reference frequency.
struct DriveSpec {
    double injected_amplitude = 0.0;  // sqrt(photons/s)
    double injected_detuning = 0.0;   // rad/s
    double noise_quanta_cavity = 0.0;
    double noise_quanta_mech = 0.0;

    void validate() const {
        if (!(injected_amplitude >= 0.0)) throw std::invalid_argument("injected_amplitude must be >= 0");
        if (!(noise_quanta_cavity >= 0.0) || !(noise_quanta_mech >= 0.0)) {
            throw std::invalid_argument("noise quanta must be >= 0");
        }
    }

    cdouble injected_field(double t) const {
        if (injected_amplitude == 0.0) return {0.0, 0.0};
        return injected_amplitude * std::polar(1.0, -injected_detuning * t);
    }
};

inline DriveSpec noise_drive(const SystemParams& p) {
    DriveSpec d;
    d.noise_quanta_cavity = p.noise_quanta_cavity;
    d.noise_quanta_mech = p.noise_quanta_mech;
    return d;
}

struct TrajectoryInfo {
    bool diverged = false;
    double frame_offset = 0.0;    // pump_detuning (sideband frame) or omega_m + pump_detuning (pump frame)
    double pump_amplitude = 0.0;  // sqrt(photons/s) entering the external port
};

class ComplexTrajectory {
public:
    ComplexTrajectory(double dt, double t0, std::vector<cdouble> a, std::vector<cdouble> b, std::uint64_t seed,
                      Frame frame, TrajectoryInfo info = {})
        : dt_(dt), t0_(t0), a_(std::move(a)), b_(std::move(b)), seed_(seed), frame_(frame), info_(info) {
        if (!(dt_ > 0.0)) throw std::invalid_argument("trajectory dt must be positive");
        if (a_.size() != b_.size()) throw std::invalid_argument("trajectory envelopes differ in length");
        if (a_.size() < 2) throw std::invalid_argument("trajectory needs at least two samples");
    }

    double dt() const { return dt_; }
    double t0() const { return t0_; }
    double time(std::size_t i) const { return t0_ + dt_ * static_cast<double>(i); }
    double duration() const { return dt_ * static_cast<double>(a_.size() - 1); }
    std::size_t size() const { return a_.size(); }
    std::span<const cdouble> a() const { return a_; }
    std::span<const cdouble> b() const { return b_; }
    std::uint64_t seed() const { return seed_; }
    Frame frame() const { return frame_; }
    bool diverged() const { return info_.diverged; }
    const TrajectoryInfo& info() const { return info_; }

    // Trailing part starting at sample `first`, keeping metadata.
    ComplexTrajectory tail(std::size_t first) const {
        if (first + 2 > a_.size()) throw std::invalid_argument("trajectory tail shorter than two samples");
        return ComplexTrajectory(dt_, time(first), {a_.begin() + first, a_.end()}, {b_.begin() + first, b_.end()},
                                 seed_, frame_, info_);
    }

private:
    double dt_;
    double t0_;
    std::vector<cdouble> a_;
    std::vector<cdouble> b_;
    std::uint64_t seed_;
    Frame frame_;
    TrajectoryInfo info_;
};

inline std::string format_number(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

// Column order: t, Re a, Im a, Re b, Im b; every `stride`-th sample.
inline void write_trajectory_csv(std::ostream& os, const ComplexTrajectory& traj, std::size_t stride = 1) {
    if (stride == 0) throw std::invalid_argument("trajectory stride must be positive");
    os << "t,re_a,im_a,re_b,im_b\n";
    for (std::size_t i = 0; i < traj.size(); i += stride) {
        os << format_number(traj.time(i)) << ',' << format_number(traj.a()[i].real()) << ','
           << format_number(traj.a()[i].imag()) << ',' << format_number(traj.b()[i].real()) << ','
           << format_number(traj.b()[i].imag()) << '\n';
    }
}

// Same columns as the CSV dump, as native-endian float64 rows without a header.
inline void write_trajectory_binary(std::ostream& os, const ComplexTrajectory& traj, std::size_t stride = 1) {
    if (stride == 0) throw std::invalid_argument("trajectory stride must be positive");
    for (std::size_t i = 0; i < traj.size(); i += stride) {
        const double row[5] = {traj.time(i), traj.a()[i].real(), traj.a()[i].imag(), traj.b()[i].real(),
                               traj.b()[i].imag()};
        os.write(reinterpret_cast<const char*>(row), sizeof row);
    }
}

}  // namespace backaction
