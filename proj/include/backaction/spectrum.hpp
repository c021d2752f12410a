#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "backaction/fft.hpp"
#include "backaction/trajectory.hpp"
#include "backaction/units.hpp"

namespace backaction {

enum class Window { hann, rect };

// Two-sided power spectral density of a complex envelope. A component
// A exp(i w t) appears at +w. Normalized so that sum(psd) * resolution_bandwidth
// equals the window-weighted mean square of the analysed samples.
struct Spectrum {
    std::vector<double> freqs;  // rad/s, ascending, uniform
    std::vector<double> psd;    // power per (rad/s)
    double resolution_bandwidth = 0.0;  // rad/s, bin spacing
    double total_power = 0.0;
    double signal_mean_square = 0.0;  // plain time-domain mean of |x|^2 over the analysed samples
    std::size_t segments = 0;
    Window window = Window::hann;

    std::size_t size() const { return freqs.size(); }
    double parseval_error() const { return std::abs(total_power - signal_mean_square) / signal_mean_square; }

    std::size_t nearest_bin(double w) const {
        const auto it = std::lower_bound(freqs.begin(), freqs.end(), w);
        if (it == freqs.begin()) return 0;
        if (it == freqs.end()) return freqs.size() - 1;
        const auto i = static_cast<std::size_t>(it - freqs.begin());
        return (w - freqs[i - 1] <= freqs[i] - w) ? i - 1 : i;
    }
};

class SpectrumError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline std::vector<double> make_window(Window w, std::size_t n) {
    std::vector<double> out(n, 1.0);
    if (w == Window::hann) {
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n)));
        }
    }
    return out;
}

inline Spectrum welch_psd(std::span<const cdouble> signal, double dt, std::size_t segment_len, double overlap = 0.5,
                          Window window = Window::hann) {
    if (!(dt > 0.0)) throw SpectrumError("welch_psd: dt must be positive");
    if (segment_len < 2 || segment_len > signal.size()) {
        throw SpectrumError("welch_psd: signal shorter than one segment");
    }
    if (!(overlap >= 0.0 && overlap < 1.0)) throw SpectrumError("welch_psd: overlap must lie in [0, 1)");
    for (const auto& x : signal) {
        if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) throw SpectrumError("welch_psd: non-finite input");
    }

    const std::size_t n = segment_len;
    const auto step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * (1.0 - overlap))));
    const std::size_t segments = 1 + (signal.size() - n) / step;
    const std::size_t covered = (segments - 1) * step + n;

    const auto w = make_window(window, n);
    double w2 = 0.0;
    for (double v : w) w2 += v * v;

    ForwardFft fft(n);
    std::vector<double> acc(n, 0.0);
    for (std::size_t s = 0; s < segments; ++s) {
        auto in = fft.input();
        const std::size_t start = s * step;
        for (std::size_t i = 0; i < n; ++i) in[i] = w[i] * signal[start + i];
        fft.execute();
        const auto out = fft.output();
        for (std::size_t k = 0; k < n; ++k) acc[k] += std::norm(out[k]);
    }

    Spectrum spec;
    spec.window = window;
    spec.segments = segments;
    spec.resolution_bandwidth = kTwoPi / (static_cast<double>(n) * dt);
    // Per-bin power |X_k|^2 / (N sum w^2), spread over one bin of width rbw.
    const double norm = 1.0 / (static_cast<double>(segments) * static_cast<double>(n) * w2 * spec.resolution_bandwidth);
    const auto half = static_cast<std::ptrdiff_t>(n / 2);
    const std::ptrdiff_t k_min = -half;
    const std::ptrdiff_t k_max = static_cast<std::ptrdiff_t>(n) - half - 1;
    spec.freqs.reserve(n);
    spec.psd.reserve(n);
    double total = 0.0;
    for (std::ptrdiff_t k = k_min; k <= k_max; ++k) {
        const auto idx = static_cast<std::size_t>((k + static_cast<std::ptrdiff_t>(n)) % static_cast<std::ptrdiff_t>(n));
        spec.freqs.push_back(static_cast<double>(k) * spec.resolution_bandwidth);
        spec.psd.push_back(acc[idx] * norm);
        total += acc[idx] * norm;
    }
    spec.total_power = total * spec.resolution_bandwidth;

    double ms = 0.0;
    for (std::size_t i = 0; i < covered; ++i) ms += std::norm(signal[i]);
    spec.signal_mean_square = ms / static_cast<double>(covered);
    return spec;
}

// Segment length (power of two) giving a bin spacing no larger than `max_rbw`.
inline std::size_t segment_length_for(double max_rbw, double dt) {
    const double needed = kTwoPi / (max_rbw * dt);
    std::size_t n = 16;
    while (static_cast<double>(n) < needed) n *= 2;
    return n;
}

// Welch spectrum of the second half of a record (the first half is left to
// transients). Bins are no wider than max_rbw unless that would leave fewer
// than seven half-overlapping segments.
inline Spectrum tail_spectrum(std::span<const cdouble> x, double dt, double max_rbw) {
    std::span<const cdouble> tail = x.subspan(x.size() / 2);
    std::size_t seg = segment_length_for(max_rbw, dt);
    while (seg > 16 && seg * 4 > tail.size()) seg /= 2;
    return welch_psd(tail, dt, seg, 0.5, Window::hann);
}

struct FrequencyBand {
    double lo;
    double hi;
};

inline constexpr int kPeakWindowBins = 3;

// Power within +-3 resolution bandwidths of the tallest bin, integrated with
// half-weighted end bins so a flat density returns exactly 6 rbw * density.
inline double emission_peak_power(const Spectrum& spec, std::optional<FrequencyBand> band = std::nullopt) {
    if (spec.psd.empty()) throw SpectrumError("emission_peak_power: empty spectrum");
    std::size_t lo = 0;
    std::size_t hi = spec.size();
    if (band) {
        lo = static_cast<std::size_t>(std::lower_bound(spec.freqs.begin(), spec.freqs.end(), band->lo) - spec.freqs.begin());
        hi = static_cast<std::size_t>(std::upper_bound(spec.freqs.begin(), spec.freqs.end(), band->hi) - spec.freqs.begin());
        if (lo >= hi) throw SpectrumError("emission_peak_power: band contains no bins");
    }
    const auto peak = static_cast<std::size_t>(std::max_element(spec.psd.begin() + lo, spec.psd.begin() + hi) - spec.psd.begin());
    double sum = 0.0;
    for (int k = -kPeakWindowBins; k <= kPeakWindowBins; ++k) {
        const auto i = static_cast<std::ptrdiff_t>(peak) + k;
        if (i < 0 || i >= static_cast<std::ptrdiff_t>(spec.size())) continue;
        const double weight = (std::abs(k) == kPeakWindowBins) ? 0.5 : 1.0;
        sum += weight * spec.psd[static_cast<std::size_t>(i)];
    }
    return sum * spec.resolution_bandwidth;
}

// x(t) exp(-i w t): moves a component at +w to zero frequency.
inline std::vector<cdouble> shift_frequency(std::span<const cdouble> x, double dt, double t0, double w) {
    std::vector<cdouble> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] * std::polar(1.0, -w * (t0 + dt * static_cast<double>(i)));
    }
    return out;
}

// Columns: freq_hz, psd_per_hz.
inline void write_spectrum_csv(std::ostream& os, const Spectrum& spec) {
    os << "freq_hz,psd_per_hz\n";
    for (std::size_t i = 0; i < spec.size(); ++i) {
        os << format_number(rad_to_hz(spec.freqs[i])) << ',' << format_number(spec.psd[i] * kTwoPi) << '\n';
    }
}

}  // namespace backaction
