#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "backaction/spectrum.hpp"

namespace backaction {

// psd(w) = offset + (area / pi) * (fwhm/2) / ((w - center)^2 + (fwhm/2)^2);
// `area` is the integrated line power.
struct LorentzianFit {
    double center = 0.0;
    double fwhm = 0.0;
    double area = 0.0;
    double offset = 0.0;
    double residual_rms = 0.0;  // rms residual relative to the fitted peak height
    int iterations = 0;
    bool converged = false;

    double operator()(double w) const {
        const double hw = 0.5 * fwhm;
        const double u = w - center;
        return offset + area / std::numbers::pi * hw / (u * u + hw * hw);
    }
    double peak_height() const { return 2.0 * area / (std::numbers::pi * fwhm); }
};

class FitError : public std::runtime_error {
public:
    FitError(const std::string& what, LorentzianFit best) : std::runtime_error(what), best_(best) {}
    const LorentzianFit& best() const { return best_; }

private:
    LorentzianFit best_;
};

inline constexpr std::size_t kMinFitPoints = 16;
inline constexpr int kMaxFitIterations = 200;
inline constexpr double kFitStepTolerance = 1e-8;

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline LorentzianFit initial_guess(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    const std::size_t edge = std::max<std::size_t>(2, n / 10);
    std::vector<double> edges(y.begin(), y.begin() + edge);
    edges.insert(edges.end(), y.end() - edge, y.end());
    LorentzianFit f;
    f.offset = median(edges);
    const auto peak = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
    f.center = x[peak];
    const double height = y[peak] - f.offset;
    const double half = f.offset + 0.5 * height;
    auto crossing = [&](std::size_t i0, std::size_t i1) {
        return x[i0] + (half - y[i0]) * (x[i1] - x[i0]) / (y[i1] - y[i0]);
    };
    double left = x.front();
    for (std::size_t i = peak; i > 0; --i) {
        if (y[i - 1] < half) {
            left = crossing(i - 1, i);
            break;
        }
    }
    double right = x.back();
    for (std::size_t i = peak; i + 1 < n; ++i) {
        if (y[i + 1] < half) {
            right = crossing(i, i + 1);
            break;
        }
    }
    f.fwhm = std::max(right - left, std::abs(x[1] - x[0]));
    f.area = height * std::numbers::pi * 0.5 * f.fwhm;
    return f;
}

}  // namespace detail

// Levenberg-Marquardt least squares in linear power units. Converged when the
// relative parameter step drops below 1e-8; gives up after 200 iterations.
inline LorentzianFit fit_lorentzian(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("fit_lorentzian: size mismatch");
    if (x.size() < kMinFitPoints) {
        throw std::invalid_argument("fit_lorentzian: window holds fewer than " + std::to_string(kMinFitPoints) +
                                    " points");
    }
    using Vec4 = Eigen::Vector4d;
    using Mat4 = Eigen::Matrix4d;

    LorentzianFit fit = detail::initial_guess(x, y);
    const double y_scale = std::max(std::abs(*std::max_element(y.begin(), y.end())), 1e-300);
    const double span = std::abs(x.back() - x.front());

    auto pack = [](const LorentzianFit& f) { return Vec4(f.center, f.fwhm, f.area, f.offset); };
    auto unpack = [](const Vec4& p) {
        LorentzianFit f;
        f.center = p[0];
        f.fwhm = p[1];
        f.area = p[2];
        f.offset = p[3];
        return f;
    };
    auto cost = [&](const LorentzianFit& f) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = (y[i] - f(x[i])) / y_scale;
            s += r * r;
        }
        return s;
    };

    Vec4 p = pack(fit);
    double current = cost(fit);
    double lambda = 1e-3;
    bool converged = false;
    int iter = 0;
    for (; iter < kMaxFitIterations && !converged; ++iter) {
        Mat4 jtj = Mat4::Zero();
        Vec4 jtr = Vec4::Zero();
        const double hw = 0.5 * p[1];
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double u = x[i] - p[0];
            const double d = u * u + hw * hw;
            const double amp = p[2] / std::numbers::pi;
            Vec4 j;
            j[0] = amp * hw * 2.0 * u / (d * d);
            j[1] = 0.5 * amp * (u * u - hw * hw) / (d * d);
            j[2] = hw / (std::numbers::pi * d);
            j[3] = 1.0;
            j /= y_scale;
            const double r = (y[i] - (p[3] + amp * hw / d)) / y_scale;
            jtj += j * j.transpose();
            jtr += j * r;
        }
        const Vec4 scale = Vec4(std::max(p[1], 1e-300), std::max(p[1], 1e-300), std::max(std::abs(p[2]), 1e-300),
                                std::max(std::abs(p[3]), fit.peak_height() * 1e-6 + 1e-300));
        bool accepted = false;
        while (!accepted) {
            Mat4 a = jtj;
            for (int k = 0; k < 4; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-300);
            const Vec4 step = a.ldlt().solve(jtr);
            const Vec4 trial = p + step;
            if (trial[1] > 0.0 && std::isfinite(trial.sum()) && std::abs(trial[0] - p[0]) < span) {
                const double c = cost(unpack(trial));
                if (c <= current) {
                    accepted = true;
                    const double rel = (step.cwiseAbs().array() / scale.array()).maxCoeff();
                    p = trial;
                    current = c;
                    fit = unpack(p);
                    lambda = std::max(lambda * 0.3, 1e-12);
                    if (rel < kFitStepTolerance) converged = true;
                    continue;
                }
            }
            lambda *= 10.0;
            if (lambda > 1e12) {
                // No descent direction left: already at the minimum to working precision.
                converged = true;
                break;
            }
        }
    }
    fit = unpack(p);
    fit.iterations = iter;
    fit.converged = converged;
    fit.residual_rms = std::sqrt(current / static_cast<double>(x.size())) * y_scale / std::abs(fit.peak_height());
    if (!converged) {
        throw FitError("fit_lorentzian: no convergence after " + std::to_string(iter) + " iterations", fit);
    }
    return fit;
}

inline LorentzianFit fit_lorentzian(const Spectrum& spec, FrequencyBand window) {
    const auto lo = std::lower_bound(spec.freqs.begin(), spec.freqs.end(), window.lo) - spec.freqs.begin();
    const auto hi = std::upper_bound(spec.freqs.begin(), spec.freqs.end(), window.hi) - spec.freqs.begin();
    if (hi <= lo) throw std::invalid_argument("fit_lorentzian: empty window");
    return fit_lorentzian(std::span<const double>(spec.freqs).subspan(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi - lo)),
                          std::span<const double>(spec.psd).subspan(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi - lo)));
}

}  // namespace backaction
