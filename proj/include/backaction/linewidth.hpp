#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "backaction/backaction.hpp"
#include "backaction/lorentzian.hpp"
#include "backaction/parallel.hpp"
#include "backaction/random.hpp"
#include "backaction/simulate.hpp"
#include "backaction/spectrum.hpp"

namespace backaction {

struct LinewidthSettings {
    std::uint64_t seed = 1;
    double dt = 0.0;                  // 0 selects a step at half the stability bound
    std::size_t segment_len = 0;      // 0 selects fwhm/rbw >= kMinLinesPerBin at the narrowest line
    std::size_t averages = 200;       // Welch segments (50 % overlap)
    double record_interval = 0.0;     // 0 records every ~0.02/kappa; the line lives within a few kappa
    double window_fwhms = 4.0;        // fit window half-width in expected line widths
    bool keep_spectra = false;
    unsigned jobs = 1;
};

inline constexpr double kMinLinesPerBin = 16.0;

struct LinewidthRow {
    double cooperativity = 0.0;
    double expected_fwhm = 0.0;  // kappa (1 - C)
    double eigen_fwhm = 0.0;     // -2 Re of the slow eigenvalue
    std::optional<LorentzianFit> fit;
    double parseval_error = 0.0;
    std::optional<Spectrum> spectrum;  // kept on request
    std::string error;
};

struct LinewidthTable {
    std::vector<LinewidthRow> rows;
    double resolution_bandwidth = 0.0;
    std::size_t segment_len = 0;
    double dt = 0.0;               // integration step
    double sample_interval = 0.0;  // spacing of the analysed samples
    std::optional<LineFit> trend;  // fwhm = intercept + slope * C over successful rows

    std::optional<double> threshold_cooperativity() const {
        if (!trend || trend->slope == 0.0) return std::nullopt;
        return -trend->intercept / trend->slope;
    }
};

// Emitted line width of the linear model against cooperativity. Rows are
// independent: a failed fit is recorded in its row and the sweep continues.
inline LinewidthTable linewidth_vs_cooperativity(const SystemParams& base, std::span<const double> cooperativities,
                                                 const LinewidthSettings& settings) {
    if (cooperativities.empty()) throw std::invalid_argument("linewidth sweep needs at least one cooperativity");
    const double kappa = base.kappa();
    double c_max = 0.0;
    for (double c : cooperativities) {
        if (!(c >= 0.0 && c < 1.0)) throw std::invalid_argument("linewidth sweep requires 0 <= C < 1");
        c_max = std::max(c_max, c);
    }

    LinewidthTable table;
    const SystemParams strongest = with_cooperativity(base, c_max);
    table.dt = settings.dt > 0.0 ? settings.dt : max_stable_dt(strongest, Frame::sideband_rotating, 0.5);
    const double narrowest = -2.0 * linear_eigenvalues(strongest, strongest.pump_detuning).first.real();
    const double interval = settings.record_interval > 0.0 ? settings.record_interval : 0.02 / kappa;
    const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(interval / table.dt));
    table.sample_interval = table.dt * static_cast<double>(stride);
    table.segment_len = settings.segment_len ? settings.segment_len
                                             : segment_length_for(narrowest / kMinLinesPerBin, table.sample_interval);
    table.resolution_bandwidth = kTwoPi / (static_cast<double>(table.segment_len) * table.sample_interval);
    const double duration = table.sample_interval * static_cast<double>(table.segment_len) *
                            (0.5 * static_cast<double>(settings.averages) + 0.5);

    table.rows.resize(cooperativities.size());
    parallel_for(cooperativities.size(), settings.jobs, [&](std::size_t i) {
        LinewidthRow& row = table.rows[i];
        row.cooperativity = cooperativities[i];
        row.expected_fwhm = kappa * (1.0 - row.cooperativity);
        const SystemParams p = with_cooperativity(base, row.cooperativity);
        const auto slow = linear_eigenvalues(p, p.pump_detuning).first;
        row.eigen_fwhm = -2.0 * slow.real();
        try {
            SimSettings sim;
            sim.dt = table.dt;
            sim.duration = duration;
            sim.seed = derive_seed(settings.seed, i);
            sim.record_stride = stride;
            const DriveSpec drive = noise_drive(p);
            const auto traj = simulate_linear(p, drive, sim);
            const auto out = output_field(traj, p, drive);
            auto spec = welch_psd(out, traj.dt(), table.segment_len, 0.5, Window::hann);
            row.parseval_error = spec.parseval_error();
            // The cavity envelope a rotates at -Im(lambda) in this frame.
            const double center = -slow.imag();
            const double half = settings.window_fwhms * std::max(row.eigen_fwhm, row.expected_fwhm);
            row.fit = fit_lorentzian(spec, {center - half, center + half});
            if (settings.keep_spectra) row.spectrum = std::move(spec);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    });
    std::vector<double> cs;
    std::vector<double> widths;
    for (const auto& row : table.rows) {
        if (row.fit) {
            cs.push_back(row.cooperativity);
            widths.push_back(row.fit->fwhm);
        }
    }
    if (cs.size() >= 2) table.trend = fit_line(cs, widths);
    return table;
}

}  // namespace backaction
