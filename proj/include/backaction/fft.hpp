#pragma once

#include <complex>
#include <cstddef>
#include <mutex>
#include <span>
#include <stdexcept>

#include <fftw3.h>

namespace backaction {

namespace detail {
// FFTW's planner is not thread-safe; execution on distinct plans is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace detail

// Forward complex DFT, X_k = sum_n x_n exp(-2 pi i k n / N), on an owned buffer.
class ForwardFft {
public:
    explicit ForwardFft(std::size_t n) : n_(n) {
        if (n == 0) throw std::invalid_argument("FFT length must be positive");
        std::lock_guard lock(detail::fftw_planner_mutex());
        in_ = fftw_alloc_complex(n);
        out_ = fftw_alloc_complex(n);
        plan_ = fftw_plan_dft_1d(static_cast<int>(n), in_, out_, FFTW_FORWARD, FFTW_ESTIMATE);
        if (!plan_ || !in_ || !out_) {
            release();
            throw std::runtime_error("FFTW plan creation failed");
        }
    }
    ForwardFft(const ForwardFft&) = delete;
    ForwardFft& operator=(const ForwardFft&) = delete;
    ~ForwardFft() {
        std::lock_guard lock(detail::fftw_planner_mutex());
        release();
    }

    std::size_t size() const { return n_; }
    std::span<std::complex<double>> input() { return {reinterpret_cast<std::complex<double>*>(in_), n_}; }
    std::span<const std::complex<double>> output() const {
        return {reinterpret_cast<const std::complex<double>*>(out_), n_};
    }
    void execute() { fftw_execute(plan_); }

private:
    void release() {
        if (plan_) fftw_destroy_plan(plan_);
        if (in_) fftw_free(in_);
        if (out_) fftw_free(out_);
        plan_ = nullptr;
        in_ = out_ = nullptr;
    }

    std::size_t n_;
    fftw_complex* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

}  // namespace backaction
