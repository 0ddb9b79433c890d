#pragma once

#include <complex>
#include <cstring>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

#include "epr/error.hpp"

namespace epr {

namespace detail {
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace detail

/*!
 * Real 2D FFT of a fixed h x w shape (row-major), plus its inverse.
 *
 * Plans are created once under a global lock (the FFTW planner is not
 * thread-safe) with FFTW_ESTIMATE | FFTW_UNALIGNED, so execution picks the same
 * codelets for every buffer and results are bit-reproducible. Executing the plans
 * from several threads at once is safe.
 *
 * The inverse is unnormalized: inverse(forward(x)) == w*h*x.
 */
class Fft2d {
public:
    using Complex = std::complex<double>;

    Fft2d(int width, int height) : width_(width), height_(height) {
        if (width <= 0 || height <= 0) throw EstimatorError("Fft2d: empty shape");
        std::vector<double> real(static_cast<std::size_t>(width) * height);
        std::vector<Complex> spec(spectrum_size());
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        std::lock_guard lock(detail::fftw_planner_mutex());
        forward_.reset(fftw_plan_dft_r2c_2d(height, width, real.data(), as_fftw(spec.data()), flags));
        inverse_.reset(fftw_plan_dft_c2r_2d(height, width, as_fftw(spec.data()), real.data(), flags));
        if (!forward_ || !inverse_) throw EstimatorError("Fft2d: FFTW planning failed");
    }

    [[nodiscard]] int width() const { return width_; }
    [[nodiscard]] int height() const { return height_; }
    [[nodiscard]] std::size_t real_size() const { return static_cast<std::size_t>(width_) * height_; }
    [[nodiscard]] std::size_t spectrum_size() const {
        return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_ / 2 + 1);
    }

    void forward(std::span<const double> in, std::span<Complex> out) const {
        check(in.size() == real_size() && out.size() == spectrum_size());
        // out-of-place r2c leaves the input untouched
        fftw_execute_dft_r2c(forward_.get(), const_cast<double*>(in.data()), as_fftw(out.data()));
    }

    //! c2r overwrites its input, so the spectrum is copied first.
    void inverse(std::span<const Complex> in, std::span<double> out) const {
        check(in.size() == spectrum_size() && out.size() == real_size());
        std::vector<Complex> scratch(in.begin(), in.end());
        fftw_execute_dft_c2r(inverse_.get(), as_fftw(scratch.data()), out.data());
    }

private:
    struct PlanDeleter {
        void operator()(fftw_plan p) const {
            std::lock_guard lock(detail::fftw_planner_mutex());
            fftw_destroy_plan(p);
        }
    };
    using Plan = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDeleter>;

    static fftw_complex* as_fftw(Complex* p) { return reinterpret_cast<fftw_complex*>(p); }
    static void check(bool ok) {
        if (!ok) throw EstimatorError("Fft2d: buffer size mismatch");
    }

    int width_;
    int height_;
    Plan forward_;
    Plan inverse_;
};

} // namespace epr
