#pragma once

#include <complex>
#include <cstddef>
#include <mutex>
#include <new>
#include <stdexcept>
#include <vector>

#include <fftw3.h>

namespace spinpump {

/// Allocator returning FFTW-aligned storage so every buffer matches the
/// alignment a plan was created with.
template <class T>
struct FftwAllocator {
    using value_type = T;
    FftwAllocator() = default;
    template <class U>
    FftwAllocator(const FftwAllocator<U>&) noexcept {}
    T* allocate(std::size_t n) {
        void* p = fftw_malloc(n * sizeof(T));
        if (!p) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, std::size_t) noexcept { fftw_free(p); }
    template <class U>
    bool operator==(const FftwAllocator<U>&) const noexcept { return true; }
};

using cplx = std::complex<double>;
using cvec = std::vector<cplx, FftwAllocator<cplx>>;

namespace detail {
// The FFTW planner is not thread-safe; execution is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex mu;
    return mu;
}
}  // namespace detail

/// Unnormalized 1D complex transform pair of fixed length. FFTW_ESTIMATE keeps
/// the algorithm choice, and therefore the bits, independent of timing.
class FftPair {
public:
    explicit FftPair(std::size_t n) : n_(n) {
        if (n == 0) throw std::invalid_argument("FFT length must be positive");
        cvec a(n), b(n);
        std::lock_guard lk(detail::fftw_planner_mutex());
        fwd_ = fftw_plan_dft_1d(static_cast<int>(n), raw(a), raw(b), FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_1d(static_cast<int>(n), raw(a), raw(b), FFTW_BACKWARD, FFTW_ESTIMATE);
        if (!fwd_ || !bwd_) throw std::runtime_error("FFTW plan creation failed");
    }
    FftPair(const FftPair&) = delete;
    FftPair& operator=(const FftPair&) = delete;
    ~FftPair() {
        std::lock_guard lk(detail::fftw_planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }

    std::size_t size() const { return n_; }
    void forward(const cvec& in, cvec& out) const { fftw_execute_dft(fwd_, raw(in), raw(out)); }
    void backward(const cvec& in, cvec& out) const { fftw_execute_dft(bwd_, raw(in), raw(out)); }

private:
    static fftw_complex* raw(const cvec& v) {
        return reinterpret_cast<fftw_complex*>(const_cast<cplx*>(v.data()));
    }
    std::size_t n_;
    fftw_plan fwd_ = nullptr, bwd_ = nullptr;
};

}  // namespace spinpump
