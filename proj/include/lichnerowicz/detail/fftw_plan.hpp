#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <cstring>
#include <memory>
#include <mutex>
#include <new>
#include <span>
#include <vector>

namespace lich::detail {

// The FFTW planner is not reentrant; execution with new-array interface is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwDeleter {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwDeleter>;

template <class T>
FftwBuffer<T> fftw_alloc(std::size_t n) {
  void* p = fftw_malloc(sizeof(T) * (n == 0 ? 1 : n));
  if (p == nullptr) throw std::bad_alloc();
  return FftwBuffer<T>(static_cast<T*>(p));
}

/// Real-to-complex / complex-to-real transform pair for one row-major shape.
/// The backward transform is normalized, so backward(forward(u)) == u.
class RealFftPlan {
 public:
  explicit RealFftPlan(const std::vector<int>& shape) : shape_(shape) {
    real_size_ = 1;
    for (int n : shape_) real_size_ *= static_cast<std::size_t>(n);
    complex_size_ = real_size_ / static_cast<std::size_t>(shape_.back()) *
                    static_cast<std::size_t>(shape_.back() / 2 + 1);

    auto in = fftw_alloc<double>(real_size_);
    auto out = fftw_alloc<fftw_complex>(complex_size_);
    std::lock_guard lock(fftw_planner_mutex());
    const int rank = static_cast<int>(shape_.size());
    forward_ = fftw_plan_dft_r2c(rank, shape_.data(), in.get(), out.get(),
                                 FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r(rank, shape_.data(), out.get(), in.get(),
                                  FFTW_ESTIMATE);
  }

  RealFftPlan(const RealFftPlan&) = delete;
  RealFftPlan& operator=(const RealFftPlan&) = delete;

  ~RealFftPlan() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  std::size_t real_size() const noexcept { return real_size_; }
  std::size_t complex_size() const noexcept { return complex_size_; }

  std::vector<std::complex<double>> forward(std::span<const double> values) const {
    auto in = fftw_alloc<double>(real_size_);
    auto out = fftw_alloc<fftw_complex>(complex_size_);
    std::memcpy(in.get(), values.data(), sizeof(double) * real_size_);
    fftw_execute_dft_r2c(forward_, in.get(), out.get());
    std::vector<std::complex<double>> spectrum(complex_size_);
    std::memcpy(static_cast<void*>(spectrum.data()), out.get(),
                sizeof(fftw_complex) * complex_size_);
    return spectrum;
  }

  std::vector<double> backward(std::span<const std::complex<double>> spectrum) const {
    auto in = fftw_alloc<fftw_complex>(complex_size_);
    auto out = fftw_alloc<double>(real_size_);
    std::memcpy(in.get(), static_cast<const void*>(spectrum.data()),
                sizeof(fftw_complex) * complex_size_);
    fftw_execute_dft_c2r(backward_, in.get(), out.get());
    std::vector<double> values(real_size_);
    const double scale = 1.0 / static_cast<double>(real_size_);
    for (std::size_t i = 0; i < real_size_; ++i) values[i] = out.get()[i] * scale;
    return values;
  }

 private:
  std::vector<int> shape_;
  std::size_t real_size_ = 0;
  std::size_t complex_size_ = 0;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

}  // namespace lich::detail
