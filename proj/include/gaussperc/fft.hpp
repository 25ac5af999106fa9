#pragma once

#include <complex>
#include <cstddef>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

#include "gaussperc/error.hpp"

namespace gaussperc {

/// FFTW planner calls are not thread-safe; execution on distinct plans is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Smallest m >= n whose prime factors are all in {2, 3, 5, 7}.
inline std::size_t next_fast_size(std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2u, 3u, 5u, 7u})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

/// In-place forward complex DFT, unnormalized: X_k = sum_j x_j exp(-2 pi i j.k / m).
class FftPlan {
 public:
  explicit FftPlan(std::vector<int> dims) : dims_(std::move(dims)) {
    std::size_t n = 1;
    for (int d : dims_) n *= static_cast<std::size_t>(d);
    size_ = n;
    data_ = fftw_alloc_complex(n);
    if (!data_) throw Error("FFTW allocation failed");
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft(static_cast<int>(dims_.size()), dims_.data(), data_, data_, FFTW_FORWARD, FFTW_ESTIMATE);
    if (!plan_) {
      fftw_free(data_);
      throw Error("FFTW planning failed");
    }
  }

  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  ~FftPlan() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(data_);
  }

  std::span<std::complex<double>> data() {
    return {reinterpret_cast<std::complex<double>*>(data_), size_};
  }
  std::size_t size() const { return size_; }
  const std::vector<int>& dims() const { return dims_; }

  void execute() { fftw_execute(plan_); }

 private:
  std::vector<int> dims_;
  std::size_t size_ = 0;
  fftw_complex* data_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace gaussperc
