#pragma once

#include <complex>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include <fftw3.h>

#include "errors.hpp"

namespace mfe {

// Process-wide cache of FFTW plans keyed by (dim, points per axis, sign).
// Planning is serialized; execution goes through the new-array interface,
// which FFTW documents as thread-safe, so concurrent transforms are fine.
// Plans are made with FFTW_ESTIMATE | FFTW_UNALIGNED, so a given input
// always takes the same code path and results are reproducible.
class FftPlanCache {
public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  FftPlanCache(const FftPlanCache&) = delete;
  FftPlanCache& operator=(const FftPlanCache&) = delete;

  // Unnormalized out-of-place DFT: sign -1 forward, +1 backward.
  void execute(int dim, int points, int sign, const std::complex<double>* in,
               std::complex<double>* out) {
    fftw_plan p = plan(dim, points, sign);
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in)),
                     reinterpret_cast<fftw_complex*>(out));
  }

private:
  FftPlanCache() = default;
  ~FftPlanCache() {
    for (auto& [key, p] : plans_) fftw_destroy_plan(p);
  }

  fftw_plan plan(int dim, int points, int sign) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(dim, points, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::size_t total = 1;
    for (int q = 0; q < dim; ++q) total *= static_cast<std::size_t>(points);
    std::vector<std::complex<double>> a(total), b(total);
    std::vector<int> n(dim, points);
    fftw_plan p = fftw_plan_dft(dim, n.data(), reinterpret_cast<fftw_complex*>(a.data()),
                                reinterpret_cast<fftw_complex*>(b.data()), sign,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (p == nullptr) throw InvalidArgument("FFTW could not create a plan");
    plans_.emplace(key, p);
    return p;
  }

  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

} // namespace mfe
