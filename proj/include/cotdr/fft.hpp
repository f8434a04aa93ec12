#pragma once

#include <fftw3.h>

#include <algorithm>
#include <climits>
#include <complex>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "cotdr/errors.hpp"

namespace cotdr::fftops {

// Smallest 5-smooth (2^a 3^b 5^c) length >= n. FFTW handles these sizes well.
inline std::size_t next_fast_len(std::size_t n) {
  if (n <= 1) return 1;
  std::size_t best = SIZE_MAX;
  for (std::size_t p5 = 1; p5 < n * 5; p5 *= 5) {
    for (std::size_t p35 = p5; p35 < n * 5; p35 *= 3) {
      std::size_t p = p35;
      while (p < n) p *= 2;
      best = std::min(best, p);
      if (p35 >= best) break;
    }
    if (p5 >= best) break;
  }
  return best;
}

namespace detail {

// RAII wrappers for FFTW's aligned allocations.
struct RealBuf {
  explicit RealBuf(std::size_t n) : p(fftw_alloc_real(n)) {
    if (!p) throw std::bad_alloc();
  }
  ~RealBuf() { fftw_free(p); }
  RealBuf(const RealBuf&) = delete;
  RealBuf& operator=(const RealBuf&) = delete;
  double* p;
};

struct ComplexBuf {
  explicit ComplexBuf(std::size_t n) : p(fftw_alloc_complex(n)) {
    if (!p) throw std::bad_alloc();
  }
  ~ComplexBuf() { fftw_free(p); }
  ComplexBuf(const ComplexBuf&) = delete;
  ComplexBuf& operator=(const ComplexBuf&) = delete;
  fftw_complex* p;
};

// Process-wide plan cache. FFTW planning is not thread safe, so plans are
// created once under a lock; execution then uses the new-array interface on
// per-call fftw-aligned scratch, which is safe to run concurrently.
class FftwCache {
 public:
  static FftwCache& instance() {
    static FftwCache cache;
    return cache;
  }

  void forward(std::span<const double> in, std::size_t n,
               std::vector<std::complex<double>>& out) {
    auto e = entry(n);
    RealBuf real(n);
    ComplexBuf cplx(n / 2 + 1);
    std::memset(real.p, 0, n * sizeof(double));
    std::memcpy(real.p, in.data(), std::min(in.size(), n) * sizeof(double));
    fftw_execute_dft_r2c(e->r2c, real.p, cplx.p);
    out.resize(n / 2 + 1);
    std::memcpy(static_cast<void*>(out.data()), cplx.p,
                (n / 2 + 1) * sizeof(std::complex<double>));
  }

  void inverse(std::span<const std::complex<double>> in, std::size_t n,
               std::vector<double>& out) {
    if (in.size() != n / 2 + 1)
      throw invalid_input("irfft: spectrum size does not match length");
    auto e = entry(n);
    RealBuf real(n);
    ComplexBuf cplx(n / 2 + 1);
    std::memcpy(cplx.p, in.data(), (n / 2 + 1) * sizeof(std::complex<double>));
    fftw_execute_dft_c2r(e->c2r, cplx.p, real.p);
    out.resize(n);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = real.p[i] * scale;
  }

 private:
  struct Entry {
    fftw_plan r2c = nullptr;
    fftw_plan c2r = nullptr;

    ~Entry() {
      if (r2c) fftw_destroy_plan(r2c);
      if (c2r) fftw_destroy_plan(c2r);
    }
  };

  // Shared ownership keeps an in-flight transform's plans alive even if the
  // cache evicts them concurrently.
  std::shared_ptr<Entry> entry(std::size_t n) {
    if (n == 0 || n > static_cast<std::size_t>(INT_MAX))
      throw invalid_input("fft: unsupported transform length");
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find(n);
    if (it != entries_.end()) return it->second;
    if (entries_.size() >= kMaxEntries) entries_.clear();
    RealBuf real(n);
    ComplexBuf cplx(n / 2 + 1);
    auto e = std::make_shared<Entry>();
    const int ni = static_cast<int>(n);
    e->r2c = fftw_plan_dft_r2c_1d(ni, real.p, cplx.p, FFTW_ESTIMATE);
    e->c2r = fftw_plan_dft_c2r_1d(ni, cplx.p, real.p, FFTW_ESTIMATE);
    if (!e->r2c || !e->c2r) throw std::runtime_error("fft: planning failed");
    return entries_.emplace(n, std::move(e)).first->second;
  }

  static constexpr std::size_t kMaxEntries = 64;
  std::mutex mutex_;
  std::map<std::size_t, std::shared_ptr<Entry>> entries_;
};

}  // namespace detail

// Forward real FFT of `in` zero-padded (or truncated) to length n.
// Unnormalized; out holds bins 0..n/2. Safe to call concurrently.
inline void rfft(std::span<const double> in, std::size_t n,
                 std::vector<std::complex<double>>& out) {
  detail::FftwCache::instance().forward(in, n, out);
}

// Inverse of rfft, normalized by 1/n. Safe to call concurrently.
inline void irfft(std::span<const std::complex<double>> in, std::size_t n,
                  std::vector<double>& out) {
  detail::FftwCache::instance().inverse(in, n, out);
}

}  // namespace cotdr::fftops
