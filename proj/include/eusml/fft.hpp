#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <cstring>
#include <memory>
#include <mutex>
#include <vector>

#include "eusml/error.hpp"

namespace eusml {

/// Row-major H x W complex grid.
struct ComplexGrid {
  int width = 0;
  int height = 0;
  std::vector<std::complex<double>> data;

  ComplexGrid() = default;
  ComplexGrid(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h) {}

  std::complex<double>& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  const std::complex<double>& at(int u, int v) const {
    return data[static_cast<std::size_t>(v) * width + u];
  }
};

namespace detail {

// FFTW's planner is not re-entrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  fftw_complex* ptr = nullptr;
  explicit FftwBuffer(std::size_t n)
      : ptr(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (!ptr) fail(ErrorKind::io, "fftw_malloc failed");
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
};

// Buffers come from fftw_malloc so the chosen codelets (and thus the low
// bits of the result) never depend on std::vector alignment.
inline ComplexGrid run_dft(const ComplexGrid& in, int sign) {
  const std::size_t n = in.data.size();
  FftwBuffer src(n), dst(n);
  std::memcpy(src.ptr, in.data.data(), sizeof(fftw_complex) * n);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_2d(in.height, in.width, src.ptr, dst.ptr, sign, FFTW_ESTIMATE);
  }
  if (!plan) fail(ErrorKind::io, "FFTW planning failed");
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  ComplexGrid out(in.width, in.height);
  std::memcpy(static_cast<void*>(out.data.data()), dst.ptr, sizeof(fftw_complex) * n);
  return out;
}

}  // namespace detail

/// Unnormalized forward 2D DFT.
inline ComplexGrid fft2d(const ComplexGrid& in) { return detail::run_dft(in, FFTW_FORWARD); }

/// Inverse 2D DFT including the 1/(H*W) factor, so ifft2d(fft2d(x)) == x.
inline ComplexGrid ifft2d(const ComplexGrid& in) {
  ComplexGrid out = detail::run_dft(in, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(out.data.size());
  for (auto& v : out.data) v *= scale;
  return out;
}

/// Signed frequency of DFT bin k for length n, i.e. distance from DC after fftshift.
inline int centered_frequency(int k, int n) { return k <= n / 2 ? k : k - n; }

}  // namespace eusml
