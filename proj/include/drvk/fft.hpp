/*
Copyright 2026 The drvk Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <complex>
#include <vector>

#include "drvk/common.hpp"

namespace drvk {

using cdouble = std::complex<double>;

namespace detail {

inline bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey. sign = -1 forward, +1 inverse
// (inverse does NOT divide by N; callers handle scaling).
inline void fft_radix2(std::vector<cdouble>& a, int sign) {
  const size_t n = a.size();
  if (n < 2) return;
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * kPi / static_cast<double>(len);
    const cdouble wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      cdouble w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const cdouble u = a[i + k];
        const cdouble v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// O(N^2) DFT used when the transform size is not a power of two.
inline std::vector<cdouble> dft_naive(const std::vector<cdouble>& in, int sign) {
  const size_t n = in.size();
  std::vector<cdouble> out(n);
  for (size_t k = 0; k < n; ++k) {
    cdouble acc(0.0, 0.0);
    for (size_t t = 0; t < n; ++t) {
      const double ang = sign * 2.0 * kPi * static_cast<double>(k * t % n) / static_cast<double>(n);
      acc += in[t] * cdouble(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace detail

inline void fft(std::vector<cdouble>& a) {
  if (detail::is_pow2(a.size())) {
    detail::fft_radix2(a, -1);
  } else {
    a = detail::dft_naive(a, -1);
  }
}

inline void ifft(std::vector<cdouble>& a) {
  if (detail::is_pow2(a.size())) {
    detail::fft_radix2(a, +1);
  } else {
    a = detail::dft_naive(a, +1);
  }
  const double inv = 1.0 / static_cast<double>(a.size());
  for (auto& x : a) x *= inv;
}

// One-sided spectrum of a real frame: bins 0..n/2 (n/2+1 values).
inline std::vector<cdouble> rfft(const std::vector<double>& frame) {
  std::vector<cdouble> a(frame.begin(), frame.end());
  fft(a);
  a.resize(frame.size() / 2 + 1);
  return a;
}

// Real inverse of a one-sided spectrum of length n/2+1 (n even).
inline std::vector<double> irfft(const std::vector<cdouble>& half, size_t n) {
  std::vector<cdouble> a(n);
  for (size_t k = 0; k < half.size(); ++k) a[k] = half[k];
  for (size_t k = half.size(); k < n; ++k) a[k] = std::conj(a[n - k]);
  ifft(a);
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = a[i].real();
  return out;
}

inline size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace drvk
