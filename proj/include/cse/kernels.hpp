// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>

namespace cse::kernels {

// Inner product with a fixed 8-lane accumulation scheme: element i always
// lands in lane i mod 8 and lanes are reduced by a fixed tree. Consequences
// relied on elsewhere:
//   * dot(a, b, n) == dot(a', b', n') bit-for-bit whenever (a, b) extends
//     (a', b') with a zero tail in `a` — the streaming attention path and the
//     batch masked-attention path therefore agree exactly;
//   * results depend only on n, never on surrounding code (noinline, single
//     machine-code instance).
float dot(const float* a, const float* b, int64_t n) noexcept;
double dot(const double* a, const double* b, int64_t n) noexcept;

// Squared Euclidean distance, same lane scheme.
float sqdist(const float* a, const float* b, int64_t n) noexcept;
double sqdist(const double* a, const double* b, int64_t n) noexcept;

// c[m x n] = a[m x k] * b[k x n], all row-major. Each output element is one
// dot() over the shared inner dimension, so per-element results are
// independent of m and n.
void matmul(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n);
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

bool all_finite(const float* p, int64_t n) noexcept;
bool all_finite(const double* p, int64_t n) noexcept;

}  // namespace cse::kernels
