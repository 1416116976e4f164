#pragma once

#include <cstdint>

namespace fade::linalg {

// Small dense kernels used by the autodiff tape. All matrices row-major.
// The dot-product form (nt) is the forward path: both operands are read
// contiguously, which the compiler vectorizes well.

// C(n,m) = A(n,k) * B(m,k)^T   (optionally accumulate)
void matmul_nt(const double* a, std::int64_t n, std::int64_t k,
               const double* b, std::int64_t m, double* c, bool accumulate);

// C(n,m) = A(n,k) * B(k,m)
void matmul_nn(const double* a, std::int64_t n, std::int64_t k,
               const double* b, std::int64_t m, double* c, bool accumulate);

// C(k,m) = A(n,k)^T * B(n,m)
void matmul_tn(const double* a, std::int64_t n, std::int64_t k,
               const double* b, std::int64_t m, double* c, bool accumulate);

}  // namespace fade::linalg
