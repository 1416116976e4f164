#include "fade/linalg.hpp"

#include <cstring>

namespace fade::linalg {

void matmul_nt(const double* a, std::int64_t n, std::int64_t k,
               const double* b, std::int64_t m, double* c, bool accumulate) {
  for (std::int64_t i = 0; i < n; ++i) {
    const double* __restrict__ ai = a + i * k;
    double* __restrict__ ci = c + i * m;
    for (std::int64_t j = 0; j < m; ++j) {
      const double* __restrict__ bj = b + j * k;
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + acc : acc;
    }
  }
}

void matmul_nn(const double* a, std::int64_t n, std::int64_t k,
               const double* b, std::int64_t m, double* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(n * m));
  for (std::int64_t i = 0; i < n; ++i) {
    const double* __restrict__ ai = a + i * k;
    double* __restrict__ ci = c + i * m;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* __restrict__ bp = b + p * m;
      for (std::int64_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_tn(const double* a, std::int64_t n, std::int64_t k,
               const double* b, std::int64_t m, double* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(k * m));
  for (std::int64_t i = 0; i < n; ++i) {
    const double* __restrict__ ai = a + i * k;
    const double* __restrict__ bi = b + i * m;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = ai[p];
      double* __restrict__ cp = c + p * m;
      for (std::int64_t j = 0; j < m; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace fade::linalg
