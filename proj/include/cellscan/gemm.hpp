#pragma once

#include <cstddef>

#include "cellscan/real.hpp"

namespace cellscan {

// Row-major matrix kernels on raw buffers. Outputs are fully overwritten.
// Parallelism is over output rows; each output element accumulates in a
// fixed sequential k-order, so results match the single-threaded run for
// any worker count.

// c[m,n] = a[m,k] * b[k,n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n,
             const real* a, const real* b, real* c);

// c[m,n] = a[m,k] * b[n,k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n,
             const real* a, const real* b, real* c);

// c[m,n] = a[k,m]^T * b[k,n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n,
             const real* a, const real* b, real* c);

} // namespace cellscan
