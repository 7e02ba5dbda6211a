#include "cellscan/gemm.hpp"

#include <cstring>

#include "cellscan/thread_pool.hpp"

namespace cellscan {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n,
             const real* a, const real* b, real* c) {
    parallel_for(m, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            real* crow = c + i * n;
            std::memset(crow, 0, n * sizeof(real));
            const real* arow = a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                real aval = arow[p];
                const real* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j)
                    crow[j] += aval * brow[j];
            }
        }
    });
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n,
             const real* a, const real* b, real* c) {
    parallel_for(m, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            const real* arow = a + i * k;
            real* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const real* brow = b + j * k;
                real acc = 0;
                for (std::size_t p = 0; p < k; ++p)
                    acc += arow[p] * brow[p];
                crow[j] = acc;
            }
        }
    });
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n,
             const real* a, const real* b, real* c) {
    parallel_for(m, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            real* crow = c + i * n;
            std::memset(crow, 0, n * sizeof(real));
            for (std::size_t p = 0; p < k; ++p) {
                real aval = a[p * m + i];
                const real* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j)
                    crow[j] += aval * brow[j];
            }
        }
    });
}

} // namespace cellscan
