#pragma once

#include <cstddef>

namespace csnn {

// Pins the BLAS backend to one thread so results never depend on the
// machine's thread count. Call once at process start (the CLI and test
// mains do).
void pin_blas_single_thread();

// C[MxN] = A[MxK] * B[NxK]^T, row-major. The one GEMM shape this codebase
// needs: rows are patches or samples, B rows are neuron/unit vectors.
void matmul_nt(const float* a, const float* b, float* c, std::size_t m,
               std::size_t n, std::size_t k);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t n, std::size_t k);

// C[MxN] = A[MxK] * B[KxN], row-major.
void matmul_nn(const float* a, const float* b, float* c, std::size_t m,
               std::size_t n, std::size_t k);
void matmul_nn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t n, std::size_t k);

// C[MxN] += A[KxM]^T * B[KxN], row-major.
void matmul_tn_acc(const float* a, const float* b, float* c, std::size_t m,
                   std::size_t n, std::size_t k);
void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t n, std::size_t k);

}  // namespace csnn
