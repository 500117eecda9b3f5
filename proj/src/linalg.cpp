#include "csnn/linalg.hpp"

#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace csnn {

void pin_blas_single_thread() { openblas_set_num_threads(1); }

void matmul_nt(const float* a, const float* b, float* c, std::size_t m,
               std::size_t n, std::size_t k) {
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0f, a,
              static_cast<int>(k), b, static_cast<int>(k), 0.0f, c,
              static_cast<int>(n));
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t n, std::size_t k) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0, a,
              static_cast<int>(k), b, static_cast<int>(k), 0.0, c,
              static_cast<int>(n));
}

void matmul_nn(const float* a, const float* b, float* c, std::size_t m,
               std::size_t n, std::size_t k) {
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0f, a,
              static_cast<int>(k), b, static_cast<int>(n), 0.0f, c,
              static_cast<int>(n));
}

void matmul_nn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t n, std::size_t k) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0, a,
              static_cast<int>(k), b, static_cast<int>(n), 0.0, c,
              static_cast<int>(n));
}

void matmul_tn_acc(const float* a, const float* b, float* c, std::size_t m,
                   std::size_t n, std::size_t k) {
  cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0f, a,
              static_cast<int>(m), b, static_cast<int>(n), 1.0f, c,
              static_cast<int>(n));
}

void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t n, std::size_t k) {
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0, a,
              static_cast<int>(m), b, static_cast<int>(n), 1.0, c,
              static_cast<int>(n));
}

}  // namespace csnn
