#include "alphapool/tensor.hpp"

#include <cstdlib>
#include <mutex>

#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace alphapool::detail {
namespace {

// OpenBLAS core auto-detection can fall back to a generic kernel on
// virtualized CPUs; pin the AVX-512 kernel when the instruction set is
// available and the user has not chosen a core themselves.  Threads are
// pinned to one so results do not depend on reduction order.
void blas_init_once() {
#if defined(__x86_64__)
  if (!std::getenv("OPENBLAS_CORETYPE") && __builtin_cpu_supports("avx512f"))
    setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 1);
#endif
  openblas_set_num_threads(1);
}

void ensure_init() {
  static std::once_flag flag;
  std::call_once(flag, blas_init_once);
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          float alpha, const float* a, std::int64_t lda, const float* b, std::int64_t ldb,
          float beta, float* c, std::int64_t ldc) {
  ensure_init();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
              beta, c, static_cast<int>(ldc));
}

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          double alpha, const double* a, std::int64_t lda, const double* b, std::int64_t ldb,
          double beta, double* c, std::int64_t ldc) {
  ensure_init();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
              beta, c, static_cast<int>(ldc));
}

}  // namespace alphapool::detail
