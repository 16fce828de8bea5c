#pragma once

#include <cstddef>
#include <vector>

namespace sfc {

// Row-major GEMM kernels. These carry nearly all of the training FLOPs, so the
// loop orders are chosen to keep the inner loop contiguous and vectorizable.

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn_acc(const T* A, const T* B, T* C, int M, int K, int N) {
  for (int i = 0; i < M; ++i) {
    const T* a = A + static_cast<size_t>(i) * K;
    T* c = C + static_cast<size_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      const T av = a[k];
      const T* b = B + static_cast<size_t>(k) * N;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T. Row-wise dot products do not vectorize without
// reassociation, so transpose B once and reuse the nn kernel.
template <typename T>
void gemm_nt_acc(const T* A, const T* B, T* C, int M, int K, int N) {
  std::vector<T> bt(static_cast<size_t>(K) * N);
  for (int j = 0; j < N; ++j)
    for (int k = 0; k < K; ++k)
      bt[static_cast<size_t>(k) * N + j] = B[static_cast<size_t>(j) * K + k];
  gemm_nn_acc(A, bt.data(), C, M, K, N);
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn_acc(const T* A, const T* B, T* C, int M, int K, int N) {
  for (int k = 0; k < K; ++k) {
    const T* a = A + static_cast<size_t>(k) * M;
    const T* b = B + static_cast<size_t>(k) * N;
    for (int i = 0; i < M; ++i) {
      const T av = a[i];
      T* c = C + static_cast<size_t>(i) * N;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace sfc
