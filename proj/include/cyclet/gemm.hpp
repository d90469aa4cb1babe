#pragma once

#include <cstddef>

namespace cyclet {

// Small row-major GEMM kernels. Loop orders keep the innermost stride unit
// so the compiler can vectorize; no blocking, desk-scale matrices only.

// C[M,N] += A[M,K] * B[K,N]
inline void gemm_nn_acc(const float* A, const float* B, float* C, int M, int K, int N) {
    for (int i = 0; i < M; ++i) {
        const float* a = A + std::size_t(i) * K;
        float* c = C + std::size_t(i) * N;
        for (int k = 0; k < K; ++k) {
            const float ak = a[k];
            const float* b = B + std::size_t(k) * N;
            for (int j = 0; j < N; ++j) c[j] += ak * b[j];
        }
    }
}

// C[M,N] += A^T * B where A is [K,M], B is [K,N]
inline void gemm_tn_acc(const float* A, const float* B, float* C, int M, int K, int N) {
    for (int k = 0; k < K; ++k) {
        const float* a = A + std::size_t(k) * M;
        const float* b = B + std::size_t(k) * N;
        for (int i = 0; i < M; ++i) {
            const float ai = a[i];
            float* c = C + std::size_t(i) * N;
            for (int j = 0; j < N; ++j) c[j] += ai * b[j];
        }
    }
}

// C[M,N] += A * B^T where A is [M,K], B is [N,K]
inline void gemm_nt_acc(const float* A, const float* B, float* C, int M, int K, int N) {
    for (int i = 0; i < M; ++i) {
        const float* a = A + std::size_t(i) * K;
        float* c = C + std::size_t(i) * N;
        for (int j = 0; j < N; ++j) {
            const float* b = B + std::size_t(j) * K;
            float acc = 0.0f;
            for (int k = 0; k < K; ++k) acc += a[k] * b[k];
            c[j] += acc;
        }
    }
}

} // namespace cyclet
