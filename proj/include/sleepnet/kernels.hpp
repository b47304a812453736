#pragma once

// Layer kernels with analytic gradients. Instantiated for float (inference)
// and double (training and gradient checks). Backward functions accumulate
// (+=) into parameter gradients and overwrite input gradients.

#include <cstddef>
#include <span>
#include <vector>

#include "sleepnet/tensor.hpp"

namespace sleepnet {

inline constexpr double kLayerNormEpsilon = 1e-5;

inline std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
    return (length - kernel) / stride + 1;
}

/// Valid 1-D convolution: in [L, Cin], weights [K, Cin, Cout], bias [Cout] -> [Lout, Cout].
template <typename T>
Tensor<T> conv1d(const Tensor<T>& in, const Tensor<T>& weights, const Tensor<T>& bias, std::size_t stride);

template <typename T>
void conv1d_backward(const Tensor<T>& in, const Tensor<T>& weights, std::size_t stride,
                     const Tensor<T>& dout, Tensor<T>* din, Tensor<T>& dweights, Tensor<T>& dbias);

/// x W + b, applied to every row of a [T, N] input or to a single [N] vector.
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
void dense_backward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& dout,
                    Tensor<T>* dx, Tensor<T>& dweights, Tensor<T>& dbias);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// Gradient through ReLU given its input (or output; the mask is identical).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dout);

template <typename T>
std::vector<T> softmax(std::span<const T> x);

template <typename T>
struct LayerNormCache {
    Tensor<T> normalized;  // (x - mean) * rstd
    std::vector<T> rstd;
};

/// Per-row normalization over the last axis of [T, D].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift,
                     LayerNormCache<T>* cache = nullptr);

template <typename T>
void layer_norm_backward(const LayerNormCache<T>& cache, const Tensor<T>& gain, const Tensor<T>& dout,
                         Tensor<T>& dx, Tensor<T>& dgain, Tensor<T>& dshift);

template <typename T>
struct AttentionParams {
    const Tensor<T>& wq;
    const Tensor<T>& bq;
    const Tensor<T>& wk;
    const Tensor<T>& bk;
    const Tensor<T>& wv;
    const Tensor<T>& bv;
    const Tensor<T>& wo;
    const Tensor<T>& bo;
};

template <typename T>
struct AttentionGrads {
    Tensor<T>& wq;
    Tensor<T>& bq;
    Tensor<T>& wk;
    Tensor<T>& bk;
    Tensor<T>& wv;
    Tensor<T>& bv;
    Tensor<T>& wo;
    Tensor<T>& bo;
};

template <typename T>
struct AttentionCache {
    Tensor<T> input;
    Tensor<T> q, k, v;   // [T, D]
    Tensor<T> weights;   // [heads, T, T], each row a softmax
    Tensor<T> context;   // [T, D], heads concatenated
};

/// Multi-head scaled dot-product self-attention over x [T, D].
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const AttentionParams<T>& p, std::size_t heads,
                               AttentionCache<T>* cache = nullptr);

template <typename T>
void multi_head_attention_backward(const AttentionCache<T>& cache, const AttentionParams<T>& p,
                                   std::size_t heads, const Tensor<T>& dout, Tensor<T>& dx,
                                   const AttentionGrads<T>& grads);

}  // namespace sleepnet
