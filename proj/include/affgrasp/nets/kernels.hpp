#pragma once

// Data-parallel layer kernels. Every output element is produced by exactly one thread
// with a fixed summation order, so results do not depend on the OpenMP thread count.

#include <cstdint>
#include <span>
#include <vector>

#include "affgrasp/nets/tensor.hpp"

namespace affgrasp::nets::kernels {

/// Same-padded cross-correlation. weight layout: [cout][cin][k][k][k], k in {1, 3}.
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int cout,
                         int ksize);

template <typename T>
struct ConvGrads {
  Tensor<T> dx;
  std::vector<T> dweight;
  std::vector<T> dbias;
};
template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, int ksize,
                             bool need_dx = true);

/// Per-channel statistics of the most recent training-mode batch.
template <typename T>
struct BatchNormCache {
  Tensor<T> xhat;
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> inv_std;
};

inline constexpr double kBatchNormEps = 1e-5;

/// Normalizes each channel by its statistics over (n, d, h, w). Throws BatchTooSmall when n < 2.
template <typename T>
Tensor<T> batchnorm_forward_train(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                                  BatchNormCache<T>& cache);
template <typename T>
Tensor<T> batchnorm_forward_infer(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                                  std::span<const T> running_mean, std::span<const T> running_var);

template <typename T>
struct BatchNormGrads {
  Tensor<T> dx;
  std::vector<T> dgamma;
  std::vector<T> dbeta;
};
template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, std::span<const T> gamma, const Tensor<T>& dy);

template <typename T>
void relu_inplace(Tensor<T>& x);
/// dy masked by y > 0 (y is the ReLU output).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy);

/// 2x2x2 max pool; argmax holds the flat input index of every output element.
template <typename T>
Tensor<T> maxpool3d_forward(const Tensor<T>& x, std::vector<std::uint32_t>& argmax);
template <typename T>
Tensor<T> maxpool3d_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax, int n, int c, int d,
                             int h, int w);

/// Nearest-neighbour 2x upsampling.
template <typename T>
Tensor<T> upsample3d_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample3d_backward(const Tensor<T>& dy);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
void split_channels(const Tensor<T>& d, int channels_a, Tensor<T>& da, Tensor<T>& db);

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b);

template <typename T>
void sigmoid_inplace(Tensor<T>& x);

}  // namespace affgrasp::nets::kernels

namespace affgrasp::nets::reference {

// Serial, index-by-index versions kept as the ground truth for the parallel kernels.

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int cout,
                         int ksize);
template <typename T>
kernels::ConvGrads<T> conv3d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, int ksize);
template <typename T>
Tensor<T> maxpool3d_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample3d_forward(const Tensor<T>& x);

}  // namespace affgrasp::nets::reference
