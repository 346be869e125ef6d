#pragma once

// Compute kernels behind the autodiff primitives. Two implementations share one
// interface:
//   kernels::reference  plain serial loops, kept as the test oracle
//   kernels::parallel   im2col + BLAS GEMM, OpenMP over independent rows
// Forward kernels overwrite their outputs; backward kernels accumulate (+=).
// Per-sample work never depends on the batch size, so a sample evaluated alone
// or inside a batch gives bit-identical results.
//
// Both namespaces are instantiated for float and double.

#include <span>

namespace sardd::kernels {

struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int height = 1;
  int width = 1;
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int padding = 0;

  int out_height() const { return (height + 2 * padding - kernel_h) / stride + 1; }
  int out_width() const { return (width + 2 * padding - kernel_w) / stride + 1; }
};

struct NormGeometry {
  int batch = 1;
  int channels = 1;
  int spatial = 1;  // H*W
  int groups = 1;
};

struct AttentionGeometry {
  int batch = 1;
  int channels = 1;
  int positions = 1;  // H*W
};

namespace reference {

// c = op(a) * op(b) + beta * c, row-major, op(a) is m x k and op(b) is k x n.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T beta,
          T* c);

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input);
template <typename T>
void conv2d_backward_params(const ConvGeometry& g, std::span<const T> input,
                            std::span<const T> grad_output, std::span<T> grad_weight,
                            std::span<T> grad_bias);

// mean and rstd receive one value per (sample, group).
template <typename T>
void group_norm_forward(const NormGeometry& g, T eps, std::span<const T> x,
                        std::span<const T> scale, std::span<const T> offset, std::span<T> y,
                        std::span<T> mean, std::span<T> rstd);
template <typename T>
void group_norm_backward(const NormGeometry& g, std::span<const T> x, std::span<const T> scale,
                         std::span<const T> mean, std::span<const T> rstd,
                         std::span<const T> grad_y, std::span<T> grad_x,
                         std::span<T> grad_scale, std::span<T> grad_offset);

// q, k, v, out are (N, C, P); probs is (N, P, P) with row i the softmax over keys
// for query position i, scores scaled by 1/sqrt(C).
template <typename T>
void attention_forward(const AttentionGeometry& g, std::span<const T> q, std::span<const T> k,
                       std::span<const T> v, std::span<T> out, std::span<T> probs);
template <typename T>
void attention_backward(const AttentionGeometry& g, std::span<const T> q, std::span<const T> k,
                        std::span<const T> v, std::span<const T> probs,
                        std::span<const T> grad_out, std::span<T> grad_q, std::span<T> grad_k,
                        std::span<T> grad_v);

}  // namespace reference

namespace parallel {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T beta,
          T* c);

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input);
template <typename T>
void conv2d_backward_params(const ConvGeometry& g, std::span<const T> input,
                            std::span<const T> grad_output, std::span<T> grad_weight,
                            std::span<T> grad_bias);

template <typename T>
void group_norm_forward(const NormGeometry& g, T eps, std::span<const T> x,
                        std::span<const T> scale, std::span<const T> offset, std::span<T> y,
                        std::span<T> mean, std::span<T> rstd);
template <typename T>
void group_norm_backward(const NormGeometry& g, std::span<const T> x, std::span<const T> scale,
                         std::span<const T> mean, std::span<const T> rstd,
                         std::span<const T> grad_y, std::span<T> grad_x,
                         std::span<T> grad_scale, std::span<T> grad_offset);

template <typename T>
void attention_forward(const AttentionGeometry& g, std::span<const T> q, std::span<const T> k,
                       std::span<const T> v, std::span<T> out, std::span<T> probs);
template <typename T>
void attention_backward(const AttentionGeometry& g, std::span<const T> q, std::span<const T> k,
                        std::span<const T> v, std::span<const T> probs,
                        std::span<const T> grad_out, std::span<T> grad_q, std::span<T> grad_k,
                        std::span<T> grad_v);

}  // namespace parallel

}  // namespace sardd::kernels
