// Production kernels: convolution lowered to GEMM through im2col, BLAS for the
// matrix products, OpenMP across rows that write disjoint memory. Reductions
// are never split across threads, so results do not depend on thread count.

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sardd/kernels.hpp"

namespace sardd::kernels::parallel {

namespace {

void blas_gemm(bool ta, bool tb, int m, int n, int k, const float* a, const float* b,
               float beta, float* c) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              m, n, k, 1.0f, a, ta ? m : k, b, tb ? k : n, beta, c, n);
}

void blas_gemm(bool ta, bool tb, int m, int n, int k, const double* a, const double* b,
               double beta, double* c) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              m, n, k, 1.0, a, ta ? m : k, b, tb ? k : n, beta, c, n);
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.padding == 0;
}

// Unfolds one sample (C, H, W) into columns (C*kh*kw, OH*OW).
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* col) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int rows = g.in_channels * g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
  for (int row = 0; row < rows; ++row) {
    const int kx = row % g.kernel_w;
    const int ky = (row / g.kernel_w) % g.kernel_h;
    const int c = row / (g.kernel_w * g.kernel_h);
    const T* src = image + static_cast<std::size_t>(c) * g.height * g.width;
    T* dst = col + static_cast<std::size_t>(row) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const int iy = y * g.stride - g.padding + ky;
      if (iy < 0 || iy >= g.height) {
        std::fill(dst + y * ow, dst + (y + 1) * ow, T(0));
        continue;
      }
      // Valid output columns satisfy 0 <= x*stride - padding + kx < width.
      const int shift = kx - g.padding;
      const int lo = std::min(ow, shift >= 0 ? 0 : (-shift + g.stride - 1) / g.stride);
      const int hi = std::clamp((g.width - shift + g.stride - 1) / g.stride, lo, ow);
      T* out = dst + y * ow;
      const T* in = src + iy * g.width;
      std::fill(out, out + lo, T(0));
      if (g.stride == 1) {
        std::copy(in + lo + shift, in + hi + shift, out + lo);
      } else {
        for (int x = lo; x < hi; ++x) out[x] = in[x * g.stride + shift];
      }
      std::fill(out + hi, out + ow, T(0));
    }
  }
}

// Folds columns back into one sample, accumulating. Parallel over channels:
// every row of channel c writes only into channel c.
template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* image) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int kk = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.in_channels; ++c) {
    T* dst = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int r = 0; r < kk; ++r) {
      const int kx = r % g.kernel_w;
      const int ky = r / g.kernel_w;
      const T* src = col + (static_cast<std::size_t>(c) * kk + r) * oh * ow;
      for (int y = 0; y < oh; ++y) {
        const int iy = y * g.stride - g.padding + ky;
        if (iy < 0 || iy >= g.height) continue;
        for (int x = 0; x < ow; ++x) {
          const int ix = x * g.stride - g.padding + kx;
          if (ix >= 0 && ix < g.width) dst[iy * g.width + ix] += src[y * ow + x];
        }
      }
    }
  }
}

template <typename T>
std::vector<T>& scratch(std::size_t size) {
  thread_local std::vector<T> buffer;
  if (buffer.size() < size) buffer.resize(size);
  return buffer;
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T beta,
          T* c) {
  blas_gemm(trans_a, trans_b, m, n, k, a, b, beta, c);
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const int spatial_out = g.out_height() * g.out_width();
  const int rows = g.in_channels * g.kernel_h * g.kernel_w;
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
  const std::size_t out_stride = static_cast<std::size_t>(g.out_channels) * spatial_out;
  const bool pointwise = is_pointwise(g);
  std::vector<T>& col = scratch<T>(pointwise ? 0 : static_cast<std::size_t>(rows) * spatial_out);

  for (int n = 0; n < g.batch; ++n) {
    const T* x = input.data() + n * in_stride;
    T* y = output.data() + n * out_stride;
    if (!pointwise) im2col(g, x, col.data());
    blas_gemm(false, false, g.out_channels, spatial_out, rows, weight.data(),
              pointwise ? x : col.data(), T(0), y);
    if (!bias.empty()) {
#pragma omp parallel for schedule(static)
      for (int o = 0; o < g.out_channels; ++o) {
        T* row = y + static_cast<std::size_t>(o) * spatial_out;
        for (int i = 0; i < spatial_out; ++i) row[i] += bias[o];
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input) {
  const int spatial_out = g.out_height() * g.out_width();
  const int rows = g.in_channels * g.kernel_h * g.kernel_w;
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
  const std::size_t out_stride = static_cast<std::size_t>(g.out_channels) * spatial_out;
  const bool pointwise = is_pointwise(g);
  std::vector<T>& col = scratch<T>(pointwise ? 0 : static_cast<std::size_t>(rows) * spatial_out);

  for (int n = 0; n < g.batch; ++n) {
    const T* dy = grad_output.data() + n * out_stride;
    T* dx = grad_input.data() + n * in_stride;
    if (pointwise) {
      blas_gemm(true, false, rows, spatial_out, g.out_channels, weight.data(), dy, T(1), dx);
    } else {
      blas_gemm(true, false, rows, spatial_out, g.out_channels, weight.data(), dy, T(0),
                col.data());
      col2im_add(g, col.data(), dx);
    }
  }
}

template <typename T>
void conv2d_backward_params(const ConvGeometry& g, std::span<const T> input,
                            std::span<const T> grad_output, std::span<T> grad_weight,
                            std::span<T> grad_bias) {
  const int spatial_out = g.out_height() * g.out_width();
  const int rows = g.in_channels * g.kernel_h * g.kernel_w;
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
  const std::size_t out_stride = static_cast<std::size_t>(g.out_channels) * spatial_out;
  const bool pointwise = is_pointwise(g);
  std::vector<T>& col = scratch<T>(pointwise ? 0 : static_cast<std::size_t>(rows) * spatial_out);

  for (int n = 0; n < g.batch; ++n) {
    const T* x = input.data() + n * in_stride;
    const T* dy = grad_output.data() + n * out_stride;
    if (!pointwise) im2col(g, x, col.data());
    blas_gemm(false, true, g.out_channels, rows, spatial_out, dy, pointwise ? x : col.data(),
              T(1), grad_weight.data());
    if (!grad_bias.empty()) {
#pragma omp parallel for schedule(static)
      for (int o = 0; o < g.out_channels; ++o) {
        const T* row = dy + static_cast<std::size_t>(o) * spatial_out;
        T acc = 0;
        for (int i = 0; i < spatial_out; ++i) acc += row[i];
        grad_bias[o] += acc;
      }
    }
  }
}

template <typename T>
void group_norm_forward(const NormGeometry& g, T eps, std::span<const T> x,
                        std::span<const T> scale, std::span<const T> offset, std::span<T> y,
                        std::span<T> mean, std::span<T> rstd) {
  const int per_group = g.channels / g.groups;
  const int count = per_group * g.spatial;
  const int slots = g.batch * g.groups;
#pragma omp parallel for schedule(static)
  for (int slot = 0; slot < slots; ++slot) {
    const int grp = slot % g.groups;
    const std::size_t base = static_cast<std::size_t>(slot) * count;
    const T* xs = x.data() + base;
    T sum = 0;
    for (int i = 0; i < count; ++i) sum += xs[i];
    const T m = sum / count;
    T sq = 0;
    for (int i = 0; i < count; ++i) sq += (xs[i] - m) * (xs[i] - m);
    const T r = T(1) / std::sqrt(sq / count + eps);
    mean[slot] = m;
    rstd[slot] = r;
    T* ys = y.data() + base;
    for (int cl = 0; cl < per_group; ++cl) {
      const int c = grp * per_group + cl;
      const T a = r * scale[c];
      const T b = offset[c] - m * a;
      for (int i = cl * g.spatial; i < (cl + 1) * g.spatial; ++i) ys[i] = xs[i] * a + b;
    }
  }
}

template <typename T>
void group_norm_backward(const NormGeometry& g, std::span<const T> x, std::span<const T> scale,
                         std::span<const T> mean, std::span<const T> rstd,
                         std::span<const T> grad_y, std::span<T> grad_x,
                         std::span<T> grad_scale, std::span<T> grad_offset) {
  const int per_group = g.channels / g.groups;
  const int count = per_group * g.spatial;
  const int slots = g.batch * g.groups;
  // Per-slot channel partial sums, reduced in sample order afterwards.
  std::vector<T> part_scale(static_cast<std::size_t>(g.batch) * g.channels);
  std::vector<T> part_offset(static_cast<std::size_t>(g.batch) * g.channels);
#pragma omp parallel for schedule(static)
  for (int slot = 0; slot < slots; ++slot) {
    const int n = slot / g.groups;
    const int grp = slot % g.groups;
    const std::size_t base = static_cast<std::size_t>(slot) * count;
    const T* xs = x.data() + base;
    const T* dys = grad_y.data() + base;
    const T m = mean[slot];
    const T r = rstd[slot];
    T sum_dxhat = 0;
    T sum_dxhat_xhat = 0;
    for (int cl = 0; cl < per_group; ++cl) {
      const int c = grp * per_group + cl;
      T ds = 0;
      T db = 0;
      for (int i = cl * g.spatial; i < (cl + 1) * g.spatial; ++i) {
        const T xhat = (xs[i] - m) * r;
        ds += dys[i] * xhat;
        db += dys[i];
      }
      part_scale[static_cast<std::size_t>(n) * g.channels + c] = ds;
      part_offset[static_cast<std::size_t>(n) * g.channels + c] = db;
      sum_dxhat += db * scale[c];
      sum_dxhat_xhat += ds * scale[c];
    }
    T* dxs = grad_x.data() + base;
    const T inv = r / count;
    for (int cl = 0; cl < per_group; ++cl) {
      const int c = grp * per_group + cl;
      for (int i = cl * g.spatial; i < (cl + 1) * g.spatial; ++i) {
        const T xhat = (xs[i] - m) * r;
        dxs[i] += inv * (count * dys[i] * scale[c] - sum_dxhat - xhat * sum_dxhat_xhat);
      }
    }
  }
  for (int n = 0; n < g.batch; ++n)
    for (int c = 0; c < g.channels; ++c) {
      grad_scale[c] += part_scale[static_cast<std::size_t>(n) * g.channels + c];
      grad_offset[c] += part_offset[static_cast<std::size_t>(n) * g.channels + c];
    }
}

template <typename T>
void attention_forward(const AttentionGeometry& g, std::span<const T> q, std::span<const T> k,
                       std::span<const T> v, std::span<T> out, std::span<T> probs) {
  const int C = g.channels;
  const int P = g.positions;
  const T scale = T(1) / std::sqrt(static_cast<T>(C));
  for (int n = 0; n < g.batch; ++n) {
    const std::size_t fo = static_cast<std::size_t>(n) * C * P;
    T* pr = probs.data() + static_cast<std::size_t>(n) * P * P;
    blas_gemm(true, false, P, P, C, q.data() + fo, k.data() + fo, T(0), pr);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < P; ++i) {
      T* row = pr + static_cast<std::size_t>(i) * P;
      T mx = row[0] * scale;
      for (int j = 0; j < P; ++j) {
        row[j] *= scale;
        mx = std::max(mx, row[j]);
      }
      T z = 0;
      for (int j = 0; j < P; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      for (int j = 0; j < P; ++j) row[j] /= z;
    }
    blas_gemm(false, true, C, P, P, v.data() + fo, pr, T(0), out.data() + fo);
  }
}

template <typename T>
void attention_backward(const AttentionGeometry& g, std::span<const T> q, std::span<const T> k,
                        std::span<const T> v, std::span<const T> probs,
                        std::span<const T> grad_out, std::span<T> grad_q, std::span<T> grad_k,
                        std::span<T> grad_v) {
  const int C = g.channels;
  const int P = g.positions;
  const T scale = T(1) / std::sqrt(static_cast<T>(C));
  std::vector<T> dscore(static_cast<std::size_t>(P) * P);
  for (int n = 0; n < g.batch; ++n) {
    const std::size_t fo = static_cast<std::size_t>(n) * C * P;
    const T* pr = probs.data() + static_cast<std::size_t>(n) * P * P;
    const T* dout = grad_out.data() + fo;
    blas_gemm(false, false, C, P, P, dout, pr, T(1), grad_v.data() + fo);
    blas_gemm(true, false, P, P, C, dout, v.data() + fo, T(0), dscore.data());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < P; ++i) {
      T* row = dscore.data() + static_cast<std::size_t>(i) * P;
      const T* prow = pr + static_cast<std::size_t>(i) * P;
      T dot = 0;
      for (int j = 0; j < P; ++j) dot += row[j] * prow[j];
      for (int j = 0; j < P; ++j) row[j] = prow[j] * (row[j] - dot) * scale;
    }
    blas_gemm(false, true, C, P, P, k.data() + fo, dscore.data(), T(1), grad_q.data() + fo);
    blas_gemm(false, false, C, P, P, q.data() + fo, dscore.data(), T(1), grad_k.data() + fo);
  }
}

#include "kernel_instantiations.inc"

}  // namespace sardd::kernels::parallel
