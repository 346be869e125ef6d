// Serial reference kernels. Written for obviousness, not speed: they are the
// oracle the parallel kernels are tested against.

#include <algorithm>
#include <cmath>
#include <vector>

#include "sardd/kernels.hpp"

namespace sardd::kernels::reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T beta,
          T* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * m + i] : a[i * k + p];
        const T bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] = (beta == T(0) ? T(0) : beta * c[i * n + j]) + acc;
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  for (int n = 0; n < g.batch; ++n)
    for (int o = 0; o < g.out_channels; ++o)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          T acc = bias.empty() ? T(0) : bias[o];
          for (int c = 0; c < g.in_channels; ++c)
            for (int ky = 0; ky < g.kernel_h; ++ky)
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int iy = y * g.stride - g.padding + ky;
                const int ix = x * g.stride - g.padding + kx;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                acc += input[((n * g.in_channels + c) * g.height + iy) * g.width + ix] *
                       weight[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
              }
          output[((n * g.out_channels + o) * oh + y) * ow + x] = acc;
        }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  for (int n = 0; n < g.batch; ++n)
    for (int o = 0; o < g.out_channels; ++o)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          const T go = grad_output[((n * g.out_channels + o) * oh + y) * ow + x];
          for (int c = 0; c < g.in_channels; ++c)
            for (int ky = 0; ky < g.kernel_h; ++ky)
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int iy = y * g.stride - g.padding + ky;
                const int ix = x * g.stride - g.padding + kx;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                grad_input[((n * g.in_channels + c) * g.height + iy) * g.width + ix] +=
                    go * weight[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
              }
        }
}

template <typename T>
void conv2d_backward_params(const ConvGeometry& g, std::span<const T> input,
                            std::span<const T> grad_output, std::span<T> grad_weight,
                            std::span<T> grad_bias) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  for (int n = 0; n < g.batch; ++n)
    for (int o = 0; o < g.out_channels; ++o)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          const T go = grad_output[((n * g.out_channels + o) * oh + y) * ow + x];
          if (!grad_bias.empty()) grad_bias[o] += go;
          for (int c = 0; c < g.in_channels; ++c)
            for (int ky = 0; ky < g.kernel_h; ++ky)
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int iy = y * g.stride - g.padding + ky;
                const int ix = x * g.stride - g.padding + kx;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                grad_weight[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx] +=
                    go * input[((n * g.in_channels + c) * g.height + iy) * g.width + ix];
              }
        }
}

template <typename T>
void group_norm_forward(const NormGeometry& g, T eps, std::span<const T> x,
                        std::span<const T> scale, std::span<const T> offset, std::span<T> y,
                        std::span<T> mean, std::span<T> rstd) {
  const int per_group = g.channels / g.groups;
  const int count = per_group * g.spatial;
  for (int n = 0; n < g.batch; ++n)
    for (int grp = 0; grp < g.groups; ++grp) {
      const std::size_t base =
          (static_cast<std::size_t>(n) * g.channels + grp * per_group) * g.spatial;
      T sum = 0;
      for (int i = 0; i < count; ++i) sum += x[base + i];
      const T m = sum / count;
      T sq = 0;
      for (int i = 0; i < count; ++i) sq += (x[base + i] - m) * (x[base + i] - m);
      const T r = T(1) / std::sqrt(sq / count + eps);
      mean[n * g.groups + grp] = m;
      rstd[n * g.groups + grp] = r;
      for (int i = 0; i < count; ++i) {
        const int c = grp * per_group + i / g.spatial;
        y[base + i] = (x[base + i] - m) * r * scale[c] + offset[c];
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
  for (int n = 0; n < g.batch; ++n)
    for (int grp = 0; grp < g.groups; ++grp) {
      const std::size_t base =
          (static_cast<std::size_t>(n) * g.channels + grp * per_group) * g.spatial;
      const T m = mean[n * g.groups + grp];
      const T r = rstd[n * g.groups + grp];
      T sum_dxhat = 0;
      T sum_dxhat_xhat = 0;
      for (int i = 0; i < count; ++i) {
        const int c = grp * per_group + i / g.spatial;
        const T xhat = (x[base + i] - m) * r;
        const T dxhat = grad_y[base + i] * scale[c];
        grad_scale[c] += grad_y[base + i] * xhat;
        grad_offset[c] += grad_y[base + i];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
      }
      for (int i = 0; i < count; ++i) {
        const int c = grp * per_group + i / g.spatial;
        const T xhat = (x[base + i] - m) * r;
        const T dxhat = grad_y[base + i] * scale[c];
        grad_x[base + i] += r / count * (count * dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
      }
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
    const std::size_t po = static_cast<std::size_t>(n) * P * P;
    for (int i = 0; i < P; ++i) {
      std::vector<T> row(P);
      for (int j = 0; j < P; ++j) {
        T s = 0;
        for (int c = 0; c < C; ++c) s += q[fo + c * P + i] * k[fo + c * P + j];
        row[j] = s * scale;
      }
      const T mx = *std::max_element(row.begin(), row.end());
      T z = 0;
      for (auto& r : row) {
        r = std::exp(r - mx);
        z += r;
      }
      for (int j = 0; j < P; ++j) probs[po + i * P + j] = row[j] / z;
    }
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < P; ++i) {
        T acc = 0;
        for (int j = 0; j < P; ++j) acc += probs[po + i * P + j] * v[fo + c * P + j];
        out[fo + c * P + i] = acc;
      }
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
  for (int n = 0; n < g.batch; ++n) {
    const std::size_t fo = static_cast<std::size_t>(n) * C * P;
    const std::size_t po = static_cast<std::size_t>(n) * P * P;
    for (int c = 0; c < C; ++c)
      for (int j = 0; j < P; ++j) {
        T acc = 0;
        for (int i = 0; i < P; ++i) acc += grad_out[fo + c * P + i] * probs[po + i * P + j];
        grad_v[fo + c * P + j] += acc;
      }
    std::vector<T> dscore(static_cast<std::size_t>(P) * P);
    for (int i = 0; i < P; ++i) {
      std::vector<T> dp(P);
      T dot = 0;
      for (int j = 0; j < P; ++j) {
        T s = 0;
        for (int c = 0; c < C; ++c) s += grad_out[fo + c * P + i] * v[fo + c * P + j];
        dp[j] = s;
        dot += s * probs[po + i * P + j];
      }
      for (int j = 0; j < P; ++j) dscore[i * P + j] = probs[po + i * P + j] * (dp[j] - dot);
    }
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < P; ++i) {
        T acc = 0;
        for (int j = 0; j < P; ++j) acc += dscore[i * P + j] * k[fo + c * P + j];
        grad_q[fo + c * P + i] += acc * scale;
      }
    for (int c = 0; c < C; ++c)
      for (int j = 0; j < P; ++j) {
        T acc = 0;
        for (int i = 0; i < P; ++i) acc += dscore[i * P + j] * q[fo + c * P + i];
        grad_k[fo + c * P + j] += acc * scale;
      }
  }
}

#include "kernel_instantiations.inc"

}  // namespace sardd::kernels::reference
