// Times the serial reference kernels against the parallel ones on shapes taken
// from the desk predictor.
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include <omp.h>

#include "sardd/kernels.hpp"
#include "sardd/rng.hpp"

namespace k = sardd::kernels;

namespace {

std::vector<float> noise(std::size_t n, sardd::Rng& rng) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.normal());
  return v;
}

double best_ms(const std::function<void()>& fn, int repeats) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  return best;
}

void row(const char* name, const std::function<void()>& ref, const std::function<void()>& par) {
  const double r = best_ms(ref, 3), p = best_ms(par, 5);
  std::printf("%-34s %10.2f ms %10.2f ms %8.1fx\n", name, r, p, r / p);
}

}  // namespace

int main() {
  sardd::Rng rng(1);
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-34s %13s %13s %9s\n", "kernel", "reference", "parallel", "speedup");

  for (auto [ch, size] : {std::pair{32, 32}, {64, 16}, {128, 8}}) {
    k::ConvGeometry g{4, ch, size, size, ch, 3, 3, 1, 1};
    const auto x = noise(std::size_t(4) * ch * size * size, rng);
    const auto w = noise(std::size_t(ch) * ch * 9, rng);
    const auto b = noise(ch, rng);
    std::vector<float> y(x.size()), gx(x.size()), gw(w.size()), gb(b.size());
    char name[64];
    std::snprintf(name, sizeof name, "conv3x3 fwd %dch %dx%d b4", ch, size, size);
    row(name, [&] { k::reference::conv2d_forward<float>(g, x, w, b, y); },
        [&] { k::parallel::conv2d_forward<float>(g, x, w, b, y); });
    std::snprintf(name, sizeof name, "conv3x3 bwd %dch %dx%d b4", ch, size, size);
    row(name,
        [&] {
          k::reference::conv2d_backward_input<float>(g, y, w, gx);
          k::reference::conv2d_backward_params<float>(g, x, y, gw, gb);
        },
        [&] {
          k::parallel::conv2d_backward_input<float>(g, y, w, gx);
          k::parallel::conv2d_backward_params<float>(g, x, y, gw, gb);
        });
  }

  {
    k::NormGeometry g{4, 64, 32 * 32, 8};
    const auto x = noise(std::size_t(4) * 64 * 1024, rng);
    const auto s = noise(64, rng), o = noise(64, rng);
    std::vector<float> y(x.size()), mean(32), rstd(32), gx(x.size()), gs(64), go(64);
    row("group norm fwd 64ch 32x32 b4", [&] { k::reference::group_norm_forward<float>(g, 1e-5f, x, s, o, y, mean, rstd); },
        [&] { k::parallel::group_norm_forward<float>(g, 1e-5f, x, s, o, y, mean, rstd); });
    row("group norm bwd 64ch 32x32 b4",
        [&] { k::reference::group_norm_backward<float>(g, x, s, mean, rstd, y, gx, gs, go); },
        [&] { k::parallel::group_norm_backward<float>(g, x, s, mean, rstd, y, gx, gs, go); });
  }

  {
    k::AttentionGeometry g{4, 128, 64};
    const auto q = noise(std::size_t(4) * 128 * 64, rng), kk = noise(q.size(), rng), v = noise(q.size(), rng);
    std::vector<float> out(q.size()), probs(std::size_t(4) * 64 * 64), gq(q.size()), gk(q.size()), gv(q.size());
    row("attention fwd 128ch 8x8 b4", [&] { k::reference::attention_forward<float>(g, q, kk, v, out, probs); },
        [&] { k::parallel::attention_forward<float>(g, q, kk, v, out, probs); });
    row("attention bwd 128ch 8x8 b4",
        [&] { k::reference::attention_backward<float>(g, q, kk, v, probs, out, gq, gk, gv); },
        [&] { k::parallel::attention_backward<float>(g, q, kk, v, probs, out, gq, gk, gv); });
  }
}
