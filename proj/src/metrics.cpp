#include "sardd/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "sardd/errors.hpp"

namespace sardd {

namespace {

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Separable valid-mode filtering with the Gaussian window.
std::vector<double> filter_valid(const std::vector<double>& x, int h, int w) {
  static const auto g = gaussian_window();
  const int oh = h - kSsimWindow + 1;
  const int ow = w - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += g[k] * x[static_cast<std::size_t>(r) * w + c + k];
      rows[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += g[k] * rows[static_cast<std::size_t>(r + k) * ow + c];
      out[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  }
  return out;
}

}  // namespace

void RegionSpec::validate(const Image& img) const {
  if (height < 1 || width < 1 || height * width < 2) {
    throw ParameterError("region " + std::to_string(height) + "x" + std::to_string(width) +
                         " must cover at least 2 pixels");
  }
  if (top < 0 || left < 0 || top + height > img.height || left + width > img.width) {
    throw ParameterError("region at (" + std::to_string(top) + "," + std::to_string(left) +
                         ") size " + std::to_string(height) + "x" + std::to_string(width) +
                         " exceeds image " + std::to_string(img.height) + "x" +
                         std::to_string(img.width));
  }
}

double psnr(const Image& reference, const Image& test, double peak) {
  require_same_size(reference, test, "psnr");
  if (!(peak > 0.0)) throw ParameterError("psnr: peak must be > 0");
  if (reference.size() == 0) throw DimensionError("psnr: empty image");
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = static_cast<double>(reference.pixels[i]) - test.pixels[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(reference.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Image& reference, const Image& test) {
  require_same_size(reference, test, "ssim");
  const int h = reference.height;
  const int w = reference.width;
  if (h < kSsimWindow || w < kSsimWindow) {
    throw DimensionError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                         " smaller than the " + std::to_string(kSsimWindow) + "x" +
                         std::to_string(kSsimWindow) + " window");
  }
  const std::size_t n = reference.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = reference.pixels[i];
    y[i] = test.pixels[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w);
  const auto my = filter_valid(y, h, w);
  const auto sxx = filter_valid(xx, h, w);
  const auto syy = filter_valid(yy, h, w);
  const auto sxy = filter_valid(xy, h, w);

  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double enl(const Image& img, const RegionSpec& region) {
  region.validate(img);
  double sum = 0.0;
  for (int r = 0; r < region.height; ++r) {
    for (int c = 0; c < region.width; ++c) sum += img.at(region.top + r, region.left + c);
  }
  const double count = static_cast<double>(region.height) * region.width;
  const double mean = sum / count;
  double var = 0.0;
  for (int r = 0; r < region.height; ++r) {
    for (int c = 0; c < region.width; ++c) {
      const double d = img.at(region.top + r, region.left + c) - mean;
      var += d * d;
    }
  }
  var /= count;
  if (var == 0.0) throw DegenerateRegionError("enl: region has zero variance");
  return mean * mean / var;
}

}  // namespace sardd
