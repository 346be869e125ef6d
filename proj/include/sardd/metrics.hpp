#pragma once

#include "sardd/image.hpp"

namespace sardd {

struct RegionSpec {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  // Throws ParameterError unless the region fits in the image and has area >= 2.
  void validate(const Image& img) const;
};

// 10 log10(peak^2 / MSE); +infinity when the images are identical.
double psnr(const Image& reference, const Image& test, double peak = 1.0);

// Mean of the local SSIM map over every position where the 11x11 Gaussian
// window (sigma 1.5) fits. K1 = 0.01, K2 = 0.03, dynamic range 1.
double ssim(const Image& reference, const Image& test);

constexpr int kSsimWindow = 11;

// mean^2 / population variance over the region. DegenerateRegionError when the
// variance is zero.
double enl(const Image& img, const RegionSpec& region);

}  // namespace sardd
