#include "sardd/textures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sardd/rng.hpp"

namespace sardd {

namespace {

void paint_shapes(Image& img, Rng& rng, int shapes) {
  for (int s = 0; s < shapes; ++s) {
    const float level = static_cast<float>(0.1 + 0.8 * rng.uniform());
    const double cy = rng.uniform() * img.height;
    const double cx = rng.uniform() * img.width;
    const double ry = (0.08 + 0.3 * rng.uniform()) * img.height;
    const double rx = (0.08 + 0.3 * rng.uniform()) * img.width;
    const bool ellipse = rng.uniform() < 0.5;
    for (int r = 0; r < img.height; ++r)
      for (int c = 0; c < img.width; ++c) {
        const double dy = (r - cy) / ry;
        const double dx = (c - cx) / rx;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0
                                    : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (inside) img.at(r, c) = level;
      }
  }
}

void add_shading(Image& img, Rng& rng, double strength) {
  const double gy = (rng.uniform() - 0.5) * strength;
  const double gx = (rng.uniform() - 0.5) * strength;
  const double by = rng.uniform() * img.height;
  const double bx = rng.uniform() * img.width;
  const double spread = (0.2 + 0.4 * rng.uniform()) * std::max(img.height, img.width);
  const double amp = (rng.uniform() - 0.5) * strength;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const double ramp = gy * r / img.height + gx * c / img.width;
      const double d2 = ((r - by) * (r - by) + (c - bx) * (c - bx)) / (spread * spread);
      img.at(r, c) += static_cast<float>(ramp + amp * std::exp(-d2));
    }
}

void add_stripes(Image& img, Rng& rng) {
  const double theta = rng.uniform() * std::numbers::pi;
  const double period = 6.0 + 14.0 * rng.uniform();
  const double amp = 0.08 + 0.15 * rng.uniform();
  const double phase = rng.uniform() * 2.0 * std::numbers::pi;
  const double ky = std::sin(theta) * 2.0 * std::numbers::pi / period;
  const double kx = std::cos(theta) * 2.0 * std::numbers::pi / period;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      img.at(r, c) += static_cast<float>(amp * std::sin(ky * r + kx * c + phase));
    }
}

}  // namespace

Image synthetic_texture(int height, int width, std::uint64_t seed) {
  Rng rng(seed);
  Image img(height, width, static_cast<float>(0.2 + 0.6 * rng.uniform()));
  const double kind = rng.uniform();
  if (kind < 0.4) {
    paint_shapes(img, rng, 3 + static_cast<int>(rng.uniform_int(0, 4)));
    add_shading(img, rng, 0.2);
  } else if (kind < 0.7) {
    add_shading(img, rng, 0.6);
    paint_shapes(img, rng, 1 + static_cast<int>(rng.uniform_int(0, 2)));
  } else {
    add_stripes(img, rng);
    paint_shapes(img, rng, 1 + static_cast<int>(rng.uniform_int(0, 2)));
    add_shading(img, rng, 0.2);
  }
  for (float& v : img.pixels) v = std::clamp(v, 0.05f, 0.95f);
  return img;
}

std::vector<Image> synthetic_textures(int count, int height, int width, std::uint64_t seed) {
  std::vector<Image> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    out.push_back(synthetic_texture(height, width, derive_seed(seed, static_cast<std::uint64_t>(i))));
  }
  return out;
}

}  // namespace sardd
