#pragma once

#include <filesystem>
#include <vector>

#include "sardd/tensor.hpp"

namespace sardd {

// Single-channel 2-D field, row-major. Intensity images live in [0,1]; the same
// type carries speckle fields and the signed [-1,1] diffusion working range.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f);
  Image(int h, int w, std::vector<float> values);

  float& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::size_t size() const { return pixels.size(); }

  bool operator==(const Image&) const = default;
};

void require_same_size(const Image& a, const Image& b, const char* what);

// [0,1] -> [-1,1] and back. from_signed clamps to [0,1].
Image to_signed(const Image& img);
Image from_signed(const Image& img);

// round(x*255)/255 with clamping: the value a save/load cycle would produce.
Image quantize_8bit(const Image& img);

Image crop(const Image& img, int top, int left, int height, int width);

// Packs images of equal size into (N,1,H,W) and back.
Tensor<float> stack(const std::vector<Image>& images);
Image unstack(const Tensor<float>& batch, int index);

// 8-bit grayscale files: binary/ASCII PGM (.pgm) and PNG (.png).
Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);

}  // namespace sardd
