#include "sardd/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "sardd/errors.hpp"

namespace sardd {

Image::Image(int h, int w, float fill) : height(h), width(w) {
  if (h < 1 || w < 1) throw DimensionError("image dimensions must be positive");
  pixels.assign(static_cast<std::size_t>(h) * w, fill);
}

Image::Image(int h, int w, std::vector<float> values)
    : height(h), width(w), pixels(std::move(values)) {
  if (h < 1 || w < 1) throw DimensionError("image dimensions must be positive");
  if (pixels.size() != static_cast<std::size_t>(h) * w) {
    throw DimensionError("image " + std::to_string(h) + "x" + std::to_string(w) + " given " +
                         std::to_string(pixels.size()) + " values");
  }
}

void require_same_size(const Image& a, const Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError(std::string(what) + ": image " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " does not match " +
                         std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

Image to_signed(const Image& img) {
  Image out = img;
  for (float& v : out.pixels) v = 2.0f * v - 1.0f;
  return out;
}

Image from_signed(const Image& img) {
  Image out = img;
  for (float& v : out.pixels) v = std::clamp((v + 1.0f) * 0.5f, 0.0f, 1.0f);
  return out;
}

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

float from_byte(std::uint8_t b) { return static_cast<float>(b) / 255.0f; }

}  // namespace

Image quantize_8bit(const Image& img) {
  Image out = img;
  for (float& v : out.pixels) v = from_byte(to_byte(v));
  return out;
}

Image crop(const Image& img, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > img.height ||
      left + width > img.width) {
    throw DimensionError("crop window outside image bounds");
  }
  Image out(height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) out.at(r, c) = img.at(top + r, left + c);
  return out;
}

Tensor<float> stack(const std::vector<Image>& images) {
  if (images.empty()) throw DimensionError("stack: no images");
  const int h = images.front().height;
  const int w = images.front().width;
  std::vector<float> data;
  data.reserve(images.size() * h * w);
  for (const Image& img : images) {
    require_same_size(img, images.front(), "stack");
    data.insert(data.end(), img.pixels.begin(), img.pixels.end());
  }
  return Tensor<float>(Shape{static_cast<int>(images.size()), 1, h, w}, std::move(data));
}

Image unstack(const Tensor<float>& batch, int index) {
  if (batch.rank() != 4 || batch.dim(1) != 1) {
    throw DimensionError("unstack: expected (N,1,H,W), got " + shape_string(batch.shape()));
  }
  const int h = batch.dim(2);
  const int w = batch.dim(3);
  const auto first = batch.data().begin() + static_cast<std::ptrdiff_t>(index) * h * w;
  return Image(h, w, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(h) * w));
}

namespace {

std::string read_token(std::istream& in) {
  std::string token;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(ch);
  }
  return token;
}

Image load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = read_token(in);
  if (magic != "P5" && magic != "P2") {
    throw FormatError(path.string() + ": not an 8-bit grayscale PGM (magic '" + magic + "')");
  }
  int w = 0;
  int h = 0;
  int maxval = 0;
  try {
    w = std::stoi(read_token(in));
    h = std::stoi(read_token(in));
    maxval = std::stoi(read_token(in));
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": malformed PGM header");
  }
  if (w < 1 || h < 1) throw FormatError(path.string() + ": invalid PGM dimensions");
  if (maxval != 255) {
    throw FormatError(path.string() + ": unsupported bit depth (maxval " +
                      std::to_string(maxval) + ", need 255)");
  }
  Image img(h, w);
  if (magic == "P5") {
    std::vector<unsigned char> bytes(img.size());
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
      throw FormatError(path.string() + ": truncated PGM payload");
    }
    for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = from_byte(bytes[i]);
  } else {
    for (std::size_t i = 0; i < img.size(); ++i) {
      const std::string tok = read_token(in);
      if (tok.empty()) throw FormatError(path.string() + ": truncated PGM payload");
      const int v = std::stoi(tok);
      if (v < 0 || v > 255) throw FormatError(path.string() + ": PGM value out of range");
      img.pixels[i] = from_byte(static_cast<std::uint8_t>(v));
    }
  }
  return img;
}

void save_pgm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(img.pixels[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Image load_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw FormatError(path.string() + ": " + image.message);
  }
  const bool gray8 = (image.format & PNG_FORMAT_FLAG_COLOR) == 0 &&
                     (image.format & PNG_FORMAT_FLAG_LINEAR) == 0 &&
                     (image.format & PNG_FORMAT_FLAG_ALPHA) == 0;
  if (!gray8) {
    png_image_free(&image);
    throw FormatError(path.string() + ": PNG is not 8-bit single-channel grayscale");
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    throw FormatError(path.string() + ": " + image.message);
  }
  Image img(static_cast<int>(image.height), static_cast<int>(image.width));
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = from_byte(bytes[i]);
  return img;
}

void save_png(const Image& img, const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> bytes(img.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(img.pixels[i]);
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + image.message);
  }
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  const std::string ext = lower_extension(path);
  if (ext == ".pgm") return load_pgm(path);
  if (ext == ".png") return load_png(path);
  throw FormatError(path.string() + ": unsupported image format '" + ext + "'");
}

void save_image(const Image& img, const std::filesystem::path& path) {
  const auto parent = path.parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw IoError("parent directory does not exist: " + parent.string());
  }
  const std::string ext = lower_extension(path);
  if (ext == ".pgm") return save_pgm(img, path);
  if (ext == ".png") return save_png(img, path);
  throw FormatError(path.string() + ": unsupported image format '" + ext + "'");
}

}  // namespace sardd
