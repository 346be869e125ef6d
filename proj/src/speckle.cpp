#include "sardd/speckle.hpp"

#include <algorithm>
#include <iostream>
#include <limits>

#include "sardd/errors.hpp"

namespace sardd {

void SpeckleParams::validate() const {
  if (!(looks >= 1.0)) {
    throw ParameterError("number of looks must be >= 1, got " + std::to_string(looks));
  }
}

Image sample_speckle(int height, int width, const SpeckleParams& params, Rng& rng) {
  params.validate();
  Image field(height, width);
  for (float& v : field.pixels) {
    // A float rounding of a tiny positive draw could reach zero.
    v = std::max(static_cast<float>(rng.gamma(params.looks) / params.looks),
                 std::numeric_limits<float>::denorm_min());
  }
  return field;
}

Image multiply_speckle(const Image& clean, const Image& field) {
  require_same_size(clean, field, "apply_speckle");
  Image out = clean;
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] *= field.pixels[i];
  return out;
}

Image apply_speckle(const Image& clean, const Image& field) {
  require_same_size(clean, field, "apply_speckle");
  for (float v : clean.pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ParameterError("apply_speckle: clean image outside [0,1]");
  }
  Image out = multiply_speckle(clean, field);
  for (float& v : out.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

std::vector<ImagePair> make_dataset(const std::vector<Image>& sources,
                                    const SpeckleParams& params, int patch_size, int count,
                                    std::uint64_t seed) {
  params.validate();
  if (patch_size < 1) throw ParameterError("make_dataset: patch size must be positive");
  if (count < 1) throw ParameterError("make_dataset: count must be >= 1");
  if (sources.empty()) throw ParameterError("make_dataset: empty source image set");

  std::vector<int> usable;
  for (int i = 0; i < static_cast<int>(sources.size()); ++i) {
    if (sources[i].height >= patch_size && sources[i].width >= patch_size) {
      usable.push_back(i);
    } else {
      std::cerr << "warning: source image " << i << " (" << sources[i].height << "x"
                << sources[i].width << ") smaller than patch " << patch_size << ", skipped\n";
    }
  }
  if (usable.empty()) throw ParameterError("make_dataset: no source image fits the patch size");
  for (int i : usable) {
    for (float v : sources[i].pixels) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw ParameterError("make_dataset: source image " + std::to_string(i) +
                             " has intensities outside [0,1]");
      }
    }
  }

  std::vector<ImagePair> pairs(count);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < count; ++i) {
    ImagePair& pair = pairs[i];
    pair.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    Rng rng(pair.seed);
    pair.source = usable[rng.uniform_int(0, static_cast<std::int64_t>(usable.size()) - 1)];
    const Image& src = sources[pair.source];
    pair.top = static_cast<int>(rng.uniform_int(0, src.height - patch_size));
    pair.left = static_cast<int>(rng.uniform_int(0, src.width - patch_size));
    pair.clean = crop(src, pair.top, pair.left, patch_size, patch_size);
    pair.field = sample_speckle(patch_size, patch_size, params, rng);
    pair.speckled = apply_speckle(pair.clean, pair.field);
    pair.looks = params.looks;
  }
  return pairs;
}

}  // namespace sardd
