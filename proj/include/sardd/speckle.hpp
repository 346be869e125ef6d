#pragma once

#include <cstdint>
#include <vector>

#include "sardd/image.hpp"
#include "sardd/rng.hpp"

namespace sardd {

struct SpeckleParams {
  double looks = 1.0;  // L >= 1
  std::uint64_t seed = 0;

  void validate() const;
};

// One training example. `field` is the multiplicative speckle realization, kept
// so that speckled == clip(clean * field) can be re-derived.
struct ImagePair {
  Image clean;
  Image speckled;
  Image field;
  double looks = 1.0;
  std::uint64_t seed = 0;  // per-patch sub-seed
  int source = 0;          // index into the source image list
  int top = 0;
  int left = 0;
};

// i.i.d. Gamma(shape=L, rate=L) draws: unit mean, variance 1/L, all positive.
Image sample_speckle(int height, int width, const SpeckleParams& params, Rng& rng);

// clean * field elementwise, no clipping.
Image multiply_speckle(const Image& clean, const Image& field);

// clean * field clipped to [0,1]. clean must lie in [0,1].
Image apply_speckle(const Image& clean, const Image& field);

// `count` random square patches with independent speckle. Patch i draws its
// source, offset and speckle from sub-stream derive_seed(seed, i), so the result
// depends only on the arguments. Sources smaller than the patch are skipped with
// a warning on stderr; having no usable source is an error.
std::vector<ImagePair> make_dataset(const std::vector<Image>& sources,
                                    const SpeckleParams& params, int patch_size, int count,
                                    std::uint64_t seed);

}  // namespace sardd
