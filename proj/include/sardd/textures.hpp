#pragma once

#include <cstdint>
#include <vector>

#include "sardd/image.hpp"

namespace sardd {

// Procedural clean scenes standing in for optical training imagery: flat
// regions with sharp boundaries, smooth shading, and oriented periodic texture.
// Intensities stay in [0.05, 0.95].
Image synthetic_texture(int height, int width, std::uint64_t seed);

// `count` textures; texture i uses derive_seed(seed, i).
std::vector<Image> synthetic_textures(int count, int height, int width, std::uint64_t seed);

}  // namespace sardd
