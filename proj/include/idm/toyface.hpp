#pragma once

#include <cstdint>

#include "idm/image.hpp"
#include "idm/rng.hpp"

namespace idm {

// Procedural stand-in for a face corpus: ellipse face, eyes, mouth, plus
// single-pixel/2x2 freckles and 1-px hair strokes as high-frequency content.
struct ToyFaceSpec {
  int size = 32;
  int channels = 3;
  int n_freckles = 6;
  float freckle_contrast = 0.3f;  // [0.1, 0.5]
  int n_hair_strokes = 4;
  std::uint64_t palette_seed = 0;
};

// Pure function of (spec, rng). Freckle pixels differ from what they
// overwrite by at least freckle_contrast in every channel.
ImageTensor gen_toy_face(const ToyFaceSpec& spec, RngStream rng);

}  // namespace idm
