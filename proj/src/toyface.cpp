#include "idm/toyface.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace idm {

namespace {

struct Rgb {
  float r, g, b;
};

void put(ImageTensor& img, int y, int x, const Rgb& c) {
  if (y < 0 || y >= img.height || x < 0 || x >= img.width) return;
  img.at(y, x, 0) = c.r;
  if (img.channels == 3) {
    img.at(y, x, 1) = c.g;
    img.at(y, x, 2) = c.b;
  }
}

Rgb jittered(RngStream& rng, float lo, float hi) {
  return {static_cast<float>(rng.uniform(lo, hi)), static_cast<float>(rng.uniform(lo, hi)),
          static_cast<float>(rng.uniform(lo, hi))};
}

}  // namespace

ImageTensor gen_toy_face(const ToyFaceSpec& spec, RngStream rng) {
  if (spec.size < 16) throw std::invalid_argument("gen_toy_face: size must be >= 16");
  if (spec.channels != 1 && spec.channels != 3)
    throw std::invalid_argument("gen_toy_face: channels must be 1 or 3");
  if (spec.freckle_contrast < 0.1f || spec.freckle_contrast > 0.5f)
    throw std::invalid_argument("gen_toy_face: freckle_contrast outside [0.1, 0.5]");

  const int s = spec.size;
  // Palette depends on palette_seed only; geometry comes from rng.
  RngStream pal(spec.palette_seed, 0x7f4ce5a1e77eull);
  const Rgb bg_top = jittered(pal, 0.25f, 0.45f);
  const Rgb bg_bot = jittered(pal, 0.35f, 0.55f);
  Rgb skin = jittered(pal, 0.58f, 0.78f);
  skin.r = std::min(0.82f, skin.r + 0.05f);  // faces warmer than background
  const Rgb eye = jittered(pal, 0.08f, 0.18f);
  const Rgb hair = jittered(pal, 0.10f, 0.22f);
  const Rgb mouth = jittered(pal, 0.28f, 0.42f);

  ImageTensor img(s, s, spec.channels);

  // Background: vertical gradient.
  for (int y = 0; y < s; ++y) {
    const float t = static_cast<float>(y) / static_cast<float>(s - 1);
    const Rgb c{bg_top.r + t * (bg_bot.r - bg_top.r), bg_top.g + t * (bg_bot.g - bg_top.g),
                bg_top.b + t * (bg_bot.b - bg_top.b)};
    for (int x = 0; x < s; ++x) put(img, y, x, c);
  }

  // Face ellipse with seed-dependent center and axes.
  const float cx = s * (0.5f + static_cast<float>(rng.uniform(-0.06, 0.06)));
  const float cy = s * (0.52f + static_cast<float>(rng.uniform(-0.06, 0.06)));
  const float ax = s * static_cast<float>(rng.uniform(0.28, 0.36));
  const float ay = s * static_cast<float>(rng.uniform(0.32, 0.40));
  auto inside_face = [&](float x, float y) {
    const float dx = (x - cx) / ax, dy = (y - cy) / ay;
    return dx * dx + dy * dy <= 1.0f;
  };
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x)
      if (inside_face(static_cast<float>(x), static_cast<float>(y))) put(img, y, x, skin);

  // Eyes.
  const float eye_dx = ax * static_cast<float>(rng.uniform(0.38, 0.52));
  const float eye_y = cy - ay * static_cast<float>(rng.uniform(0.20, 0.32));
  const float eye_r = std::max(1.0f, s * static_cast<float>(rng.uniform(0.035, 0.06)));
  for (int side = -1; side <= 1; side += 2) {
    const float ex = cx + side * eye_dx;
    for (int y = static_cast<int>(eye_y - eye_r); y <= static_cast<int>(eye_y + eye_r) + 1; ++y)
      for (int x = static_cast<int>(ex - eye_r); x <= static_cast<int>(ex + eye_r) + 1; ++x) {
        const float dx = x - ex, dy = y - eye_y;
        if (dx * dx + dy * dy <= eye_r * eye_r) put(img, y, x, eye);
      }
  }

  // Mouth: shallow arc, 1-2 px thick.
  const float mouth_y = cy + ay * static_cast<float>(rng.uniform(0.38, 0.52));
  const float mouth_hw = ax * static_cast<float>(rng.uniform(0.30, 0.45));
  const float bend = static_cast<float>(rng.uniform(0.5, 2.0));
  const int thick = s >= 48 ? 2 : 1;
  for (int x = static_cast<int>(cx - mouth_hw); x <= static_cast<int>(cx + mouth_hw); ++x) {
    const float u = (x - cx) / mouth_hw;
    const int y0 = static_cast<int>(std::lround(mouth_y + bend * u * u));
    for (int t = 0; t < thick; ++t) put(img, y0 + t, x, mouth);
  }

  // Hair strokes: 1-px random walks fanning out from the top of the ellipse.
  for (int k = 0; k < spec.n_hair_strokes; ++k) {
    const float theta = static_cast<float>(rng.uniform(-1.2, 1.2));  // from vertical
    float hx = cx + ax * std::sin(theta) * 0.9f;
    float hy = cy - ay * std::cos(theta) * 0.9f;
    float dir = theta + static_cast<float>(rng.uniform(-0.3, 0.3));
    const int len = std::max(4, s / 5);
    for (int i = 0; i < len; ++i) {
      put(img, static_cast<int>(std::lround(hy)), static_cast<int>(std::lround(hx)), hair);
      dir += static_cast<float>(rng.uniform(-0.35, 0.35));
      hx += std::sin(dir);
      hy -= std::abs(std::cos(dir));  // always climbing away from the face
    }
  }

  // Freckles: 1-px or 2x2 marks inside the face, shifted from the local
  // value by >= freckle_contrast in every channel (spec invariant).
  const float want = spec.freckle_contrast * 1.15f;
  int placed = 0, attempts = 0;
  while (placed < spec.n_freckles && attempts < spec.n_freckles * 50) {
    ++attempts;
    const float fx = cx + ax * static_cast<float>(rng.uniform(-0.8, 0.8));
    const float fy = cy + ay * static_cast<float>(rng.uniform(-0.8, 0.8));
    const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
    const bool big = rng.uniform() < 0.4;
    const int sz = big ? 2 : 1;
    if (x0 < 1 || y0 < 1 || x0 + sz >= s - 1 || y0 + sz >= s - 1) continue;
    if (!inside_face(fx, fy)) continue;
    // keep away from eyes and mouth so the mark sits on plain skin
    if (std::abs(fy - eye_y) < eye_r + 1.5f && std::abs(std::abs(fx - cx) - eye_dx) < eye_r + 1.5f) continue;
    if (std::abs(fy - mouth_y) < 2.5f && std::abs(fx - cx) < mouth_hw + 1.5f) continue;

    for (int dy = 0; dy < sz; ++dy)
      for (int dx = 0; dx < sz; ++dx) {
        const int y = y0 + dy, x = x0 + dx;
        float lo = 1.0f, hi = 0.0f;
        for (int c = 0; c < img.channels; ++c) {
          lo = std::min(lo, img.at(y, x, c));
          hi = std::max(hi, img.at(y, x, c));
        }
        const float room_down = lo, room_up = 1.0f - hi;
        float shift = room_down >= room_up ? -std::min(want, room_down) : std::min(want, room_up);
        if (std::abs(shift) < spec.freckle_contrast)
          shift = room_down >= room_up ? -room_down : room_up;
        for (int c = 0; c < img.channels; ++c) img.at(y, x, c) += shift;
      }
    ++placed;
  }

  img.clip01();
  return img;
}

}  // namespace idm
