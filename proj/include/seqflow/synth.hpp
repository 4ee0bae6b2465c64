#pragma once

/// \file
/// Translating textured box over a static background, with exact flows and
/// occlusion masks. The repository's ground-truth oracle.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "seqflow/grid.hpp"
#include "seqflow/rng.hpp"
#include "seqflow/warp.hpp"

namespace seqflow {

enum class TextureKind { uniform_noise, flat };

inline const char* to_string(TextureKind k) { return k == TextureKind::flat ? "flat" : "uniform_noise"; }

inline TextureKind texture_kind_from_string(const std::string& s) {
  if (s == "uniform_noise") return TextureKind::uniform_noise;
  if (s == "flat") return TextureKind::flat;
  throw ParameterError("unknown texture kind '" + s + "'");
}

struct BoxSceneParams {
  int frames = 100;
  int height = 128;
  int width = 448;
  int channels = 3;
  int box_width = 32;
  int box_height = 32;
  double start_x = 8.0;  // box top-left in frame 0
  double start_y = 48.0;
  double velocity_u = 4.0;
  double velocity_v = 0.0;
  TextureKind box_texture = TextureKind::uniform_noise;
  TextureKind background = TextureKind::uniform_noise;
  double box_value = 0.8;  // flat textures
  double background_value = 0.3;
  /// Box positions wrap around the frame instead of being rejected.
  bool wrap = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (frames < 2) throw ParameterError("BoxSceneParams: need at least 2 frames");
    if (height < 1 || width < 1) throw ParameterError("BoxSceneParams: frame size must be positive");
    if (channels != 1 && channels != 3) throw ParameterError("BoxSceneParams: channels must be 1 or 3");
    if (box_width < 1 || box_height < 1) throw ParameterError("BoxSceneParams: box size must be positive");
    if (box_width > width || box_height > height)
      throw ParameterError("BoxSceneParams: box " + std::to_string(box_width) + "x" + std::to_string(box_height) +
                           " larger than frame " + std::to_string(width) + "x" + std::to_string(height));
    for (double v : {start_x, start_y, velocity_u, velocity_v})
      if (!std::isfinite(v)) throw ParameterError("BoxSceneParams: positions and velocity must be finite");
    for (double v : {box_value, background_value})
      if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("BoxSceneParams: flat values must lie in [0,1]");
    if (!wrap) {
      const double last_x = start_x + velocity_u * (frames - 1), last_y = start_y + velocity_v * (frames - 1);
      for (double x : {start_x, last_x})
        if (x < 0.0 || x + box_width > width)
          throw ParameterError("BoxSceneParams: box leaves the frame horizontally (wrap disabled)");
      for (double y : {start_y, last_y})
        if (y < 0.0 || y + box_height > height)
          throw ParameterError("BoxSceneParams: box leaves the frame vertically (wrap disabled)");
    }
  }
};

struct SynthScene {
  BoxSceneParams params;
  /// frames, forward and backward GT flows, and masks = occlusion_forward.
  Sequence sequence;
  /// Pixels of frame t covered by the box in frame t+1 (leading band) are 0.
  std::vector<VisibilityMask> occlusion_forward;
  /// Pixels of frame t+1 that the box uncovered (trailing band) are 0.
  std::vector<VisibilityMask> occlusion_backward;
  /// Box coverage per frame (1 inside, 0 outside, thresholded at 0.5).
  std::vector<VisibilityMask> box_masks;
};

namespace detail {

inline Grid make_texture(int h, int w, int channels, TextureKind kind, double flat, Rng& rng) {
  Grid g(h, w, channels, flat);
  if (kind == TextureKind::uniform_noise)
    for (double& v : g.storage()) v = static_cast<double>(rng.below(256)) / 255.0;
  return g;
}

inline double wrap_coord(double v, int period) {
  const double r = std::fmod(v, static_cast<double>(period));
  return r < 0 ? r + period : r;
}

}  // namespace detail

/// Renders frame t: the box texture is sampled bilinearly at local
/// coordinates (x - bx, y - by) and composited with soft bilinear coverage,
/// which is exact for integer positions.
inline SynthScene generate_box_scene(const BoxSceneParams& params) {
  params.validate();
  Rng rng(params.seed);
  const int H = params.height, W = params.width, C = params.channels, N = params.frames;
  const int bw = params.box_width, bh = params.box_height;
  const Grid background = detail::make_texture(H, W, C, params.background, params.background_value, rng);
  Grid footprint(bh + 2, bw + 2, 1);
  for (int y = 1; y <= bh; ++y)
    for (int x = 1; x <= bw; ++x) footprint(y, x) = 1.0;
  const Grid inner = detail::make_texture(bh, bw, C, params.box_texture, params.box_value, rng);
  Grid texture(bh + 2, bw + 2, C);
  for (int y = 0; y < bh + 2; ++y)
    for (int x = 0; x < bw + 2; ++x)
      for (int c = 0; c < C; ++c) texture(y, x, c) = inner(std::clamp(y - 1, 0, bh - 1), std::clamp(x - 1, 0, bw - 1), c);

  SynthScene scene;
  scene.params = params;
  for (int t = 0; t < N; ++t) {
    const double bx = params.start_x + params.velocity_u * t, by = params.start_y + params.velocity_v * t;
    Grid img = background;
    Grid cov(H, W, 1);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double lx = x - bx + 1.0, ly = y - by + 1.0;  // +1: padded local lattice
        if (params.wrap) {
          lx = detail::wrap_coord(lx, W);
          ly = detail::wrap_coord(ly, H);
        }
        if (lx < -1.0 || ly < -1.0 || lx > bw + 2.0 || ly > bh + 2.0) continue;
        const BilinearTap tap = bilinear_tap(bw + 2, bh + 2, lx, ly);
        const double a = bilinear_at(footprint, tap, 0);
        if (a <= 0.0) continue;
        cov(y, x) = a;
        for (int c = 0; c < C; ++c) img(y, x, c) = (1.0 - a) * img(y, x, c) + a * bilinear_at(texture, tap, c);
      }
    for (double& v : img.storage()) v = std::clamp(v, 0.0, 1.0);
    scene.sequence.frames.emplace_back(std::move(img));
    Grid hard(H, W, 1);
    for (std::size_t p = 0; p < hard.pixels(); ++p) hard.storage()[p] = cov.storage()[p] >= 0.5 ? 1.0 : 0.0;
    scene.box_masks.emplace_back(std::move(hard));
  }
  for (int t = 0; t + 1 < N; ++t) {
    const auto& now = scene.box_masks[t].data();
    const auto& next = scene.box_masks[t + 1].data();
    Grid fwd(H, W, 2), bwd(H, W, 2), occ_f(H, W, 1, 1.0), occ_b(H, W, 1, 1.0);
    for (std::size_t p = 0; p < fwd.pixels(); ++p) {
      if (now[p] == 1.0) {
        fwd.storage()[2 * p] = params.velocity_u;
        fwd.storage()[2 * p + 1] = params.velocity_v;
      }
      if (next[p] == 1.0) {
        bwd.storage()[2 * p] = -params.velocity_u;
        bwd.storage()[2 * p + 1] = -params.velocity_v;
      }
      if (now[p] == 0.0 && next[p] == 1.0) occ_f.storage()[p] = 0.0;
      if (now[p] == 1.0 && next[p] == 0.0) occ_b.storage()[p] = 0.0;
    }
    scene.sequence.forward.emplace_back(std::move(fwd));
    scene.sequence.backward.emplace_back(std::move(bwd));
    scene.occlusion_forward.emplace_back(std::move(occ_f));
    scene.occlusion_backward.emplace_back(std::move(occ_b));
  }
  scene.sequence.masks = scene.occlusion_forward;
  return scene;
}

}  // namespace seqflow
