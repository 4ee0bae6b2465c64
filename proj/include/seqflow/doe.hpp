#pragma once

/// \file
/// Dynamic occlusion enhancer: superpixel occluders with synthesized texture
/// moved across the sequence by a Markov velocity process.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "seqflow/filters.hpp"
#include "seqflow/grid.hpp"
#include "seqflow/motion.hpp"
#include "seqflow/parallel.hpp"
#include "seqflow/rng.hpp"
#include "seqflow/slic.hpp"
#include "seqflow/warp.hpp"

namespace seqflow {

struct DoeParams {
  int n_occluders = 3;
  int superpixels = 50;
  double compactness = 10.0;
  double texture_blur_sigma = 4.0;
  double texture_noise_sigma = 0.05;
  /// Mean initial speed in px/frame; the speed spread is mu / 3.
  double mu_speed = 4.0;
  double sigma_u = 0.5;
  double sigma_v = 0.5;
  /// 0 leaves that axis uncropped.
  int crop_height = 0;
  int crop_width = 0;
  /// Superpixels smaller than this are never selected.
  int min_area = 16;
  /// Overrides the sampled initial state for every occluder.
  std::optional<MotionState> initial_velocity;
  /// Optional per-occluder affine walk about the footprint centre; the
  /// centre and translation fields are ignored.
  std::optional<AffineWalkParams> affine;
  int max_retries = 100;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_occluders < 1) throw ParameterError("DoeParams: n_occluders must be >= 1");
    if (superpixels < 2) throw ParameterError("DoeParams: superpixels must be >= 2");
    if (!(compactness > 0.0)) throw ParameterError("DoeParams: compactness must be > 0");
    if (!(texture_blur_sigma >= 0.0) || !(texture_noise_sigma >= 0.0))
      throw ParameterError("DoeParams: texture sigmas must be >= 0");
    if (!(mu_speed > 0.0)) throw ParameterError("DoeParams: mu_speed must be > 0");
    if (!(sigma_u >= 0.0) || !(sigma_v >= 0.0)) throw ParameterError("DoeParams: sigma_u, sigma_v must be >= 0");
    if (crop_height < 0 || crop_width < 0) throw ParameterError("DoeParams: crop size must be >= 0");
    if (min_area < 1) throw ParameterError("DoeParams: min_area must be >= 1");
    if (max_retries < 1) throw ParameterError("DoeParams: max_retries must be >= 1");
    if (affine) affine->validate();
  }
};

/// One synthetic occluder. `footprint` and `texture` share a local lattice
/// padded by one zero pixel on every side; `positions[t]` is where the local
/// origin sits in frame t and `local[t]` maps frame-t local coordinates onto
/// the footprint lattice about its centre.
struct Occluder {
  int label = -1;
  int source_x = 0;  // footprint bounding box in the keyframe
  int source_y = 0;
  Grid footprint;
  Grid texture;
  int area = 0;
  std::vector<std::array<double, 2>> positions;
  /// Velocity state per frame (last entry repeats the final state).
  std::vector<MotionState> trajectory;
  /// positions[t+1] - positions[t].
  std::vector<MotionState> displacements;
  std::vector<AffineState> local;
  std::vector<bool> frozen;
};

struct DoeResult {
  std::vector<Image> frames;
  std::vector<FlowField> pseudo;
  /// O_t: 0 on occluder pixels, 1 elsewhere; one per frame.
  std::vector<VisibilityMask> masks;
  std::vector<Occluder> occluders;
  int crop_x = 0;
  int crop_y = 0;
  int keyframe = 0;
  int texture_frame = 0;
};

namespace detail {

/// Soft coverage of one occluder over a rectangular frame region.
struct Stamp {
  int x0 = 0, y0 = 0, w = 0, h = 0;
  std::vector<double> alpha;
  std::vector<double> lx, ly;  // local lattice coordinates per pixel

  double at(int x, int y) const {
    if (x < x0 || y < y0 || x >= x0 + w || y >= y0 + h) return 0.0;
    return alpha[static_cast<std::size_t>(y - y0) * w + (x - x0)];
  }
};

inline AffineParams local_map(const Occluder& o, const AffineState& s) {
  return s.to_params(0.5 * (o.footprint.width() - 1), 0.5 * (o.footprint.height() - 1));
}

/// Frame p -> local q = L^-1(p - pos).
inline Stamp make_stamp(const Occluder& o, std::array<double, 2> pos, const AffineState& state) {
  const AffineParams L = local_map(o, state);
  const AffineParams inv = L.inverse();
  const double fw = o.footprint.width() - 1, fh = o.footprint.height() - 1;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (double cx : {0.0, fw})
    for (double cy : {0.0, fh}) {
      const auto p = L.apply(cx, cy);
      xmin = std::min(xmin, p[0] + pos[0]);
      xmax = std::max(xmax, p[0] + pos[0]);
      ymin = std::min(ymin, p[1] + pos[1]);
      ymax = std::max(ymax, p[1] + pos[1]);
    }
  Stamp s;
  s.x0 = static_cast<int>(std::floor(xmin));
  s.y0 = static_cast<int>(std::floor(ymin));
  s.w = static_cast<int>(std::ceil(xmax)) - s.x0 + 1;
  s.h = static_cast<int>(std::ceil(ymax)) - s.y0 + 1;
  const std::size_t n = static_cast<std::size_t>(s.w) * s.h;
  s.alpha.assign(n, 0.0);
  s.lx.assign(n, 0.0);
  s.ly.assign(n, 0.0);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      const auto q = inv.apply(s.x0 + x - pos[0], s.y0 + y - pos[1]);
      const std::size_t i = static_cast<std::size_t>(y) * s.w + x;
      s.lx[i] = q[0];
      s.ly[i] = q[1];
      if (q[0] < -1.0 || q[1] < -1.0 || q[0] > fw + 1.0 || q[1] > fh + 1.0) continue;
      s.alpha[i] = bilinear_at(o.footprint, bilinear_tap(o.footprint.width(), o.footprint.height(), q[0], q[1]), 0);
    }
  return s;
}

inline bool stamp_inside(const Stamp& s, int W, int H) {
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      if (s.alpha[static_cast<std::size_t>(y) * s.w + x] <= 0.0) continue;
      const int fx = s.x0 + x, fy = s.y0 + y;
      if (fx < 0 || fy < 0 || fx >= W || fy >= H) return false;
    }
  return true;
}

inline bool stamps_overlap(const Stamp& a, const Stamp& b) {
  const int x0 = std::max(a.x0, b.x0), x1 = std::min(a.x0 + a.w, b.x0 + b.w);
  const int y0 = std::max(a.y0, b.y0), y1 = std::min(a.y0 + a.h, b.y0 + b.h);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      if (a.at(x, y) > 0.0 && b.at(x, y) > 0.0) return true;
  return false;
}

inline Grid crop_grid(const Grid& g, int x0, int y0, int w, int h) {
  Grid out(h, w, g.channels());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < g.channels(); ++c) out(y, x, c) = g(y0 + y, x0 + x, c);
  return out;
}

inline AffineState affine_step(const AffineState& s, const AffineWalkParams& p, Rng& rng) {
  AffineState n = s;
  n.rotation = rng.normal(s.rotation, p.sigma_rotation);
  n.log_scale = rng.normal(s.log_scale, p.sigma_log_scale);
  n.shear = rng.normal(s.shear, p.sigma_shear);
  return n;
}

}  // namespace detail

/// Exact displacement frame t -> t+1 of the occluder point under frame-t
/// pixel (x, y).
inline std::array<double, 2> occluder_displacement(const Occluder& o, int t, double x, double y) {
  const AffineParams Lt = detail::local_map(o, o.local[t]);
  const AffineParams Ln = detail::local_map(o, o.local[t + 1]);
  const auto q = Lt.inverse().apply(x - o.positions[t][0], y - o.positions[t][1]);
  const auto p = Ln.apply(q[0], q[1]);
  return {p[0] + o.positions[t + 1][0] - x, p[1] + o.positions[t + 1][1] - y};
}

/// Crops, extracts `n_occluders` superpixels from a random keyframe,
/// retextures them from another frame and composites them over every frame
/// along Markov trajectories. Inside an occluder the pseudo-flow becomes the
/// occluder's own displacement; elsewhere it is kept.
inline DoeResult apply_doe(const std::vector<Image>& frames, const std::vector<FlowField>& pseudo,
                           const DoeParams& params, int workers = 1) {
  params.validate();
  const int N = static_cast<int>(frames.size());
  if (N < 2) throw LengthError("apply_doe: need at least 2 frames");
  if (pseudo.size() != frames.size() - 1)
    throw LengthError("apply_doe: expected " + std::to_string(N - 1) + " pseudo flows, got " +
                      std::to_string(pseudo.size()));
  for (const auto& f : frames) {
    require_same_extent(f, frames.front(), "apply_doe frames");
    if (f.channels() != frames.front().channels()) throw DimensionError("apply_doe: frames differ in channels");
  }
  for (const auto& f : pseudo) require_same_extent(f, frames.front(), "apply_doe pseudo");

  Rng rng(params.seed);
  DoeResult out;
  const int H0 = frames.front().height(), W0 = frames.front().width();
  const int H = params.crop_height > 0 ? params.crop_height : H0;
  const int W = params.crop_width > 0 ? params.crop_width : W0;
  if (H > H0 || W > W0) throw ParameterError("apply_doe: crop larger than frame");
  out.crop_x = static_cast<int>(rng.below(static_cast<std::uint64_t>(W0 - W + 1)));
  out.crop_y = static_cast<int>(rng.below(static_cast<std::uint64_t>(H0 - H + 1)));
  std::vector<Grid> work(frames.size());
  std::vector<Grid> flows(pseudo.size());
  for (int t = 0; t < N; ++t) work[t] = detail::crop_grid(frames[t].grid(), out.crop_x, out.crop_y, W, H);
  for (int t = 0; t + 1 < N; ++t) flows[t] = detail::crop_grid(pseudo[t].grid(), out.crop_x, out.crop_y, W, H);
  const int C = work.front().channels();

  // Occluder selection.
  out.keyframe = static_cast<int>(rng.below(static_cast<std::uint64_t>(N)));
  out.texture_frame = N > 1 ? static_cast<int>((out.keyframe + 1 + rng.below(static_cast<std::uint64_t>(N - 1))) % N)
                            : out.keyframe;
  const LabelGrid labels =
      slic_superpixels(Image(work[out.keyframe]), std::min<long>(params.superpixels, static_cast<long>(H) * W),
                       params.compactness);
  const auto areas = labels.areas();
  std::vector<int> eligible;
  for (int l = 0; l < labels.count; ++l)
    if (areas[l] >= params.min_area) eligible.push_back(l);
  if (static_cast<int>(eligible.size()) < params.n_occluders)
    throw ParameterError("apply_doe: only " + std::to_string(eligible.size()) + " superpixels of area >= " +
                         std::to_string(params.min_area) + ", need " + std::to_string(params.n_occluders));
  for (int i = 0; i < params.n_occluders; ++i) {
    const std::size_t j = i + rng.below(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }

  std::vector<Occluder>& occ = out.occluders;
  for (int i = 0; i < params.n_occluders; ++i) {
    Occluder o;
    o.label = eligible[i];
    int bx0 = W, by0 = H, bx1 = -1, by1 = -1;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        if (labels(y, x) == o.label) {
          bx0 = std::min(bx0, x);
          bx1 = std::max(bx1, x);
          by0 = std::min(by0, y);
          by1 = std::max(by1, y);
        }
    const int bw = bx1 - bx0 + 1, bh = by1 - by0 + 1;
    o.source_x = bx0;
    o.source_y = by0;
    o.footprint = Grid(bh + 2, bw + 2, 1);
    for (int y = 0; y < bh; ++y)
      for (int x = 0; x < bw; ++x)
        if (labels(by0 + y, bx0 + x) == o.label) {
          o.footprint(y + 1, x + 1) = 1.0;
          ++o.area;
        }
    // Texture: a same-sized patch of another frame, noised and blurred.
    const int tx = static_cast<int>(rng.below(static_cast<std::uint64_t>(W - bw + 1)));
    const int ty = static_cast<int>(rng.below(static_cast<std::uint64_t>(H - bh + 1)));
    Grid tex(bh + 2, bw + 2, C);
    for (int y = 0; y < bh + 2; ++y)
      for (int x = 0; x < bw + 2; ++x)
        for (int c = 0; c < C; ++c) {
          const int sx = std::clamp(tx + x - 1, 0, W - 1), sy = std::clamp(ty + y - 1, 0, H - 1);
          tex(y, x, c) = work[out.texture_frame](sy, sx, c) + params.texture_noise_sigma * rng.normal();
        }
    o.texture = gaussian_blur(tex, params.texture_blur_sigma);
    clamp_unit(o.texture);
    occ.push_back(std::move(o));
  }

  // Initial placement at integer positions without overlap.
  std::vector<detail::Stamp> current(occ.size());
  for (std::size_t i = 0; i < occ.size(); ++i) {
    Occluder& o = occ[i];
    const AffineState initial = params.affine ? params.affine->initial : AffineState{};
    const int bw = o.footprint.width() - 2, bh = o.footprint.height() - 2;
    bool placed = false;
    for (int attempt = 0; attempt < params.max_retries && !placed; ++attempt) {
      const std::array<double, 2> pos{static_cast<double>(rng.below(static_cast<std::uint64_t>(W - bw + 1))) - 1.0,
                                      static_cast<double>(rng.below(static_cast<std::uint64_t>(H - bh + 1))) - 1.0};
      detail::Stamp s = detail::make_stamp(o, pos, initial);
      if (!detail::stamp_inside(s, W, H)) continue;
      bool clash = false;
      for (std::size_t k = 0; k < i && !clash; ++k) clash = detail::stamps_overlap(s, current[k]);
      if (clash) continue;
      o.positions.push_back(pos);
      o.local.push_back(initial);
      current[i] = std::move(s);
      placed = true;
    }
    if (!placed)
      throw PlacementError("apply_doe: could not place occluder " + std::to_string(i) + " without overlap");
    o.trajectory.push_back(params.initial_velocity ? *params.initial_velocity
                                                   : sample_initial_state(params.mu_speed, rng));
  }

  // Markov motion with collision and frame-boundary rejection.
  for (int t = 0; t + 1 < N; ++t) {
    for (std::size_t i = 0; i < occ.size(); ++i) {
      Occluder& o = occ[i];
      // trajectory[t] drives step t -> t+1; step 0 first tries the initial state.
      const MotionState base = t == 0 ? o.trajectory[0] : o.trajectory[t - 1];
      bool accepted = false;
      for (int attempt = 0; attempt < params.max_retries && !accepted; ++attempt) {
        const MotionState s = (t == 0 && attempt == 0) ? base : markov_step(base, params.sigma_u, params.sigma_v, rng);
        AffineState a = o.local[t];
        if (params.affine) {
          a = detail::affine_step(o.local[t], *params.affine, rng);
          if (!detail::local_map(o, a).invertible()) continue;
        }
        const std::array<double, 2> pos{o.positions[t][0] + s.u, o.positions[t][1] + s.v};
        detail::Stamp st = detail::make_stamp(o, pos, a);
        if (!detail::stamp_inside(st, W, H)) continue;
        bool clash = false;
        for (std::size_t k = 0; k < occ.size() && !clash; ++k)
          if (k != i) clash = detail::stamps_overlap(st, current[k]);
        if (clash) continue;
        if (t == 0) {
          o.trajectory[0] = s;
        } else {
          o.trajectory.push_back(s);
        }
        o.positions.push_back(pos);
        o.local.push_back(a);
        o.displacements.push_back({s.u, s.v});
        o.frozen.push_back(false);
        current[i] = std::move(st);
        accepted = true;
      }
      if (!accepted) {
        if (t > 0) o.trajectory.push_back(o.trajectory[t - 1]);
        o.positions.push_back(o.positions[t]);
        o.local.push_back(o.local[t]);
        o.displacements.push_back({0.0, 0.0});
        o.frozen.push_back(true);
      }
    }
  }
  for (Occluder& o : occ) o.trajectory.push_back(o.trajectory.back());

  // Per-frame compositing.
  out.frames.resize(frames.size());
  out.masks.resize(frames.size());
  out.pseudo.resize(pseudo.size());
  parallel_for(static_cast<std::size_t>(N), workers, [&](std::size_t ti) {
    const int t = static_cast<int>(ti);
    Grid img = work[t];
    Grid mask(H, W, 1, 1.0);
    const bool has_flow = t + 1 < N;
    Grid flow = has_flow ? flows[t] : Grid();
    for (const Occluder& o : occ) {
      const detail::Stamp s = detail::make_stamp(o, o.positions[t], o.local[t]);
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * s.w + x;
          const double a = s.alpha[i];
          if (a <= 0.0) continue;
          const int fx = s.x0 + x, fy = s.y0 + y;
          const BilinearTap tap = bilinear_tap(o.texture.width(), o.texture.height(), s.lx[i], s.ly[i]);
          for (int c = 0; c < C; ++c) img(fy, fx, c) = (1.0 - a) * img(fy, fx, c) + a * bilinear_at(o.texture, tap, c);
          if (a >= 0.5) {
            mask(fy, fx) = 0.0;
            if (has_flow) {
              const auto d = occluder_displacement(o, t, fx, fy);
              flow(fy, fx, 0) = d[0];
              flow(fy, fx, 1) = d[1];
            }
          }
        }
    }
    clamp_unit(img);
    out.frames[t] = Image(std::move(img));
    out.masks[t] = VisibilityMask(std::move(mask));
    if (has_flow) out.pseudo[t] = FlowField(std::move(flow));
  });
  return out;
}

}  // namespace seqflow
