#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "seqflow/grid.hpp"

namespace seqflow {

/// Forward-backward consistency thresholds:
/// occluded iff |F + B~|^2 > alpha1 (|F|^2 + |B~|^2) + alpha2.
struct FbCheckParams {
  double alpha1 = 0.01;
  double alpha2 = 0.5;

  void validate() const {
    if (!(alpha1 > 0.0)) throw ParameterError("FbCheckParams: alpha1 must be > 0");
    if (!(alpha2 >= 0.0)) throw ParameterError("FbCheckParams: alpha2 must be >= 0");
  }
};

/// conf = exp(-|F + B~|^2 / ((|F|^2 + |B~|^2) delta + guard)), zeroed where
/// |F| > max_displacement.
struct ConfidenceParams {
  double delta = 0.01;
  double max_displacement = 250.0;
  double guard = 1e-6;

  void validate() const {
    if (!(delta > 0.0)) throw ParameterError("ConfidenceParams: delta must be > 0");
    if (!(max_displacement > 0.0))
      throw ParameterError("ConfidenceParams: max_displacement must be > 0");
    if (!(guard > 0.0)) throw ParameterError("ConfidenceParams: guard must be > 0");
  }
};

/// Lattice neighbours and weights of one bilinear lookup with clamp-to-edge
/// borders. in_x / in_y are false when the coordinate was clamped, in which
/// case the sample does not vary with that coordinate.
struct BilinearTap {
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  double fx = 0.0, fy = 0.0;
  bool in_x = true, in_y = true;
};

inline BilinearTap bilinear_tap(int width, int height, double x, double y) {
  BilinearTap t;
  const double xmax = width - 1, ymax = height - 1;
  t.in_x = x >= 0.0 && x <= xmax;
  t.in_y = y >= 0.0 && y <= ymax;
  const double xc = std::clamp(x, 0.0, xmax);
  const double yc = std::clamp(y, 0.0, ymax);
  t.x0 = width > 1 ? std::min(static_cast<int>(std::floor(xc)), width - 2) : 0;
  t.y0 = height > 1 ? std::min(static_cast<int>(std::floor(yc)), height - 2) : 0;
  t.x1 = width > 1 ? t.x0 + 1 : 0;
  t.y1 = height > 1 ? t.y0 + 1 : 0;
  t.fx = width > 1 ? xc - t.x0 : 0.0;
  t.fy = height > 1 ? yc - t.y0 : 0.0;
  if (width == 1) t.in_x = false;
  if (height == 1) t.in_y = false;
  return t;
}

inline double bilinear_at(const Grid& g, const BilinearTap& t, int c) {
  const double a = g(t.y0, t.x0, c), b = g(t.y0, t.x1, c);
  const double d = g(t.y1, t.x0, c), e = g(t.y1, t.x1, c);
  return (1.0 - t.fy) * ((1.0 - t.fx) * a + t.fx * b) + t.fy * ((1.0 - t.fx) * d + t.fx * e);
}

/// Partial derivatives of the bilinear sample with respect to (x, y).
inline std::pair<double, double> bilinear_slope(const Grid& g, const BilinearTap& t, int c) {
  const double a = g(t.y0, t.x0, c), b = g(t.y0, t.x1, c);
  const double d = g(t.y1, t.x0, c), e = g(t.y1, t.x1, c);
  const double dx = t.in_x ? (1.0 - t.fy) * (b - a) + t.fy * (e - d) : 0.0;
  const double dy = t.in_y ? (1.0 - t.fx) * (d - a) + t.fx * (e - b) : 0.0;
  return {dx, dy};
}

/// Bilinear blend of the four lattice neighbours of (x, y); coordinates are
/// clamped to [0, W-1] x [0, H-1].
inline std::vector<double> bilinear_sample(const Grid& g, double x, double y) {
  if (g.empty()) throw DimensionError("bilinear_sample: empty field");
  const BilinearTap t = bilinear_tap(g.width(), g.height(), x, y);
  std::vector<double> out(static_cast<std::size_t>(g.channels()));
  for (int c = 0; c < g.channels(); ++c) out[c] = bilinear_at(g, t, c);
  return out;
}

template <typename Traits>
std::vector<double> bilinear_sample(const Field<Traits>& f, double x, double y) {
  return bilinear_sample(f.grid(), x, y);
}

/// out(p) = source(p + flow(p)) for every channel.
inline Grid warp_grid(const Grid& source, const FlowField& flow) {
  require_same_extent(source, flow, "inverse_warp");
  Grid out(source.height(), source.width(), source.channels());
  for (int y = 0; y < source.height(); ++y) {
    for (int x = 0; x < source.width(); ++x) {
      const BilinearTap t =
          bilinear_tap(source.width(), source.height(), x + flow(y, x, 0), y + flow(y, x, 1));
      for (int c = 0; c < source.channels(); ++c) out(y, x, c) = bilinear_at(source, t, c);
    }
  }
  return out;
}

inline Image inverse_warp(const Image& source, const FlowField& flow) {
  return Image(warp_grid(source.grid(), flow));
}

/// target(p + carrier(p)): aligns a neighbouring frame's flow onto the
/// carrier's lattice.
inline FlowField warp_flow(const FlowField& target, const FlowField& carrier) {
  return FlowField(warp_grid(target.grid(), carrier));
}

inline VisibilityMask fb_occlusion_mask(const FlowField& forward, const FlowField& backward,
                                        const FbCheckParams& params = {}) {
  params.validate();
  require_same_extent(forward, backward, "fb_occlusion_mask");
  const Grid sampled = warp_grid(backward.grid(), forward);
  Grid mask(forward.height(), forward.width(), 1);
  for (std::size_t p = 0; p < mask.pixels(); ++p) {
    const double fu = forward.data()[2 * p], fv = forward.data()[2 * p + 1];
    const double bu = sampled.storage()[2 * p], bv = sampled.storage()[2 * p + 1];
    const double lhs = (fu + bu) * (fu + bu) + (fv + bv) * (fv + bv);
    const double rhs = params.alpha1 * (fu * fu + fv * fv + bu * bu + bv * bv) + params.alpha2;
    mask.storage()[p] = lhs > rhs ? 0.0 : 1.0;
  }
  return VisibilityMask(std::move(mask));
}

inline ConfidenceMap confidence_map(const FlowField& forward, const FlowField& backward,
                                    const ConfidenceParams& params = {}) {
  params.validate();
  require_same_extent(forward, backward, "confidence_map");
  const Grid sampled = warp_grid(backward.grid(), forward);
  Grid conf(forward.height(), forward.width(), 1);
  for (std::size_t p = 0; p < conf.pixels(); ++p) {
    const double fu = forward.data()[2 * p], fv = forward.data()[2 * p + 1];
    const double bu = sampled.storage()[2 * p], bv = sampled.storage()[2 * p + 1];
    const double fnorm2 = fu * fu + fv * fv;
    if (std::sqrt(fnorm2) > params.max_displacement) {
      conf.storage()[p] = 0.0;
      continue;
    }
    const double num = (fu + bu) * (fu + bu) + (fv + bv) * (fv + bv);
    const double den = (fnorm2 + bu * bu + bv * bv) * params.delta + params.guard;
    conf.storage()[p] = std::exp(-num / den);
  }
  return ConfidenceMap(std::move(conf));
}

}  // namespace seqflow
