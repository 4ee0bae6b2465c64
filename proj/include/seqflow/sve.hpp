#pragma once

/// \file
/// Spatial variation enhancer: a per-frame affine resampling of the sequence
/// and the matching transform of the pseudo-labels.

#include <vector>

#include "seqflow/filters.hpp"
#include "seqflow/grid.hpp"
#include "seqflow/motion.hpp"
#include "seqflow/parallel.hpp"
#include "seqflow/warp.hpp"

namespace seqflow {

struct SveResult {
  std::vector<Image> frames;
  std::vector<FlowField> pseudo;
};

/// out(p) = g(tau(p)), bilinear with clamped borders.
inline Grid transform_grid(const Grid& g, const AffineParams& tau) {
  Grid out(g.height(), g.width(), g.channels());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) {
      const auto q = tau.apply(x, y);
      const BilinearTap t = bilinear_tap(g.width(), g.height(), q[0], q[1]);
      for (int c = 0; c < g.channels(); ++c) out(y, x, c) = bilinear_at(g, t, c);
    }
  return out;
}

/// Label transform for one pair:
///   F_new(p) = tau_{t+1}^-1(p + F(p)) - tau_t^-1(p),  F~(p) = F_new(tau_t(p)).
/// F is sampled bilinearly at tau_t(p); tau_t^-1(tau_t(p)) = p is used exactly.
inline FlowField transform_flow(const FlowField& flow, const AffineParams& tau_t, const AffineParams& tau_next) {
  if (!tau_t.invertible() || !tau_next.invertible()) throw ParameterError("transform_flow: singular transform");
  const AffineParams inv_next = tau_next.inverse();
  const Grid& f = flow.grid();
  Grid out(f.height(), f.width(), 2);
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      const auto q = tau_t.apply(x, y);
      const BilinearTap t = bilinear_tap(f.width(), f.height(), q[0], q[1]);
      const double u = bilinear_at(f, t, 0), v = bilinear_at(f, t, 1);
      // Split as A^-1 F + (tau_{t+1}^-1(tau_t(p)) - p) so identical transforms cancel exactly.
      const auto base = inv_next.apply(q[0], q[1]);
      const auto& m = inv_next.m;
      out(y, x, 0) = (m[0] * u + m[1] * v) + (base[0] - x);
      out(y, x, 1) = (m[3] * u + m[4] * v) + (base[1] - y);
    }
  return FlowField(std::move(out));
}

/// Resamples I~_t(p) = I_t(tau_t(p)) and transforms every pseudo-label.
inline SveResult apply_sve(const std::vector<Image>& frames, const std::vector<FlowField>& pseudo,
                           const std::vector<AffineParams>& transforms, int workers = 1) {
  if (frames.size() < 2) throw LengthError("apply_sve: need at least 2 frames");
  if (pseudo.size() != frames.size() - 1) throw LengthError("apply_sve: pseudo flow count must be N-1");
  if (transforms.size() != frames.size()) throw LengthError("apply_sve: need one transform per frame");
  for (std::size_t t = 0; t < transforms.size(); ++t)
    if (!transforms[t].invertible())
      throw ParameterError("apply_sve: transform " + std::to_string(t) + " is singular");
  for (const auto& f : frames) require_same_extent(f, frames.front(), "apply_sve frames");
  for (const auto& f : pseudo) require_same_extent(f, frames.front(), "apply_sve pseudo");
  SveResult out;
  out.frames.resize(frames.size());
  out.pseudo.resize(pseudo.size());
  parallel_for(frames.size(), workers, [&](std::size_t t) {
    Grid g = transform_grid(frames[t].grid(), transforms[t]);
    clamp_unit(g);
    out.frames[t] = Image(std::move(g));
    if (t + 1 < frames.size()) out.pseudo[t] = transform_flow(pseudo[t], transforms[t], transforms[t + 1]);
  });
  return out;
}

}  // namespace seqflow
