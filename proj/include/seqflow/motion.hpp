#pragma once

/// \file
/// Random motion processes: Markov velocity trajectories for synthetic
/// occluders and Gaussian random walks over affine transform parameters.

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "seqflow/error.hpp"
#include "seqflow/rng.hpp"

namespace seqflow {

/// Velocity in px/frame.
struct MotionState {
  double u = 0.0;
  double v = 0.0;

  friend bool operator==(const MotionState&, const MotionState&) = default;
};

/// S(0) = init; S(t) ~ N(S(t-1), diag(sigma_u^2, sigma_v^2)).
inline std::vector<MotionState> markov_trajectory(MotionState init, int frames, double sigma_u, double sigma_v,
                                                  Rng& rng) {
  if (frames < 1) throw ParameterError("markov_trajectory: need at least one frame");
  if (!(sigma_u >= 0.0) || !(sigma_v >= 0.0)) throw ParameterError("markov_trajectory: sigmas must be >= 0");
  std::vector<MotionState> out;
  out.reserve(static_cast<std::size_t>(frames));
  out.push_back(init);
  for (int t = 1; t < frames; ++t) {
    const MotionState& prev = out.back();
    out.push_back({rng.normal(prev.u, sigma_u), rng.normal(prev.v, sigma_v)});
  }
  return out;
}

/// One Markov step from `prev`.
inline MotionState markov_step(const MotionState& prev, double sigma_u, double sigma_v, Rng& rng) {
  return {rng.normal(prev.u, sigma_u), rng.normal(prev.v, sigma_v)};
}

/// Speed ~ N(mu, mu/3) clamped at 0, direction ~ U(0, 2 pi).
inline MotionState sample_initial_state(double mu_speed, Rng& rng) {
  if (!(mu_speed > 0.0)) throw ParameterError("sample_initial_state: mu_speed must be > 0");
  const double speed = std::max(0.0, rng.normal(mu_speed, mu_speed / 3.0));
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return {speed * std::cos(angle), speed * std::sin(angle)};
}

/// Pixel-coordinate affine map p -> A p + b, stored row-major as
/// [a00 a01 b0; a10 a11 b1].
struct AffineParams {
  std::array<double, 6> m{1, 0, 0, 0, 1, 0};

  static AffineParams identity() { return {}; }
  static AffineParams translation(double dx, double dy) { return {{1, 0, dx, 0, 1, dy}}; }
  /// Rotation by `angle` radians about (cx, cy).
  static AffineParams rotation(double angle, double cx, double cy) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {{c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy}};
  }

  double det() const { return m[0] * m[4] - m[1] * m[3]; }
  bool invertible() const { return std::abs(det()) > 1e-6; }

  std::array<double, 2> apply(double x, double y) const {
    return {m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5]};
  }

  AffineParams inverse() const {
    const double d = det();
    if (!(std::abs(d) > 1e-6)) throw ParameterError("AffineParams: singular transform");
    const double i00 = m[4] / d, i01 = -m[1] / d, i10 = -m[3] / d, i11 = m[0] / d;
    return {{i00, i01, -(i00 * m[2] + i01 * m[5]), i10, i11, -(i10 * m[2] + i11 * m[5])}};
  }

  /// (this o other)(p) = this(other(p)).
  AffineParams compose(const AffineParams& o) const {
    return {{m[0] * o.m[0] + m[1] * o.m[3], m[0] * o.m[1] + m[1] * o.m[4], m[0] * o.m[2] + m[1] * o.m[5] + m[2],
             m[3] * o.m[0] + m[4] * o.m[3], m[3] * o.m[1] + m[4] * o.m[4], m[3] * o.m[2] + m[4] * o.m[5] + m[5]}};
  }

  friend bool operator==(const AffineParams&, const AffineParams&) = default;
};

/// Decomposed affine state. The transform is
///   p -> c + R(rotation) Shear(shear) diag(e^log_scale) (p - c) + (tx, ty).
struct AffineState {
  double rotation = 0.0;  // radians
  double log_scale = 0.0;
  double shear = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  AffineParams to_params(double cx, double cy) const {
    const double s = std::exp(log_scale);
    const double c = std::cos(rotation), sn = std::sin(rotation);
    // R * [1 shear; 0 1] * s
    const double a00 = s * c, a01 = s * (c * shear - sn);
    const double a10 = s * sn, a11 = s * (sn * shear + c);
    return {{a00, a01, cx + tx - a00 * cx - a01 * cy, a10, a11, cy + ty - a10 * cx - a11 * cy}};
  }

  friend bool operator==(const AffineState&, const AffineState&) = default;
};

struct AffineWalkParams {
  AffineState initial;
  double sigma_rotation = 0.0;
  double sigma_log_scale = 0.0;
  double sigma_shear = 0.0;
  double sigma_translation = 0.0;
  double center_x = 0.0;
  double center_y = 0.0;

  void validate() const {
    for (double s : {sigma_rotation, sigma_log_scale, sigma_shear, sigma_translation})
      if (!(s >= 0.0)) throw ParameterError("AffineWalkParams: step sigmas must be >= 0");
  }
};

struct AffineSchedule {
  std::vector<AffineState> states;
  std::vector<AffineParams> transforms;
};

/// Independent Gaussian random walks on rotation, log-scale, shear and
/// translation. A step yielding |det| <= 1e-6 is redrawn (up to 100 times,
/// then the previous state is repeated).
inline AffineSchedule sample_affine_schedule(int frames, const AffineWalkParams& params, Rng& rng) {
  if (frames < 1) throw ParameterError("sample_affine_schedule: need at least one frame");
  params.validate();
  AffineSchedule out;
  AffineState state = params.initial;
  if (!state.to_params(params.center_x, params.center_y).invertible())
    throw ParameterError("sample_affine_schedule: initial transform is singular");
  for (int t = 0; t < frames; ++t) {
    if (t > 0) {
      AffineState proposal = state;
      bool accepted = false;
      for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
        proposal.rotation = rng.normal(state.rotation, params.sigma_rotation);
        proposal.log_scale = rng.normal(state.log_scale, params.sigma_log_scale);
        proposal.shear = rng.normal(state.shear, params.sigma_shear);
        proposal.tx = rng.normal(state.tx, params.sigma_translation);
        proposal.ty = rng.normal(state.ty, params.sigma_translation);
        accepted = proposal.to_params(params.center_x, params.center_y).invertible();
      }
      if (accepted) state = proposal;
    }
    out.states.push_back(state);
    out.transforms.push_back(state.to_params(params.center_x, params.center_y));
  }
  return out;
}

}  // namespace seqflow
