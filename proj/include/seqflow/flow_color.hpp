#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "seqflow/grid.hpp"

namespace seqflow {

namespace detail {

// Middlebury colour wheel: red -> yellow -> green -> cyan -> blue -> magenta.
inline const std::vector<std::array<double, 3>>& color_wheel() {
  static const std::vector<std::array<double, 3>> wheel = [] {
    constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    std::vector<std::array<double, 3>> w;
    w.reserve(RY + YG + GC + CB + BM + MR);
    for (int i = 0; i < RY; ++i) w.push_back({1.0, static_cast<double>(i) / RY, 0.0});
    for (int i = 0; i < YG; ++i) w.push_back({1.0 - static_cast<double>(i) / YG, 1.0, 0.0});
    for (int i = 0; i < GC; ++i) w.push_back({0.0, 1.0, static_cast<double>(i) / GC});
    for (int i = 0; i < CB; ++i) w.push_back({0.0, 1.0 - static_cast<double>(i) / CB, 1.0});
    for (int i = 0; i < BM; ++i) w.push_back({static_cast<double>(i) / BM, 0.0, 1.0});
    for (int i = 0; i < MR; ++i) w.push_back({1.0, 0.0, 1.0 - static_cast<double>(i) / MR});
    return w;
  }();
  return wheel;
}

}  // namespace detail

/// Colour of a single flow vector already divided by the normalizing magnitude.
inline std::array<double, 3> flow_vector_color(double u, double v) {
  const auto& wheel = detail::color_wheel();
  const int ncols = static_cast<int>(wheel.size());
  const double rad = std::min(std::hypot(u, v), 1.0);
  if (rad == 0.0) return {1.0, 1.0, 1.0};
  // angle 0 (pure +u) lands on the first wheel entry.
  double a = std::atan2(v, u) / (2.0 * std::numbers::pi);
  if (a < 0.0) a += 1.0;
  const double fk = a * ncols;
  const int k0 = static_cast<int>(std::floor(fk)) % ncols;
  const int k1 = (k0 + 1) % ncols;
  const double f = fk - std::floor(fk);
  std::array<double, 3> rgb{};
  for (int c = 0; c < 3; ++c) {
    const double col = (1.0 - f) * wheel[k0][c] + f * wheel[k1][c];
    rgb[c] = std::clamp(1.0 - rad * (1.0 - col), 0.0, 1.0);
  }
  return rgb;
}

/// Hue encodes direction, saturation encodes magnitude / max_magnitude
/// (clamped to 1). Without max_magnitude the field's maximum norm is used,
/// floored at 1e-6.
inline Image flow_to_color(const FlowField& flow, std::optional<double> max_magnitude = std::nullopt) {
  double scale = 0.0;
  if (max_magnitude) {
    if (!(*max_magnitude > 0.0)) throw ParameterError("flow_to_color: max_magnitude must be > 0");
    scale = *max_magnitude;
  } else {
    for (std::size_t p = 0; p < flow.pixels(); ++p)
      scale = std::max(scale, std::hypot(flow.data()[2 * p], flow.data()[2 * p + 1]));
    scale = std::max(scale, 1e-6);
  }
  Grid out(flow.height(), flow.width(), 3);
  for (std::size_t p = 0; p < flow.pixels(); ++p) {
    const auto rgb = flow_vector_color(flow.data()[2 * p] / scale, flow.data()[2 * p + 1] / scale);
    for (int c = 0; c < 3; ++c) out.storage()[3 * p + c] = rgb[c];
  }
  return Image(std::move(out));
}

}  // namespace seqflow
