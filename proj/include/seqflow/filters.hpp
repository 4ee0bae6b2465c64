#pragma once

/// \file
/// Blur kernels and clamp-to-edge 2-D convolution.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "seqflow/grid.hpp"
#include "seqflow/rng.hpp"

namespace seqflow {

enum class BlurKind { none, box, gaussian, defocus, motion, psf };

inline const char* to_string(BlurKind k) {
  switch (k) {
    case BlurKind::none: return "none";
    case BlurKind::box: return "box";
    case BlurKind::gaussian: return "gaussian";
    case BlurKind::defocus: return "defocus";
    case BlurKind::motion: return "motion";
    case BlurKind::psf: return "psf";
  }
  return "none";
}

inline BlurKind blur_kind_from_string(const std::string& s) {
  if (s == "none") return BlurKind::none;
  if (s == "box") return BlurKind::box;
  if (s == "gaussian") return BlurKind::gaussian;
  if (s == "defocus") return BlurKind::defocus;
  if (s == "motion") return BlurKind::motion;
  if (s == "psf") return BlurKind::psf;
  throw ParameterError("unknown blur kind '" + s + "'");
}

/// Normalized kernel of odd size, stored as a 1-channel Grid.
struct Kernel {
  Grid weights;
  int size() const { return weights.width(); }
};

namespace detail {

inline void require_odd_size(int size, const char* what) {
  if (size < 1 || size % 2 == 0)
    throw ParameterError(std::string(what) + ": kernel size must be odd and >= 1, got " + std::to_string(size));
}

inline Kernel normalized(Grid g) {
  const double s = pairwise_sum(g.data());
  if (!(s > 0.0)) throw ParameterError("kernel: weights sum to zero");
  for (double& v : g.storage()) v /= s;
  return {std::move(g)};
}

inline void splat(Grid& g, double x, double y, double w) {
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  const double ws[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1}, ys[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int k = 0; k < 4; ++k) {
    if (ws[k] == 0.0) continue;
    if (xs[k] < 0 || ys[k] < 0 || xs[k] >= g.width() || ys[k] >= g.height()) continue;
    g(ys[k], xs[k]) += w * ws[k];
  }
}

}  // namespace detail

inline Kernel identity_kernel() { return {Grid(1, 1, 1, 1.0)}; }

inline Kernel box_kernel(int size) {
  detail::require_odd_size(size, "box_kernel");
  return detail::normalized(Grid(size, size, 1, 1.0));
}

/// size 0 picks 2 ceil(3 sigma) + 1.
inline Kernel gaussian_kernel(double sigma, int size = 0) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian_kernel: sigma must be > 0");
  if (size == 0) size = 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
  detail::require_odd_size(size, "gaussian_kernel");
  Grid g(size, size, 1);
  const int r = size / 2;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) g(y + r, x + r) = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
  return detail::normalized(std::move(g));
}

/// Uniform disk of the given radius.
inline Kernel defocus_kernel(double radius) {
  if (!(radius >= 0.0)) throw ParameterError("defocus_kernel: radius must be >= 0");
  const int r = static_cast<int>(std::ceil(radius));
  Grid g(2 * r + 1, 2 * r + 1, 1);
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x)
      if (x * x + y * y <= radius * radius + 1e-9) g(y + r, x + r) = 1.0;
  return detail::normalized(std::move(g));
}

/// Line of `length` equally spaced samples through the kernel centre at
/// `angle` radians (0 = horizontal), bilinearly splatted.
inline Kernel motion_kernel(int length, double angle) {
  detail::require_odd_size(length, "motion_kernel");
  Grid g(length, length, 1);
  const int r = length / 2;
  const double c = std::cos(angle), s = std::sin(angle);
  for (int i = -r; i <= r; ++i) {
    // Round away float noise so axis-aligned lines land exactly on the lattice.
    double x = r + i * c, y = r + i * s;
    if (std::abs(x - std::round(x)) < 1e-12) x = std::round(x);
    if (std::abs(y - std::round(y)) < 1e-12) y = std::round(y);
    detail::splat(g, x, y, 1.0);
  }
  return detail::normalized(std::move(g));
}

/// Camera-shake point spread function: a random walk with inertia, traced
/// with bilinear splats and normalized. Fully determined by `seed`.
inline Kernel psf_kernel(int size, std::uint64_t seed, int steps = 64) {
  detail::require_odd_size(size, "psf_kernel");
  Rng rng(seed);
  Grid g(size, size, 1);
  const double r = size / 2;
  double x = r, y = r;
  double vx = rng.normal() * 0.5, vy = rng.normal() * 0.5;
  for (int i = 0; i < steps; ++i) {
    detail::splat(g, x, y, 1.0);
    vx = 0.8 * vx + 0.4 * rng.normal();
    vy = 0.8 * vy + 0.4 * rng.normal();
    x = std::clamp(x + vx * 0.5, 0.0, size - 1.0);
    y = std::clamp(y + vy * 0.5, 0.0, size - 1.0);
  }
  return detail::normalized(std::move(g));
}

/// out(p) = sum_k w(k) in(p + k - r), clamped at the borders, per channel.
inline Grid convolve(const Grid& in, const Kernel& kernel) {
  const int K = kernel.size();
  detail::require_odd_size(K, "convolve");
  if (K == 1 && kernel.weights(0, 0) == 1.0) return in;
  const int r = K / 2;
  const int H = in.height(), W = in.width(), C = in.channels();
  Grid out(H, W, C);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int ky = 0; ky < K; ++ky) {
          const int sy = std::clamp(y + ky - r, 0, H - 1);
          for (int kx = 0; kx < K; ++kx) {
            const double w = kernel.weights(ky, kx);
            if (w == 0.0) continue;
            acc += w * in(sy, std::clamp(x + kx - r, 0, W - 1), c);
          }
        }
        out(y, x, c) = acc;
      }
  return out;
}

/// Separable Gaussian blur with clamp-to-edge borders.
inline Grid gaussian_blur(const Grid& in, double sigma) {
  if (!(sigma > 0.0)) return in;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> w(2 * r + 1);
  double s = 0.0;
  for (int i = -r; i <= r; ++i) s += w[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  for (double& v : w) v /= s;
  const int H = in.height(), W = in.width(), C = in.channels();
  Grid tmp(H, W, C), out(H, W, C);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += w[i + r] * in(y, std::clamp(x + i, 0, W - 1), c);
        tmp(y, x, c) = acc;
      }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += w[i + r] * tmp(std::clamp(y + i, 0, H - 1), x, c);
        out(y, x, c) = acc;
      }
  return out;
}

inline void clamp_unit(Grid& g) {
  for (double& v : g.storage()) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace seqflow
