#pragma once

/// \file
/// SLIC superpixels: k-means over (Lab colour, position) restricted to a
/// 2S x 2S search window around each centre, followed by a connectivity pass
/// that gives every label a single 4-connected pixel set.

#include <algorithm>
#include <cmath>
#include <array>
#include <deque>
#include <limits>
#include <map>
#include <vector>

#include "seqflow/grid.hpp"

namespace seqflow {

struct LabelGrid {
  int height = 0;
  int width = 0;
  int count = 0;
  std::vector<int> labels;  // row-major

  int operator()(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::vector<int> areas() const {
    std::vector<int> a(static_cast<std::size_t>(count), 0);
    for (int l : labels) ++a[l];
    return a;
  }

  friend bool operator==(const LabelGrid&, const LabelGrid&) = default;
};

namespace detail {

inline double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline std::array<double, 3> rgb_to_lab(double r, double g, double b) {
  r = srgb_to_linear(r);
  g = srgb_to_linear(g);
  b = srgb_to_linear(b);
  double X = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
  double Y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  double Z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
  auto f = [](double t) { return t > 0.008856 ? std::cbrt(t) : 7.787 * t + 16.0 / 116.0; };
  const double fx = f(X), fy = f(Y), fz = f(Z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

/// Keeps the largest 4-connected component of every cluster (if it has at
/// least min_size pixels) and grows the kept regions breadth-first over the
/// remaining pixels. Labels stay connected, and fragmented clusters (noisy
/// textures) cannot chain into one region.
inline LabelGrid enforce_connectivity(const std::vector<int>& raw, int H, int W, int min_size) {
  const std::size_t n = raw.size();
  const int dx4[] = {-1, 0, 1, 0}, dy4[] = {0, -1, 0, 1};
  std::vector<int> comp(n, -1);
  std::vector<std::size_t> comp_size;
  std::vector<int> comp_cluster;
  std::vector<std::size_t> queue;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    const int id = static_cast<int>(comp_size.size());
    queue.assign(1, s);
    comp[s] = id;
    for (std::size_t i = 0; i < queue.size(); ++i) {
      const int cx = static_cast<int>(queue[i] % W), cy = static_cast<int>(queue[i] / W);
      for (int k = 0; k < 4; ++k) {
        const int nx = cx + dx4[k], ny = cy + dy4[k];
        if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
        const std::size_t ni = static_cast<std::size_t>(ny) * W + nx;
        if (comp[ni] < 0 && raw[ni] == raw[s]) {
          comp[ni] = id;
          queue.push_back(ni);
        }
      }
    }
    comp_size.push_back(queue.size());
    comp_cluster.push_back(raw[s]);
  }

  // Largest component per cluster; ties go to the first found.
  std::map<int, int> best;
  for (int c = 0; c < static_cast<int>(comp_size.size()); ++c) {
    auto it = best.find(comp_cluster[c]);
    if (it == best.end() || comp_size[c] > comp_size[it->second]) best[comp_cluster[c]] = c;
  }
  std::vector<int> keep_label(comp_size.size(), -1);
  std::vector<int> kept;
  for (const auto& [cluster, c] : best)
    if (static_cast<int>(comp_size[c]) >= min_size) kept.push_back(c);
  if (kept.empty())
    kept.push_back(static_cast<int>(std::max_element(comp_size.begin(), comp_size.end()) - comp_size.begin()));
  std::sort(kept.begin(), kept.end());  // components are numbered in raster order of their first pixel
  for (std::size_t i = 0; i < kept.size(); ++i) keep_label[kept[i]] = static_cast<int>(i);

  LabelGrid out{H, W, static_cast<int>(kept.size()), std::vector<int>(n, -1)};
  queue.clear();
  for (std::size_t p = 0; p < n; ++p)
    if (keep_label[comp[p]] >= 0) {
      out.labels[p] = keep_label[comp[p]];
      queue.push_back(p);
    }
  for (std::size_t i = 0; i < queue.size(); ++i) {
    const int cx = static_cast<int>(queue[i] % W), cy = static_cast<int>(queue[i] / W);
    for (int k = 0; k < 4; ++k) {
      const int nx = cx + dx4[k], ny = cy + dy4[k];
      if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
      const std::size_t ni = static_cast<std::size_t>(ny) * W + nx;
      if (out.labels[ni] < 0) {
        out.labels[ni] = out.labels[queue[i]];
        queue.push_back(ni);
      }
    }
  }
  return out;
}

/// Merges the smallest label into its largest neighbour until count <= max_count.
inline void cap_label_count(LabelGrid& g, int max_count) {
  const int H = g.height, W = g.width;
  while (g.count > max_count) {
    const auto areas = g.areas();
    const int smallest = static_cast<int>(std::min_element(areas.begin(), areas.end()) - areas.begin());
    int target = -1;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (g(y, x) != smallest) continue;
        const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
        for (auto& n : nb) {
          if (n[0] < 0 || n[1] < 0 || n[0] >= W || n[1] >= H) continue;
          const int l = g(n[1], n[0]);
          if (l != smallest && (target < 0 || areas[l] > areas[target] || (areas[l] == areas[target] && l < target)))
            target = l;
        }
      }
    if (target < 0) break;
    for (int& l : g.labels) {
      if (l == smallest) l = target;
      if (l > smallest) --l;
    }
    --g.count;
  }
}

}  // namespace detail

/// Deterministic SLIC over a regular seed grid. `compactness` trades colour
/// similarity (Lab units) against spatial proximity.
inline LabelGrid slic_superpixels(const Image& image, int n_segments, double compactness = 10.0,
                                  int iterations = 10) {
  const int H = image.height(), W = image.width();
  const long n_pixels = static_cast<long>(H) * W;
  if (n_segments < 2) throw ParameterError("slic_superpixels: n_segments must be >= 2");
  if (n_segments > n_pixels) throw ParameterError("slic_superpixels: n_segments exceeds pixel count");
  if (!(compactness > 0.0)) throw ParameterError("slic_superpixels: compactness must be > 0");

  Grid lab(H, W, 3);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      std::array<double, 3> v;
      if (image.channels() == 3) {
        v = detail::rgb_to_lab(image(y, x, 0), image(y, x, 1), image(y, x, 2));
      } else {
        v = {100.0 * image(y, x, 0), 0.0, 0.0};
      }
      for (int c = 0; c < 3; ++c) lab(y, x, c) = v[c];
    }

  const double step = std::sqrt(static_cast<double>(n_pixels) / n_segments);
  const int nx = std::max(1, static_cast<int>(std::lround(W / step)));
  const int ny = std::max(1, static_cast<int>(std::lround(H / step)));

  struct Center {
    double l, a, b, x, y;
  };
  std::vector<Center> centers;
  const double sx = static_cast<double>(W) / nx, sy = static_cast<double>(H) / ny;
  auto gradient = [&](int x, int y) {
    if (x < 1 || y < 1 || x >= W - 1 || y >= H - 1) return std::numeric_limits<double>::infinity();
    double gsum = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double gx = lab(y, x + 1, c) - lab(y, x - 1, c);
      const double gy = lab(y + 1, x, c) - lab(y - 1, x, c);
      gsum += gx * gx + gy * gy;
    }
    return gsum;
  };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      int cx = std::min(W - 1, static_cast<int>((i + 0.5) * sx));
      int cy = std::min(H - 1, static_cast<int>((j + 0.5) * sy));
      if (step >= 3.0) {
        // Move the seed to the lowest-gradient pixel of its 3x3 neighbourhood.
        double best = gradient(cx, cy);
        int bx = cx, by = cy;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const double g = gradient(cx + dx, cy + dy);
            if (g < best) {
              best = g;
              bx = cx + dx;
              by = cy + dy;
            }
          }
        cx = bx;
        cy = by;
      }
      centers.push_back({lab(cy, cx, 0), lab(cy, cx, 1), lab(cy, cx, 2), static_cast<double>(cx),
                         static_cast<double>(cy)});
    }

  std::vector<int> assignment(static_cast<std::size_t>(n_pixels), 0);
  std::vector<double> distance(static_cast<std::size_t>(n_pixels));
  const int reach = static_cast<int>(std::ceil(std::max({step, sx, sy})));
  const double spatial_weight = (compactness / step) * (compactness / step);
  const double m2 = compactness * compactness;
  // Per-cluster colour scale: the largest colour distance seen last pass,
  // floored at compactness^2. On clean images this is plain SLIC; on noisy
  // textures it keeps the colour term from shattering the clusters.
  std::vector<double> spread(centers.size(), m2);
  std::vector<double> colour(static_cast<std::size_t>(n_pixels));
  for (int it = 0; it < iterations; ++it) {
    std::fill(distance.begin(), distance.end(), std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const Center& c = centers[k];
      const double colour_weight = m2 / spread[k];
      const int x0 = std::max(0, static_cast<int>(c.x) - reach), x1 = std::min(W - 1, static_cast<int>(c.x) + reach);
      const int y0 = std::max(0, static_cast<int>(c.y) - reach), y1 = std::min(H - 1, static_cast<int>(c.y) + reach);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double dl = lab(y, x, 0) - c.l, da = lab(y, x, 1) - c.a, db = lab(y, x, 2) - c.b;
          const double ddx = x - c.x, ddy = y - c.y;
          const double dc = dl * dl + da * da + db * db;
          const double d = colour_weight * dc + spatial_weight * (ddx * ddx + ddy * ddy);
          const std::size_t i = static_cast<std::size_t>(y) * W + x;
          if (d < distance[i]) {
            distance[i] = d;
            colour[i] = dc;
            assignment[i] = static_cast<int>(k);
          }
        }
    }
    std::fill(spread.begin(), spread.end(), m2);
    for (std::size_t i = 0; i < colour.size(); ++i) spread[assignment[i]] = std::max(spread[assignment[i]], colour[i]);
    std::vector<Center> sums(centers.size(), Center{0, 0, 0, 0, 0});
    std::vector<int> counts(centers.size(), 0);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int k = assignment[static_cast<std::size_t>(y) * W + x];
        sums[k].l += lab(y, x, 0);
        sums[k].a += lab(y, x, 1);
        sums[k].b += lab(y, x, 2);
        sums[k].x += x;
        sums[k].y += y;
        ++counts[k];
      }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (counts[k] == 0) continue;
      const double inv = 1.0 / counts[k];
      centers[k] = {sums[k].l * inv, sums[k].a * inv, sums[k].b * inv, sums[k].x * inv, sums[k].y * inv};
    }
  }

  const int min_size = std::max(1, static_cast<int>(n_pixels / n_segments / 4));
  LabelGrid result = detail::enforce_connectivity(assignment, H, W, min_size);
  detail::cap_label_count(result, 2 * n_segments);
  return result;
}

}  // namespace seqflow
