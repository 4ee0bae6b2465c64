#pragma once

/// \file
/// Content variation enhancer: per-frame colour change, blur and noise. Pixel
/// positions never move, so pseudo-labels pass through untouched.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "seqflow/filters.hpp"
#include "seqflow/grid.hpp"
#include "seqflow/parallel.hpp"
#include "seqflow/rng.hpp"

namespace seqflow {

/// Photometric, blur and noise settings for one frame. Defaults are the
/// identity.
struct CveFrame {
  double brightness = 1.0;  // multiplicative
  double saturation = 1.0;  // 0 = grey, 1 = unchanged
  double hue = 0.0;         // radians, rotation in the YIQ chroma plane
  double gamma = 1.0;       // v -> v^gamma
  BlurKind blur = BlurKind::none;
  int kernel_size = 1;        // box, gaussian, motion, psf
  double blur_sigma = 1.0;    // gaussian
  double defocus_radius = 0;  // defocus
  double motion_angle = 0;    // motion, radians
  std::uint64_t psf_seed = 0;
  double noise_sigma = 0.0;

  void validate() const {
    if (!(gamma > 0.0)) throw ParameterError("CveFrame: gamma must be > 0");
    if (!(brightness >= 0.0) || !(saturation >= 0.0)) throw ParameterError("CveFrame: brightness, saturation must be >= 0");
    if (!std::isfinite(hue)) throw ParameterError("CveFrame: hue must be finite");
    if (!(noise_sigma >= 0.0)) throw ParameterError("CveFrame: noise_sigma must be >= 0");
    if (blur != BlurKind::none && blur != BlurKind::defocus && (kernel_size < 1 || kernel_size % 2 == 0))
      throw ParameterError("CveFrame: kernel size must be odd and >= 1, got " + std::to_string(kernel_size));
    if (blur == BlurKind::gaussian && !(blur_sigma > 0.0)) throw ParameterError("CveFrame: blur_sigma must be > 0");
    if (blur == BlurKind::defocus && !(defocus_radius >= 0.0))
      throw ParameterError("CveFrame: defocus_radius must be >= 0");
  }

  Kernel kernel() const {
    switch (blur) {
      case BlurKind::none: return identity_kernel();
      case BlurKind::box: return box_kernel(kernel_size);
      case BlurKind::gaussian: return gaussian_kernel(blur_sigma, kernel_size);
      case BlurKind::defocus: return defocus_kernel(defocus_radius);
      case BlurKind::motion: return motion_kernel(kernel_size, motion_angle);
      case BlurKind::psf: return psf_kernel(kernel_size, psf_seed);
    }
    return identity_kernel();
  }
};

using CveSchedule = std::vector<CveFrame>;

enum class CveMode { drift, jitter };

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Sampling ranges for sample_cve_schedule. In drift mode every photometric
/// parameter moves linearly from a start to an end value drawn from its
/// range (so it is monotone over time); in jitter mode every frame draws
/// independently.
struct CveSampleParams {
  CveMode mode = CveMode::drift;
  Range brightness{0.8, 1.2};
  Range saturation{0.8, 1.2};
  Range hue{-0.1, 0.1};
  Range gamma{0.8, 1.25};
  std::vector<BlurKind> blurs{BlurKind::box, BlurKind::gaussian, BlurKind::defocus, BlurKind::motion,
                              BlurKind::psf};
  int max_kernel_size = 7;
  Range noise{0.0, 0.02};

  void validate() const {
    for (const Range* r : {&brightness, &saturation, &hue, &gamma, &noise})
      if (!(r->lo <= r->hi)) throw ParameterError("CveSampleParams: range lo > hi");
    if (!(gamma.lo > 0.0)) throw ParameterError("CveSampleParams: gamma range must be > 0");
    if (!(brightness.lo >= 0.0) || !(saturation.lo >= 0.0) || !(noise.lo >= 0.0))
      throw ParameterError("CveSampleParams: brightness, saturation, noise ranges must be >= 0");
    if (max_kernel_size < 1 || max_kernel_size % 2 == 0)
      throw ParameterError("CveSampleParams: max_kernel_size must be odd and >= 1");
  }
};

/// One blur kind per sequence (uniform over `blurs`, or none when empty),
/// random per-frame kernel parameters, per-frame noise level.
inline CveSchedule sample_cve_schedule(int frames, const CveSampleParams& p, Rng& rng) {
  if (frames < 1) throw ParameterError("sample_cve_schedule: need at least one frame");
  p.validate();
  CveSchedule out(static_cast<std::size_t>(frames));
  auto fill = [&](double CveFrame::*field, const Range& r) {
    if (p.mode == CveMode::drift) {
      const double a = rng.uniform(r.lo, r.hi), b = rng.uniform(r.lo, r.hi);
      for (int t = 0; t < frames; ++t) {
        const double s = frames > 1 ? static_cast<double>(t) / (frames - 1) : 0.0;
        out[t].*field = a + (b - a) * s;
      }
    } else {
      for (int t = 0; t < frames; ++t) out[t].*field = rng.uniform(r.lo, r.hi);
    }
  };
  fill(&CveFrame::brightness, p.brightness);
  fill(&CveFrame::saturation, p.saturation);
  fill(&CveFrame::hue, p.hue);
  fill(&CveFrame::gamma, p.gamma);
  const BlurKind kind = p.blurs.empty() ? BlurKind::none : p.blurs[rng.below(p.blurs.size())];
  const int sizes = (p.max_kernel_size + 1) / 2;  // 1, 3, ..., max
  for (int t = 0; t < frames; ++t) {
    CveFrame& f = out[t];
    f.blur = kind;
    f.kernel_size = 2 * static_cast<int>(rng.below(static_cast<std::uint64_t>(sizes))) + 1;
    switch (kind) {
      case BlurKind::gaussian: f.blur_sigma = rng.uniform(0.3, 0.5 * f.kernel_size + 0.3); break;
      case BlurKind::defocus: f.defocus_radius = rng.uniform(0.0, 0.5 * p.max_kernel_size); break;
      case BlurKind::motion: f.motion_angle = rng.uniform(0.0, std::numbers::pi); break;
      case BlurKind::psf: f.psf_seed = rng.next_u64(); break;
      default: break;
    }
    f.noise_sigma = rng.uniform(p.noise.lo, p.noise.hi);
  }
  return out;
}

namespace detail {

inline void apply_photometric(Grid& g, const CveFrame& f) {
  const int C = g.channels();
  auto& d = g.storage();
  if (f.brightness != 1.0)
    for (double& v : d) v *= f.brightness;
  if (C == 3 && f.saturation != 1.0)
    for (std::size_t p = 0; p < g.pixels(); ++p) {
      double* px = &d[3 * p];
      const double grey = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
      for (int c = 0; c < 3; ++c) px[c] = grey + f.saturation * (px[c] - grey);
    }
  if (C == 3 && f.hue != 0.0) {
    const double cs = std::cos(f.hue), sn = std::sin(f.hue);
    for (std::size_t p = 0; p < g.pixels(); ++p) {
      double* px = &d[3 * p];
      const double Y = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
      const double I = 0.596 * px[0] - 0.274 * px[1] - 0.322 * px[2];
      const double Q = 0.211 * px[0] - 0.523 * px[1] + 0.312 * px[2];
      const double I2 = cs * I - sn * Q, Q2 = sn * I + cs * Q;
      px[0] = Y + 0.956 * I2 + 0.621 * Q2;
      px[1] = Y - 0.272 * I2 - 0.647 * Q2;
      px[2] = Y - 1.106 * I2 + 1.703 * Q2;
    }
  }
  if (f.gamma != 1.0)
    for (double& v : d) v = std::pow(std::clamp(v, 0.0, 1.0), f.gamma);
}

}  // namespace detail

/// Applies colour (brightness, saturation, hue, gamma), then blur, then
/// additive Gaussian noise, then clamps to [0,1]. Noise streams are forked
/// from `rng` in frame order before any frame is processed.
inline std::vector<Image> apply_cve(const std::vector<Image>& frames, const CveSchedule& schedule, Rng& rng,
                                    int workers = 1) {
  if (schedule.size() != frames.size())
    throw LengthError("apply_cve: schedule length " + std::to_string(schedule.size()) + " != " +
                      std::to_string(frames.size()) + " frames");
  for (const auto& f : schedule) f.validate();
  std::vector<std::uint64_t> seeds(frames.size());
  for (auto& s : seeds) s = rng.next_u64();
  std::vector<Image> out(frames.size());
  parallel_for(frames.size(), workers, [&](std::size_t t) {
    const CveFrame& f = schedule[t];
    Grid g = frames[t].grid();
    detail::apply_photometric(g, f);
    if (f.blur != BlurKind::none) g = convolve(g, f.kernel());
    if (f.noise_sigma > 0.0) {
      Rng noise(seeds[t]);
      for (double& v : g.storage()) v += f.noise_sigma * noise.normal();
    }
    clamp_unit(g);
    out[t] = Image(std::move(g));
  });
  return out;
}

}  // namespace seqflow
