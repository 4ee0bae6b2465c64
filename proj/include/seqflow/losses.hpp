#pragma once

/// \file
/// Unsupervised flow losses. Every loss returns its scalar value together with
/// the analytic gradient with respect to each differentiable input, so callers
/// can plug the gradients into any training framework.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqflow/grid.hpp"
#include "seqflow/warp.hpp"

namespace seqflow {

enum class PhotometricKind { charbonnier, ssim, census };
enum class DoeMode { sparse, mixed };

struct LossConfig {
  double lambda1 = 50.0;    // spatial smoothness
  double lambda2 = 0.005;   // temporal smoothness
  double lambda3 = 0.3;     // dynamic occlusion distillation
  double lambda4 = 0.3;     // spatial variation distillation
  double lambda5 = 0.3;     // content variation distillation
  std::optional<double> w_tsm;  // overrides lambda2 when set
  double charbonnier_eps = 0.01;
  double charbonnier_q = 0.4;
  double smooth_edge_lambda = 10.0;
  int smooth_order = 1;
  double temporal_eps = 1e-2;
  PhotometricKind photometric = PhotometricKind::census;
  int ssim_window = 3;
  int census_window = 7;
  DoeMode doe_mode = DoeMode::mixed;
  FbCheckParams fb_check;
  ConfidenceParams confidence;

  static LossConfig sintel() { return {}; }

  static LossConfig kitti() {
    LossConfig c;
    c.lambda1 = 75.0;
    c.lambda2 = 0.001;
    c.lambda3 = c.lambda4 = c.lambda5 = 0.2;
    c.smooth_order = 2;
    return c;
  }

  double temporal_weight() const { return w_tsm.value_or(lambda2); }

  void validate() const {
    for (double w : {lambda1, lambda2, lambda3, lambda4, lambda5})
      if (!(w >= 0.0)) throw ParameterError("LossConfig: weights must be >= 0");
    if (w_tsm && !(*w_tsm >= 0.0)) throw ParameterError("LossConfig: w_tsm must be >= 0");
    if (!(charbonnier_eps > 0.0)) throw ParameterError("LossConfig: charbonnier_eps must be > 0");
    if (!(charbonnier_q > 0.0 && charbonnier_q <= 1.0))
      throw ParameterError("LossConfig: charbonnier_q must be in (0,1]");
    if (smooth_order != 1 && smooth_order != 2)
      throw ParameterError("LossConfig: smooth_order must be 1 or 2");
    if (!(smooth_edge_lambda >= 0.0)) throw ParameterError("LossConfig: smooth_edge_lambda < 0");
    if (!(temporal_eps > 0.0)) throw ParameterError("LossConfig: temporal_eps must be > 0");
    if (ssim_window < 1 || ssim_window % 2 == 0) throw ParameterError("LossConfig: ssim_window must be odd");
    if (census_window < 1 || census_window % 2 == 0)
      throw ParameterError("LossConfig: census_window must be odd");
    fb_check.validate();
    confidence.validate();
  }
};

/// Scalar loss, named gradient maps shaped like the corresponding inputs, and
/// an optional per-term breakdown.
struct LossValue {
  double value = 0.0;
  std::map<std::string, Grid> gradients;
  std::map<std::string, double> terms;

  const Grid& gradient(const std::string& name) const {
    auto it = gradients.find(name);
    if (it == gradients.end()) throw ConfigError("LossValue: no gradient named " + name);
    return it->second;
  }
};

/// (|d| + eps)^q and its derivative, with sign(0) = 0.
struct Robust {
  double eps = 0.01;
  double q = 0.4;

  static Robust from(const LossConfig& c) { return {c.charbonnier_eps, c.charbonnier_q}; }

  double value(double d) const { return std::pow(std::abs(d) + eps, q); }
  double slope(double d) const {
    if (d == 0.0) return 0.0;
    const double s = q * std::pow(std::abs(d) + eps, q - 1.0);
    return d > 0.0 ? s : -s;
  }
  double floor() const { return std::pow(eps, q); }
};

namespace detail {

inline void require_same_shape(const Grid& a, const Grid& b, const char* what) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
}

inline void add_into(Grid& dst, const Grid& src, double scale = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.storage()[i] += scale * src.storage()[i];
}

inline double mask_sum(const Grid& mask) { return pairwise_sum(mask.data()); }

/// Chains dL/d(warped image) into dL/d(flow) through the bilinear sampler.
inline Grid chain_through_warp(const Grid& source, const FlowField& flow, const Grid& d_warped) {
  Grid grad(flow.height(), flow.width(), 2);
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      const BilinearTap t =
          bilinear_tap(source.width(), source.height(), x + flow(y, x, 0), y + flow(y, x, 1));
      double gu = 0.0, gv = 0.0;
      for (int c = 0; c < source.channels(); ++c) {
        const double up = d_warped(y, x, c);
        if (up == 0.0) continue;
        const auto [sx, sy] = bilinear_slope(source, t, c);
        gu += up * sx;
        gv += up * sy;
      }
      grad(y, x, 0) = gu;
      grad(y, x, 1) = gv;
    }
  }
  return grad;
}

struct PairGrad {
  double value = 0.0;
  Grid grad_a;
  Grid grad_b;
};

/// Mean structural dissimilarity (1 - SSIM)/2 over window centres whose window
/// fits inside the image, weighted per centre by `weight` (1 channel) when given.
inline PairGrad ssim_weighted(const Grid& a, const Grid& b, int window, const Grid* weight) {
  require_same_shape(a, b, "ssim");
  if (window < 1 || window % 2 == 0) throw ParameterError("ssim: window must be odd");
  constexpr double C1 = 0.01 * 0.01;
  constexpr double C2 = 0.03 * 0.03;
  const int r = window / 2;
  const int H = a.height(), W = a.width(), C = a.channels();
  const double M = static_cast<double>(window) * window;
  PairGrad out{0.0, Grid(H, W, C), Grid(H, W, C)};

  double wsum = 0.0;
  for (int y = r; y < H - r; ++y)
    for (int x = r; x < W - r; ++x) wsum += weight ? (*weight)(y, x) : 1.0;
  if (wsum <= 0.0) return out;
  const double norm = 1.0 / (wsum * C);

  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(H) * W * C);
  for (int y = r; y < H - r; ++y) {
    for (int x = r; x < W - r; ++x) {
      const double w = weight ? (*weight)(y, x) : 1.0;
      if (w == 0.0) continue;
      for (int c = 0; c < C; ++c) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const double va = a(y + dy, x + dx, c), vb = b(y + dy, x + dx, c);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        const double mu_a = sa / M, mu_b = sb / M;
        const double var_a = saa / M - mu_a * mu_a;
        const double var_b = sbb / M - mu_b * mu_b;
        const double cov = sab / M - mu_a * mu_b;
        const double n1 = 2 * mu_a * mu_b + C1, n2 = 2 * cov + C2;
        const double d1 = mu_a * mu_a + mu_b * mu_b + C1, d2 = var_a + var_b + C2;
        const double s = (n1 * n2) / (d1 * d2);
        terms.push_back(w * (1.0 - s) * 0.5 * norm);

        // dS/d(mu_a), dS/d(var_a), dS/d(cov); mirrored for b.
        const double ds_mu_a = 2 * mu_b * n2 / (d1 * d2) - s * 2 * mu_a / d1;
        const double ds_mu_b = 2 * mu_a * n2 / (d1 * d2) - s * 2 * mu_b / d1;
        const double ds_var = -s / d2;
        const double ds_cov = 2 * n1 / (d1 * d2);
        const double up = -0.5 * w * norm;  // dL/dS
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const double va = a(y + dy, x + dx, c), vb = b(y + dy, x + dx, c);
            out.grad_a(y + dy, x + dx, c) +=
                up * (ds_mu_a + ds_var * 2 * (va - mu_a) + ds_cov * (vb - mu_b)) / M;
            out.grad_b(y + dy, x + dx, c) +=
                up * (ds_mu_b + ds_var * 2 * (vb - mu_b) + ds_cov * (va - mu_a)) / M;
          }
      }
    }
  }
  out.value = pairwise_sum(terms);
  return out;
}

inline Grid to_gray(const Grid& g) {
  if (g.channels() == 1) return g;
  Grid out(g.height(), g.width(), 1);
  for (std::size_t p = 0; p < g.pixels(); ++p)
    out.storage()[p] = 0.299 * g.storage()[3 * p] + 0.587 * g.storage()[3 * p + 1] +
                       0.114 * g.storage()[3 * p + 2];
  return out;
}

/// Spreads a gradient w.r.t. the gray image back onto the colour channels.
inline Grid from_gray_grad(const Grid& gray_grad, int channels) {
  if (channels == 1) return gray_grad;
  Grid out(gray_grad.height(), gray_grad.width(), 3);
  for (std::size_t p = 0; p < gray_grad.pixels(); ++p) {
    const double g = gray_grad.storage()[p];
    out.storage()[3 * p] = 0.299 * g;
    out.storage()[3 * p + 1] = 0.587 * g;
    out.storage()[3 * p + 2] = 0.114 * g;
  }
  return out;
}

/// Soft census distance, Charbonnier-aggregated per window centre and
/// weighted per centre by `weight` when given.
inline PairGrad census_weighted(const Grid& a, const Grid& b, int window, const Grid* weight,
                                const Robust& robust) {
  require_same_shape(a, b, "census");
  if (window < 1 || window % 2 == 0) throw ParameterError("census: window must be odd");
  const Grid ga = to_gray(a), gb = to_gray(b);
  const int r = window / 2;
  const int H = a.height(), W = a.width();
  Grid d_ga(H, W, 1), d_gb(H, W, 1);
  PairGrad out;

  double wsum = 0.0;
  for (int y = r; y < H - r; ++y)
    for (int x = r; x < W - r; ++x) wsum += weight ? (*weight)(y, x) : 1.0;
  if (wsum > 0.0) {
    struct Pair {
      double diff, slope_a, slope_b;
    };
    std::vector<Pair> pairs(static_cast<std::size_t>(window) * window);
    std::vector<double> terms;
    for (int y = r; y < H - r; ++y) {
      for (int x = r; x < W - r; ++x) {
        const double w = weight ? (*weight)(y, x) : 1.0;
        if (w == 0.0) continue;
        const double ca = ga(y, x), cb = gb(y, x);
        double hamming = 0.0;
        std::size_t k = 0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx, ++k) {
            if (dx == 0 && dy == 0) continue;
            // soft(d) = d / sqrt(0.81 + d^2), soft'(d) = 0.81 / (0.81 + d^2)^1.5
            const double da = ga(y + dy, x + dx) - ca, db = gb(y + dy, x + dx) - cb;
            const double ia = 1.0 / std::sqrt(0.81 + da * da), ib = 1.0 / std::sqrt(0.81 + db * db);
            const double diff = da * ia - db * ib;
            pairs[k] = {diff, 0.81 * ia * ia * ia, 0.81 * ib * ib * ib};
            hamming += diff * diff / (0.1 + diff * diff);
          }
        terms.push_back(w * robust.value(hamming) / wsum);
        const double up = w * robust.slope(hamming) / wsum;
        if (up == 0.0) continue;
        k = 0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx, ++k) {
            if (dx == 0 && dy == 0) continue;
            const Pair& pr = pairs[k];
            const double den = 0.1 + pr.diff * pr.diff;
            const double dh = up * 2.0 * pr.diff * 0.1 / (den * den);
            const double ka = dh * pr.slope_a, kb = -dh * pr.slope_b;
            d_ga(y + dy, x + dx) += ka;
            d_ga(y, x) -= ka;
            d_gb(y + dy, x + dx) += kb;
            d_gb(y, x) -= kb;
          }
      }
    }
    out.value = pairwise_sum(terms);
  }
  out.grad_a = from_gray_grad(d_ga, a.channels());
  out.grad_b = from_gray_grad(d_gb, b.channels());
  return out;
}

/// Per-pixel Charbonnier averaged over channels, weighted per pixel and
/// normalized by the weight sum. Gradient w.r.t. `a` (that w.r.t. b is its negation).
inline PairGrad robust_weighted(const Grid& a, const Grid& b, const Grid* weight, const Robust& robust) {
  require_same_shape(a, b, "charbonnier");
  const int C = a.channels();
  PairGrad out{0.0, Grid(a.height(), a.width(), C), Grid(a.height(), a.width(), C)};
  const double wsum = weight ? mask_sum(*weight) : static_cast<double>(a.pixels());
  if (wsum <= 0.0) return out;
  const double norm = 1.0 / (wsum * C);
  std::vector<double> terms(a.size());
  for (std::size_t p = 0; p < a.pixels(); ++p) {
    const double w = weight ? weight->storage()[p] : 1.0;
    for (int c = 0; c < C; ++c) {
      const std::size_t i = p * C + c;
      if (w == 0.0) {
        terms[i] = 0.0;
        continue;
      }
      const double d = a.storage()[i] - b.storage()[i];
      terms[i] = w * robust.value(d) * norm;
      const double g = w * robust.slope(d) * norm;
      out.grad_a.storage()[i] = g;
      out.grad_b.storage()[i] = -g;
    }
  }
  out.value = pairwise_sum(terms);
  return out;
}

/// Edge-aware smoothness of `flow` for derivative order 1 or 2. `edge` is the
/// image whose first-order differences attenuate the penalty; `pixel_weight`
/// (1 channel, optional) restricts and normalizes the per-direction means.
inline LossValue smoothness_impl(const FlowField& flow, const Grid& edge, int order, double edge_lambda,
                                 const Grid* pixel_weight) {
  if (order != 1 && order != 2) throw ParameterError("edge_aware_smoothness: order must be 1 or 2");
  require_same_extent(flow, edge, "edge_aware_smoothness");
  const int H = flow.height(), W = flow.width(), Ce = edge.channels();
  LossValue out;
  Grid grad(H, W, 2);
  std::vector<double> terms;

  // axis 0: x differences, axis 1: y differences.
  for (int axis = 0; axis < 2; ++axis) {
    const int sx = axis == 0 ? 1 : 0, sy = axis == 0 ? 0 : 1;
    const int lo = order == 1 ? 0 : 1;
    const int xlo = axis == 0 ? lo : 0, ylo = axis == 0 ? 0 : lo;
    const int xhi = axis == 0 ? W - 2 : W - 1, yhi = axis == 0 ? H - 1 : H - 2;
    double count = 0.0;
    for (int y = ylo; y <= yhi; ++y)
      for (int x = xlo; x <= xhi; ++x) count += pixel_weight ? (*pixel_weight)(y, x) : 1.0;
    if (count <= 0.0) continue;
    for (int y = ylo; y <= yhi; ++y) {
      for (int x = xlo; x <= xhi; ++x) {
        const double m = pixel_weight ? (*pixel_weight)(y, x) : 1.0;
        if (m == 0.0) continue;
        double edge_mag = 0.0;
        for (int c = 0; c < Ce; ++c) edge_mag += std::abs(edge(y + sy, x + sx, c) - edge(y, x, c));
        const double w = m * std::exp(-edge_lambda * edge_mag) / count;
        for (int k = 0; k < 2; ++k) {
          double d;
          if (order == 1) {
            d = flow(y + sy, x + sx, k) - flow(y, x, k);
          } else {
            d = flow(y + sy, x + sx, k) - 2.0 * flow(y, x, k) + flow(y - sy, x - sx, k);
          }
          terms.push_back(w * std::abs(d));
          const double s = d > 0.0 ? w : (d < 0.0 ? -w : 0.0);
          if (order == 1) {
            grad(y + sy, x + sx, k) += s;
            grad(y, x, k) -= s;
          } else {
            grad(y + sy, x + sx, k) += s;
            grad(y, x, k) -= 2.0 * s;
            grad(y - sy, x - sx, k) += s;
          }
        }
      }
    }
  }
  out.value = pairwise_sum(terms);
  out.gradients["flow"] = std::move(grad);
  return out;
}

struct TemporalHalf {
  double value = 0.0;
  Grid grad_current;
};

/// One aligned reference of the temporal term:
/// sum_p O(p) C(ref(p), F(p)) / (|F(p)| + eps_d) / sum_p O(p).
inline TemporalHalf temporal_half(const FlowField& aligned_reference, const FlowField& current,
                                  const VisibilityMask& visible, const Robust& robust, double eps_d) {
  TemporalHalf out{0.0, Grid(current.height(), current.width(), 2)};
  const double msum = mask_sum(visible.grid());
  if (msum <= 0.0) return out;
  std::vector<double> terms(current.pixels());
  for (std::size_t p = 0; p < current.pixels(); ++p) {
    const double o = visible.data()[p];
    if (o == 0.0) {
      terms[p] = 0.0;
      continue;
    }
    const double u = current.data()[2 * p], v = current.data()[2 * p + 1];
    const double du = u - aligned_reference.data()[2 * p];
    const double dv = v - aligned_reference.data()[2 * p + 1];
    const double cval = 0.5 * (robust.value(du) + robust.value(dv));
    const double n = std::hypot(u, v);
    const double den = n + eps_d;
    terms[p] = o * cval / den / msum;
    const double scale = o / msum;
    double gu = 0.5 * robust.slope(du) / den;
    double gv = 0.5 * robust.slope(dv) / den;
    if (n > 0.0) {
      gu -= cval * (u / n) / (den * den);
      gv -= cval * (v / n) / (den * den);
    }
    out.grad_current.storage()[2 * p] = scale * gu;
    out.grad_current.storage()[2 * p + 1] = scale * gv;
  }
  out.value = pairwise_sum(terms);
  return out;
}

}  // namespace detail

/// mean over elements of (|a - b| + eps)^q; gradients "a" and "b".
inline LossValue charbonnier(const Grid& a, const Grid& b, double eps, double q) {
  if (!(eps > 0.0) || !(q > 0.0)) throw ParameterError("charbonnier: eps and q must be > 0");
  detail::require_same_shape(a, b, "charbonnier");
  const Robust robust{eps, q};
  LossValue out;
  Grid ga(a.height(), a.width(), a.channels());
  std::vector<double> terms(a.size());
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.storage()[i] - b.storage()[i];
    terms[i] = robust.value(d) / n;
    ga.storage()[i] = robust.slope(d) / n;
  }
  out.value = a.size() ? pairwise_sum(terms) : 0.0;
  Grid gb = ga;
  for (double& v : gb.storage()) v = -v;
  out.gradients["a"] = std::move(ga);
  out.gradients["b"] = std::move(gb);
  return out;
}

/// mean of (1 - SSIM)/2 with uniform window pooling; gradients "a" and "b".
inline LossValue ssim_loss(const Image& a, const Image& b, int window = 3) {
  auto r = detail::ssim_weighted(a.grid(), b.grid(), window, nullptr);
  LossValue out;
  out.value = r.value;
  out.gradients["a"] = std::move(r.grad_a);
  out.gradients["b"] = std::move(r.grad_b);
  return out;
}

/// Soft-census structural distance on the grayscale images; gradients "a" and "b".
inline LossValue census_loss(const Image& a, const Image& b, int window = 7, const Robust& robust = {}) {
  auto r = detail::census_weighted(a.grid(), b.grid(), window, nullptr, robust);
  LossValue out;
  out.value = r.value;
  out.gradients["a"] = std::move(r.grad_a);
  out.gradients["b"] = std::move(r.grad_b);
  return out;
}

/// rho(inverse_warp(next, flow), current) over visible pixels; gradient "flow".
inline LossValue photometric_loss(const Image& current, const Image& next, const FlowField& flow,
                                  const VisibilityMask& visible, PhotometricKind kind,
                                  const LossConfig& config = {}) {
  require_same_extent(current, next, "photometric_loss");
  require_same_extent(current, flow, "photometric_loss");
  require_same_extent(current, visible, "photometric_loss");
  if (current.channels() != next.channels())
    throw DimensionError("photometric_loss: channel mismatch");
  const Grid warped = warp_grid(next.grid(), flow);
  const Robust robust = Robust::from(config);
  detail::PairGrad r;
  switch (kind) {
    case PhotometricKind::charbonnier:
      r = detail::robust_weighted(warped, current.grid(), &visible.grid(), robust);
      break;
    case PhotometricKind::ssim:
      r = detail::ssim_weighted(warped, current.grid(), config.ssim_window, &visible.grid());
      break;
    case PhotometricKind::census:
      r = detail::census_weighted(warped, current.grid(), config.census_window, &visible.grid(), robust);
      break;
  }
  LossValue out;
  out.value = r.value;
  out.gradients["flow"] = detail::chain_through_warp(next.grid(), flow, r.grad_a);
  return out;
}

/// k-order edge-aware smoothness; gradient "flow".
inline LossValue edge_aware_smoothness(const FlowField& flow, const Image& image, int order,
                                       double edge_lambda) {
  return detail::smoothness_impl(flow, image.grid(), order, edge_lambda, nullptr);
}

/// Occlusion-aware temporal smoothness of `current` against the previous flow
/// aligned through `previous_backward` (frame k -> k-1) and the future flow
/// aligned through `current`. The aligned references are constants: only
/// "current" receives a gradient; "previous", "future" and
/// "previous_backward" gradients are identically zero.
inline LossValue temporal_smoothness(const FlowField& previous, const FlowField& current,
                                     const FlowField& future, const FlowField& previous_backward,
                                     const VisibilityMask& visible_in_previous,
                                     const VisibilityMask& visible_in_future, const LossConfig& config = {}) {
  require_same_extent(previous, current, "temporal_smoothness");
  require_same_extent(future, current, "temporal_smoothness");
  require_same_extent(previous_backward, current, "temporal_smoothness");
  require_same_extent(visible_in_previous, current, "temporal_smoothness");
  require_same_extent(visible_in_future, current, "temporal_smoothness");
  const Robust robust = Robust::from(config);
  const FlowField from_previous = warp_flow(previous, previous_backward);
  const FlowField from_future = warp_flow(future, current);
  auto past = detail::temporal_half(from_previous, current, visible_in_previous, robust, config.temporal_eps);
  auto ahead = detail::temporal_half(from_future, current, visible_in_future, robust, config.temporal_eps);
  LossValue out;
  out.value = past.value + ahead.value;
  out.terms["past"] = past.value;
  out.terms["future"] = ahead.value;
  detail::add_into(past.grad_current, ahead.grad_current);
  const Grid zero(current.height(), current.width(), 2);
  out.gradients["current"] = std::move(past.grad_current);
  out.gradients["previous"] = zero;
  out.gradients["future"] = zero;
  out.gradients["previous_backward"] = zero;
  return out;
}

/// Dynamic-occlusion loss. `outside_occluders` is 1 away from the synthetic
/// occluders. Sparse: pseudo-label distillation outside occluders only.
/// Mixed: additionally SSIM warp loss on occluder pixels plus smoothness
/// restricted to occluders with the mask as edge signal. Gradient "flow".
inline LossValue doe_loss(const FlowField& flow, const FlowField& pseudo, const VisibilityMask& outside_occluders,
                          const Image& current, const Image& next, DoeMode mode,
                          const LossConfig& config = {}) {
  require_same_extent(flow, pseudo, "doe_loss");
  require_same_extent(flow, outside_occluders, "doe_loss");
  require_same_extent(flow, current, "doe_loss");
  require_same_extent(flow, next, "doe_loss");
  const Robust robust = Robust::from(config);
  auto l1 = detail::robust_weighted(flow.grid(), pseudo.grid(), &outside_occluders.grid(), robust);
  LossValue out;
  out.terms["distill"] = l1.value;
  Grid grad = std::move(l1.grad_a);
  double value = l1.value;
  if (mode == DoeMode::mixed) {
    Grid occluder(flow.height(), flow.width(), 1);
    for (std::size_t p = 0; p < occluder.pixels(); ++p)
      occluder.storage()[p] = 1.0 - outside_occluders.data()[p];
    const Grid warped = warp_grid(next.grid(), flow);
    auto s = detail::ssim_weighted(warped, current.grid(), config.ssim_window, &occluder);
    detail::add_into(grad, detail::chain_through_warp(next.grid(), flow, s.grad_a));
    auto sm = detail::smoothness_impl(flow, outside_occluders.grid(), config.smooth_order,
                                      config.smooth_edge_lambda, &occluder);
    detail::add_into(grad, sm.gradients["flow"]);
    out.terms["ssim"] = s.value;
    out.terms["smoothness"] = sm.value;
    value += s.value + sm.value;
  }
  out.value = value;
  out.gradients["flow"] = std::move(grad);
  return out;
}

/// mean_p conf(p) * C(pred(p), pseudo(p)); pseudo is a constant. Gradient "flow".
inline LossValue distill_loss(const FlowField& prediction, const FlowField& pseudo, const ConfidenceMap& confidence,
                              const LossConfig& config = {}) {
  require_same_extent(prediction, pseudo, "distill_loss");
  require_same_extent(prediction, confidence, "distill_loss");
  const Robust robust = Robust::from(config);
  LossValue out;
  Grid grad(prediction.height(), prediction.width(), 2);
  std::vector<double> terms(prediction.pixels());
  const double n = static_cast<double>(prediction.pixels());
  for (std::size_t p = 0; p < prediction.pixels(); ++p) {
    const double w = confidence.data()[p] / n;
    const double du = prediction.data()[2 * p] - pseudo.data()[2 * p];
    const double dv = prediction.data()[2 * p + 1] - pseudo.data()[2 * p + 1];
    terms[p] = w * 0.5 * (robust.value(du) + robust.value(dv));
    grad.storage()[2 * p] = w * 0.5 * robust.slope(du);
    grad.storage()[2 * p + 1] = w * 0.5 * robust.slope(dv);
  }
  out.value = n > 0 ? pairwise_sum(terms) : 0.0;
  out.gradients["flow"] = std::move(grad);
  return out;
}

/// Inputs of the sequence loss. masks may be left empty, in which case they
/// are derived from forward/backward by the forward-backward check.
struct SequenceLossInput {
  std::vector<Image> frames;
  std::vector<FlowField> forward;
  std::vector<FlowField> backward;
  std::vector<VisibilityMask> masks;
};

inline std::string gradient_key(const std::string& prefix, std::size_t t) {
  return prefix + "/" + std::to_string(t);
}

/// (1/(N-1)) sum_t [photometric + lambda1 * smoothness + w_t * temporal].
/// Terms: photometric, smoothness, temporal (unweighted means) and total.
/// Gradients "forward/<t>" for every forward flow.
inline LossValue sequence_loss(const SequenceLossInput& in, const LossConfig& config) {
  config.validate();
  const std::size_t n = in.frames.size();
  if (n < 2) throw LengthError("sequence_loss: need at least 2 frames");
  const std::size_t pairs = n - 1;
  if (in.forward.size() != pairs)
    throw LengthError("sequence_loss: expected " + std::to_string(pairs) + " forward flows, got " +
                      std::to_string(in.forward.size()));
  if (!in.backward.empty() && in.backward.size() != pairs)
    throw LengthError("sequence_loss: backward flow count mismatch");
  if (!in.masks.empty() && in.masks.size() != pairs)
    throw LengthError("sequence_loss: mask count mismatch");
  const double tsm_weight = config.temporal_weight();
  const bool need_backward = in.masks.empty() || (pairs > 1 && tsm_weight > 0.0);
  if (need_backward && in.backward.empty())
    throw ConfigError("sequence_loss: backward flows required for occlusion masks or temporal term");

  std::vector<VisibilityMask> masks = in.masks;
  if (masks.empty())
    for (std::size_t t = 0; t < pairs; ++t)
      masks.push_back(fb_occlusion_mask(in.forward[t], in.backward[t], config.fb_check));

  const Robust robust = Robust::from(config);
  LossValue out;
  std::vector<double> photo(pairs), smooth(pairs), temporal(pairs, 0.0);
  for (std::size_t t = 0; t < pairs; ++t) {
    const FlowField& flow = in.forward[t];
    auto ph = photometric_loss(in.frames[t], in.frames[t + 1], flow, masks[t], config.photometric, config);
    auto sm = edge_aware_smoothness(flow, in.frames[t], config.smooth_order, config.smooth_edge_lambda);
    photo[t] = ph.value;
    smooth[t] = sm.value;
    Grid grad = std::move(ph.gradients["flow"]);
    detail::add_into(grad, sm.gradients["flow"], config.lambda1);

    if (tsm_weight > 0.0 && pairs > 1) {
      if (t >= 1) {
        const VisibilityMask visible_prev =
            fb_occlusion_mask(in.backward[t - 1], in.forward[t - 1], config.fb_check);
        const FlowField aligned = warp_flow(in.forward[t - 1], in.backward[t - 1]);
        auto h = detail::temporal_half(aligned, flow, visible_prev, robust, config.temporal_eps);
        temporal[t] += h.value;
        detail::add_into(grad, h.grad_current, tsm_weight);
      }
      if (t + 1 < pairs) {
        const FlowField aligned = warp_flow(in.forward[t + 1], flow);
        auto h = detail::temporal_half(aligned, flow, masks[t], robust, config.temporal_eps);
        temporal[t] += h.value;
        detail::add_into(grad, h.grad_current, tsm_weight);
      }
    }
    for (double& g : grad.storage()) g /= static_cast<double>(pairs);
    out.gradients[gradient_key("forward", t)] = std::move(grad);
  }
  const double inv = 1.0 / static_cast<double>(pairs);
  out.terms["photometric"] = pairwise_sum(photo) * inv;
  out.terms["smoothness"] = pairwise_sum(smooth) * inv;
  out.terms["temporal"] = pairwise_sum(temporal) * inv;
  out.value = out.terms["photometric"] + config.lambda1 * out.terms["smoothness"] +
              tsm_weight * out.terms["temporal"];
  out.terms["total"] = out.value;
  return out;
}

/// One enhancer pass: predictions on the transformed scene and the
/// consistently transformed pseudo-labels. `confidence` (optional, defaults
/// to 1) weights the SVE/CVE distillation. The DOE pass additionally needs
/// the transformed frames and the per-frame occluder masks.
struct EnhancerPass {
  std::vector<FlowField> predictions;
  std::vector<FlowField> pseudo;
  std::vector<ConfidenceMap> confidence;
  std::vector<Image> frames;
  std::vector<VisibilityMask> occluder_masks;
};

struct SelfDistillInput {
  SequenceLossInput original;
  std::optional<EnhancerPass> doe;
  std::optional<EnhancerPass> sve;
  std::optional<EnhancerPass> cve;
};

/// Sequence loss of the original pass plus lambda3..5 times the mean DOE,
/// SVE and CVE distillation terms. Terms: photometric, smoothness, temporal,
/// sequence, doe, sve, cve, total. Gradients "forward/<t>", "doe/<t>",
/// "sve/<t>", "cve/<t>".
inline LossValue self_distill_total(const SelfDistillInput& in, const LossConfig& config) {
  LossValue out = sequence_loss(in.original, config);
  const std::size_t pairs = in.original.forward.size();
  out.terms["sequence"] = out.value;

  auto check_pass = [&](const std::optional<EnhancerPass>& pass, const char* name, bool is_doe) {
    if (!pass) throw ConfigError(std::string("self_distill_total: missing ") + name + " pass");
    if (pass->predictions.size() != pairs || pass->pseudo.size() != pairs)
      throw ConfigError(std::string("self_distill_total: ") + name + " pass needs " +
                        std::to_string(pairs) + " predictions and pseudo-labels");
    if (!pass->confidence.empty() && pass->confidence.size() != pairs)
      throw ConfigError(std::string("self_distill_total: ") + name + " confidence count mismatch");
    if (is_doe && (pass->frames.size() != pairs + 1 || pass->occluder_masks.size() < pairs))
      throw ConfigError("self_distill_total: doe pass needs N frames and per-frame occluder masks");
  };

  const double inv = 1.0 / static_cast<double>(pairs);
  auto distill_pass = [&](const std::optional<EnhancerPass>& pass, const char* name, double weight) {
    double sum = 0.0;
    if (weight == 0.0 && !pass) {
      out.terms[name] = 0.0;
      return;
    }
    check_pass(pass, name, false);
    for (std::size_t t = 0; t < pairs; ++t) {
      const ConfidenceMap conf = pass->confidence.empty()
                                     ? ConfidenceMap(Grid(pass->predictions[t].height(),
                                                          pass->predictions[t].width(), 1, 1.0))
                                     : pass->confidence[t];
      auto l = distill_loss(pass->predictions[t], pass->pseudo[t], conf, config);
      sum += l.value;
      Grid g = std::move(l.gradients["flow"]);
      for (double& v : g.storage()) v *= weight * inv;
      out.gradients[gradient_key(name, t)] = std::move(g);
    }
    out.terms[name] = sum * inv;
  };

  if (config.lambda3 != 0.0 || in.doe) {
    check_pass(in.doe, "doe", true);
    double sum = 0.0;
    for (std::size_t t = 0; t < pairs; ++t) {
      auto l = doe_loss(in.doe->predictions[t], in.doe->pseudo[t], in.doe->occluder_masks[t],
                        in.doe->frames[t], in.doe->frames[t + 1], config.doe_mode, config);
      sum += l.value;
      Grid g = std::move(l.gradients["flow"]);
      for (double& v : g.storage()) v *= config.lambda3 * inv;
      out.gradients[gradient_key("doe", t)] = std::move(g);
    }
    out.terms["doe"] = sum * inv;
  } else {
    out.terms["doe"] = 0.0;
  }
  distill_pass(in.sve, "sve", config.lambda4);
  distill_pass(in.cve, "cve", config.lambda5);

  out.value = out.terms["sequence"] + config.lambda3 * out.terms["doe"] + config.lambda4 * out.terms["sve"] +
              config.lambda5 * out.terms["cve"];
  out.terms["total"] = out.value;
  return out;
}

}  // namespace seqflow
