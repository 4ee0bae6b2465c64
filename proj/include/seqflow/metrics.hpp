#pragma once

/// \file
/// Endpoint error, KITTI-style outlier percentage and occlusion splits.

#include <cmath>
#include <optional>
#include <vector>

#include "seqflow/grid.hpp"

namespace seqflow {

namespace detail {

inline void require_metric_inputs(const FlowField& pred, const FlowField& gt, const VisibilityMask* mask,
                                  const char* what) {
  require_same_extent(pred, gt, what);
  if (mask) require_same_extent(pred, *mask, what);
}

inline double endpoint_error(const FlowField& a, const FlowField& b, std::size_t p) {
  return std::hypot(a.data()[2 * p] - b.data()[2 * p], a.data()[2 * p + 1] - b.data()[2 * p + 1]);
}

inline std::vector<std::size_t> selected(std::size_t n, const VisibilityMask* mask, double want) {
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < n; ++p)
    if (!mask || mask->data()[p] == want) out.push_back(p);
  return out;
}

inline double mean_epe(const FlowField& pred, const FlowField& gt, const std::vector<std::size_t>& px) {
  std::vector<double> e(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) e[i] = endpoint_error(pred, gt, px[i]);
  return pairwise_sum(e) / static_cast<double>(px.size());
}

}  // namespace detail

/// Mean |pred - gt| over pixels where mask = 1 (all pixels without a mask).
inline double epe(const FlowField& pred, const FlowField& gt, const VisibilityMask* mask = nullptr) {
  detail::require_metric_inputs(pred, gt, mask, "epe");
  const auto px = detail::selected(pred.pixels(), mask, 1.0);
  if (px.empty()) throw MetricError("epe: mask selects no pixels");
  return detail::mean_epe(pred, gt, px);
}

inline double epe(const FlowField& pred, const FlowField& gt, const VisibilityMask& mask) {
  return epe(pred, gt, &mask);
}

/// Percentage of selected pixels whose error exceeds 3 px and 5% of |gt|.
inline double f1_all(const FlowField& pred, const FlowField& gt, const VisibilityMask* mask = nullptr) {
  detail::require_metric_inputs(pred, gt, mask, "f1_all");
  const auto px = detail::selected(pred.pixels(), mask, 1.0);
  if (px.empty()) throw MetricError("f1_all: mask selects no pixels");
  std::size_t bad = 0;
  for (std::size_t p : px) {
    const double err = detail::endpoint_error(pred, gt, p);
    const double mag = std::hypot(gt.data()[2 * p], gt.data()[2 * p + 1]);
    if (err > 3.0 && err > 0.05 * mag) ++bad;
  }
  return 100.0 * static_cast<double>(bad) / static_cast<double>(px.size());
}

inline double f1_all(const FlowField& pred, const FlowField& gt, const VisibilityMask& mask) {
  return f1_all(pred, gt, &mask);
}

struct SplitMetrics {
  double all = 0.0;
  std::optional<double> noc;
  std::optional<double> occ;
  std::size_t n_all = 0;
  std::size_t n_noc = 0;
  std::size_t n_occ = 0;
};

/// EPE over every pixel, over occ_mask = 1 (noc) and over occ_mask = 0 (occ).
/// An empty partition is left unset.
inline SplitMetrics split_metrics(const FlowField& pred, const FlowField& gt, const VisibilityMask& occ_mask) {
  detail::require_metric_inputs(pred, gt, &occ_mask, "split_metrics");
  if (pred.pixels() == 0) throw MetricError("split_metrics: empty field");
  SplitMetrics m;
  const auto all = detail::selected(pred.pixels(), nullptr, 1.0);
  const auto noc = detail::selected(pred.pixels(), &occ_mask, 1.0);
  const auto occ = detail::selected(pred.pixels(), &occ_mask, 0.0);
  m.all = detail::mean_epe(pred, gt, all);
  m.n_all = all.size();
  m.n_noc = noc.size();
  m.n_occ = occ.size();
  if (!noc.empty()) m.noc = detail::mean_epe(pred, gt, noc);
  if (!occ.empty()) m.occ = detail::mean_epe(pred, gt, occ);
  return m;
}

}  // namespace seqflow
