#pragma once

/// \file
/// Array-in / array-out surface for scripting bindings. Inputs are
/// contiguous row-major float32 buffers shaped (H, W) or (H, W, C); they are
/// copied into double grids. Outputs are owned float32 arrays.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqflow/enhancers.hpp"
#include "seqflow/grid.hpp"
#include "seqflow/losses.hpp"
#include "seqflow/metrics.hpp"
#include "seqflow/warp.hpp"

namespace seqflow::arrays {

struct ArrayView {
  std::vector<std::size_t> shape;
  std::span<const float> data;
};

struct Array {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  ArrayView view() const { return {shape, data}; }
};

struct LossResult {
  double value = 0.0;
  std::map<std::string, Array> gradients;
  std::map<std::string, double> terms;
};

inline Grid to_grid(const ArrayView& a, const char* what) {
  if (a.shape.size() != 2 && a.shape.size() != 3)
    throw DimensionError(std::string(what) + ": expected a 2-D or 3-D array");
  const std::size_t h = a.shape[0], w = a.shape[1], c = a.shape.size() == 3 ? a.shape[2] : 1;
  if (h * w * c != a.data.size())
    throw LengthError(std::string(what) + ": buffer holds " + std::to_string(a.data.size()) +
                      " values, shape needs " + std::to_string(h * w * c));
  return Grid(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c),
              std::vector<double>(a.data.begin(), a.data.end()));
}

inline Array from_grid(const Grid& g) {
  Array a;
  a.shape = {static_cast<std::size_t>(g.height()), static_cast<std::size_t>(g.width())};
  if (g.channels() != 1) a.shape.push_back(static_cast<std::size_t>(g.channels()));
  a.data.assign(g.storage().begin(), g.storage().end());
  return a;
}

inline Image image(const ArrayView& a) { return Image(to_grid(a, "image")); }
inline FlowField flow(const ArrayView& a) { return FlowField(to_grid(a, "flow")); }
inline VisibilityMask mask(const ArrayView& a) { return VisibilityMask(to_grid(a, "mask")); }
inline ConfidenceMap confidence(const ArrayView& a) { return ConfidenceMap(to_grid(a, "confidence")); }

inline LossResult wrap(const LossValue& v) {
  LossResult r{v.value, {}, v.terms};
  for (const auto& [k, g] : v.gradients) r.gradients[k] = from_grid(g);
  return r;
}

inline LossResult photometric_loss(const ArrayView& current, const ArrayView& next, const ArrayView& f,
                                   const ArrayView& m, PhotometricKind kind, const LossConfig& config = {}) {
  return wrap(seqflow::photometric_loss(image(current), image(next), flow(f), mask(m), kind, config));
}

inline LossResult edge_aware_smoothness(const ArrayView& f, const ArrayView& img, int order, double edge_lambda) {
  return wrap(seqflow::edge_aware_smoothness(flow(f), image(img), order, edge_lambda));
}

inline LossResult temporal_smoothness(const ArrayView& previous, const ArrayView& current, const ArrayView& future,
                                      const ArrayView& previous_backward, const ArrayView& visible_in_previous,
                                      const ArrayView& visible_in_future, const LossConfig& config = {}) {
  return wrap(seqflow::temporal_smoothness(flow(previous), flow(current), flow(future), flow(previous_backward),
                                           mask(visible_in_previous), mask(visible_in_future), config));
}

inline LossResult doe_loss(const ArrayView& f, const ArrayView& pseudo, const ArrayView& outside,
                           const ArrayView& current, const ArrayView& next, DoeMode mode,
                           const LossConfig& config = {}) {
  return wrap(seqflow::doe_loss(flow(f), flow(pseudo), mask(outside), image(current), image(next), mode, config));
}

inline LossResult distill_loss(const ArrayView& pred, const ArrayView& pseudo, const ArrayView& conf,
                               const LossConfig& config = {}) {
  return wrap(seqflow::distill_loss(flow(pred), flow(pseudo), confidence(conf), config));
}

inline Array fb_occlusion_mask(const ArrayView& forward, const ArrayView& backward, const FbCheckParams& p = {}) {
  return from_grid(seqflow::fb_occlusion_mask(flow(forward), flow(backward), p).grid());
}

inline Array confidence_map(const ArrayView& forward, const ArrayView& backward, const ConfidenceParams& p = {}) {
  return from_grid(seqflow::confidence_map(flow(forward), flow(backward), p).grid());
}

inline double epe(const ArrayView& pred, const ArrayView& gt, const std::optional<ArrayView>& m = std::nullopt) {
  if (!m) return seqflow::epe(flow(pred), flow(gt));
  return seqflow::epe(flow(pred), flow(gt), mask(*m));
}

inline double f1_all(const ArrayView& pred, const ArrayView& gt, const std::optional<ArrayView>& m = std::nullopt) {
  if (!m) return seqflow::f1_all(flow(pred), flow(gt));
  return seqflow::f1_all(flow(pred), flow(gt), mask(*m));
}

template <typename T, typename Fn>
std::vector<T> convert(const std::vector<ArrayView>& in, Fn fn) {
  std::vector<T> out;
  out.reserve(in.size());
  for (const auto& a : in) out.push_back(fn(a));
  return out;
}

template <typename F>
std::vector<Array> export_all(const std::vector<F>& in) {
  std::vector<Array> out;
  for (const auto& f : in) out.push_back(from_grid(f.grid()));
  return out;
}

struct EnhancedArrays {
  std::vector<Array> frames;
  std::vector<Array> pseudo;
  std::vector<Array> masks;
};

inline EnhancedArrays apply_doe(const std::vector<ArrayView>& frames, const std::vector<ArrayView>& pseudo,
                                const DoeParams& params) {
  const auto r = seqflow::apply_doe(convert<Image>(frames, image), convert<FlowField>(pseudo, flow), params);
  return {export_all(r.frames), export_all(r.pseudo), export_all(r.masks)};
}

inline EnhancedArrays apply_sve(const std::vector<ArrayView>& frames, const std::vector<ArrayView>& pseudo,
                                const std::vector<AffineParams>& transforms) {
  const auto r = seqflow::apply_sve(convert<Image>(frames, image), convert<FlowField>(pseudo, flow), transforms);
  return {export_all(r.frames), export_all(r.pseudo), {}};
}

inline std::vector<Array> apply_cve(const std::vector<ArrayView>& frames, const CveSchedule& schedule,
                                    std::uint64_t seed) {
  Rng rng(seed);
  return export_all(seqflow::apply_cve(convert<Image>(frames, image), schedule, rng));
}

}  // namespace seqflow::arrays
