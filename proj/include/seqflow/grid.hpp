#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seqflow/error.hpp"

namespace seqflow {

/// Dense row-major H x W x C array of doubles. Element (y, x, c) lives at
/// ((y * W) + x) * C + c; x grows rightward and y downward.
///
/// Grid is the mutable work buffer of the library. The validated value types
/// (Image, FlowField, ...) wrap a Grid and only expose it read-only.
class Grid {
 public:
  Grid() = default;

  Grid(int height, int width, int channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 1)
      throw DimensionError("Grid: invalid shape " + shape_string());
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  Grid(int height, int width, int channels, std::vector<double> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    if (height < 0 || width < 0 || channels < 1)
      throw DimensionError("Grid: invalid shape " + shape_string());
    if (data_.size() != static_cast<std::size_t>(height) * width * channels)
      throw LengthError("Grid: data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_string());
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(int y, int x, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  double& operator()(int y, int x, int c = 0) noexcept { return data_[index(y, x, c)]; }
  double operator()(int y, int x, int c = 0) const noexcept { return data_[index(y, x, c)]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  bool same_extent(const Grid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool same_shape(const Grid& other) const noexcept {
    return same_extent(other) && channels_ == other.channels_;
  }

  std::string shape_string() const {
    return std::to_string(height_) + "x" + std::to_string(width_) + "x" +
           std::to_string(channels_);
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 1;
  std::vector<double> data_;
};

/// Validated, immutable view types over a Grid. The Traits parameter supplies
/// a name and a validate(const Grid&) hook that throws on invariant breach.
template <typename Traits>
class Field {
 public:
  Field() : grid_(0, 0, Traits::kDefaultChannels) {}
  explicit Field(Grid grid) : grid_(std::move(grid)) { Traits::validate(grid_); }

  const Grid& grid() const noexcept { return grid_; }
  Grid take() && noexcept { return std::move(grid_); }

  int height() const noexcept { return grid_.height(); }
  int width() const noexcept { return grid_.width(); }
  int channels() const noexcept { return grid_.channels(); }
  std::size_t pixels() const noexcept { return grid_.pixels(); }
  double operator()(int y, int x, int c = 0) const noexcept { return grid_(y, x, c); }
  std::span<const double> data() const noexcept { return grid_.data(); }

  friend bool operator==(const Field&, const Field&) = default;

 private:
  Grid grid_;
};

namespace detail {

inline void require_finite(const Grid& g, const char* what) {
  for (double v : g.data())
    if (!std::isfinite(v)) throw ParameterError(std::string(what) + ": non-finite value");
}

struct ImageTraits {
  static constexpr int kDefaultChannels = 1;
  static void validate(const Grid& g) {
    if (g.channels() != 1 && g.channels() != 3)
      throw DimensionError("Image: channels must be 1 or 3, got " + std::to_string(g.channels()));
    for (double v : g.data())
      if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("Image: value outside [0,1]");
  }
};

struct FlowTraits {
  static constexpr int kDefaultChannels = 2;
  static void validate(const Grid& g) {
    if (g.channels() != 2)
      throw DimensionError("FlowField: expected 2 channels, got " + std::to_string(g.channels()));
    require_finite(g, "FlowField");
  }
};

struct MaskTraits {
  static constexpr int kDefaultChannels = 1;
  static void validate(const Grid& g) {
    if (g.channels() != 1) throw DimensionError("VisibilityMask: expected 1 channel");
    for (double v : g.data())
      if (v != 0.0 && v != 1.0) throw ParameterError("VisibilityMask: value not in {0,1}");
  }
};

struct ConfidenceTraits {
  static constexpr int kDefaultChannels = 1;
  static void validate(const Grid& g) {
    if (g.channels() != 1) throw DimensionError("ConfidenceMap: expected 1 channel");
    for (double v : g.data())
      if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("ConfidenceMap: value outside [0,1]");
  }
};

struct FeatureTraits {
  static constexpr int kDefaultChannels = 1;
  static void validate(const Grid& g) { require_finite(g, "FeatureMap"); }
};

}  // namespace detail

/// Intensity image, 1 or 3 channels, every value in [0,1].
using Image = Field<detail::ImageTraits>;
/// Per-pixel (u, v) displacement in pixels; u rightward, v downward.
using FlowField = Field<detail::FlowTraits>;
/// 1 = visible / non-occluded, 0 = occluded.
using VisibilityMask = Field<detail::MaskTraits>;
/// Soft reliability in [0,1].
using ConfidenceMap = Field<detail::ConfidenceTraits>;
/// Arbitrary finite feature tensor.
using FeatureMap = Field<detail::FeatureTraits>;

inline Image make_image(int height, int width, int channels, double value = 0.0) {
  return Image(Grid(height, width, channels, value));
}
inline FlowField make_flow(int height, int width, double u = 0.0, double v = 0.0) {
  Grid g(height, width, 2);
  for (std::size_t i = 0; i < g.pixels(); ++i) {
    g.storage()[2 * i] = u;
    g.storage()[2 * i + 1] = v;
  }
  return FlowField(std::move(g));
}
inline VisibilityMask make_mask(int height, int width, double value = 1.0) {
  return VisibilityMask(Grid(height, width, 1, value));
}

template <typename A, typename B>
void require_same_extent(const A& a, const B& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width())
    throw DimensionError(std::string(what) + ": extent mismatch " + std::to_string(a.height()) +
                         "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                         "x" + std::to_string(b.width()));
}

/// Ordered frames with optional per-pair annotations.
struct Sequence {
  std::vector<Image> frames;
  /// forward[t] is the flow frame t -> t+1.
  std::vector<FlowField> forward;
  /// backward[t] is the flow frame t+1 -> t, stored on frame t+1's lattice.
  std::vector<FlowField> backward;
  /// masks[t] is the visibility of frame t's pixels in frame t+1.
  std::vector<VisibilityMask> masks;

  std::size_t size() const noexcept { return frames.size(); }

  void validate() const {
    if (frames.size() < 2) throw LengthError("Sequence: need at least 2 frames");
    const std::size_t pairs = frames.size() - 1;
    for (const auto& f : frames) {
      require_same_extent(f, frames.front(), "Sequence frames");
      if (f.channels() != frames.front().channels())
        throw DimensionError("Sequence: frames differ in channel count");
    }
    auto check = [&](const auto& list, const char* what) {
      if (list.empty()) return;
      if (list.size() != pairs)
        throw LengthError(std::string("Sequence: ") + what + " length " +
                          std::to_string(list.size()) + ", expected " + std::to_string(pairs));
      for (const auto& item : list) require_same_extent(item, frames.front(), what);
    };
    check(forward, "forward flows");
    check(backward, "backward flows");
    check(masks, "masks");
  }
};

/// Pairwise (cascade) summation; result does not depend on thread count.
inline double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 64;
  if (values.size() <= kBlock) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace seqflow
