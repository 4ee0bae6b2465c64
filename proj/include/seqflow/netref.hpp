#pragma once

/// \file
/// Inference-only reference blocks with caller-supplied weights: correlation
/// volume, Conv-GRU cell, self-guided warping block, pyramid plumbing and a
/// flat binary weight container.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seqflow/flo_io.hpp"
#include "seqflow/grid.hpp"
#include "seqflow/warp.hpp"

namespace seqflow {

inline constexpr int kHiddenChannels = 32;

/// C[(dy+md)(2md+1) + (dx+md)](p) = mean_c f1(p, c) f2(p + (dx, dy), c);
/// displacements leaving the image contribute 0.
inline FeatureMap correlation_volume(const FeatureMap& f1, const FeatureMap& f2, int max_disp) {
  if (!f1.grid().same_shape(f2.grid()))
    throw DimensionError("correlation_volume: shape mismatch " + f1.grid().shape_string() + " vs " +
                         f2.grid().shape_string());
  if (max_disp < 0) throw ParameterError("correlation_volume: max_disp must be >= 0");
  const int H = f1.height(), W = f1.width(), C = f1.channels();
  const int side = 2 * max_disp + 1;
  Grid out(H, W, side * side);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int dy = -max_disp; dy <= max_disp; ++dy) {
        const int sy = y + dy;
        for (int dx = -max_disp; dx <= max_disp; ++dx) {
          const int sx = x + dx;
          double acc = 0.0;
          if (sx >= 0 && sy >= 0 && sx < W && sy < H)
            for (int c = 0; c < C; ++c) acc += f1(y, x, c) * f2(sy, sx, c);
          out(y, x, (dy + max_disp) * side + (dx + max_disp)) = acc / C;
        }
      }
  return FeatureMap(std::move(out));
}

/// 3x3 convolution kernel, weight[((o * in + i) * 3 + ky) * 3 + kx].
struct ConvWeights {
  int in = 0;
  int out = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  static ConvWeights zeros(int in, int out) {
    return {in, out, std::vector<double>(static_cast<std::size_t>(in) * out * 9, 0.0),
            std::vector<double>(static_cast<std::size_t>(out), 0.0)};
  }
  double& w(int o, int i, int ky, int kx) { return weight[((static_cast<std::size_t>(o) * in + i) * 3 + ky) * 3 + kx]; }
  double w(int o, int i, int ky, int kx) const {
    return weight[((static_cast<std::size_t>(o) * in + i) * 3 + ky) * 3 + kx];
  }
  void validate(const char* what) const {
    if (in < 1 || out < 1) throw DimensionError(std::string(what) + ": channel counts must be >= 1");
    if (weight.size() != static_cast<std::size_t>(in) * out * 9 || bias.size() != static_cast<std::size_t>(out))
      throw DimensionError(std::string(what) + ": weight shape does not match " + std::to_string(out) + "x" +
                           std::to_string(in) + "x3x3");
  }
};

/// Zero-padded, stride-1 3x3 convolution.
inline Grid conv3x3(const Grid& x, const ConvWeights& k) {
  k.validate("conv3x3");
  if (x.channels() != k.in)
    throw DimensionError("conv3x3: input has " + std::to_string(x.channels()) + " channels, kernel expects " +
                         std::to_string(k.in));
  const int H = x.height(), W = x.width();
  Grid out(H, W, k.out);
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx)
      for (int o = 0; o < k.out; ++o) {
        double acc = k.bias[o];
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= W) continue;
            for (int i = 0; i < k.in; ++i) acc += k.w(o, i, ky, kx) * x(sy, sx, i);
          }
        }
        out(y, xx, o) = acc;
      }
  return out;
}

inline Grid concat_channels(const Grid& a, const Grid& b) {
  require_same_extent(a, b, "concat_channels");
  Grid out(a.height(), a.width(), a.channels() + b.channels());
  for (std::size_t p = 0; p < a.pixels(); ++p) {
    for (int c = 0; c < a.channels(); ++c) out.storage()[p * out.channels() + c] = a.storage()[p * a.channels() + c];
    for (int c = 0; c < b.channels(); ++c)
      out.storage()[p * out.channels() + a.channels() + c] = b.storage()[p * b.channels() + c];
  }
  return out;
}

/// z and r read ConCat[hidden, input]; q reads ConCat[r * input, hidden].
/// All three map to the input channel count.
struct ConvGruWeights {
  ConvWeights z;
  ConvWeights r;
  ConvWeights q;

  static ConvGruWeights zeros(int hidden_channels, int input_channels) {
    const int in = hidden_channels + input_channels;
    return {ConvWeights::zeros(in, input_channels), ConvWeights::zeros(in, input_channels),
            ConvWeights::zeros(in, input_channels)};
  }
};

struct ConvGruOutput {
  Grid z, r, q;
  FeatureMap fused;
};

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline ConvGruOutput conv_gru_forward(const FeatureMap& hidden, const FeatureMap& input, const ConvGruWeights& w) {
  require_same_extent(hidden, input, "conv_gru_cell");
  const int Cx = input.channels(), Ch = hidden.channels();
  for (const ConvWeights* k : {&w.z, &w.r, &w.q}) {
    k->validate("conv_gru_cell");
    if (k->in != Ch + Cx || k->out != Cx)
      throw DimensionError("conv_gru_cell: gate kernels must map " + std::to_string(Ch + Cx) + " -> " +
                           std::to_string(Cx) + " channels");
  }
  const Grid hx = concat_channels(hidden.grid(), input.grid());
  ConvGruOutput o;
  o.z = conv3x3(hx, w.z);
  o.r = conv3x3(hx, w.r);
  for (double& v : o.z.storage()) v = sigmoid(v);
  for (double& v : o.r.storage()) v = sigmoid(v);
  Grid rx = input.grid();
  for (std::size_t i = 0; i < rx.size(); ++i) rx.storage()[i] *= o.r.storage()[i];
  o.q = conv3x3(concat_channels(rx, hidden.grid()), w.q);
  for (double& v : o.q.storage()) v = std::tanh(v);
  Grid fused(input.height(), input.width(), Cx);
  for (std::size_t i = 0; i < fused.size(); ++i) {
    const double z = o.z.storage()[i];
    fused.storage()[i] = (1.0 - z) * input.data()[i] + z * o.q.storage()[i];
  }
  o.fused = FeatureMap(std::move(fused));
  return o;
}

/// I_new = (1 - z) * input + z * q.
inline FeatureMap conv_gru_cell(const FeatureMap& hidden, const FeatureMap& input, const ConvGruWeights& w) {
  return conv_gru_forward(hidden, input, w).fused;
}

/// Mini flow estimator (correlation -> 16 -> 2, leaky ReLU between) and the
/// fusing GRU of one self-guided warping block.
struct SgwWeights {
  int max_disp = 4;
  ConvWeights estimator1;
  ConvWeights estimator2;
  ConvGruWeights gru;

  static constexpr int kEstimatorWidth = 16;

  static SgwWeights zeros(int max_disp, int channels = kHiddenChannels) {
    const int corr = (2 * max_disp + 1) * (2 * max_disp + 1);
    return {max_disp, ConvWeights::zeros(corr, kEstimatorWidth), ConvWeights::zeros(kEstimatorWidth, 2),
            ConvGruWeights::zeros(channels, channels)};
  }
};

struct SgwOutput {
  FlowField flow;
  FeatureMap warped_hidden;
  FeatureMap fused;
};

/// correlation(feature, hidden) -> estimator -> flow; hidden is warped as
/// hidden(p + flow(p)) and fused with the feature by the Conv-GRU.
inline SgwOutput sgw_block(const FeatureMap& hidden, const FeatureMap& feature, const SgwWeights& w) {
  if (hidden.channels() != kHiddenChannels)
    throw DimensionError("sgw_block: hidden state must have 32 channels, got " + std::to_string(hidden.channels()));
  if (!hidden.grid().same_shape(feature.grid()))
    throw DimensionError("sgw_block: hidden " + hidden.grid().shape_string() + " vs feature " +
                         feature.grid().shape_string());
  const FeatureMap corr = correlation_volume(feature, hidden, w.max_disp);
  Grid h1 = conv3x3(corr.grid(), w.estimator1);
  for (double& v : h1.storage()) v = v > 0.0 ? v : 0.1 * v;
  Grid flow = conv3x3(h1, w.estimator2);
  if (flow.channels() != 2) throw DimensionError("sgw_block: estimator must output 2 channels");
  SgwOutput out{FlowField(std::move(flow)), FeatureMap(), FeatureMap()};
  out.warped_hidden = FeatureMap(warp_grid(hidden.grid(), out.flow));
  out.fused = conv_gru_cell(out.warped_hidden, feature, w.gru);
  return out;
}

/// Five levels, H/4 x W/4 down to H/64 x W/64, finest first.
inline std::vector<std::pair<int, int>> pyramid_shapes(int height, int width) {
  if (height <= 0 || width <= 0 || height % 64 != 0 || width % 64 != 0)
    throw ParameterError("pyramid_shapes: " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not divisible by 64");
  std::vector<std::pair<int, int>> out;
  for (int s = 4; s <= 64; s *= 2) out.emplace_back(height / s, width / s);
  return out;
}

/// 2x2 mean; odd trailing rows/columns are dropped.
inline Grid avg_pool2x(const Grid& g) {
  Grid out(g.height() / 2, g.width() / 2, g.channels());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < g.channels(); ++c)
        out(y, x, c) = 0.25 * (g(2 * y, 2 * x, c) + g(2 * y, 2 * x + 1, c) + g(2 * y + 1, 2 * x, c) +
                               g(2 * y + 1, 2 * x + 1, c));
  return out;
}

/// Bilinear 2x upsampling on pixel centres, clamped at the border.
inline Grid upsample2x(const Grid& g) {
  Grid out(g.height() * 2, g.width() * 2, g.channels());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      const BilinearTap t = bilinear_tap(g.width(), g.height(), (x + 0.5) / 2.0 - 0.5, (y + 0.5) / 2.0 - 0.5);
      for (int c = 0; c < g.channels(); ++c) out(y, x, c) = bilinear_at(g, t, c);
    }
  return out;
}

/// Average-pooled stand-in for the learned encoder: levels /4 ... /64.
inline std::vector<FeatureMap> feature_pyramid(const Grid& image) {
  const auto shapes = pyramid_shapes(image.height(), image.width());
  std::vector<FeatureMap> out;
  Grid g = avg_pool2x(avg_pool2x(image));
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    out.emplace_back(g);
    if (l + 1 < shapes.size()) g = avg_pool2x(g);
  }
  return out;
}

/// One time step of the recurrent wiring. `previous` holds last step's
/// per-level 32-channel outputs (finest first). Level l receives level l+1
/// of the previous step upsampled 2x; the coarsest level receives its own
/// previous output. The fused outputs become the next step's state.
inline std::vector<FeatureMap> temporal_step(const std::vector<FeatureMap>& features,
                                             const std::vector<FeatureMap>& previous,
                                             const std::vector<SgwWeights>& weights) {
  const std::size_t L = features.size();
  if (previous.size() != L || weights.size() != L)
    throw DimensionError("temporal_step: features, previous state and weights must have equal level counts");
  std::vector<FeatureMap> next(L);
  for (std::size_t l = L; l-- > 0;) {
    const FeatureMap hidden = l + 1 < L ? FeatureMap(upsample2x(previous[l + 1].grid())) : previous[l];
    next[l] = sgw_block(hidden, features[l], weights[l]).fused;
  }
  return next;
}

/// Named float32 tensors. Binary layout (little-endian):
///   "SQWS" u32 version=1 u32 count
///   per tensor: u32 name_len, name bytes, u32 ndim, ndim x u32 dims, f32 values
struct WeightSet {
  struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;
  };
  std::map<std::string, Tensor> tensors;

  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, std::vector<std::uint32_t> dims, std::vector<float> values) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    if (n != values.size()) throw DimensionError("WeightSet: '" + name + "' value count does not match dims");
    tensors[name] = {std::move(dims), std::move(values)};
  }

  const Tensor& get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("WeightSet: missing tensor '" + name + "'");
    return it->second;
  }

  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out{'S', 'Q', 'W', 'S'};
    detail::store_le32(out, kVersion);
    detail::store_le32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
      detail::store_le32(out, static_cast<std::uint32_t>(name.size()));
      out.insert(out.end(), name.begin(), name.end());
      detail::store_le32(out, static_cast<std::uint32_t>(t.dims.size()));
      for (auto d : t.dims) detail::store_le32(out, d);
      for (float v : t.values) detail::store_lef32(out, v);
    }
    return out;
  }

  static WeightSet deserialize(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
      if (bytes.size() - pos < n) throw LengthError("WeightSet: truncated at byte " + std::to_string(pos));
    };
    auto u32 = [&] {
      need(4);
      const auto v = detail::load_le32(bytes.data() + pos);
      pos += 4;
      return v;
    };
    need(4);
    if (std::memcmp(bytes.data(), "SQWS", 4) != 0) throw FormatError("WeightSet: bad magic");
    pos = 4;
    if (u32() != kVersion) throw FormatError("WeightSet: unsupported version");
    const std::uint32_t count = u32();
    WeightSet ws;
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint32_t len = u32();
      need(len);
      std::string name(reinterpret_cast<const char*>(bytes.data() + pos), len);
      pos += len;
      const std::uint32_t ndim = u32();
      std::vector<std::uint32_t> dims(ndim);
      std::size_t n = 1;
      for (auto& d : dims) {
        d = u32();
        n *= d;
      }
      if (n > (bytes.size() - pos) / 4) throw LengthError("WeightSet: truncated values of '" + name + "'");
      std::vector<float> values(n);
      for (auto& v : values) {
        v = detail::load_lef32(bytes.data() + pos);
        pos += 4;
      }
      if (ws.tensors.count(name)) throw FormatError("WeightSet: duplicate tensor '" + name + "'");
      ws.tensors[name] = {std::move(dims), std::move(values)};
    }
    if (pos != bytes.size()) throw LengthError("WeightSet: trailing bytes");
    return ws;
  }
};

/// Stores `k` as "<prefix>.weight" [out, in, 3, 3] and "<prefix>.bias" [out].
inline void put_conv(WeightSet& ws, const std::string& prefix, const ConvWeights& k) {
  k.validate("put_conv");
  ws.put(prefix + ".weight",
         {static_cast<std::uint32_t>(k.out), static_cast<std::uint32_t>(k.in), 3u, 3u},
         std::vector<float>(k.weight.begin(), k.weight.end()));
  ws.put(prefix + ".bias", {static_cast<std::uint32_t>(k.out)}, std::vector<float>(k.bias.begin(), k.bias.end()));
}

inline ConvWeights get_conv(const WeightSet& ws, const std::string& prefix, int in, int out) {
  const auto& w = ws.get(prefix + ".weight");
  const auto& b = ws.get(prefix + ".bias");
  const std::vector<std::uint32_t> wd{static_cast<std::uint32_t>(out), static_cast<std::uint32_t>(in), 3u, 3u};
  if (w.dims != wd || b.dims != std::vector<std::uint32_t>{static_cast<std::uint32_t>(out)})
    throw DimensionError("WeightSet: '" + prefix + "' does not have shape " + std::to_string(out) + "x" +
                         std::to_string(in) + "x3x3");
  return {in, out, std::vector<double>(w.values.begin(), w.values.end()),
          std::vector<double>(b.values.begin(), b.values.end())};
}

inline void put_sgw(WeightSet& ws, const std::string& prefix, const SgwWeights& w) {
  ws.put(prefix + ".max_disp", {1u}, {static_cast<float>(w.max_disp)});
  put_conv(ws, prefix + ".estimator1", w.estimator1);
  put_conv(ws, prefix + ".estimator2", w.estimator2);
  put_conv(ws, prefix + ".gru.z", w.gru.z);
  put_conv(ws, prefix + ".gru.r", w.gru.r);
  put_conv(ws, prefix + ".gru.q", w.gru.q);
}

inline SgwWeights get_sgw(const WeightSet& ws, const std::string& prefix, int channels = kHiddenChannels) {
  const auto& md = ws.get(prefix + ".max_disp");
  if (md.values.size() != 1 || md.values[0] < 0) throw FormatError("WeightSet: bad max_disp for '" + prefix + "'");
  SgwWeights w;
  w.max_disp = static_cast<int>(md.values[0]);
  const int corr = (2 * w.max_disp + 1) * (2 * w.max_disp + 1);
  w.estimator1 = get_conv(ws, prefix + ".estimator1", corr, SgwWeights::kEstimatorWidth);
  w.estimator2 = get_conv(ws, prefix + ".estimator2", SgwWeights::kEstimatorWidth, 2);
  w.gru.z = get_conv(ws, prefix + ".gru.z", 2 * channels, channels);
  w.gru.r = get_conv(ws, prefix + ".gru.r", 2 * channels, channels);
  w.gru.q = get_conv(ws, prefix + ".gru.q", 2 * channels, channels);
  return w;
}

}  // namespace seqflow
