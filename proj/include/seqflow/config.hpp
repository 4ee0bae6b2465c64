#pragma once

/// \file
/// JSON run configuration. Every section is optional; unknown keys anywhere
/// are rejected. See README for the schema.

#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include "json.hpp"

#include "seqflow/enhancers.hpp"
#include "seqflow/losses.hpp"
#include "seqflow/synth.hpp"

namespace seqflow {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Affine walk for the spatial enhancer; the centre defaults to the frame
/// centre. `identity` skips sampling and uses identity transforms.
struct SveConfig {
  bool identity = false;
  AffineWalkParams walk = [] {
    AffineWalkParams w;
    w.sigma_rotation = 0.01;
    w.sigma_log_scale = 0.01;
    w.sigma_shear = 0.01;
    w.sigma_translation = 0.5;
    return w;
  }();
  std::optional<double> center_x;
  std::optional<double> center_y;
};

struct CveConfig {
  bool identity = false;
  CveSampleParams sample;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::optional<std::uint64_t> seed;
  LossConfig loss;
  DoeParams doe;
  SveConfig sve;
  CveConfig cve;
  BoxSceneParams synth;
};

namespace detail {

/// Reads keys from one JSON object and remembers which were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <typename T>
  void read(const char* key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void read(const char* key, std::optional<T>& out) {
    if (!j_.contains(key)) return;
    T v{};
    read(key, v);
    out = v;
  }

  Section child(const char* key) {
    used_.insert(key);
    return Section(j_.at(key), path_ + "." + key);
  }

  const json& raw(const char* key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline Range read_range(Section& s, const char* key, Range r) {
  if (!s.has(key)) return r;
  const json& v = s.raw(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(std::string("range '") + key + "' must be [lo, hi]");
  return {v[0].get<double>(), v[1].get<double>()};
}

inline PhotometricKind photometric_from_string(const std::string& s) {
  if (s == "census") return PhotometricKind::census;
  if (s == "ssim") return PhotometricKind::ssim;
  if (s == "charbonnier") return PhotometricKind::charbonnier;
  throw ConfigError("unknown photometric kind '" + s + "'");
}

inline const char* to_string(PhotometricKind k) {
  switch (k) {
    case PhotometricKind::census: return "census";
    case PhotometricKind::ssim: return "ssim";
    case PhotometricKind::charbonnier: return "charbonnier";
  }
  return "census";
}

inline void read_affine_state(Section s, AffineState& a) {
  s.read("rotation", a.rotation);
  s.read("log_scale", a.log_scale);
  s.read("shear", a.shear);
  s.read("tx", a.tx);
  s.read("ty", a.ty);
  s.finish();
}

inline void read_walk(Section& s, AffineWalkParams& w) {
  if (s.has("initial")) read_affine_state(s.child("initial"), w.initial);
  s.read("sigma_rotation", w.sigma_rotation);
  s.read("sigma_log_scale", w.sigma_log_scale);
  s.read("sigma_shear", w.sigma_shear);
  s.read("sigma_translation", w.sigma_translation);
}

inline void read_loss(Section s, LossConfig& c) {
  if (s.has("preset")) {
    std::string preset;
    s.read("preset", preset);
    if (preset == "sintel") c = LossConfig::sintel();
    else if (preset == "kitti") c = LossConfig::kitti();
    else throw ConfigError("loss.preset: unknown preset '" + preset + "'");
  }
  s.read("lambda1", c.lambda1);
  s.read("lambda2", c.lambda2);
  s.read("lambda3", c.lambda3);
  s.read("lambda4", c.lambda4);
  s.read("lambda5", c.lambda5);
  s.read("w_tsm", c.w_tsm);
  s.read("charbonnier_eps", c.charbonnier_eps);
  s.read("charbonnier_q", c.charbonnier_q);
  s.read("smooth_edge_lambda", c.smooth_edge_lambda);
  s.read("smooth_order", c.smooth_order);
  s.read("temporal_eps", c.temporal_eps);
  if (s.has("photometric")) {
    std::string k;
    s.read("photometric", k);
    c.photometric = photometric_from_string(k);
  }
  s.read("ssim_window", c.ssim_window);
  s.read("census_window", c.census_window);
  if (s.has("doe_mode")) {
    std::string m;
    s.read("doe_mode", m);
    if (m == "sparse") c.doe_mode = DoeMode::sparse;
    else if (m == "mixed") c.doe_mode = DoeMode::mixed;
    else throw ConfigError("loss.doe_mode: expected sparse or mixed");
  }
  s.finish();
}

inline void read_doe(Section s, DoeParams& d) {
  s.read("n_occluders", d.n_occluders);
  s.read("superpixels", d.superpixels);
  s.read("compactness", d.compactness);
  s.read("texture_blur_sigma", d.texture_blur_sigma);
  s.read("texture_noise_sigma", d.texture_noise_sigma);
  s.read("mu_speed", d.mu_speed);
  s.read("sigma_u", d.sigma_u);
  s.read("sigma_v", d.sigma_v);
  s.read("crop_height", d.crop_height);
  s.read("crop_width", d.crop_width);
  s.read("min_area", d.min_area);
  s.read("max_retries", d.max_retries);
  if (s.has("initial_velocity")) {
    const json& v = s.raw("initial_velocity");
    if (!v.is_array() || v.size() != 2) throw ConfigError("doe.initial_velocity must be [u, v]");
    d.initial_velocity = MotionState{v[0].get<double>(), v[1].get<double>()};
  }
  if (s.has("affine")) {
    Section a = s.child("affine");
    AffineWalkParams w;
    read_walk(a, w);
    a.finish();
    d.affine = w;
  }
  s.finish();
}

inline void read_sve(Section s, SveConfig& c) {
  s.read("identity", c.identity);
  read_walk(s, c.walk);
  s.read("center_x", c.center_x);
  s.read("center_y", c.center_y);
  s.finish();
}

inline void read_cve(Section s, CveConfig& c) {
  s.read("identity", c.identity);
  auto& p = c.sample;
  if (s.has("mode")) {
    std::string m;
    s.read("mode", m);
    if (m == "drift") p.mode = CveMode::drift;
    else if (m == "jitter") p.mode = CveMode::jitter;
    else throw ConfigError("cve.mode: expected drift or jitter");
  }
  p.brightness = read_range(s, "brightness", p.brightness);
  p.saturation = read_range(s, "saturation", p.saturation);
  p.hue = read_range(s, "hue", p.hue);
  p.gamma = read_range(s, "gamma", p.gamma);
  p.noise = read_range(s, "noise", p.noise);
  s.read("max_kernel_size", p.max_kernel_size);
  if (s.has("blurs")) {
    std::vector<std::string> names;
    s.read("blurs", names);
    p.blurs.clear();
    try {
      for (const auto& n : names) p.blurs.push_back(blur_kind_from_string(n));
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("cve.blurs: ") + e.what());
    }
  }
  s.finish();
}

inline void read_synth(Section s, BoxSceneParams& p) {
  s.read("frames", p.frames);
  s.read("height", p.height);
  s.read("width", p.width);
  s.read("channels", p.channels);
  s.read("box_width", p.box_width);
  s.read("box_height", p.box_height);
  s.read("start_x", p.start_x);
  s.read("start_y", p.start_y);
  if (s.has("velocity")) {
    const json& v = s.raw("velocity");
    if (!v.is_array() || v.size() != 2) throw ConfigError("synth.velocity must be [u, v]");
    p.velocity_u = v[0].get<double>();
    p.velocity_v = v[1].get<double>();
  }
  auto texture = [&](const char* key, TextureKind& out) {
    if (!s.has(key)) return;
    std::string k;
    s.read(key, k);
    try {
      out = texture_kind_from_string(k);
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("synth.") + key + ": " + e.what());
    }
  };
  texture("box_texture", p.box_texture);
  texture("background", p.background);
  s.read("box_value", p.box_value);
  s.read("background_value", p.background_value);
  s.read("wrap", p.wrap);
  s.read("seed", p.seed);
  s.finish();
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  RunConfig c;
  detail::Section root(j, "config");
  root.read("schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("config: unsupported schema_version " + std::to_string(c.schema_version));
  root.read("seed", c.seed);
  if (root.has("loss")) detail::read_loss(root.child("loss"), c.loss);
  if (root.has("fb_check")) {
    auto s = root.child("fb_check");
    s.read("alpha1", c.loss.fb_check.alpha1);
    s.read("alpha2", c.loss.fb_check.alpha2);
    s.finish();
  }
  if (root.has("confidence")) {
    auto s = root.child("confidence");
    s.read("delta", c.loss.confidence.delta);
    s.read("max_displacement", c.loss.confidence.max_displacement);
    s.finish();
  }
  if (root.has("doe")) detail::read_doe(root.child("doe"), c.doe);
  if (root.has("sve")) detail::read_sve(root.child("sve"), c.sve);
  if (root.has("cve")) detail::read_cve(root.child("cve"), c.cve);
  if (root.has("synth")) detail::read_synth(root.child("synth"), c.synth);
  root.finish();
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline json to_json(const AffineState& a) {
  return {{"rotation", a.rotation}, {"log_scale", a.log_scale}, {"shear", a.shear}, {"tx", a.tx}, {"ty", a.ty}};
}

inline json to_json(const AffineParams& a) { return json(a.m); }

inline json to_json(const LossConfig& c) {
  json j{{"lambda1", c.lambda1},
         {"lambda2", c.lambda2},
         {"lambda3", c.lambda3},
         {"lambda4", c.lambda4},
         {"lambda5", c.lambda5},
         {"charbonnier_eps", c.charbonnier_eps},
         {"charbonnier_q", c.charbonnier_q},
         {"smooth_edge_lambda", c.smooth_edge_lambda},
         {"smooth_order", c.smooth_order},
         {"temporal_eps", c.temporal_eps},
         {"photometric", detail::to_string(c.photometric)},
         {"ssim_window", c.ssim_window},
         {"census_window", c.census_window},
         {"doe_mode", c.doe_mode == DoeMode::sparse ? "sparse" : "mixed"}};
  if (c.w_tsm) j["w_tsm"] = *c.w_tsm;
  return j;
}

inline json to_json(const CveFrame& f) {
  return {{"brightness", f.brightness},   {"saturation", f.saturation},         {"hue", f.hue},
          {"gamma", f.gamma},             {"blur", to_string(f.blur)},          {"kernel_size", f.kernel_size},
          {"blur_sigma", f.blur_sigma},   {"defocus_radius", f.defocus_radius}, {"motion_angle", f.motion_angle},
          {"psf_seed", f.psf_seed},       {"noise_sigma", f.noise_sigma}};
}

inline json to_json(const BoxSceneParams& p) {
  return {{"frames", p.frames},
          {"height", p.height},
          {"width", p.width},
          {"channels", p.channels},
          {"box_width", p.box_width},
          {"box_height", p.box_height},
          {"start_x", p.start_x},
          {"start_y", p.start_y},
          {"velocity", {p.velocity_u, p.velocity_v}},
          {"box_texture", to_string(p.box_texture)},
          {"background", to_string(p.background)},
          {"box_value", p.box_value},
          {"background_value", p.background_value},
          {"wrap", p.wrap},
          {"seed", p.seed}};
}

inline json to_json(const AffineWalkParams& w) {
  return {{"initial", to_json(w.initial)},
          {"sigma_rotation", w.sigma_rotation},
          {"sigma_log_scale", w.sigma_log_scale},
          {"sigma_shear", w.sigma_shear},
          {"sigma_translation", w.sigma_translation}};
}

inline json to_json(const DoeParams& d) {
  json j{{"n_occluders", d.n_occluders},
         {"superpixels", d.superpixels},
         {"compactness", d.compactness},
         {"texture_blur_sigma", d.texture_blur_sigma},
         {"texture_noise_sigma", d.texture_noise_sigma},
         {"mu_speed", d.mu_speed},
         {"sigma_u", d.sigma_u},
         {"sigma_v", d.sigma_v},
         {"crop_height", d.crop_height},
         {"crop_width", d.crop_width},
         {"min_area", d.min_area},
         {"max_retries", d.max_retries}};
  if (d.initial_velocity) j["initial_velocity"] = {d.initial_velocity->u, d.initial_velocity->v};
  if (d.affine) {
    json a = to_json(*d.affine);
    j["affine"] = a;
  }
  return j;
}

inline json to_json(const SveConfig& c) {
  json j = to_json(c.walk);
  j["identity"] = c.identity;
  if (c.center_x) j["center_x"] = *c.center_x;
  if (c.center_y) j["center_y"] = *c.center_y;
  return j;
}

inline json to_json(const CveConfig& c) {
  const auto& p = c.sample;
  json blurs = json::array();
  for (BlurKind b : p.blurs) blurs.push_back(to_string(b));
  auto range = [](const Range& r) { return json{r.lo, r.hi}; };
  return {{"identity", c.identity},
          {"mode", p.mode == CveMode::drift ? "drift" : "jitter"},
          {"brightness", range(p.brightness)},
          {"saturation", range(p.saturation)},
          {"hue", range(p.hue)},
          {"gamma", range(p.gamma)},
          {"noise", range(p.noise)},
          {"max_kernel_size", p.max_kernel_size},
          {"blurs", blurs}};
}

/// A complete config document; parse_config(to_json(c)) reproduces c.
inline json to_json(const RunConfig& c) {
  json j{{"schema_version", c.schema_version},
         {"loss", to_json(c.loss)},
         {"fb_check", {{"alpha1", c.loss.fb_check.alpha1}, {"alpha2", c.loss.fb_check.alpha2}}},
         {"confidence",
          {{"delta", c.loss.confidence.delta}, {"max_displacement", c.loss.confidence.max_displacement}}},
         {"doe", to_json(c.doe)},
         {"sve", to_json(c.sve)},
         {"cve", to_json(c.cve)},
         {"synth", to_json(c.synth)}};
  if (c.seed) j["seed"] = *c.seed;
  return j;
}

/// Flat term -> value record of a loss evaluation, plus "total".
inline json breakdown_json(const LossValue& v) {
  json j = json::object();
  for (const auto& [k, x] : v.terms) j[k] = x;
  j["total"] = v.value;
  return j;
}

}  // namespace seqflow
