#pragma once

/// \file
/// Directory-of-numbered-files layout: frame_000000.png, flow_000000.flo,
/// mask_000000.png, ... plus a JSON manifest. Indices start at 0.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "seqflow/config.hpp"
#include "seqflow/flo_io.hpp"
#include "seqflow/image_io.hpp"
#include "seqflow/synth.hpp"

namespace seqflow {

namespace fs = std::filesystem;

inline std::string numbered(const std::string& prefix, std::size_t index, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%06zu", index);
  return prefix + buf + ext;
}

/// Files named <prefix>_<digits><ext> in `dir`, sorted by name.
inline std::vector<fs::path> list_numbered(const fs::path& dir, const std::string& prefix, const std::string& ext) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name.size() <= prefix.size() + 1 + ext.size()) continue;
    if (name.compare(0, prefix.size() + 1, prefix + "_") != 0) continue;
    if (name.compare(name.size() - ext.size(), ext.size(), ext) != 0) continue;
    const std::string digits = name.substr(prefix.size() + 1, name.size() - prefix.size() - 1 - ext.size());
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
      continue;
    out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline FlowField read_flo_file(const fs::path& p) { return read_flo(read_file(p)); }
inline void write_flo_file(const fs::path& p, const FlowField& f) { write_file_atomic(p, write_flo(f)); }

/// Masks are stored as 8-bit grey PNGs, 255 = 1.
inline void write_mask_png(const fs::path& p, const VisibilityMask& m) { write_image(p, Image(m.grid()), 8); }

inline VisibilityMask read_mask_png(const fs::path& p) {
  const Image img = read_image(p);
  Grid g(img.height(), img.width(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) g(y, x) = img(y, x, 0) >= 0.5 ? 1.0 : 0.0;
  return VisibilityMask(std::move(g));
}

inline void write_confidence_png(const fs::path& p, const ConfidenceMap& c) {
  write_image(p, Image(c.grid()), 16);
}

inline void write_json_atomic(const fs::path& p, const json& j) {
  const std::string text = j.dump(2) + "\n";
  write_file_atomic(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline json read_json_file(const fs::path& p) {
  const auto bytes = read_file(p);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw FormatError(p.string() + ": invalid JSON: " + e.what());
  }
}

/// frame_*.png, flow_*.flo (forward t -> t+1), flow_bwd_*.flo (t+1 -> t),
/// occ_*.png (forward visibility of frame t), occ_bwd_*.png (visibility of
/// frame t+1 in frame t) and manifest.json.
inline void save_scene(const SynthScene& scene, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& s = scene.sequence;
  for (std::size_t t = 0; t < s.frames.size(); ++t) write_image(dir / numbered("frame", t, ".png"), s.frames[t], 8);
  for (std::size_t t = 0; t < s.forward.size(); ++t) {
    write_flo_file(dir / numbered("flow", t, ".flo"), s.forward[t]);
    write_flo_file(dir / numbered("flow_bwd", t, ".flo"), s.backward[t]);
    write_mask_png(dir / numbered("occ", t, ".png"), scene.occlusion_forward[t]);
    write_mask_png(dir / numbered("occ_bwd", t, ".png"), scene.occlusion_backward[t]);
  }
  json m{{"schema_version", kSchemaVersion},
         {"kind", "box_scene"},
         {"params", to_json(scene.params)},
         {"frames", s.frames.size()},
         {"files",
          {{"frames", "frame_%06d.png"},
           {"forward", "flow_%06d.flo"},
           {"backward", "flow_bwd_%06d.flo"},
           {"occlusion", "occ_%06d.png"},
           {"occlusion_backward", "occ_bwd_%06d.png"}}}};
  write_json_atomic(dir / "manifest.json", m);
}

}  // namespace seqflow
