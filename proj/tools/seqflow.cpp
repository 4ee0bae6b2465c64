// seqflow: batch tools over directories of numbered frames and flows.
//
// Exit codes: 0 success, 2 usage or parameter error, 3 data or format error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "seqflow/seqflow.hpp"

namespace fs = std::filesystem;
using namespace seqflow;

namespace {

struct UsageError : Error {
  using Error::Error;
};

RunConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  if (!fs::is_regular_file(path)) throw UsageError("config file not found: " + path);
  const auto bytes = read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()));
}

std::vector<fs::path> require_files(const fs::path& dir, const std::string& prefix, const std::string& ext) {
  if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
  auto files = list_numbered(dir, prefix, ext);
  if (files.empty()) throw UsageError("no " + prefix + "_*" + ext + " files in " + dir.string());
  return files;
}

std::vector<Image> read_frames(const fs::path& dir) {
  std::vector<Image> out;
  for (const auto& p : require_files(dir, "frame", ".png")) out.push_back(read_image(p));
  return out;
}

std::vector<FlowField> read_flows(const fs::path& dir, const std::string& prefix) {
  std::vector<FlowField> out;
  for (const auto& p : require_files(dir, prefix, ".flo")) out.push_back(read_flo_file(p));
  return out;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

// synth ----------------------------------------------------------------------

int cmd_synth(const std::string& config_path, std::optional<std::uint64_t> seed, const fs::path& out) {
  RunConfig cfg = load_config(config_path);
  if (seed) cfg.synth.seed = *seed;
  else if (cfg.seed) cfg.synth.seed = *cfg.seed;
  const SynthScene scene = generate_box_scene(cfg.synth);
  save_scene(scene, out);
  std::cout << "wrote " << scene.sequence.frames.size() << " frames to " << out.string() << "\n";
  return 0;
}

// occlusion ------------------------------------------------------------------

int cmd_occlusion(const std::string& config_path, const fs::path& fwd_dir, const fs::path& bwd_dir,
                  const fs::path& out, int workers) {
  const RunConfig cfg = load_config(config_path);
  const auto fwd_files = require_files(fwd_dir, "flow", ".flo");
  auto bwd_files = list_numbered(bwd_dir, "flow_bwd", ".flo");
  if (bwd_files.empty()) bwd_files = require_files(bwd_dir, "flow", ".flo");
  if (fwd_files.size() != bwd_files.size())
    throw UsageError("forward/backward count mismatch: " + std::to_string(fwd_files.size()) + " vs " +
                     std::to_string(bwd_files.size()));
  fs::create_directories(out);
  std::vector<VisibilityMask> masks(fwd_files.size());
  std::vector<ConfidenceMap> confs(fwd_files.size());
  parallel_for(fwd_files.size(), workers, [&](std::size_t i) {
    const FlowField f = read_flo_file(fwd_files[i]);
    const FlowField b = read_flo_file(bwd_files[i]);
    masks[i] = fb_occlusion_mask(f, b, cfg.loss.fb_check);
    confs[i] = confidence_map(f, b, cfg.loss.confidence);
  });
  for (std::size_t i = 0; i < masks.size(); ++i) {
    write_mask_png(out / numbered("mask", i, ".png"), masks[i]);
    write_confidence_png(out / numbered("conf", i, ".png"), confs[i]);
  }
  std::cout << "wrote " << masks.size() << " masks to " << out.string() << "\n";
  return 0;
}

// augment --------------------------------------------------------------------

json occluder_json(const Occluder& o) {
  json pos = json::array(), traj = json::array(), disp = json::array(), local = json::array();
  for (const auto& p : o.positions) pos.push_back({p[0], p[1]});
  for (const auto& s : o.trajectory) traj.push_back({s.u, s.v});
  for (const auto& d : o.displacements) disp.push_back({d.u, d.v});
  for (const auto& a : o.local) local.push_back(to_json(a));
  json frozen = json::array();
  for (bool f : o.frozen) frozen.push_back(f);
  return {{"label", o.label},
          {"source", {o.source_x, o.source_y}},
          {"footprint_size", {o.footprint.width() - 2, o.footprint.height() - 2}},
          {"area", o.area},
          {"positions", pos},
          {"trajectory", traj},
          {"displacements", disp},
          {"local_affine", local},
          {"frozen", frozen}};
}

void write_sequence(const fs::path& dir, const std::vector<Image>& frames, const std::vector<FlowField>& pseudo,
                    const std::vector<VisibilityMask>* masks, int bit_depth) {
  fs::create_directories(dir);
  for (std::size_t t = 0; t < frames.size(); ++t)
    write_image(dir / numbered("frame", t, ".png"), frames[t], bit_depth);
  for (std::size_t t = 0; t < pseudo.size(); ++t) write_flo_file(dir / numbered("pseudo", t, ".flo"), pseudo[t]);
  if (masks)
    for (std::size_t t = 0; t < masks->size(); ++t) write_mask_png(dir / numbered("mask", t, ".png"), (*masks)[t]);
}

int cmd_augment(const std::string& config_path, std::optional<std::uint64_t> seed_flag, const fs::path& in,
                const fs::path& flows_dir_flag, const fs::path& out, const std::string& enhancer, int workers,
                int bit_depth) {
  RunConfig cfg = load_config(config_path);
  if (seed_flag) cfg.seed = seed_flag;
  if (!cfg.seed) throw UsageError("augment requires a seed (--seed or config \"seed\")");
  const bool do_doe = enhancer == "doe" || enhancer == "all";
  const bool do_sve = enhancer == "sve" || enhancer == "all";
  const bool do_cve = enhancer == "cve" || enhancer == "all";
  if (!do_doe && !do_sve && !do_cve) throw UsageError("--enhancer must be doe, sve, cve or all");
  const std::vector<Image> frames = read_frames(in);
  const fs::path flows_dir = flows_dir_flag.empty() ? in : flows_dir_flag;
  const auto flow_files = list_numbered(flows_dir, "pseudo", ".flo").empty()
                              ? require_files(flows_dir, "flow", ".flo")
                              : require_files(flows_dir, "pseudo", ".flo");
  if (flow_files.size() + 1 != frames.size())
    throw UsageError("need N-1 pseudo flows for N frames: " + std::to_string(frames.size()) + " frames, " +
                     std::to_string(flow_files.size()) + " flows");
  std::vector<FlowField> pseudo;
  for (const auto& p : flow_files) pseudo.push_back(read_flo_file(p));

  // One child seed per enhancer, drawn in a fixed order so any subset replays.
  Rng master(*cfg.seed);
  const std::uint64_t doe_seed = master.next_u64(), sve_seed = master.next_u64(), cve_seed = master.next_u64();
  const int N = static_cast<int>(frames.size());
  const int H = frames.front().height(), W = frames.front().width();

  json manifest{{"schema_version", kSchemaVersion},
                {"seed", *cfg.seed},
                {"enhancer", enhancer},
                {"frames", N},
                {"config", to_json(cfg)}};
  fs::create_directories(out);

  if (do_doe) {
    DoeParams p = cfg.doe;
    p.seed = doe_seed;
    const DoeResult r = apply_doe(frames, pseudo, p, workers);
    write_sequence(out / "doe", r.frames, r.pseudo, &r.masks, bit_depth);
    json occ = json::array();
    for (const auto& o : r.occluders) occ.push_back(occluder_json(o));
    json areas = json::array();
    for (const auto& m : r.masks) {
      std::size_t covered = 0;
      for (double v : m.data()) covered += v == 0.0;
      areas.push_back(covered);
    }
    manifest["doe"] = {{"seed", doe_seed},          {"crop", {r.crop_x, r.crop_y}},
                       {"keyframe", r.keyframe},    {"texture_frame", r.texture_frame},
                       {"occluders", occ},          {"masked_area", areas}};
  }
  if (do_sve) {
    std::vector<AffineParams> transforms(frames.size());
    json states = json::array();
    if (!cfg.sve.identity) {
      AffineWalkParams w = cfg.sve.walk;
      w.center_x = cfg.sve.center_x.value_or(0.5 * (W - 1));
      w.center_y = cfg.sve.center_y.value_or(0.5 * (H - 1));
      Rng rng(sve_seed);
      const AffineSchedule s = sample_affine_schedule(N, w, rng);
      transforms = s.transforms;
      for (const auto& a : s.states) states.push_back(to_json(a));
    }
    const SveResult r = apply_sve(frames, pseudo, transforms, workers);
    write_sequence(out / "sve", r.frames, r.pseudo, nullptr, bit_depth);
    json tr = json::array();
    for (const auto& t : transforms) tr.push_back(to_json(t));
    manifest["sve"] = {{"seed", sve_seed}, {"states", states}, {"transforms", tr}};
  }
  if (do_cve) {
    Rng rng(cve_seed);
    const CveSchedule schedule = cfg.cve.identity ? CveSchedule(frames.size()) : sample_cve_schedule(N, cfg.cve.sample, rng);
    const std::vector<Image> r = apply_cve(frames, schedule, rng, workers);
    write_sequence(out / "cve", r, pseudo, nullptr, bit_depth);
    json sch = json::array();
    for (const auto& f : schedule) sch.push_back(to_json(f));
    manifest["cve"] = {{"seed", cve_seed}, {"schedule", sch}};
  }
  write_json_atomic(out / "manifest.json", manifest);
  std::cout << "wrote " << enhancer << " outputs to " << out.string() << "\n";
  return 0;
}

// loss -----------------------------------------------------------------------

EnhancerPass read_pass(const fs::path& dir, const fs::path& pred_dir, bool is_doe) {
  EnhancerPass p;
  p.pseudo = read_flows(dir, "pseudo");
  p.predictions = read_flows(pred_dir, "pred");
  if (is_doe) {
    p.frames = read_frames(dir);
    for (const auto& f : require_files(dir, "mask", ".png")) p.occluder_masks.push_back(read_mask_png(f));
  }
  return p;
}

int cmd_loss(const std::string& config_path, const fs::path& in, const fs::path& flows_dir_flag,
             const fs::path& masks_dir, const fs::path& distill_dir, const fs::path& pred_dir, const fs::path& out) {
  const RunConfig cfg = load_config(config_path);
  SequenceLossInput input;
  input.frames = read_frames(in);
  const fs::path flows_dir = flows_dir_flag.empty() ? in : flows_dir_flag;
  input.forward = read_flows(flows_dir, "flow");
  if (!list_numbered(flows_dir, "flow_bwd", ".flo").empty()) input.backward = read_flows(flows_dir, "flow_bwd");
  if (!masks_dir.empty())
    for (const auto& f : require_files(masks_dir, "occ", ".png")) input.masks.push_back(read_mask_png(f));
  if (input.forward.size() + 1 != input.frames.size())
    throw UsageError("need N-1 forward flows for N frames: " + std::to_string(input.frames.size()) + " frames, " +
                     std::to_string(input.forward.size()) + " flows");
  if (!input.backward.empty() && input.backward.size() != input.forward.size())
    throw UsageError("backward flow count does not match forward flows");
  if (!input.masks.empty() && input.masks.size() != input.forward.size())
    throw UsageError("mask count does not match forward flows");

  LossValue v;
  if (distill_dir.empty()) {
    v = sequence_loss(input, cfg.loss);
  } else {
    if (pred_dir.empty()) throw UsageError("--distill needs --pred (directory with doe/, sve/, cve/ pred_*.flo)");
    SelfDistillInput sd{input, std::nullopt, std::nullopt, std::nullopt};
    auto maybe = [&](const char* name, bool is_doe) -> std::optional<EnhancerPass> {
      if (!fs::is_directory(distill_dir / name)) return std::nullopt;
      return read_pass(distill_dir / name, pred_dir / name, is_doe);
    };
    sd.doe = maybe("doe", true);
    sd.sve = maybe("sve", false);
    sd.cve = maybe("cve", false);
    v = self_distill_total(sd, cfg.loss);
  }
  const json j = breakdown_json(v);
  if (!out.empty()) write_json_atomic(out, j);
  print_json(j);
  return 0;
}

// eval -----------------------------------------------------------------------

int cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& occ_dir, const fs::path& out) {
  const auto pred_files = require_files(pred_dir, "flow", ".flo");
  const auto gt_files = require_files(gt_dir, "flow", ".flo");
  if (pred_files.size() != gt_files.size())
    throw UsageError("prediction/ground-truth count mismatch: " + std::to_string(pred_files.size()) + " vs " +
                     std::to_string(gt_files.size()));
  std::vector<fs::path> occ_files;
  if (!occ_dir.empty()) {
    occ_files = require_files(occ_dir, "occ", ".png");
    if (occ_files.size() != gt_files.size()) throw UsageError("occlusion mask count mismatch");
  }
  double sum_all = 0, sum_noc = 0, sum_occ = 0, bad = 0;
  std::size_t n_all = 0, n_noc = 0, n_occ = 0;
  json per_frame = json::array();
  for (std::size_t i = 0; i < gt_files.size(); ++i) {
    const FlowField pred = read_flo_file(pred_files[i]);
    const FlowField gt = read_flo_file(gt_files[i]);
    const double e = epe(pred, gt);
    const double f1 = f1_all(pred, gt);
    json fr{{"file", gt_files[i].filename().string()}, {"epe", e}, {"f1", f1}};
    sum_all += e * pred.pixels();
    bad += f1 / 100.0 * pred.pixels();
    n_all += pred.pixels();
    if (!occ_files.empty()) {
      const SplitMetrics m = split_metrics(pred, gt, read_mask_png(occ_files[i]));
      if (m.noc) {
        fr["noc"] = *m.noc;
        sum_noc += *m.noc * m.n_noc;
      }
      if (m.occ) {
        fr["occ"] = *m.occ;
        sum_occ += *m.occ * m.n_occ;
      }
      n_noc += m.n_noc;
      n_occ += m.n_occ;
    }
    per_frame.push_back(fr);
  }
  json j{{"epe", sum_all / n_all}, {"f1", 100.0 * bad / n_all}, {"n_all", n_all}, {"per_frame", per_frame}};
  if (!occ_files.empty()) {
    j["n_noc"] = n_noc;
    j["n_occ"] = n_occ;
    j["noc"] = n_noc ? json(sum_noc / n_noc) : json(nullptr);
    j["occ"] = n_occ ? json(sum_occ / n_occ) : json(nullptr);
  }
  if (!out.empty()) write_json_atomic(out, j);
  print_json(j);
  return 0;
}

// viz ------------------------------------------------------------------------

int cmd_viz(const fs::path& in, const fs::path& out, std::optional<double> max_magnitude, int workers) {
  const auto files = require_files(in, "flow", ".flo");
  fs::create_directories(out);
  std::vector<Image> images(files.size());
  parallel_for(files.size(), workers, [&](std::size_t i) {
    images[i] = flow_to_color(read_flo_file(files[i]), max_magnitude);
  });
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string stem = files[i].stem().string();
    write_image(out / (stem + ".png"), images[i], 8);
  }
  std::cout << "wrote " << files.size() << " images to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seqflow: unsupervised multi-frame optical-flow supervision tools"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::string in, out, flows, masks, forward, backward, pred, gt, occ, distill, enhancer = "all";
  int workers = 1, bit_depth = 8;
  std::optional<double> max_magnitude;

  auto* synth = app.add_subcommand("synth", "generate the translating-box scene");
  synth->add_option("--config", config, "JSON config");
  synth->add_option("--seed", seed, "texture seed");
  synth->add_option("--out", out, "output directory")->required();

  auto* occlusion = app.add_subcommand("occlusion", "forward-backward occlusion masks and confidence maps");
  occlusion->add_option("--config", config, "JSON config");
  occlusion->add_option("--forward", forward, "directory of flow_*.flo")->required();
  occlusion->add_option("--backward", backward, "directory of flow_bwd_*.flo (or flow_*.flo)")->required();
  occlusion->add_option("--out", out, "output directory")->required();
  occlusion->add_option("--workers", workers, "worker threads");

  auto* augment = app.add_subcommand("augment", "apply the training enhancers");
  augment->add_option("--config", config, "JSON config");
  augment->add_option("--seed", seed, "seed (or config \"seed\")");
  augment->add_option("--in", in, "directory of frame_*.png")->required();
  augment->add_option("--flows", flows, "directory of pseudo_*.flo or flow_*.flo (default: --in)");
  augment->add_option("--out", out, "output directory")->required();
  augment->add_option("--enhancer", enhancer, "doe, sve, cve or all");
  augment->add_option("--workers", workers, "worker threads");
  augment->add_option("--bit-depth", bit_depth, "output PNG bit depth (8 or 16)");

  auto* loss = app.add_subcommand("loss", "sequence or self-distillation loss breakdown");
  loss->add_option("--config", config, "JSON config");
  loss->add_option("--in", in, "directory of frame_*.png")->required();
  loss->add_option("--flows", flows, "directory of flow_*.flo and optional flow_bwd_*.flo (default: --in)");
  loss->add_option("--masks", masks, "directory of occ_*.png visibility masks");
  loss->add_option("--distill", distill, "augment output directory (doe/, sve/, cve/)");
  loss->add_option("--pred", pred, "directory with doe/, sve/, cve/ holding pred_*.flo");
  loss->add_option("--out", out, "also write the JSON here");

  auto* eval = app.add_subcommand("eval", "EPE, F1 and NOC/OCC metrics");
  eval->add_option("--pred", pred, "directory of predicted flow_*.flo")->required();
  eval->add_option("--gt", gt, "directory of ground-truth flow_*.flo")->required();
  eval->add_option("--occ", occ, "directory of occ_*.png visibility masks");
  eval->add_option("--out", out, "also write the JSON here");

  auto* viz = app.add_subcommand("viz", "colour-wheel rendering of flows");
  viz->add_option("--in", in, "directory of flow_*.flo")->required();
  viz->add_option("--out", out, "output directory")->required();
  viz->add_option("--max-magnitude", max_magnitude, "saturation radius in px (default: per-field maximum)");
  viz->add_option("--workers", workers, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (bit_depth != 8 && bit_depth != 16) throw UsageError("--bit-depth must be 8 or 16");
    if (workers < 1) throw UsageError("--workers must be >= 1");
    if (*synth) return cmd_synth(config, seed, out);
    if (*occlusion) return cmd_occlusion(config, forward, backward, out, workers);
    if (*augment) return cmd_augment(config, seed, in, flows, out, enhancer, workers, bit_depth);
    if (*loss) return cmd_loss(config, in, flows, masks, distill, pred, out);
    if (*eval) return cmd_eval(pred, gt, occ, out);
    if (*viz) return cmd_viz(in, out, max_magnitude, workers);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const PlacementError& e) {
    std::cerr << "placement error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
