#pragma once

// Fixtures shared by the unit and acceptance suites.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "seqflow/seqflow.hpp"

namespace testsupport {

using namespace seqflow;

inline Grid random_grid(int h, int w, int c, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Grid g(h, w, c);
  for (double& v : g.storage()) v = rng.uniform(lo, hi);
  return g;
}

inline Image random_image(int h, int w, int c, Rng& rng) { return Image(random_grid(h, w, c, rng)); }

/// Smooth random image: a few sinusoids, so warps have well-defined slopes.
inline Image smooth_image(int h, int w, int c, Rng& rng) {
  Grid g(h, w, c);
  for (int ch = 0; ch < c; ++ch) {
    const double a = rng.uniform(0.2, 0.6), b = rng.uniform(0.2, 0.6), p = rng.uniform(0, 6.28);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) g(y, x, ch) = 0.5 + 0.25 * std::sin(a * x + p) * std::cos(b * y - p);
  }
  return Image(std::move(g));
}

inline FlowField random_flow(int h, int w, Rng& rng, double lo = -2.0, double hi = 2.0) {
  return FlowField(random_grid(h, w, 2, rng, lo, hi));
}

inline VisibilityMask random_mask(int h, int w, Rng& rng, double p_visible = 0.8) {
  Grid g(h, w, 1);
  for (double& v : g.storage()) v = rng.uniform() < p_visible ? 1.0 : 0.0;
  return VisibilityMask(std::move(g));
}

struct GradientCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t stepped = 0;   // coordinates moved off a derivative kink first
  std::size_t excluded = 0;  // kink could not be avoided
};

using ValueFn = std::function<double(const Grid&)>;
using GradFn = std::function<Grid(const Grid&)>;

/// Central differences at every listed coordinate. relative error is
/// |a - n| / max(|a|, |n|, floor). When the stencil straddles a kink
/// (bilinear cell edge, |.| at zero, border clamp) the point is moved by
/// growing multiples of h until it clears, and both the analytic and numeric
/// derivatives are re-evaluated there.
inline GradientCheck check_gradient(const Grid& x, const ValueFn& value, const GradFn& grad,
                                    const std::vector<std::size_t>& indices, double h = 1e-4,
                                    double floor = 1e-7) {
  GradientCheck out;
  const Grid analytic = grad(x);
  Grid probe = x;
  // Central slope at step h plus a kink flag. A smooth function has central
  // slopes at h and h/2 that agree to O(h^2) and a one-sided gap linear in
  // the step; a kink anywhere in the stencil breaks one of the two.
  auto slopes = [&](Grid& at, std::size_t i) {
    const double orig = at.storage()[i];
    auto f = [&](double d) {
      at.storage()[i] = orig + d;
      return value(at);
    };
    const double f0 = f(0), fp = f(h), fm = f(-h), fp2 = f(h / 2), fm2 = f(-h / 2);
    const double central = (fp - fm) / (2 * h), central2 = (fp2 - fm2) / h;
    const double gap = (fp - 2 * f0 + fm) / h, gap2 = (fp2 - 2 * f0 + fm2) / (h / 2);
    const double scale = std::max({std::abs(central), std::abs(central2), floor});
    const double noise = 64 * std::numeric_limits<double>::epsilon() * std::max(std::abs(f0), 1e-300) / h;
    bool kink = std::abs(gap - 2 * gap2) > 1e-5 * scale + noise;
    const double drift = central - central2;
    if (!kink && std::abs(drift) > 1e-5 * scale + noise) {
      // Strong curvature also moves the central slope; it shrinks fourfold
      // per halving of the step, a kink's contribution does not.
      const double central4 = (f(h / 4) - f(-h / 4)) / (h / 2);
      kink = std::abs(drift - 4 * (central2 - central4)) > 0.1 * std::abs(drift) + 4 * noise;
    }
    at.storage()[i] = orig;
    return std::pair{central, kink};
  };
  for (std::size_t i : indices) {
    auto [numeric, kink] = slopes(probe, i);
    double a = analytic.storage()[i];
    if (kink) {
      bool cleared = false;
      for (double m : {2.0, 3.0, 5.0, 8.0, 13.0, 21.0, 34.0, 55.0, 89.0})
        for (double shift : {m * h, -m * h}) {
          if (cleared) break;
          Grid moved = x;
          moved.storage()[i] += shift;
          auto [n2, k2] = slopes(moved, i);
          if (k2) continue;
          numeric = n2;
          a = grad(moved).storage()[i];
          cleared = true;
        }
      if (!cleared) {
        ++out.excluded;
        continue;
      }
      ++out.stepped;
    }
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    out.max_rel = std::max(out.max_rel, rel);
    ++out.checked;
  }
  return out;
}

inline std::vector<std::size_t> all_indices(const Grid& g) {
  std::vector<std::size_t> v(g.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
  return v;
}

inline BoxSceneParams small_box_scene(int frames = 6) {
  BoxSceneParams p;
  p.frames = frames;
  p.height = 48;
  p.width = 96;
  p.box_width = 16;
  p.box_height = 16;
  p.start_x = 8;
  p.start_y = 16;
  return p;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("seqflow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string file_bytes(const std::filesystem::path& p) {
  const auto b = read_file(p);
  return std::string(b.begin(), b.end());
}

/// Every regular file below `dir`, relative path -> contents.
inline std::map<std::string, std::string> tree_contents(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).string()] = file_bytes(e.path());
  return out;
}

#ifdef SEQFLOW_CLI
struct CliResult {
  int code = -1;
  std::string out;
};

/// Runs the command-line tool with `args` (already shell-quoted), capturing
/// stdout; stderr is discarded.
inline CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const auto capture = std::filesystem::temp_directory_path() /
                       ("seqflow_cli_out_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  const std::string cmd = std::string("\"") + SEQFLOW_CLI + "\" " + args + " > \"" + capture.string() + "\" 2>/dev/null";
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  if (std::filesystem::exists(capture)) {
    r.out = file_bytes(capture);
    std::filesystem::remove(capture);
  }
  return r;
}

inline std::string q(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }
#endif

}  // namespace testsupport
