#ifndef EVBLUR_TOOLS_EVBLUR_APP_HPP
#define EVBLUR_TOOLS_EVBLUR_APP_HPP

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evblur/evblur.hpp"

namespace evblur::cli
{
inline constexpr const char * kVersion = "0.1.0";

// Settings the pipeline subcommand resolves through the full precedence
// chain: command-line flags, then EVBLUR_* environment variables, then a
// config file given by --config, then built-in defaults.
inline const std::vector<std::string> & pipeline_setting_keys()
{
  static const std::vector<std::string> keys = {
    "frames",        "out",           "t0",         "t1",
    "n",             "mu-c",          "sigma-c",    "eps",
    "seed",          "c",             "oracle-thresholds", "clamp",
    "noise-stddev",  "hot-pixels",    "hot-value",  "baseline-psnr",
    "baseline-ssim",
  };
  return keys;
}

// Builds the pipeline configuration from already-parsed flag values plus the
// env/file layers. `given` marks flags the user actually passed, so layered
// values only fill the rest.
struct PipelineFlagValues
{
  std::optional<std::filesystem::path> config;
  std::string frames;
  std::string out;
  std::uint64_t t0 = 0;
  std::uint64_t t1 = 0;
  int n = 3;
  double mu_c = 0.2;
  double sigma_c = 0.03;
  double eps = 1e-3;
  std::uint64_t seed = 0;
  double c = 0.2;
  bool oracle_thresholds = false;
  bool clamp = true;
  double noise_stddev = 0.0;
  int hot_pixels = 0;
  double hot_value = 10.0;
  double baseline_psnr = 0.0;
  double baseline_ssim = 0.0;

  std::vector<std::string> given;

  bool has(const std::string & key) const
  {
    return std::find(given.begin(), given.end(), key) != given.end();
  }
};

inline PipelineConfig resolve_pipeline_config(const PipelineFlagValues & flags)
{
  const KeyValues layered = layered_settings(flags.config, pipeline_setting_keys());
  auto have = [&](const std::string & key) {
    return flags.has(key) || layered.count(key) > 0;
  };
  auto pick_str = [&](const std::string & key, const std::string & flag_value) {
    if (flags.has(key)) {
      return flag_value;
    }
    const auto it = layered.find(key);
    return it != layered.end() ? it->second : flag_value;
  };
  auto pick_u64 = [&](const std::string & key, std::uint64_t flag_value) {
    if (flags.has(key)) {
      return flag_value;
    }
    const auto it = layered.find(key);
    return it != layered.end() ? detail::parse_setting<std::uint64_t>(it->second, key)
                               : flag_value;
  };
  auto pick_int = [&](const std::string & key, int flag_value) {
    if (flags.has(key)) {
      return flag_value;
    }
    const auto it = layered.find(key);
    return it != layered.end() ? detail::parse_setting<int>(it->second, key) : flag_value;
  };
  auto pick_double = [&](const std::string & key, double flag_value) {
    if (flags.has(key)) {
      return flag_value;
    }
    const auto it = layered.find(key);
    return it != layered.end() ? detail::parse_setting<double>(it->second, key) : flag_value;
  };
  auto pick_bool = [&](const std::string & key, bool flag_value) {
    if (flags.has(key)) {
      return flag_value;
    }
    const auto it = layered.find(key);
    return it != layered.end() ? detail::parse_bool_setting(it->second, key) : flag_value;
  };

  for (const char * required : {"frames", "out", "t0", "t1", "seed"}) {
    if (!have(required)) {
      throw UsageError(std::string("missing required setting '") + required +
                       "' (flag, EVBLUR_* variable, or config file)");
    }
  }

  PipelineConfig cfg;
  cfg.frames = pick_str("frames", flags.frames);
  cfg.out_dir = pick_str("out", flags.out);
  cfg.t_start = pick_u64("t0", flags.t0);
  cfg.t_end = pick_u64("t1", flags.t1);
  cfg.half_intervals = pick_int("n", flags.n);
  cfg.mu_c = pick_double("mu-c", flags.mu_c);
  cfg.sigma_c = pick_double("sigma-c", flags.sigma_c);
  cfg.eps = pick_double("eps", flags.eps);
  cfg.seed = pick_u64("seed", flags.seed);
  cfg.c = pick_double("c", flags.c);
  cfg.oracle_thresholds = pick_bool("oracle-thresholds", flags.oracle_thresholds);
  cfg.clamp = pick_bool("clamp", flags.clamp);
  cfg.noise_stddev = pick_double("noise-stddev", flags.noise_stddev);
  cfg.hot_pixels = pick_int("hot-pixels", flags.hot_pixels);
  cfg.hot_value = pick_double("hot-value", flags.hot_value);
  if (have("baseline-psnr")) {
    cfg.baseline_psnr = pick_double("baseline-psnr", flags.baseline_psnr);
  }
  if (have("baseline-ssim")) {
    cfg.baseline_ssim = pick_double("baseline-ssim", flags.baseline_ssim);
  }
  return cfg;
}

namespace detail
{
inline FrameSequence load_frames(const std::string & pattern, std::uint64_t t0, std::uint64_t t1)
{
  const auto paths = glob_files(pattern);
  if (paths.empty()) {
    throw Error("no frames match '" + pattern + "'");
  }
  std::vector<Image> frames;
  frames.reserve(paths.size());
  for (const auto & p : paths) {
    frames.push_back(io::read_image(p));
  }
  return FrameSequence::uniform(std::move(frames), t0, t1);
}

inline std::string grad_check_report_json(const GradCheckReport & r)
{
  std::string out = "{\"pass\":";
  out += r.pass ? "true" : "false";
  out += ",\"max_rel_err\":" + evblur::detail::json_number(r.max_rel_err);
  out += ",\"tolerance\":" + evblur::detail::json_number(r.tolerance);
  out += ",\"groups\":{";
  bool first = true;
  for (const auto & [name, err] : r.groups) {
    if (!first) {
      out += ',';
    }
    first = false;
    out += "\"" + name + "\":" + evblur::detail::json_number(err);
  }
  out += "}}\n";
  return out;
}
}  // namespace detail

// Assembles the full command line. Streams default to std::cout/std::cerr;
// tests inject their own to capture output.
inline int run_cli(std::vector<std::string> args, std::ostream & out = std::cout,
                   std::ostream & err = std::cerr)
{
  CLI::App app{"event-based motion deblurring toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // simulate
  auto * sim = app.add_subcommand("simulate", "generate events from a frame sequence");
  struct
  {
    std::string frames, out, thresholds_out;
    std::uint64_t t0 = 0, t1 = 0, seed = 0;
    double mu_c = 0.2, sigma_c = 0.03, eps = 1e-3;
  } sim_v;
  sim->add_option("--frames", sim_v.frames, "input frame glob")->required();
  sim->add_option("--t0", sim_v.t0, "window start, microseconds")->required();
  sim->add_option("--t1", sim_v.t1, "window end, microseconds")->required();
  sim->add_option("--mu-c", sim_v.mu_c, "threshold mean");
  sim->add_option("--sigma-c", sim_v.sigma_c, "threshold stddev");
  sim->add_option("--eps", sim_v.eps, "log-intensity offset");
  sim->add_option("--seed", sim_v.seed, "threshold sampling seed")->required();
  sim->add_option("--out", sim_v.out, "output event file (.evt1 or .csv)")->required();
  sim->add_option("--thresholds", sim_v.thresholds_out, "also write the sampled threshold map");

  // blur
  auto * blr = app.add_subcommand("blur", "average a frame sequence into a blurred image");
  struct
  {
    std::string frames, out;
  } blr_v;
  blr->add_option("--frames", blr_v.frames, "input frame glob")->required();
  blr->add_option("--out", blr_v.out, "output image (.pgm or .pfg)")->required();

  // scer
  auto * sc = app.add_subcommand("scer", "accumulate events into a voxel representation");
  struct
  {
    std::string events, out, format = "scer";
    int n = 3;
  } sc_v;
  sc->add_option("--events", sc_v.events, "input event file")->required();
  sc->add_option("--n", sc_v.n, "half-interval count N");
  sc->add_option("--format", sc_v.format, "scer, sbt, or stack")
    ->check(CLI::IsMember({"scer", "sbt", "stack"}));
  sc->add_option("--out", sc_v.out, "output voxel file")->required();

  // mask
  auto * mk = app.add_subcommand("mask", "derive the event mask from a cumulative grid");
  struct
  {
    std::string scer, out;
    int downsample = 1;
  } mk_v;
  mk->add_option("--scer", mk_v.scer, "input voxel file")->required();
  mk->add_option("--downsample", mk_v.downsample, "nearest-neighbour downsample factor");
  mk->add_option("--out", mk_v.out, "output mask image (.pgm)")->required();

  // edi
  auto * ed = app.add_subcommand("edi", "invert a blurred image with events");
  struct
  {
    std::string blur, events, out, sequence_dir, threshold_map;
    int n = 3;
    double c = 0.2;
    bool clamp = true;
  } ed_v;
  ed->add_option("--blur", ed_v.blur, "blurred input image")->required();
  ed->add_option("--events", ed_v.events, "input event file")->required();
  ed->add_option("--n", ed_v.n, "half-interval count N");
  ed->add_option("--c", ed_v.c, "contrast threshold");
  ed->add_option("--threshold-map", ed_v.threshold_map, "per-pixel threshold map (.pfg)");
  ed->add_flag("--clamp,!--no-clamp", ed_v.clamp, "clamp outputs to [0,1]");
  ed->add_option("--out", ed_v.out, "output sharp image")->required();
  ed->add_option("--sequence", ed_v.sequence_dir, "also write all 2N+1 latent frames here");

  // eval
  auto * ev = app.add_subcommand("eval", "compare a reconstruction against ground truth");
  struct
  {
    std::string pred, gt;
    double baseline_psnr = 0.0, baseline_ssim = 0.0;
  } ev_v;
  ev->add_option("--pred", ev_v.pred, "reconstructed image")->required();
  ev->add_option("--gt", ev_v.gt, "ground-truth image")->required();
  auto * ev_bp = ev->add_option("--baseline-psnr", ev_v.baseline_psnr, "baseline PSNR in dB");
  auto * ev_bs = ev->add_option("--baseline-ssim", ev_v.baseline_ssim, "baseline SSIM");

  // attn-check
  auto * at = app.add_subcommand("attn-check", "finite-difference check of the attention kernel");
  // long-form --help only: the default -h short flag would collide with --h
  at->set_help_flag("--help", "print this help message and exit");
  struct
  {
    int h = 4, w = 4, channels = 8, proj = 4, ratio = 2, heads = 1;
    double tol = 1e-5;
    std::uint64_t seed = 7;
    std::string save_params, load_params_path;
    bool strict = true;
    bool bypass = false;
  } at_v;
  at->add_option("--h", at_v.h, "feature grid height");
  at->add_option("--w", at_v.w, "feature grid width");
  at->add_option("--C", at_v.channels, "input channel count");
  at->add_option("--c", at_v.proj, "projection channel count");
  at->add_option("--r", at_v.ratio, "MLP hidden ratio");
  at->add_option("--heads", at_v.heads, "attention head count");
  at->add_option("--tol", at_v.tol, "max relative error to pass");
  at->add_option("--seed", at_v.seed, "seed for parameters and inputs");
  at->add_option("--save-params", at_v.save_params, "write the checked parameters (.atn)");
  at->add_option("--load-params", at_v.load_params_path, "check these parameters instead");
  at->add_flag("--strict,!--no-strict", at_v.strict,
               "reject projection widths >= the pixel count");
  at->add_flag("--bypass-attention", at_v.bypass, "check only the MLP path");

  // pipeline
  auto * pl = app.add_subcommand("pipeline", "run the full synthetic deblurring chain");
  PipelineFlagValues pl_v;
  std::string pl_config;
  pl->add_option("--config", pl_config, "settings file of 'key = value' lines");
  pl->add_option("--frames", pl_v.frames, "input frame glob");
  pl->add_option("--out", pl_v.out, "output directory");
  pl->add_option("--t0", pl_v.t0, "window start, microseconds");
  pl->add_option("--t1", pl_v.t1, "window end, microseconds");
  pl->add_option("--n", pl_v.n, "half-interval count N");
  pl->add_option("--mu-c", pl_v.mu_c, "threshold mean");
  pl->add_option("--sigma-c", pl_v.sigma_c, "threshold stddev");
  pl->add_option("--eps", pl_v.eps, "log-intensity offset");
  pl->add_option("--seed", pl_v.seed, "run seed");
  pl->add_option("--c", pl_v.c, "inversion contrast threshold");
  pl->add_flag("--oracle-thresholds,!--no-oracle-thresholds", pl_v.oracle_thresholds,
               "invert with the sampled per-pixel thresholds");
  pl->add_flag("--clamp,!--no-clamp", pl_v.clamp, "clamp outputs to [0,1]");
  pl->add_option("--noise-stddev", pl_v.noise_stddev, "voxel noise stddev");
  pl->add_option("--hot-pixels", pl_v.hot_pixels, "hot pixel count");
  pl->add_option("--hot-value", pl_v.hot_value, "hot pixel fill value");
  pl->add_option("--baseline-psnr", pl_v.baseline_psnr, "baseline PSNR for the report");
  pl->add_option("--baseline-ssim", pl_v.baseline_ssim, "baseline SSIM for the report");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp & e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion & e) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError & e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (sim->parsed()) {
      const FrameSequence seq = detail::load_frames(sim_v.frames, sim_v.t0, sim_v.t1);
      SimConfig cfg;
      cfg.mu_c = sim_v.mu_c;
      cfg.sigma_c = sim_v.sigma_c;
      cfg.eps = sim_v.eps;
      cfg.seed = sim_v.seed;
      const ThresholdMap thresholds = sample_thresholds(seq.width(), seq.height(), cfg);
      if (!sim_v.thresholds_out.empty()) {
        io::write_threshold_map(thresholds, sim_v.thresholds_out);
      }
      const EventStream events = simulate_events(seq, thresholds, sim_v.eps);
      io::write_events(events, sim_v.out);
      out << "{\"events\":" << events.size() << "}\n";
    } else if (blr->parsed()) {
      const auto paths = glob_files(blr_v.frames);
      if (paths.empty()) {
        throw Error("no frames match '" + blr_v.frames + "'");
      }
      std::vector<Image> frames;
      for (const auto & p : paths) {
        frames.push_back(io::read_image(p));
      }
      const auto span = static_cast<std::uint64_t>(frames.size() - 1) * 1000;
      io::write_image(synthesize_blur(FrameSequence::uniform(std::move(frames), 0, span)),
                      blr_v.out);
    } else if (sc->parsed()) {
      const EventStream events = io::read_events(sc_v.events);
      if (sc_v.format == "scer") {
        io::write_voxels(scer(events, sc_v.n).grid, sc_v.out);
      } else if (sc_v.format == "sbt") {
        io::write_voxels(sbt(events, sc_v.n), sc_v.out);
      } else {
        io::write_voxels(stack(events), sc_v.out);
      }
    } else if (mk->parsed()) {
      const VoxelGrid grid = io::read_voxels(mk_v.scer);
      if (grid.channels() % 2 != 0) {
        throw Error("mask needs a grid with an even channel count");
      }
      EventMask mask = event_mask(ScerGrid{grid, grid.channels() / 2});
      if (mk_v.downsample > 1) {
        mask = downsample_mask(mask, mk_v.downsample);
      }
      std::vector<double> img(mask.m.begin(), mask.m.end());
      io::write_image(Image::from_values(mask.width, mask.height, std::move(img)), mk_v.out);
    } else if (ed->parsed()) {
      const Image blur = io::read_image(ed_v.blur);
      const EventStream events = io::read_events(ed_v.events);
      EdiConfig cfg;
      cfg.half_intervals = ed_v.n;
      cfg.c = ed_v.c;
      cfg.clamp_output = ed_v.clamp;
      if (!ed_v.threshold_map.empty()) {
        cfg.thresholds = io::read_threshold_map(ed_v.threshold_map);
      }
      io::write_image(edi_deblur(blur, events, cfg), ed_v.out);
      if (!ed_v.sequence_dir.empty()) {
        const FrameSequence seq = edi_sequence(blur, events, cfg);
        std::filesystem::create_directories(ed_v.sequence_dir);
        for (std::size_t i = 0; i < seq.size(); ++i) {
          char name[32];
          std::snprintf(name, sizeof(name), "frame_%02zu.pgm", i);
          io::write_image(seq.frame(i), std::filesystem::path(ed_v.sequence_dir) / name);
        }
      }
    } else if (ev->parsed()) {
      const Image pred = io::read_image(ev_v.pred);
      const Image gt = io::read_image(ev_v.gt);
      const MetricReport report = evaluate(
        pred, gt,
        ev_bp->count() ? std::optional<double>(ev_v.baseline_psnr) : std::nullopt,
        ev_bs->count() ? std::optional<double>(ev_v.baseline_ssim) : std::nullopt);
      out << metric_report_line(report);
    } else if (at->parsed()) {
      AttentionParams params =
        at_v.load_params_path.empty()
          ? AttentionParams::random(at_v.channels, at_v.proj, at_v.ratio, at_v.heads, at_v.seed)
          : load_params(at_v.load_params_path);
      if (!at_v.save_params.empty()) {
        save_params(params, at_v.save_params);
      }
      EicaOptions opts;
      opts.strict = at_v.strict;
      opts.bypass_attention = at_v.bypass;
      const GradCheckReport report =
        grad_check(params, at_v.h, at_v.w, at_v.tol, at_v.seed + 1, opts);
      out << detail::grad_check_report_json(report);
      return report.pass ? 0 : 1;
    } else if (pl->parsed()) {
      for (const std::string & key : pipeline_setting_keys()) {
        if (pl->count("--" + key) > 0) {
          pl_v.given.push_back(key);
        }
      }
      if (!pl_config.empty()) {
        pl_v.config = std::filesystem::path(pl_config);
      }
      const PipelineConfig cfg = resolve_pipeline_config(pl_v);
      const PipelineResult result = run_pipeline(cfg);
      out << io::detail::slurp(result.artifacts.at("report"));
    }
  } catch (const UsageError & e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const StageError & e) {
    err << "error in stage '" << e.stage() << "': " << e.what() << "\n";
    return 1;
  } catch (const std::exception & e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
}  // namespace evblur::cli

#endif  // EVBLUR_TOOLS_EVBLUR_APP_HPP
