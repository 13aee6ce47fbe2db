#ifndef EVBLUR_PIPELINE_HPP
#define EVBLUR_PIPELINE_HPP

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evblur/core.hpp"
#include "evblur/edi.hpp"
#include "evblur/io.hpp"
#include "evblur/metrics.hpp"
#include "evblur/represent.hpp"
#include "evblur/simulate.hpp"

namespace evblur
{
// Bad flags, bad config values, missing required settings. The CLI turns
// these into exit code 2; everything else that goes wrong mid-run is a
// StageError and exits 1.
class UsageError : public Error
{
public:
  using Error::Error;
};

class StageError : public Error
{
public:
  StageError(std::string stage, const std::string & what)
  : Error(stage + ": " + what), stage_(std::move(stage))
  {
  }
  const std::string & stage() const { return stage_; }

private:
  std::string stage_;
};

namespace detail
{
inline bool glob_match(std::string_view pattern, std::string_view name)
{
  if (pattern.empty()) {
    return name.empty();
  }
  if (pattern[0] == '*') {
    for (std::size_t skip = 0; skip <= name.size(); ++skip) {
      if (glob_match(pattern.substr(1), name.substr(skip))) {
        return true;
      }
    }
    return false;
  }
  if (name.empty()) {
    return false;
  }
  if (pattern[0] == '?' || pattern[0] == name[0]) {
    return glob_match(pattern.substr(1), name.substr(1));
  }
  return false;
}
}  // namespace detail

// Expands * and ? in the final path component; the directory part is taken
// literally. Results come back sorted so downstream frame order is stable.
inline std::vector<std::filesystem::path> glob_files(const std::string & pattern)
{
  const std::filesystem::path p(pattern);
  const std::string leaf = p.filename().string();
  if (leaf.find('*') == std::string::npos && leaf.find('?') == std::string::npos) {
    if (!std::filesystem::is_regular_file(p)) {
      throw Error("no such file: " + pattern);
    }
    return {p};
  }
  std::filesystem::path dir = p.parent_path();
  if (dir.empty()) {
    dir = ".";
  }
  if (!std::filesystem::is_directory(dir)) {
    throw Error("no such directory: " + dir.string());
  }
  std::vector<std::filesystem::path> out;
  for (const auto & entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && detail::glob_match(leaf, entry.path().filename().string())) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end(),
            [](const auto & a, const auto & b) { return a.string() < b.string(); });
  return out;
}

using KeyValues = std::map<std::string, std::string>;

// Flat "key = value" settings file; '#' starts a comment, values may be
// quoted. Unknown keys are the caller's problem so typos can be reported
// against the known option list.
inline KeyValues parse_config_file(const std::filesystem::path & path)
{
  const std::string data = io::detail::slurp(path);
  KeyValues out;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (pos <= data.size()) {
    const std::size_t nl = data.find('\n', pos);
    std::string line =
      data.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? data.size() + 1 : nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.filename().string() + ":" + std::to_string(lineno) +
                       ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && ((value.front() == '"' && value.back() == '"') ||
                              (value.front() == '\'' && value.back() == '\''))) {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) {
      throw UsageError(path.filename().string() + ":" + std::to_string(lineno) + ": empty key");
    }
    out[key] = value;
  }
  return out;
}

// Option key "mu-c" maps to environment variable EVBLUR_MU_C.
inline std::string env_var_for_key(const std::string & key)
{
  std::string out = "EVBLUR_";
  for (char ch : key) {
    out.push_back(ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  }
  return out;
}

// Settings resolved as: config file first, environment on top. Command-line
// flags beat both; the CLI applies those last.
inline KeyValues layered_settings(const std::optional<std::filesystem::path> & config_file,
                                  const std::vector<std::string> & keys)
{
  KeyValues out;
  if (config_file) {
    out = parse_config_file(*config_file);
    for (const auto & [key, value] : out) {
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        throw UsageError("unknown config key '" + key + "'");
      }
    }
  }
  for (const std::string & key : keys) {
    if (const char * env = std::getenv(env_var_for_key(key).c_str())) {
      out[key] = env;
    }
  }
  return out;
}

namespace detail
{
template <typename T>
T parse_setting(const std::string & value, const std::string & key)
{
  try {
    return io::detail::parse_number<T>(value, key);
  } catch (const Error & e) {
    throw UsageError("invalid value for " + key + ": '" + value + "'");
  }
}

inline bool parse_bool_setting(const std::string & value, const std::string & key)
{
  if (value == "true" || value == "1" || value == "on") {
    return true;
  }
  if (value == "false" || value == "0" || value == "off") {
    return false;
  }
  throw UsageError("invalid value for " + key + ": '" + value + "'");
}

inline std::string json_number(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

struct PipelineConfig
{
  std::string frames;  // glob over input frame images
  std::string out_dir;
  std::uint64_t t_start = 0;
  std::uint64_t t_end = 0;
  int half_intervals = 3;
  double mu_c = 0.2;
  double sigma_c = 0.03;
  double eps = 1e-3;
  std::uint64_t seed = 0;
  double c = 0.2;  // inversion threshold when not using oracle thresholds
  bool oracle_thresholds = false;
  bool clamp = true;
  double noise_stddev = 0.0;
  int hot_pixels = 0;
  double hot_value = 10.0;
  std::optional<double> baseline_psnr;
  std::optional<double> baseline_ssim;
};

struct PipelineResult
{
  MetricReport report;
  std::size_t event_count{0};
  std::map<std::string, std::filesystem::path> artifacts;
};

inline std::string metric_report_line(const MetricReport & r, bool tag_record = false)
{
  std::string out = tag_record ? std::string("{\"record\":\"metrics\",\"psnr\":")
                               : std::string("{\"psnr\":");
  out += detail::json_number(r.psnr_db) + ",\"ssim\":" + detail::json_number(r.ssim_val);
  if (r.rmse_reduction_pct) {
    out += ",\"rmse_reduction\":" + detail::json_number(*r.rmse_reduction_pct);
  }
  if (r.dssim_reduction_pct) {
    out += ",\"dssim_reduction\":" + detail::json_number(*r.dssim_reduction_pct);
  }
  out += "}\n";
  return out;
}

inline std::string pipeline_run_line(const PipelineConfig & cfg, const FrameSequence & seq,
                                     std::size_t event_count)
{
  std::string out = "{\"record\":\"run\",\"frames\":" + std::to_string(seq.size()) +
                    ",\"width\":" + std::to_string(seq.width()) +
                    ",\"height\":" + std::to_string(seq.height()) +
                    ",\"t_start\":" + std::to_string(cfg.t_start) +
                    ",\"t_end\":" + std::to_string(cfg.t_end) +
                    ",\"n\":" + std::to_string(cfg.half_intervals) +
                    ",\"mu_c\":" + detail::json_number(cfg.mu_c) +
                    ",\"sigma_c\":" + detail::json_number(cfg.sigma_c) +
                    ",\"eps\":" + detail::json_number(cfg.eps) +
                    ",\"seed\":" + std::to_string(cfg.seed) +
                    ",\"c\":" + detail::json_number(cfg.c) +
                    ",\"oracle_thresholds\":" + (cfg.oracle_thresholds ? "true" : "false") +
                    ",\"clamp\":" + (cfg.clamp ? "true" : "false") +
                    ",\"noise_stddev\":" + detail::json_number(cfg.noise_stddev) +
                    ",\"hot_pixels\":" + std::to_string(cfg.hot_pixels) +
                    ",\"events\":" + std::to_string(event_count) + "}\n";
  return out;
}

// Runs the full synthetic chain: frames -> thresholds + blur + events ->
// cumulative grid + mask -> inverted sharp image -> metrics report. Every
// stage reads its inputs back from the files the previous stage wrote, so a
// stage rerun from the CLI on those files reproduces the same artifact.
inline PipelineResult run_pipeline(const PipelineConfig & cfg)
{
  namespace fs = std::filesystem;
  auto stage = [](const char * name, auto && fn) -> decltype(fn()) {
    try {
      return fn();
    } catch (const StageError &) {
      throw;
    } catch (const std::exception & e) {
      throw StageError(name, e.what());
    }
  };

  PipelineResult result;
  const fs::path out_dir(cfg.out_dir);

  const FrameSequence seq = stage("load-frames", [&] {
    if (cfg.t_end <= cfg.t_start) {
      throw Error("window must satisfy t_end > t_start");
    }
    const auto paths = glob_files(cfg.frames);
    if (paths.empty()) {
      throw Error("no frames match '" + cfg.frames + "'");
    }
    std::vector<Image> frames;
    frames.reserve(paths.size());
    for (const auto & p : paths) {
      frames.push_back(io::read_image(p));
    }
    return FrameSequence::uniform(std::move(frames), cfg.t_start, cfg.t_end);
  });

  stage("prepare-output", [&] {
    fs::create_directories(out_dir);
    return 0;
  });

  SimConfig sim;
  sim.mu_c = cfg.mu_c;
  sim.sigma_c = cfg.sigma_c;
  sim.eps = cfg.eps;
  sim.seed = cfg.seed;

  const ThresholdMap thresholds = stage("thresholds", [&] {
    const ThresholdMap t = sample_thresholds(seq.width(), seq.height(), sim);
    io::write_threshold_map(t, out_dir / "thresholds.pfg");
    return t;
  });
  result.artifacts["thresholds"] = out_dir / "thresholds.pfg";

  stage("blur", [&] {
    io::write_image(synthesize_blur(seq), out_dir / "blur.pgm");
    return 0;
  });
  result.artifacts["blur"] = out_dir / "blur.pgm";

  stage("simulate", [&] {
    io::write_events(simulate_events(seq, thresholds, cfg.eps), out_dir / "events.evt1");
    return 0;
  });
  result.artifacts["events"] = out_dir / "events.evt1";

  const EventStream events = stage("scer", [&] {
    EventStream ev = io::read_events(out_dir / "events.evt1");
    result.event_count = ev.size();
    ScerGrid sc = scer(ev, cfg.half_intervals);
    if (cfg.noise_stddev > 0.0 || cfg.hot_pixels > 0) {
      AugmentConfig aug;
      aug.noise_stddev = cfg.noise_stddev;
      aug.hot_pixels = cfg.hot_pixels;
      aug.hot_value = cfg.hot_value;
      aug.seed = cfg.seed + 1;
      sc.grid = augment_voxels(sc.grid, aug);
    }
    io::write_voxels(sc.grid, out_dir / "scer.vox");
    return ev;
  });
  result.artifacts["scer"] = out_dir / "scer.vox";

  stage("mask", [&] {
    const VoxelGrid grid = io::read_voxels(out_dir / "scer.vox");
    const EventMask mask = event_mask(ScerGrid{grid, grid.channels() / 2});
    std::vector<double> img(mask.m.begin(), mask.m.end());
    io::write_image(Image::from_values(mask.width, mask.height, std::move(img)),
                    out_dir / "mask.pgm");
    return 0;
  });
  result.artifacts["mask"] = out_dir / "mask.pgm";

  stage("edi", [&] {
    const Image blur = io::read_image(out_dir / "blur.pgm");
    EdiConfig edi;
    edi.half_intervals = cfg.half_intervals;
    edi.c = cfg.c;
    edi.clamp_output = cfg.clamp;
    if (cfg.oracle_thresholds) {
      edi.thresholds = io::read_threshold_map(out_dir / "thresholds.pfg");
    }
    io::write_image(edi_deblur(blur, events, edi), out_dir / "sharp.pgm");
    return 0;
  });
  result.artifacts["sharp"] = out_dir / "sharp.pgm";

  stage("report", [&] {
    const Image sharp = io::read_image(out_dir / "sharp.pgm");
    result.report = evaluate(sharp, seq.middle_frame(), cfg.baseline_psnr, cfg.baseline_ssim);
    std::string text = pipeline_run_line(cfg, seq, result.event_count);
    text += metric_report_line(result.report, true);
    io::detail::dump(out_dir / "report.jsonl", text);
    return 0;
  });
  result.artifacts["report"] = out_dir / "report.jsonl";
  return result;
}
}  // namespace evblur

#endif  // EVBLUR_PIPELINE_HPP
