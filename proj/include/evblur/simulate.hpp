#ifndef EVBLUR_SIMULATE_HPP
#define EVBLUR_SIMULATE_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "evblur/core.hpp"

namespace evblur
{
struct SimConfig
{
  double mu_c = 0.2;
  double sigma_c = 0.03;
  double min_threshold = 0.01;
  double eps = 1e-3;
  std::uint64_t seed = 0;
};

// An odd number of frames (2N+1) whose timestamps span [t_start, t_end]
// uniformly up to microsecond rounding. Frame N sits at the window midpoint.
class FrameSequence
{
public:
  FrameSequence(std::vector<Image> frames, std::vector<std::uint64_t> timestamps)
  : frames_(std::move(frames)), times_(std::move(timestamps))
  {
    if (frames_.size() < 3 || frames_.size() % 2 == 0) {
      throw Error("frame sequence needs an odd count of at least 3 frames");
    }
    if (times_.size() != frames_.size()) {
      throw Error("timestamp count does not match frame count");
    }
    for (const Image & f : frames_) {
      if (!f.same_shape(frames_.front())) {
        throw Error("frames differ in size");
      }
    }
    for (std::size_t i = 1; i < times_.size(); ++i) {
      if (times_[i] <= times_[i - 1]) {
        throw Error("frame timestamps must be strictly increasing");
      }
    }
    const unsigned k2n = static_cast<unsigned>(times_.size() - 1);
    const std::uint64_t span = times_.back() - times_.front();
    for (std::size_t i = 0; i < times_.size(); ++i) {
      const auto actual = static_cast<unsigned __int128>(times_[i] - times_.front()) * k2n;
      const auto ideal = static_cast<unsigned __int128>(span) * i;
      const auto diff = actual > ideal ? actual - ideal : ideal - actual;
      if (diff > k2n) {
        throw Error("frame timestamps are not uniformly spaced");
      }
    }
  }

  static FrameSequence uniform(std::vector<Image> frames, std::uint64_t t_start,
                               std::uint64_t t_end)
  {
    if (frames.size() < 3 || frames.size() % 2 == 0) {
      throw Error("frame sequence needs an odd count of at least 3 frames");
    }
    if (t_end <= t_start) {
      throw Error("frame window must have positive duration");
    }
    const unsigned k2n = static_cast<unsigned>(frames.size() - 1);
    const std::uint64_t span = t_end - t_start;
    std::vector<std::uint64_t> times(frames.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
      const auto scaled = static_cast<unsigned __int128>(span) * i + k2n / 2;
      times[i] = t_start + static_cast<std::uint64_t>(scaled / k2n);
    }
    return FrameSequence(std::move(frames), std::move(times));
  }

  std::size_t size() const { return frames_.size(); }
  int half_intervals() const { return static_cast<int>((frames_.size() - 1) / 2); }
  int width() const { return frames_.front().width(); }
  int height() const { return frames_.front().height(); }
  std::uint64_t t_start() const { return times_.front(); }
  std::uint64_t t_end() const { return times_.back(); }
  std::uint64_t timestamp(std::size_t i) const { return times_[i]; }
  const Image & frame(std::size_t i) const { return frames_[i]; }
  const Image & middle_frame() const { return frames_[(frames_.size() - 1) / 2]; }
  const std::vector<Image> & frames() const { return frames_; }

private:
  std::vector<Image> frames_;
  std::vector<std::uint64_t> times_;
};

// Per-pixel thresholds drawn from N(mu_c, sigma_c), clamped from below so a
// tail draw cannot produce a zero or negative threshold. sigma_c = 0 assigns
// exactly mu_c everywhere. Draws run in row-major pixel order.
inline ThresholdMap sample_thresholds(int width, int height, const SimConfig & cfg)
{
  detail::check_dims(width, height);
  if (!(cfg.mu_c > 0.0) || !std::isfinite(cfg.mu_c)) {
    throw Error("threshold mean must be positive");
  }
  if (!(cfg.sigma_c >= 0.0) || !std::isfinite(cfg.sigma_c)) {
    throw Error("threshold stddev must be non-negative");
  }
  if (!(cfg.min_threshold > 0.0)) {
    throw Error("threshold floor must be positive");
  }
  std::vector<double> values(static_cast<std::size_t>(width) * height, cfg.mu_c);
  if (cfg.sigma_c > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> dist(cfg.mu_c, cfg.sigma_c);
    for (double & c : values) {
      c = std::max(cfg.min_threshold, dist(rng));
    }
  }
  return ThresholdMap(width, height, std::move(values));
}

namespace detail
{
inline std::uint64_t cross_time(std::uint64_t ta, std::uint64_t tb, double la, double lb,
                                double level)
{
  const double frac = (level - la) / (lb - la);
  const double dt = static_cast<double>(tb - ta);
  std::int64_t off = std::llround(frac * dt);
  off = std::clamp<std::int64_t>(off, 0, static_cast<std::int64_t>(tb - ta));
  return ta + static_cast<std::uint64_t>(off);
}

// Walks one pixel's piecewise-linear log-intensity track and emits an event
// each time it moves a full threshold away from the last reference level.
// Levels are base + k * c with an integer step counter, so the reference
// never drifts. A segment endpoint landing exactly on a level triggers.
inline void emit_pixel_crossings(const std::vector<double> & logs,
                                 const std::vector<std::uint64_t> & times, double c,
                                 std::uint16_t x, std::uint16_t y, std::vector<Event> & out)
{
  double base = logs[0];
  std::int64_t steps = 0;
  for (std::size_t k = 0; k + 1 < logs.size(); ++k) {
    const double la = logs[k];
    const double lb = logs[k + 1];
    if (lb > la) {
      while (true) {
        const double level = base + static_cast<double>(steps + 1) * c;
        if (level > lb) {
          break;
        }
        out.push_back({cross_time(times[k], times[k + 1], la, lb, level), x, y, +1});
        ++steps;
      }
    } else if (lb < la) {
      while (true) {
        const double level = base + static_cast<double>(steps - 1) * c;
        if (level < lb) {
          break;
        }
        out.push_back({cross_time(times[k], times[k + 1], la, lb, level), x, y, -1});
        --steps;
      }
    }
  }
}
}  // namespace detail

// Threshold-crossing events from linear interpolation of per-pixel
// log intensity between consecutive frames.
inline EventStream simulate_events(const FrameSequence & seq, const ThresholdMap & thresholds,
                                   double eps = 1e-3)
{
  if (thresholds.width() != seq.width() || thresholds.height() != seq.height()) {
    throw Error("threshold map size does not match frames");
  }
  if (!(eps > 0.0)) {
    throw Error("log-intensity offset must be positive");
  }
  std::vector<std::uint64_t> times(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    times[i] = seq.timestamp(i);
  }
  std::vector<Event> events;
  std::vector<double> logs(seq.size());
  for (int y = 0; y < seq.height(); ++y) {
    for (int x = 0; x < seq.width(); ++x) {
      for (std::size_t k = 0; k < seq.size(); ++k) {
        logs[k] = std::log(seq.frame(k).at(x, y) + eps);
      }
      detail::emit_pixel_crossings(logs, times, thresholds.at(x, y),
                                   static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                                   events);
    }
  }
  return EventStream(seq.width(), seq.height(), seq.t_start(), seq.t_end(), std::move(events));
}

// Temporal mean of the frames: the discrete blur model.
inline Image synthesize_blur(const FrameSequence & seq)
{
  std::vector<double> acc(static_cast<std::size_t>(seq.width()) * seq.height(), 0.0);
  for (std::size_t k = 0; k < seq.size(); ++k) {
    const auto & v = seq.frame(k).values();
    for (std::size_t i = 0; i < acc.size(); ++i) {
      acc[i] += v[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(seq.size());
  for (double & a : acc) {
    a *= inv;
  }
  return Image::from_values(seq.width(), seq.height(), std::move(acc));
}

struct AugmentConfig
{
  double noise_stddev = 0.0;
  int hot_pixels = 0;
  double hot_value = 10.0;
  std::uint64_t seed = 0;
};

// Gaussian noise on every cell (channel-outer order), then a set of distinct
// hot pixels forced to hot_value across all channels.
inline VoxelGrid augment_voxels(const VoxelGrid & grid, const AugmentConfig & cfg)
{
  if (!(cfg.noise_stddev >= 0.0) || !std::isfinite(cfg.noise_stddev)) {
    throw Error("noise stddev must be non-negative");
  }
  if (cfg.hot_pixels < 0) {
    throw Error("hot pixel count must be non-negative");
  }
  const std::size_t pixels = static_cast<std::size_t>(grid.width()) * grid.height();
  if (static_cast<std::size_t>(cfg.hot_pixels) > pixels) {
    throw Error("more hot pixels requested than pixels available");
  }
  VoxelGrid out = grid;
  std::mt19937_64 rng(cfg.seed);
  if (cfg.noise_stddev > 0.0) {
    std::normal_distribution<double> dist(0.0, cfg.noise_stddev);
    for (double & v : out.values()) {
      v += dist(rng);
    }
  }
  if (cfg.hot_pixels > 0) {
    std::vector<std::size_t> all(pixels);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> chosen;
    chosen.reserve(cfg.hot_pixels);
    std::sample(all.begin(), all.end(), std::back_inserter(chosen), cfg.hot_pixels, rng);
    for (std::size_t p : chosen) {
      const int x = static_cast<int>(p % grid.width());
      const int y = static_cast<int>(p / grid.width());
      for (int c = 0; c < grid.channels(); ++c) {
        out.at(x, y, c) = cfg.hot_value;
      }
    }
  }
  return out;
}
}  // namespace evblur

#endif  // EVBLUR_SIMULATE_HPP
