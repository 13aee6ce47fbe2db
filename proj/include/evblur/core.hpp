#ifndef EVBLUR_CORE_HPP
#define EVBLUR_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace evblur
{
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

namespace detail
{
inline void check_dims(int width, int height)
{
  if (width < 1 || height < 1) {
    throw Error("image dimensions must be positive");
  }
  if (width > 65535 || height > 65535) {
    throw Error("image dimensions exceed 65535");
  }
}

inline void check_finite(const std::vector<double> & v, const char * what)
{
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw Error(std::string(what) + " contains a non-finite value");
    }
  }
}
}  // namespace detail

// Timestamps are integer microseconds. Polarity is -1 or +1, never 0.
struct Event
{
  std::uint64_t t{0};
  std::uint16_t x{0};
  std::uint16_t y{0};
  std::int8_t p{1};
};

inline bool canonical_less(const Event & a, const Event & b)
{
  return std::tie(a.t, a.y, a.x, a.p) < std::tie(b.t, b.y, b.x, b.p);
}

inline bool operator==(const Event & a, const Event & b)
{
  return a.t == b.t && a.x == b.x && a.y == b.y && a.p == b.p;
}

// Events sorted by (t, y, x, p). Two streams built from the same event
// multiset over the same window compare and serialize identically.
class EventStream
{
public:
  EventStream(int width, int height, std::uint64_t t_start, std::uint64_t t_end,
              std::vector<Event> events = {})
  : width_(width), height_(height), t_start_(t_start), t_end_(t_end), events_(std::move(events))
  {
    detail::check_dims(width, height);
    std::stable_sort(events_.begin(), events_.end(), canonical_less);
    validate();
  }

  // Rejects input that is not already in canonical order. File readers use
  // this so that an out-of-order file is an error rather than silently fixed.
  static EventStream from_canonical(int width, int height, std::uint64_t t_start,
                                    std::uint64_t t_end, std::vector<Event> events)
  {
    EventStream s(width, height, t_start, t_end);
    s.events_ = std::move(events);
    if (!std::is_sorted(s.events_.begin(), s.events_.end(), canonical_less)) {
      throw Error("events not in canonical (t, y, x, p) order");
    }
    s.validate();
    return s;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint64_t t_start() const { return t_start_; }
  std::uint64_t t_end() const { return t_end_; }
  std::uint64_t duration() const { return t_end_ - t_start_; }
  const std::vector<Event> & events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  bool operator==(const EventStream & o) const
  {
    return width_ == o.width_ && height_ == o.height_ && t_start_ == o.t_start_ &&
           t_end_ == o.t_end_ && events_ == o.events_;
  }

private:
  void validate() const
  {
    if (t_end_ < t_start_) {
      throw Error("event window ends before it starts");
    }
    for (const Event & e : events_) {
      if (e.t < t_start_ || e.t > t_end_) {
        throw Error("timestamp out of window");
      }
      if (e.x >= width_ || e.y >= height_) {
        throw Error("event coordinates out of bounds");
      }
      if (e.p != 1 && e.p != -1) {
        throw Error("event polarity must be -1 or +1");
      }
    }
  }

  int width_;
  int height_;
  std::uint64_t t_start_;
  std::uint64_t t_end_;
  std::vector<Event> events_;
};

// Single-channel intensity image, row-major. Values are nominally in [0, 1];
// the plain factory clamps, the unclamped one keeps raw (finite) values so
// inversion results can exceed 1 before any final clamp.
class Image
{
public:
  Image() = default;

  Image(int width, int height, double fill = 0.0)
  : width_(width), height_(height), v_(static_cast<std::size_t>(width) * height, fill)
  {
    detail::check_dims(width, height);
    if (!std::isfinite(fill)) {
      throw Error("image fill value must be finite");
    }
  }

  static Image from_values(int width, int height, std::vector<double> values)
  {
    Image img = from_values_unclamped(width, height, std::move(values));
    for (double & x : img.v_) {
      x = std::clamp(x, 0.0, 1.0);
    }
    return img;
  }

  static Image from_values_unclamped(int width, int height, std::vector<double> values)
  {
    detail::check_dims(width, height);
    if (values.size() != static_cast<std::size_t>(width) * height) {
      throw Error("image value count does not match dimensions");
    }
    detail::check_finite(values, "image");
    Image img;
    img.width_ = width;
    img.height_ = height;
    img.v_ = std::move(values);
    return img;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return v_.size(); }

  double & at(int x, int y) { return v_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int x, int y) const { return v_[static_cast<std::size_t>(y) * width_ + x]; }

  std::vector<double> & values() { return v_; }
  const std::vector<double> & values() const { return v_; }

  bool same_shape(const Image & o) const { return width_ == o.width_ && height_ == o.height_; }

private:
  int width_{0};
  int height_{0};
  std::vector<double> v_;
};

// Dense per-pixel multi-channel grid, channel-outer / row-major per channel.
class VoxelGrid
{
public:
  VoxelGrid() = default;

  VoxelGrid(int width, int height, int channels, double fill = 0.0)
  : width_(width),
    height_(height),
    channels_(channels),
    v_(static_cast<std::size_t>(width) * height * channels, fill)
  {
    detail::check_dims(width, height);
    if (channels < 1) {
      throw Error("voxel grid needs at least one channel");
    }
  }

  static VoxelGrid from_values(int width, int height, int channels, std::vector<double> values)
  {
    VoxelGrid g(width, height, channels);
    if (values.size() != g.v_.size()) {
      throw Error("voxel value count does not match dimensions");
    }
    detail::check_finite(values, "voxel grid");
    g.v_ = std::move(values);
    return g;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t size() const { return v_.size(); }

  double & at(int x, int y, int c)
  {
    return v_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double at(int x, int y, int c) const
  {
    return v_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  std::vector<double> & values() { return v_; }
  const std::vector<double> & values() const { return v_; }

  bool same_shape(const VoxelGrid & o) const
  {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

private:
  int width_{0};
  int height_{0};
  int channels_{0};
  std::vector<double> v_;
};

// Per-pixel positive contrast thresholds.
class ThresholdMap
{
public:
  ThresholdMap(int width, int height, double c) : ThresholdMap(make_uniform(width, height, c)) {}

  ThresholdMap(int width, int height, std::vector<double> values)
  : width_(width), height_(height), v_(std::move(values))
  {
    detail::check_dims(width, height);
    if (v_.size() != static_cast<std::size_t>(width) * height) {
      throw Error("threshold value count does not match dimensions");
    }
    for (double c : v_) {
      if (!std::isfinite(c) || c <= 0.0) {
        throw Error("contrast thresholds must be positive");
      }
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double at(int x, int y) const { return v_[static_cast<std::size_t>(y) * width_ + x]; }
  const std::vector<double> & values() const { return v_; }

private:
  static ThresholdMap make_uniform(int width, int height, double c)
  {
    detail::check_dims(width, height);
    return ThresholdMap(width, height,
                        std::vector<double>(static_cast<std::size_t>(width) * height, c));
  }

  int width_;
  int height_;
  std::vector<double> v_;
};

// log(I + eps); the offset keeps black pixels finite.
inline Image log_intensity(const Image & img, double eps = 1e-3)
{
  if (!(eps > 0.0)) {
    throw Error("log-intensity offset must be positive");
  }
  std::vector<double> out(img.size());
  const auto & v = img.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::log(v[i] + eps);
  }
  return Image::from_values_unclamped(img.width(), img.height(), std::move(out));
}
}  // namespace evblur

#endif  // EVBLUR_CORE_HPP
