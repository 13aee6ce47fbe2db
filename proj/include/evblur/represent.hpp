#ifndef EVBLUR_REPRESENT_HPP
#define EVBLUR_REPRESENT_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "evblur/core.hpp"

namespace evblur
{
// Symmetric cumulative representation with 2N channels around the window
// midpoint f. With boundaries b_k = t_start + k * T / (2N):
//   channel k <  N: minus the polarity sum over [b_k, f]
//   channel k >= N: plus the polarity sum over [f, b_{k+1}]
// Both interval ends are closed, so an event exactly at f lands in every
// channel. The always-zero midpoint channel is not stored.
struct ScerGrid
{
  VoxelGrid grid;
  int half_intervals{0};  // N; grid holds 2N channels
};

namespace detail
{
// Membership tests use (t - t_start) * 2N against k * T exactly in 128-bit
// integers, so bin edges never suffer rounding.
struct ScerIndexer
{
  ScerIndexer(const EventStream & s, int n)
  : t_start(s.t_start()), span(s.duration()), k2n(2 * static_cast<unsigned>(n))
  {
    if (n < 1) {
      throw Error("cumulative representation needs at least one half-interval");
    }
    if (span == 0) {
      throw Error("event window has zero duration");
    }
  }

  bool in_channel(std::uint64_t t, int k) const
  {
    const auto q = static_cast<unsigned __int128>(t - t_start) * k2n;
    const auto n = k2n / 2;
    if (static_cast<unsigned>(k) < n) {
      return q >= static_cast<unsigned __int128>(span) * static_cast<unsigned>(k) &&
             q <= static_cast<unsigned __int128>(span) * n;
    }
    return q >= static_cast<unsigned __int128>(span) * n &&
           q <= static_cast<unsigned __int128>(span) * (static_cast<unsigned>(k) + 1);
  }

  std::uint64_t t_start;
  std::uint64_t span;
  unsigned k2n;
};
}  // namespace detail

inline ScerGrid scer(const EventStream & s, int n)
{
  detail::ScerIndexer idx(s, n);
  VoxelGrid grid(s.width(), s.height(), 2 * n);
  for (const Event & e : s.events()) {
    for (int k = 0; k < 2 * n; ++k) {
      if (idx.in_channel(e.t, k)) {
        grid.at(e.x, e.y, k) += (k < n) ? -static_cast<double>(e.p) : static_cast<double>(e.p);
      }
    }
  }
  return ScerGrid{std::move(grid), n};
}

// Polarity sums over 2N equal bins, half-open except the last bin, which
// also takes t = t_end.
inline VoxelGrid sbt(const EventStream & s, int n)
{
  if (n < 1) {
    throw Error("binned representation needs at least one half-interval");
  }
  if (s.duration() == 0) {
    throw Error("event window has zero duration");
  }
  const unsigned bins = 2 * static_cast<unsigned>(n);
  const std::uint64_t span = s.duration();
  VoxelGrid grid(s.width(), s.height(), static_cast<int>(bins));
  for (const Event & e : s.events()) {
    const auto q = static_cast<unsigned __int128>(e.t - s.t_start()) * bins;
    auto b = static_cast<unsigned>(q / span);
    if (b == bins) {
      b = bins - 1;
    }
    grid.at(e.x, e.y, static_cast<int>(b)) += static_cast<double>(e.p);
  }
  return grid;
}

// Single-channel total polarity sum.
inline VoxelGrid stack(const EventStream & s)
{
  VoxelGrid grid(s.width(), s.height(), 1);
  for (const Event & e : s.events()) {
    grid.at(e.x, e.y, 0) += static_cast<double>(e.p);
  }
  return grid;
}

// Cumulative channels from binned ones: channel k < N sums bins k..N-1
// negated, channel k >= N sums bins N..k. Equals scer() exactly when no
// event sits on a bin boundary; boundary events differ because the bins
// are half-open while the cumulative intervals are closed.
inline ScerGrid scer_from_sbt(const VoxelGrid & bins)
{
  if (bins.channels() < 2 || bins.channels() % 2 != 0) {
    throw Error("binned grid needs an even channel count of at least 2");
  }
  const int n = bins.channels() / 2;
  VoxelGrid grid(bins.width(), bins.height(), 2 * n);
  for (int y = 0; y < bins.height(); ++y) {
    for (int x = 0; x < bins.width(); ++x) {
      double acc = 0.0;
      for (int b = n - 1; b >= 0; --b) {
        acc += bins.at(x, y, b);
        grid.at(x, y, b) = -acc;
      }
      acc = 0.0;
      for (int b = n; b < 2 * n; ++b) {
        acc += bins.at(x, y, b);
        grid.at(x, y, b) = acc;
      }
    }
  }
  return ScerGrid{std::move(grid), n};
}

// 1 where the full window saw no activity in the outermost cumulative
// channels, 0 where it did. The outermost channels cover the whole half
// windows, so they vanish only when signed activity cancels or is absent.
struct EventMask
{
  int width{0};
  int height{0};
  std::vector<std::uint8_t> m;

  std::uint8_t at(int x, int y) const { return m[static_cast<std::size_t>(y) * width + x]; }
};

inline EventMask event_mask(const ScerGrid & sc)
{
  EventMask mask;
  mask.width = sc.grid.width();
  mask.height = sc.grid.height();
  mask.m.resize(static_cast<std::size_t>(mask.width) * mask.height);
  const int last = sc.grid.channels() - 1;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const double activity = std::abs(sc.grid.at(x, y, 0)) + std::abs(sc.grid.at(x, y, last));
      mask.m[static_cast<std::size_t>(y) * mask.width + x] = activity > 0.0 ? 0 : 1;
    }
  }
  return mask;
}

// Nearest-neighbour downsampling by an integer factor: out(x, y) takes
// in(x * factor, y * factor). Dimensions must divide evenly.
inline EventMask downsample_mask(const EventMask & mask, int factor)
{
  if (factor < 1) {
    throw Error("downsample factor must be at least 1");
  }
  if (mask.width % factor != 0 || mask.height % factor != 0) {
    throw Error("mask dimensions not divisible by downsample factor");
  }
  EventMask out;
  out.width = mask.width / factor;
  out.height = mask.height / factor;
  out.m.resize(static_cast<std::size_t>(out.width) * out.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      out.m[static_cast<std::size_t>(y) * out.width + x] = mask.at(x * factor, y * factor);
    }
  }
  return out;
}

namespace detail
{
inline void check_gate_shapes(const VoxelGrid & g, const EventMask & mask)
{
  if (g.width() != mask.width || g.height() != mask.height) {
    throw Error("mask size does not match feature grid");
  }
}
}  // namespace detail

// Gated fusion of encoder and decoder features: the mask routes encoder
// features through no-event pixels and decoder features through event
// pixels, and both raw inputs pass through unconditionally.
inline VoxelGrid gate_encoder(const VoxelGrid & enc, const EventMask & mask)
{
  detail::check_gate_shapes(enc, mask);
  VoxelGrid out = enc;
  for (int c = 0; c < out.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        out.at(x, y, c) *= static_cast<double>(mask.at(x, y));
      }
    }
  }
  return out;
}

inline VoxelGrid gate_decoder(const VoxelGrid & dec, const EventMask & mask)
{
  detail::check_gate_shapes(dec, mask);
  VoxelGrid out = dec;
  for (int c = 0; c < out.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        out.at(x, y, c) *= static_cast<double>(1 - mask.at(x, y));
      }
    }
  }
  return out;
}

inline VoxelGrid gated_fusion(const VoxelGrid & enc, const VoxelGrid & dec, const EventMask & mask)
{
  if (!enc.same_shape(dec)) {
    throw Error("encoder and decoder grids differ in shape");
  }
  detail::check_gate_shapes(enc, mask);
  VoxelGrid out(enc.width(), enc.height(), enc.channels());
  for (int c = 0; c < out.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        const double m = static_cast<double>(mask.at(x, y));
        const double e = enc.at(x, y, c);
        const double d = dec.at(x, y, c);
        out.at(x, y, c) = e * m + d * (1.0 - m) + e + d;
      }
    }
  }
  return out;
}
}  // namespace evblur

#endif  // EVBLUR_REPRESENT_HPP
