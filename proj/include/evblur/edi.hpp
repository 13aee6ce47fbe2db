#ifndef EVBLUR_EDI_HPP
#define EVBLUR_EDI_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "evblur/core.hpp"
#include "evblur/represent.hpp"
#include "evblur/simulate.hpp"

// Double-integral inversion of the discrete blur model. With cumulative
// polarity sums E_i between each sample instant and the window midpoint,
//   blur = latent_mid / (2N+1) * sum_i exp(c * E_i)
// so the midpoint latent image is recovered as
//   latent_mid = blur * (2N+1) / D,  D = sum_i exp(c * E_i).
namespace evblur
{
struct EdiConfig
{
  int half_intervals = 3;  // N
  double c = 0.2;
  std::optional<ThresholdMap> thresholds;  // per-pixel override for c
  bool clamp_output = true;
};

namespace detail
{
inline void check_edi_inputs(const EventStream & s, const EdiConfig & cfg)
{
  if (cfg.half_intervals < 1) {
    throw Error("inversion needs at least one half-interval");
  }
  if (!cfg.thresholds && (!(cfg.c > 0.0) || !std::isfinite(cfg.c))) {
    throw Error("contrast threshold must be positive");
  }
  if (cfg.thresholds &&
      (cfg.thresholds->width() != s.width() || cfg.thresholds->height() != s.height())) {
    throw Error("threshold map size does not match event stream");
  }
}

inline double threshold_at(const EdiConfig & cfg, int x, int y)
{
  return cfg.thresholds ? cfg.thresholds->at(x, y) : cfg.c;
}
}  // namespace detail

// D = sum over the 2N cumulative channels of exp(c * E_k), plus the
// midpoint's exp(0). Strictly positive everywhere; exactly 2N+1 where no
// events fall.
inline VoxelGrid edi_denominator(const EventStream & s, const EdiConfig & cfg)
{
  detail::check_edi_inputs(s, cfg);
  const ScerGrid sc = scer(s, cfg.half_intervals);
  VoxelGrid d(s.width(), s.height(), 1, 1.0);
  for (int k = 0; k < sc.grid.channels(); ++k) {
    for (int y = 0; y < s.height(); ++y) {
      for (int x = 0; x < s.width(); ++x) {
        d.at(x, y, 0) += std::exp(detail::threshold_at(cfg, x, y) * sc.grid.at(x, y, k));
      }
    }
  }
  return d;
}

inline VoxelGrid edi_denominator(const EventStream & s, int half_intervals, double c)
{
  EdiConfig cfg;
  cfg.half_intervals = half_intervals;
  cfg.c = c;
  return edi_denominator(s, cfg);
}

// Midpoint latent image. The per-pixel scale is (2N+1)/D, computed as one
// quotient so that an event-free pixel scales by exactly 1.
inline Image edi_deblur(const Image & blur, const EventStream & s, const EdiConfig & cfg)
{
  if (blur.width() != s.width() || blur.height() != s.height()) {
    throw Error("blurred image size does not match event stream");
  }
  const VoxelGrid d = edi_denominator(s, cfg);
  const double count = 2.0 * cfg.half_intervals + 1.0;
  std::vector<double> out(blur.size());
  for (int y = 0; y < blur.height(); ++y) {
    for (int x = 0; x < blur.width(); ++x) {
      out[static_cast<std::size_t>(y) * blur.width() + x] =
        blur.at(x, y) * (count / d.at(x, y, 0));
    }
  }
  return cfg.clamp_output ? Image::from_values(blur.width(), blur.height(), std::move(out))
                          : Image::from_values_unclamped(blur.width(), blur.height(),
                                                         std::move(out));
}

// All 2N+1 latent frames: frame i re-exposes the midpoint reconstruction by
// exp(c * E_i), with E_N = 0 giving the midpoint back unchanged. Their mean
// reproduces the blurred input by construction.
inline FrameSequence edi_sequence(const Image & blur, const EventStream & s,
                                  const EdiConfig & cfg)
{
  if (blur.width() != s.width() || blur.height() != s.height()) {
    throw Error("blurred image size does not match event stream");
  }
  detail::check_edi_inputs(s, cfg);
  const int n = cfg.half_intervals;
  const ScerGrid sc = scer(s, n);

  EdiConfig mid_cfg = cfg;
  mid_cfg.clamp_output = false;
  const Image latent_mid = edi_deblur(blur, s, mid_cfg);

  std::vector<Image> frames;
  frames.reserve(2 * n + 1);
  for (int i = 0; i <= 2 * n; ++i) {
    std::vector<double> out(blur.size());
    for (int y = 0; y < blur.height(); ++y) {
      for (int x = 0; x < blur.width(); ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * blur.width() + x;
        if (i == n) {
          out[idx] = latent_mid.at(x, y);
        } else {
          const int k = i < n ? i : i - 1;
          out[idx] = latent_mid.at(x, y) *
                     std::exp(detail::threshold_at(cfg, x, y) * sc.grid.at(x, y, k));
        }
      }
    }
    frames.push_back(cfg.clamp_output
                       ? Image::from_values(blur.width(), blur.height(), std::move(out))
                       : Image::from_values_unclamped(blur.width(), blur.height(),
                                                      std::move(out)));
  }
  return FrameSequence::uniform(std::move(frames), s.t_start(), s.t_end());
}
}  // namespace evblur

#endif  // EVBLUR_EDI_HPP
