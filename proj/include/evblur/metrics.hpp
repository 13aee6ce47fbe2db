#ifndef EVBLUR_METRICS_HPP
#define EVBLUR_METRICS_HPP

#include <array>
#include <cmath>
#include <optional>

#include "evblur/core.hpp"

namespace evblur
{
// Peak signal-to-noise ratio on unit-range images, capped at 99 dB so that
// identical inputs stay finite.
inline double psnr(const Image & a, const Image & b)
{
  if (!a.same_shape(b)) {
    throw Error("images differ in size");
  }
  double se = 0.0;
  const auto & va = a.values();
  const auto & vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = va[i] - vb[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(va.size());
  if (mse <= 0.0) {
    return 99.0;
  }
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace detail
{
inline const std::array<double, 11 * 11> & ssim_window()
{
  static const std::array<double, 11 * 11> w = [] {
    std::array<double, 11 * 11> win{};
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
      for (int j = 0; j < 11; ++j) {
        const double di = i - 5;
        const double dj = j - 5;
        win[static_cast<std::size_t>(i) * 11 + j] =
          std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
        sum += win[static_cast<std::size_t>(i) * 11 + j];
      }
    }
    for (double & v : win) {
      v /= sum;
    }
    return win;
  }();
  return w;
}
}  // namespace detail

// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03 on unit dynamic range. Only windows fully inside the
// image contribute, so inputs must be at least 11x11.
inline double ssim(const Image & a, const Image & b)
{
  if (!a.same_shape(b)) {
    throw Error("images differ in size");
  }
  if (a.width() < 11 || a.height() < 11) {
    throw Error("images must be at least 11x11");
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const auto & win = detail::ssim_window();
  double total = 0.0;
  std::size_t count = 0;
  for (int cy = 5; cy <= a.height() - 6; ++cy) {
    for (int cx = 5; cx <= a.width() - 6; ++cx) {
      double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          const double w = win[static_cast<std::size_t>(i) * 11 + j];
          const double pa = a.at(cx + j - 5, cy + i - 5);
          const double pb = b.at(cx + j - 5, cy + i - 5);
          mu_a += w * pa;
          mu_b += w * pb;
          aa += w * (pa * pa);
          bb += w * (pb * pb);
          ab += w * (pa * pb);  // grouped so swapping the images is exact
        }
      }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      total += ((2.0 * (mu_a * mu_b) + c1) * (2.0 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// Percentage drop in RMSE when moving from `other` to `best`, derived from
// the PSNR gap alone: RMSE scales as 10^(-PSNR/20) at fixed peak.
inline double rmse_reduction(double psnr_best, double psnr_other)
{
  return 100.0 * (1.0 - std::pow(10.0, -(psnr_best - psnr_other) / 20.0));
}

// Percentage drop in structural dissimilarity (1 - SSIM) / 2; the halves
// cancel, so only 1 - SSIM enters.
inline double dssim_reduction(double ssim_best, double ssim_other)
{
  if (ssim_best > 1.0 || ssim_other > 1.0) {
    throw Error("similarity values cannot exceed 1");
  }
  if (ssim_other == 1.0) {
    throw Error("reference similarity of 1 leaves nothing to reduce");
  }
  return 100.0 * (1.0 - (1.0 - ssim_best) / (1.0 - ssim_other));
}

struct MetricReport
{
  double psnr_db{0.0};
  double ssim_val{0.0};
  std::optional<double> rmse_reduction_pct;
  std::optional<double> dssim_reduction_pct;
};

// Compares a reconstruction to ground truth; reductions are filled when the
// caller supplies a baseline to compare against.
inline MetricReport evaluate(const Image & pred, const Image & gt,
                             std::optional<double> baseline_psnr = std::nullopt,
                             std::optional<double> baseline_ssim = std::nullopt)
{
  MetricReport r;
  r.psnr_db = psnr(pred, gt);
  r.ssim_val = ssim(pred, gt);
  if (baseline_psnr) {
    r.rmse_reduction_pct = rmse_reduction(r.psnr_db, *baseline_psnr);
  }
  if (baseline_ssim) {
    r.dssim_reduction_pct = dssim_reduction(r.ssim_val, *baseline_ssim);
  }
  return r;
}
}  // namespace evblur

#endif  // EVBLUR_METRICS_HPP
