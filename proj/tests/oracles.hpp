#ifndef EVBLUR_TESTS_ORACLES_HPP
#define EVBLUR_TESTS_ORACLES_HPP

// Independent reference implementations the tests compare against. These are
// deliberately written as plain nested loops with their own arithmetic paths
// (no shared helpers with the library) so agreement is meaningful.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "evblur/attention.hpp"
#include "evblur/core.hpp"

namespace oracles
{
// Channel-outer rescan of the whole stream per channel, testing interval
// membership against bounds kept as exact integer cross-products.
inline evblur::VoxelGrid scer_bruteforce(const evblur::EventStream & s, int n)
{
  const unsigned k2n = 2 * static_cast<unsigned>(n);
  const auto span = static_cast<unsigned __int128>(s.duration());
  evblur::VoxelGrid g(s.width(), s.height(), static_cast<int>(k2n));
  for (unsigned k = 0; k < k2n; ++k) {
    for (const evblur::Event & e : s.events()) {
      const auto q = static_cast<unsigned __int128>(e.t - s.t_start()) * k2n;
      const unsigned nn = k2n / 2;
      bool member;
      if (k < nn) {
        member = q >= span * k && q <= span * nn;
      } else {
        member = q >= span * nn && q <= span * (k + 1);
      }
      if (member) {
        const double sign = k < nn ? -1.0 : 1.0;
        g.at(e.x, e.y, static_cast<int>(k)) += sign * static_cast<double>(e.p);
      }
    }
  }
  return g;
}

// Bin index by rational comparison without the library's division shortcut.
inline evblur::VoxelGrid sbt_bruteforce(const evblur::EventStream & s, int n)
{
  const unsigned bins = 2 * static_cast<unsigned>(n);
  const auto span = static_cast<unsigned __int128>(s.duration());
  evblur::VoxelGrid g(s.width(), s.height(), static_cast<int>(bins));
  for (const evblur::Event & e : s.events()) {
    const auto q = static_cast<unsigned __int128>(e.t - s.t_start()) * bins;
    for (unsigned b = 0; b < bins; ++b) {
      const bool last = b + 1 == bins;
      const bool in = q >= span * b && (last ? q <= span * (b + 1) : q < span * (b + 1));
      if (in) {
        g.at(e.x, e.y, static_cast<int>(b)) += static_cast<double>(e.p);
        break;
      }
    }
  }
  return g;
}

// True when an event timestamp sits exactly on any of the 2n+1 interval
// boundaries of the window.
inline bool on_any_boundary(std::uint64_t t, std::uint64_t t_start, std::uint64_t span, int n)
{
  const auto q = static_cast<unsigned __int128>(t - t_start) * (2 * static_cast<unsigned>(n));
  return q % span == 0;
}

// Closed-form crossing times for a single monotone log ramp.
struct RampCrossings
{
  std::size_t count;
  std::vector<double> times;
};

inline RampCrossings ramp_crossings(double l0, double l1, double t0, double t1, double c)
{
  RampCrossings out;
  const double delta = std::abs(l1 - l0);
  out.count = static_cast<std::size_t>(std::floor(delta / c));
  for (std::size_t k = 1; k <= out.count; ++k) {
    out.times.push_back(t0 + (static_cast<double>(k) * c / delta) * (t1 - t0));
  }
  return out;
}

// Straight-line scalar evaluation of the cross-modal attention block,
// single head, plain softmax without max subtraction. Returns the output in
// pixel-major layout plus the attention map.
struct EicaOracleOut
{
  std::vector<double> out;
  std::vector<std::vector<double>> att;  // [c][c]
};

inline EicaOracleOut eica_forward_scalar(const evblur::FeatureGrid & img,
                                         const evblur::FeatureGrid & evt,
                                         const evblur::AttentionParams & prm)
{
  const int P = img.pixels();
  const int C = prm.channels;
  const int c = prm.proj_channels;
  const int H = C * prm.mlp_ratio;
  auto x_img = [&](int p, int i) { return img.v[static_cast<std::size_t>(p) * C + i]; };
  auto x_evt = [&](int p, int i) { return evt.v[static_cast<std::size_t>(p) * C + i]; };

  std::vector<std::vector<double>> n_img(P, std::vector<double>(C));
  std::vector<std::vector<double>> n_evt(P, std::vector<double>(C));
  for (int p = 0; p < P; ++p) {
    double mu = 0.0;
    for (int i = 0; i < C; ++i) {
      mu += x_img(p, i);
    }
    mu /= C;
    double var = 0.0;
    for (int i = 0; i < C; ++i) {
      var += (x_img(p, i) - mu) * (x_img(p, i) - mu);
    }
    var /= C;
    for (int i = 0; i < C; ++i) {
      n_img[p][i] = prm.gamma_img[i] * (x_img(p, i) - mu) / std::sqrt(var + prm.norm_eps) +
                    prm.beta_img[i];
    }
    mu = 0.0;
    for (int i = 0; i < C; ++i) {
      mu += x_evt(p, i);
    }
    mu /= C;
    var = 0.0;
    for (int i = 0; i < C; ++i) {
      var += (x_evt(p, i) - mu) * (x_evt(p, i) - mu);
    }
    var /= C;
    for (int i = 0; i < C; ++i) {
      n_evt[p][i] = prm.gamma_evt[i] * (x_evt(p, i) - mu) / std::sqrt(var + prm.norm_eps) +
                    prm.beta_evt[i];
    }
  }

  auto proj = [&](const std::vector<std::vector<double>> & n, const evblur::Matrix & w,
                  const std::vector<double> & b) {
    std::vector<std::vector<double>> r(P, std::vector<double>(c, 0.0));
    for (int p = 0; p < P; ++p) {
      for (int j = 0; j < c; ++j) {
        double acc = b[j];
        for (int i = 0; i < C; ++i) {
          acc += n[p][i] * w.at(i, j);
        }
        r[p][j] = acc;
      }
    }
    return r;
  };
  const auto q = proj(n_img, prm.w_q, prm.b_q);
  const auto k = proj(n_evt, prm.w_k, prm.b_k);
  const auto v = proj(n_evt, prm.w_v, prm.b_v);

  std::vector<std::vector<double>> att(c, std::vector<double>(c, 0.0));
  for (int a = 0; a < c; ++a) {
    for (int b = 0; b < c; ++b) {
      double acc = 0.0;
      for (int p = 0; p < P; ++p) {
        acc += q[p][a] * k[p][b];
      }
      att[a][b] = acc / std::sqrt(static_cast<double>(P));
    }
  }
  for (int b = 0; b < c; ++b) {
    double denom = 0.0;
    for (int a = 0; a < c; ++a) {
      denom += std::exp(att[a][b]);
    }
    for (int a = 0; a < c; ++a) {
      att[a][b] = std::exp(att[a][b]) / denom;
    }
  }

  std::vector<std::vector<double>> s(P, std::vector<double>(C));
  for (int p = 0; p < P; ++p) {
    for (int i = 0; i < C; ++i) {
      double y = prm.b_o[i];
      for (int j = 0; j < c; ++j) {
        double o = 0.0;
        for (int a = 0; a < c; ++a) {
          o += v[p][a] * att[a][j];
        }
        y += o * prm.w_o.at(j, i);
      }
      s[p][i] = x_img(p, i) + y;
    }
  }

  EicaOracleOut result;
  result.out.resize(static_cast<std::size_t>(P) * C);
  for (int p = 0; p < P; ++p) {
    std::vector<double> g(H);
    for (int m = 0; m < H; ++m) {
      double u = prm.b1[m];
      for (int i = 0; i < C; ++i) {
        u += s[p][i] * prm.w1.at(i, m);
      }
      g[m] = u * 0.5 * (1.0 + std::erf(u / std::sqrt(2.0)));
    }
    for (int i = 0; i < C; ++i) {
      double z = prm.b2[i];
      for (int m = 0; m < H; ++m) {
        z += g[m] * prm.w2.at(m, i);
      }
      result.out[static_cast<std::size_t>(p) * C + i] = s[p][i] + z;
    }
  }
  result.att = std::move(att);
  return result;
}

// Random event stream over a fresh window; timestamps avoid the 2n interval
// boundaries when boundary_free is set.
inline evblur::EventStream random_stream(std::mt19937_64 & rng, int max_w, int max_h,
                                         std::size_t max_events, int n, bool boundary_free)
{
  std::uniform_int_distribution<int> wd(1, max_w);
  std::uniform_int_distribution<int> hd(1, max_h);
  const int w = wd(rng);
  const int h = hd(rng);
  std::uniform_int_distribution<std::uint64_t> t0d(0, 1'000'000);
  std::uniform_int_distribution<std::uint64_t> span_d(2 * static_cast<unsigned>(n), 200'000);
  const std::uint64_t t0 = t0d(rng);
  const std::uint64_t span = span_d(rng);
  std::uniform_int_distribution<std::size_t> cntd(0, max_events);
  const std::size_t count = cntd(rng);
  std::uniform_int_distribution<std::uint64_t> td(t0, t0 + span);
  std::uniform_int_distribution<int> xd(0, w - 1);
  std::uniform_int_distribution<int> yd(0, h - 1);
  std::bernoulli_distribution pd(0.5);
  std::vector<evblur::Event> events;
  events.reserve(count);
  while (events.size() < count) {
    evblur::Event e;
    e.t = td(rng);
    if (boundary_free && on_any_boundary(e.t, t0, span, n)) {
      continue;
    }
    e.x = static_cast<std::uint16_t>(xd(rng));
    e.y = static_cast<std::uint16_t>(yd(rng));
    e.p = pd(rng) ? 1 : -1;
    events.push_back(e);
  }
  return evblur::EventStream(w, h, t0, t0 + span, std::move(events));
}
}  // namespace oracles

#endif  // EVBLUR_TESTS_ORACLES_HPP
