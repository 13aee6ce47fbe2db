#ifndef EVBLUR_ATTENTION_HPP
#define EVBLUR_ATTENTION_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "evblur/core.hpp"
#include "evblur/io.hpp"

// Cross-modal channel attention between an image feature grid and an event
// feature grid, written as a plain reference kernel: per-pixel layer norm on
// each branch, 1x1 projections to queries (image) and keys/values (events),
// channel-by-channel attention normalized over key channels, an output
// projection added onto the raw image features, then a two-layer GELU MLP
// with residual. The backward pass is fully analytic and is validated
// against central finite differences.
namespace evblur
{
struct Matrix
{
  int rows{0};
  int cols{0};
  std::vector<double> v;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
  : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill)
  {
  }

  double & at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

namespace detail
{
inline Matrix matmul(const Matrix & a, const Matrix & b)
{
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double s = a.at(i, k);
      if (s == 0.0) {
        continue;
      }
      for (int j = 0; j < b.cols; ++j) {
        out.at(i, j) += s * b.at(k, j);
      }
    }
  }
  return out;
}

inline Matrix matmul_tn(const Matrix & a, const Matrix & b)  // a^T * b
{
  Matrix out(a.cols, b.cols);
  for (int k = 0; k < a.rows; ++k) {
    for (int i = 0; i < a.cols; ++i) {
      const double s = a.at(k, i);
      if (s == 0.0) {
        continue;
      }
      for (int j = 0; j < b.cols; ++j) {
        out.at(i, j) += s * b.at(k, j);
      }
    }
  }
  return out;
}

inline Matrix matmul_nt(const Matrix & a, const Matrix & b)  // a * b^T
{
  Matrix out(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < b.rows; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) {
        acc += a.at(i, k) * b.at(j, k);
      }
      out.at(i, j) = acc;
    }
  }
  return out;
}

inline std::vector<double> column_sums(const Matrix & a)
{
  std::vector<double> out(static_cast<std::size_t>(a.cols), 0.0);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < a.cols; ++j) {
      out[static_cast<std::size_t>(j)] += a.at(i, j);
    }
  }
  return out;
}

inline double gauss_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline double gauss_pdf(double x)
{
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}

inline double gelu(double x) { return x * gauss_cdf(x); }

inline double gelu_grad(double x) { return gauss_cdf(x) + x * gauss_pdf(x); }
}  // namespace detail

// Dense per-pixel feature vectors, pixel-major: value(p, ch) lives at
// p * channels + ch with pixels in row-major order.
struct FeatureGrid
{
  int h{0};
  int w{0};
  int channels{0};
  std::vector<double> v;

  FeatureGrid() = default;
  FeatureGrid(int h_, int w_, int channels_)
  : h(h_), w(w_), channels(channels_), v(static_cast<std::size_t>(h_) * w_ * channels_, 0.0)
  {
    if (h_ < 1 || w_ < 1 || channels_ < 1) {
      throw Error("feature grid dimensions must be positive");
    }
  }

  static FeatureGrid random(int h, int w, int channels, std::uint64_t seed)
  {
    FeatureGrid g(h, w, channels);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double & x : g.v) {
      x = dist(rng);
    }
    return g;
  }

  int pixels() const { return h * w; }

  Matrix as_matrix() const
  {
    Matrix m(pixels(), channels);
    m.v = v;
    return m;
  }

  static FeatureGrid from_matrix(const Matrix & m, int h, int w)
  {
    FeatureGrid g(h, w, m.cols);
    g.v = m.v;
    return g;
  }
};

struct AttentionParams
{
  int channels{0};       // C, feature width of both input branches
  int proj_channels{0};  // c, width of the query/key/value projections
  int mlp_ratio{2};      // r, hidden width multiplier of the MLP
  int heads{1};
  double norm_eps{1e-5};

  std::vector<double> gamma_img, beta_img, gamma_evt, beta_evt;  // C each
  Matrix w_q, w_k, w_v;                                          // C x c
  std::vector<double> b_q, b_k, b_v;                             // c each
  Matrix w_o;                                                    // c x C
  std::vector<double> b_o;                                       // C
  Matrix w1;                                                     // C x rC
  std::vector<double> b1;                                        // rC
  Matrix w2;                                                     // rC x C
  std::vector<double> b2;                                        // C

  static AttentionParams zeros(int channels, int proj_channels, int mlp_ratio, int heads = 1)
  {
    AttentionParams p;
    p.channels = channels;
    p.proj_channels = proj_channels;
    p.mlp_ratio = mlp_ratio;
    p.heads = heads;
    const int hidden = channels * mlp_ratio;
    p.gamma_img.assign(channels, 0.0);
    p.beta_img.assign(channels, 0.0);
    p.gamma_evt.assign(channels, 0.0);
    p.beta_evt.assign(channels, 0.0);
    p.w_q = Matrix(channels, proj_channels);
    p.w_k = Matrix(channels, proj_channels);
    p.w_v = Matrix(channels, proj_channels);
    p.b_q.assign(proj_channels, 0.0);
    p.b_k.assign(proj_channels, 0.0);
    p.b_v.assign(proj_channels, 0.0);
    p.w_o = Matrix(proj_channels, channels);
    p.b_o.assign(channels, 0.0);
    p.w1 = Matrix(channels, hidden);
    p.b1.assign(hidden, 0.0);
    p.w2 = Matrix(hidden, channels);
    p.b2.assign(channels, 0.0);
    p.validate();
    return p;
  }

  static AttentionParams random(int channels, int proj_channels, int mlp_ratio, int heads,
                                std::uint64_t seed)
  {
    AttentionParams p = zeros(channels, proj_channels, mlp_ratio, heads);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    auto fill_mat = [&](Matrix & m, double scale) {
      for (double & x : m.v) {
        x = scale * unit(rng);
      }
    };
    auto fill_vec = [&](std::vector<double> & v, double center, double scale) {
      for (double & x : v) {
        x = center + scale * unit(rng);
      }
    };
    fill_vec(p.gamma_img, 1.0, 0.1);
    fill_vec(p.beta_img, 0.0, 0.1);
    fill_vec(p.gamma_evt, 1.0, 0.1);
    fill_vec(p.beta_evt, 0.0, 0.1);
    fill_mat(p.w_q, 1.0 / std::sqrt(static_cast<double>(channels)));
    fill_vec(p.b_q, 0.0, 0.1);
    fill_mat(p.w_k, 1.0 / std::sqrt(static_cast<double>(channels)));
    fill_vec(p.b_k, 0.0, 0.1);
    fill_mat(p.w_v, 1.0 / std::sqrt(static_cast<double>(channels)));
    fill_vec(p.b_v, 0.0, 0.1);
    fill_mat(p.w_o, 1.0 / std::sqrt(static_cast<double>(proj_channels)));
    fill_vec(p.b_o, 0.0, 0.1);
    fill_mat(p.w1, 1.0 / std::sqrt(static_cast<double>(channels)));
    fill_vec(p.b1, 0.0, 0.1);
    fill_mat(p.w2, 1.0 / std::sqrt(static_cast<double>(channels * mlp_ratio)));
    fill_vec(p.b2, 0.0, 0.1);
    return p;
  }

  void validate() const
  {
    if (channels < 1 || proj_channels < 1 || mlp_ratio < 1 || heads < 1) {
      throw Error("attention sizes must be positive");
    }
    if (proj_channels % heads != 0) {
      throw Error("projection width must divide evenly into heads");
    }
    if (!(norm_eps > 0.0)) {
      throw Error("norm epsilon must be positive");
    }
    const auto hidden = static_cast<std::size_t>(channels) * mlp_ratio;
    const auto cs = static_cast<std::size_t>(channels);
    const auto ps = static_cast<std::size_t>(proj_channels);
    const bool ok =
      gamma_img.size() == cs && beta_img.size() == cs && gamma_evt.size() == cs &&
      beta_evt.size() == cs && w_q.rows == channels && w_q.cols == proj_channels &&
      w_k.rows == channels && w_k.cols == proj_channels && w_v.rows == channels &&
      w_v.cols == proj_channels && b_q.size() == ps && b_k.size() == ps && b_v.size() == ps &&
      w_o.rows == proj_channels && w_o.cols == channels && b_o.size() == cs &&
      w1.rows == channels && static_cast<std::size_t>(w1.cols) == hidden && b1.size() == hidden &&
      static_cast<std::size_t>(w2.rows) == hidden && w2.cols == channels && b2.size() == cs;
    if (!ok) {
      throw Error("attention parameter shapes are inconsistent");
    }
  }
};

struct EicaOptions
{
  // strict mode insists the projection width stays below the pixel count,
  // since the channel attention matrix has rank at most h*w
  bool strict = true;
  bool bypass_attention = false;
};

struct EicaTrace
{
  std::vector<Matrix> attention;  // one map per head, (c/heads) x (c/heads)
};

namespace detail
{
struct EicaWorkspace
{
  Matrix x_img, x_evt;        // P x C raw inputs
  Matrix xhat_img, xhat_evt;  // standardized, pre gamma/beta
  std::vector<double> inv_sigma_img, inv_sigma_evt;
  Matrix n_img, n_evt;  // after gamma/beta
  Matrix q, k, v;       // P x c
  std::vector<Matrix> att;
  Matrix o;    // P x c
  Matrix s;    // P x C, raw image features plus attention output
  Matrix u;    // P x rC, pre-GELU
  Matrix g;    // P x rC, post-GELU
  Matrix out;  // P x C
};

inline void layer_norm_rows(const Matrix & x, const std::vector<double> & gamma,
                            const std::vector<double> & beta, double eps, Matrix & xhat,
                            std::vector<double> & inv_sigma, Matrix & n)
{
  xhat = Matrix(x.rows, x.cols);
  n = Matrix(x.rows, x.cols);
  inv_sigma.assign(static_cast<std::size_t>(x.rows), 0.0);
  const double inv_c = 1.0 / static_cast<double>(x.cols);
  for (int p = 0; p < x.rows; ++p) {
    double mean = 0.0;
    for (int i = 0; i < x.cols; ++i) {
      mean += x.at(p, i);
    }
    mean *= inv_c;
    double var = 0.0;
    for (int i = 0; i < x.cols; ++i) {
      const double d = x.at(p, i) - mean;
      var += d * d;
    }
    var *= inv_c;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[static_cast<std::size_t>(p)] = inv;
    for (int i = 0; i < x.cols; ++i) {
      const double xh = (x.at(p, i) - mean) * inv;
      xhat.at(p, i) = xh;
      n.at(p, i) = gamma[static_cast<std::size_t>(i)] * xh + beta[static_cast<std::size_t>(i)];
    }
  }
}

// dX for y = (x - mean) * inv_sigma given dXhat, all per row.
inline Matrix layer_norm_rows_backward(const Matrix & dxhat, const Matrix & xhat,
                                       const std::vector<double> & inv_sigma)
{
  Matrix dx(dxhat.rows, dxhat.cols);
  const double inv_c = 1.0 / static_cast<double>(dxhat.cols);
  for (int p = 0; p < dxhat.rows; ++p) {
    double m1 = 0.0;
    double m2 = 0.0;
    for (int i = 0; i < dxhat.cols; ++i) {
      m1 += dxhat.at(p, i);
      m2 += dxhat.at(p, i) * xhat.at(p, i);
    }
    m1 *= inv_c;
    m2 *= inv_c;
    for (int i = 0; i < dxhat.cols; ++i) {
      dx.at(p, i) =
        inv_sigma[static_cast<std::size_t>(p)] * (dxhat.at(p, i) - m1 - xhat.at(p, i) * m2);
    }
  }
  return dx;
}

inline Matrix project(const Matrix & n, const Matrix & w, const std::vector<double> & b)
{
  Matrix out = matmul(n, w);
  for (int p = 0; p < out.rows; ++p) {
    for (int j = 0; j < out.cols; ++j) {
      out.at(p, j) += b[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

inline Matrix head_slice(const Matrix & m, int head, int head_width)
{
  Matrix out(m.rows, head_width);
  for (int p = 0; p < m.rows; ++p) {
    for (int j = 0; j < head_width; ++j) {
      out.at(p, j) = m.at(p, head * head_width + j);
    }
  }
  return out;
}

inline void head_unslice(Matrix & m, const Matrix & part, int head, int head_width)
{
  for (int p = 0; p < m.rows; ++p) {
    for (int j = 0; j < head_width; ++j) {
      m.at(p, head * head_width + j) = part.at(p, j);
    }
  }
}

inline Matrix column_softmax(const Matrix & logits)
{
  Matrix a(logits.rows, logits.cols);
  for (int j = 0; j < logits.cols; ++j) {
    double mx = logits.at(0, j);
    for (int i = 1; i < logits.rows; ++i) {
      mx = std::max(mx, logits.at(i, j));
    }
    double denom = 0.0;
    for (int i = 0; i < logits.rows; ++i) {
      denom += std::exp(logits.at(i, j) - mx);
    }
    for (int i = 0; i < logits.rows; ++i) {
      a.at(i, j) = std::exp(logits.at(i, j) - mx) / denom;
    }
  }
  return a;
}

inline Matrix column_softmax_backward(const Matrix & a, const Matrix & da)
{
  Matrix dl(a.rows, a.cols);
  for (int j = 0; j < a.cols; ++j) {
    double dot = 0.0;
    for (int i = 0; i < a.rows; ++i) {
      dot += a.at(i, j) * da.at(i, j);
    }
    for (int i = 0; i < a.rows; ++i) {
      dl.at(i, j) = a.at(i, j) * (da.at(i, j) - dot);
    }
  }
  return dl;
}

inline void check_eica_inputs(const FeatureGrid & img, const FeatureGrid & evt,
                              const AttentionParams & p, const EicaOptions & opts)
{
  p.validate();
  if (img.h != evt.h || img.w != evt.w) {
    throw Error("image and event feature grids differ in size");
  }
  if (img.channels != p.channels || evt.channels != p.channels) {
    throw Error("feature channel count does not match parameters");
  }
  if (opts.strict && p.proj_channels >= img.pixels()) {
    throw Error("projection width must stay below the pixel count in strict mode");
  }
}

inline void eica_run(const FeatureGrid & img, const FeatureGrid & evt, const AttentionParams & p,
                     const EicaOptions & opts, EicaWorkspace & ws)
{
  check_eica_inputs(img, evt, p, opts);
  ws.x_img = img.as_matrix();
  ws.x_evt = evt.as_matrix();

  if (opts.bypass_attention) {
    ws.s = ws.x_img;
  } else {
    layer_norm_rows(ws.x_img, p.gamma_img, p.beta_img, p.norm_eps, ws.xhat_img, ws.inv_sigma_img,
                    ws.n_img);
    layer_norm_rows(ws.x_evt, p.gamma_evt, p.beta_evt, p.norm_eps, ws.xhat_evt, ws.inv_sigma_evt,
                    ws.n_evt);
    ws.q = project(ws.n_img, p.w_q, p.b_q);
    ws.k = project(ws.n_evt, p.w_k, p.b_k);
    ws.v = project(ws.n_evt, p.w_v, p.b_v);

    const int head_width = p.proj_channels / p.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(img.pixels()));
    ws.att.clear();
    ws.o = Matrix(ws.q.rows, p.proj_channels);
    for (int hh = 0; hh < p.heads; ++hh) {
      const Matrix qh = head_slice(ws.q, hh, head_width);
      const Matrix kh = head_slice(ws.k, hh, head_width);
      const Matrix vh = head_slice(ws.v, hh, head_width);
      Matrix logits = matmul_tn(qh, kh);
      for (double & x : logits.v) {
        x *= scale;
      }
      const Matrix a = column_softmax(logits);
      head_unslice(ws.o, matmul(vh, a), hh, head_width);
      ws.att.push_back(a);
    }

    const Matrix y = project(ws.o, p.w_o, p.b_o);
    ws.s = ws.x_img;
    for (std::size_t i = 0; i < ws.s.v.size(); ++i) {
      ws.s.v[i] += y.v[i];
    }
  }

  ws.u = project(ws.s, p.w1, p.b1);
  ws.g = ws.u;
  for (double & x : ws.g.v) {
    x = gelu(x);
  }
  const Matrix z = project(ws.g, p.w2, p.b2);
  ws.out = ws.s;
  for (std::size_t i = 0; i < ws.out.v.size(); ++i) {
    ws.out.v[i] += z.v[i];
  }
}
}  // namespace detail

inline FeatureGrid eica_forward(const FeatureGrid & img, const FeatureGrid & evt,
                                const AttentionParams & p, const EicaOptions & opts = {},
                                EicaTrace * trace = nullptr)
{
  detail::EicaWorkspace ws;
  detail::eica_run(img, evt, p, opts, ws);
  if (trace) {
    trace->attention = ws.att;
  }
  return FeatureGrid::from_matrix(ws.out, img.h, img.w);
}

struct EicaGradients
{
  FeatureGrid d_img;
  FeatureGrid d_evt;
  AttentionParams d_params;  // same shapes as the parameters, holding gradients
};

inline EicaGradients eica_backward(const FeatureGrid & img, const FeatureGrid & evt,
                                   const AttentionParams & p, const FeatureGrid & upstream,
                                   const EicaOptions & opts = {})
{
  using namespace detail;
  if (upstream.h != img.h || upstream.w != img.w || upstream.channels != p.channels) {
    throw Error("upstream gradient shape does not match the output");
  }
  EicaWorkspace ws;
  eica_run(img, evt, p, opts, ws);

  EicaGradients g;
  g.d_img = FeatureGrid(img.h, img.w, img.channels);
  g.d_evt = FeatureGrid(evt.h, evt.w, evt.channels);
  g.d_params = AttentionParams::zeros(p.channels, p.proj_channels, p.mlp_ratio, p.heads);
  g.d_params.norm_eps = p.norm_eps;

  const Matrix d_out = upstream.as_matrix();

  // MLP with residual: out = s + w2^T gelu(w1^T s + b1) + b2
  const Matrix & d_z = d_out;
  g.d_params.w2 = matmul_tn(ws.g, d_z);
  g.d_params.b2 = column_sums(d_z);
  const Matrix d_g = matmul_nt(d_z, p.w2);
  Matrix d_u = d_g;
  for (std::size_t i = 0; i < d_u.v.size(); ++i) {
    d_u.v[i] *= gelu_grad(ws.u.v[i]);
  }
  g.d_params.w1 = matmul_tn(ws.s, d_u);
  g.d_params.b1 = column_sums(d_u);
  Matrix d_s = matmul_nt(d_u, p.w1);
  for (std::size_t i = 0; i < d_s.v.size(); ++i) {
    d_s.v[i] += d_out.v[i];
  }

  if (opts.bypass_attention) {
    g.d_img.v = d_s.v;
    return g;
  }

  // output projection and the raw-image residual into s
  Matrix d_x_img = d_s;
  const Matrix & d_y = d_s;
  g.d_params.w_o = matmul_tn(ws.o, d_y);
  g.d_params.b_o = column_sums(d_y);
  const Matrix d_o = matmul_nt(d_y, p.w_o);

  const int head_width = p.proj_channels / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(img.pixels()));
  Matrix d_q(ws.q.rows, ws.q.cols);
  Matrix d_k(ws.k.rows, ws.k.cols);
  Matrix d_v(ws.v.rows, ws.v.cols);
  for (int hh = 0; hh < p.heads; ++hh) {
    const Matrix qh = head_slice(ws.q, hh, head_width);
    const Matrix kh = head_slice(ws.k, hh, head_width);
    const Matrix vh = head_slice(ws.v, hh, head_width);
    const Matrix d_oh = head_slice(d_o, hh, head_width);
    const Matrix & a = ws.att[static_cast<std::size_t>(hh)];

    const Matrix d_vh = matmul_nt(d_oh, a);
    const Matrix d_a = matmul_tn(vh, d_oh);
    Matrix d_logits = column_softmax_backward(a, d_a);
    for (double & x : d_logits.v) {
      x *= scale;
    }
    head_unslice(d_q, matmul_nt(kh, d_logits), hh, head_width);
    head_unslice(d_k, matmul(qh, d_logits), hh, head_width);
    head_unslice(d_v, d_vh, hh, head_width);
  }

  g.d_params.w_q = matmul_tn(ws.n_img, d_q);
  g.d_params.b_q = column_sums(d_q);
  g.d_params.w_k = matmul_tn(ws.n_evt, d_k);
  g.d_params.b_k = column_sums(d_k);
  g.d_params.w_v = matmul_tn(ws.n_evt, d_v);
  g.d_params.b_v = column_sums(d_v);

  Matrix d_n_img = matmul_nt(d_q, p.w_q);
  Matrix d_n_evt = matmul_nt(d_k, p.w_k);
  const Matrix d_n_evt_v = matmul_nt(d_v, p.w_v);
  for (std::size_t i = 0; i < d_n_evt.v.size(); ++i) {
    d_n_evt.v[i] += d_n_evt_v.v[i];
  }

  auto norm_backward = [](const Matrix & d_n, const Matrix & xhat,
                          const std::vector<double> & inv_sigma,
                          const std::vector<double> & gamma, std::vector<double> & d_gamma,
                          std::vector<double> & d_beta) {
    for (int pp = 0; pp < d_n.rows; ++pp) {
      for (int i = 0; i < d_n.cols; ++i) {
        d_gamma[static_cast<std::size_t>(i)] += d_n.at(pp, i) * xhat.at(pp, i);
        d_beta[static_cast<std::size_t>(i)] += d_n.at(pp, i);
      }
    }
    Matrix d_xhat = d_n;
    for (int pp = 0; pp < d_xhat.rows; ++pp) {
      for (int i = 0; i < d_xhat.cols; ++i) {
        d_xhat.at(pp, i) *= gamma[static_cast<std::size_t>(i)];
      }
    }
    return layer_norm_rows_backward(d_xhat, xhat, inv_sigma);
  };

  const Matrix d_x_img_norm = norm_backward(d_n_img, ws.xhat_img, ws.inv_sigma_img, p.gamma_img,
                                            g.d_params.gamma_img, g.d_params.beta_img);
  const Matrix d_x_evt_norm = norm_backward(d_n_evt, ws.xhat_evt, ws.inv_sigma_evt, p.gamma_evt,
                                            g.d_params.gamma_evt, g.d_params.beta_evt);
  for (std::size_t i = 0; i < d_x_img.v.size(); ++i) {
    d_x_img.v[i] += d_x_img_norm.v[i];
  }
  g.d_img.v = d_x_img.v;
  g.d_evt.v = d_x_evt_norm.v;
  return g;
}

namespace detail
{
template <typename Params, typename Fn>
void for_each_param_tensor(Params & p, Fn && fn)
{
  fn("gamma_img", p.gamma_img);
  fn("beta_img", p.beta_img);
  fn("gamma_evt", p.gamma_evt);
  fn("beta_evt", p.beta_evt);
  fn("w_q", p.w_q.v);
  fn("b_q", p.b_q);
  fn("w_k", p.w_k.v);
  fn("b_k", p.b_k);
  fn("w_v", p.w_v.v);
  fn("b_v", p.b_v);
  fn("w_o", p.w_o.v);
  fn("b_o", p.b_o);
  fn("w1", p.w1.v);
  fn("b1", p.b1);
  fn("w2", p.w2.v);
  fn("b2", p.b2);
}

inline double loss_sum(const FeatureGrid & img, const FeatureGrid & evt,
                       const AttentionParams & p, const EicaOptions & opts)
{
  const FeatureGrid out = eica_forward(img, evt, p, opts);
  double s = 0.0;
  for (double x : out.v) {
    s += x;
  }
  return s;
}
}  // namespace detail

// Central-difference gradients of the scalar loss sum(eica_forward(...)),
// matching the layout of eica_backward with an all-ones upstream gradient.
inline EicaGradients finite_difference_gradients(const FeatureGrid & img, const FeatureGrid & evt,
                                                 const AttentionParams & p,
                                                 const EicaOptions & opts = {},
                                                 double step = 1e-5)
{
  EicaGradients g;
  g.d_img = FeatureGrid(img.h, img.w, img.channels);
  g.d_evt = FeatureGrid(evt.h, evt.w, evt.channels);
  g.d_params = AttentionParams::zeros(p.channels, p.proj_channels, p.mlp_ratio, p.heads);
  g.d_params.norm_eps = p.norm_eps;

  FeatureGrid img_m = img;
  FeatureGrid evt_m = evt;
  AttentionParams p_m = p;
  auto central = [&](double & slot) {
    const double saved = slot;
    slot = saved + step;
    const double hi = detail::loss_sum(img_m, evt_m, p_m, opts);
    slot = saved - step;
    const double lo = detail::loss_sum(img_m, evt_m, p_m, opts);
    slot = saved;
    return (hi - lo) / (2.0 * step);
  };

  for (std::size_t i = 0; i < img_m.v.size(); ++i) {
    g.d_img.v[i] = central(img_m.v[i]);
  }
  for (std::size_t i = 0; i < evt_m.v.size(); ++i) {
    g.d_evt.v[i] = central(evt_m.v[i]);
  }
  std::vector<std::vector<double> *> mut_tensors;
  detail::for_each_param_tensor(p_m, [&](const char *, std::vector<double> & t) {
    mut_tensors.push_back(&t);
  });
  std::vector<std::vector<double> *> grad_tensors;
  detail::for_each_param_tensor(g.d_params, [&](const char *, std::vector<double> & t) {
    grad_tensors.push_back(&t);
  });
  for (std::size_t ti = 0; ti < mut_tensors.size(); ++ti) {
    for (std::size_t i = 0; i < mut_tensors[ti]->size(); ++i) {
      (*grad_tensors[ti])[i] = central((*mut_tensors[ti])[i]);
    }
  }
  return g;
}

// Worst relative disagreement per tensor, with |a| + |b| floored at 1e-4 in
// the denominator so near-zero gradients compare by absolute error.
inline std::vector<std::pair<std::string, double>> gradient_differences(const EicaGradients & a,
                                                                        const EicaGradients & b)
{
  auto worst = [](const std::vector<double> & x, const std::vector<double> & y) {
    if (x.size() != y.size()) {
      throw Error("gradient tensors differ in shape");
    }
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double denom = std::max(std::abs(x[i]) + std::abs(y[i]), 1e-4);
      m = std::max(m, std::abs(x[i] - y[i]) / denom);
    }
    return m;
  };
  std::vector<std::pair<std::string, double>> out;
  out.emplace_back("input_img", worst(a.d_img.v, b.d_img.v));
  out.emplace_back("input_evt", worst(a.d_evt.v, b.d_evt.v));
  std::vector<std::pair<std::string, const std::vector<double> *>> ta;
  detail::for_each_param_tensor(a.d_params, [&](const char * name, const std::vector<double> & t) {
    ta.emplace_back(name, &t);
  });
  std::vector<const std::vector<double> *> tb;
  detail::for_each_param_tensor(b.d_params, [&](const char *, const std::vector<double> & t) {
    tb.push_back(&t);
  });
  for (std::size_t i = 0; i < ta.size(); ++i) {
    out.emplace_back(ta[i].first, worst(*ta[i].second, *tb[i]));
  }
  return out;
}

inline double max_gradient_difference(const EicaGradients & a, const EicaGradients & b)
{
  double m = 0.0;
  for (const auto & [name, err] : gradient_differences(a, b)) {
    m = std::max(m, err);
  }
  return m;
}

struct GradCheckReport
{
  bool pass{false};
  double max_rel_err{0.0};
  double tolerance{0.0};
  std::vector<std::pair<std::string, double>> groups;
};

// Draws random inputs, runs the analytic backward pass against central
// finite differences, and reports the worst relative error over inputs and
// every parameter tensor.
inline GradCheckReport grad_check(const AttentionParams & p, int h, int w, double tolerance,
                                  std::uint64_t seed, const EicaOptions & opts = {})
{
  const FeatureGrid img = FeatureGrid::random(h, w, p.channels, seed);
  const FeatureGrid evt = FeatureGrid::random(h, w, p.channels, seed + 1);
  FeatureGrid upstream(h, w, p.channels);
  for (double & x : upstream.v) {
    x = 1.0;
  }
  const EicaGradients analytic = eica_backward(img, evt, p, upstream, opts);
  const EicaGradients numeric = finite_difference_gradients(img, evt, p, opts);
  GradCheckReport report;
  report.tolerance = tolerance;
  report.groups = gradient_differences(analytic, numeric);
  for (const auto & [name, err] : report.groups) {
    report.max_rel_err = std::max(report.max_rel_err, err);
  }
  report.pass = report.max_rel_err <= tolerance;
  return report;
}

// Parameter container on disk: "ATN1", u16 C, u16 c, u16 r, u16 heads, then
// each tensor as a VOX1 block (rows as height, cols as width, one channel)
// in declaration order, then a 1x1 block holding norm_eps. float32 storage,
// so save -> load -> save is idempotent but doubles are rounded once.
inline void save_params(const AttentionParams & p, const std::filesystem::path & path)
{
  p.validate();
  std::string out = "ATN1";
  io::detail::put_u16(out, static_cast<std::uint16_t>(p.channels));
  io::detail::put_u16(out, static_cast<std::uint16_t>(p.proj_channels));
  io::detail::put_u16(out, static_cast<std::uint16_t>(p.mlp_ratio));
  io::detail::put_u16(out, static_cast<std::uint16_t>(p.heads));
  auto put_block = [&out](int rows, int cols, const std::vector<double> & v) {
    VoxelGrid g = VoxelGrid::from_values(cols, rows, 1, v);
    out += io::encode_voxels(g);
  };
  detail::for_each_param_tensor(p, [&](const char * name, const std::vector<double> & t) {
    const std::string n(name);
    int rows = 1;
    int cols = static_cast<int>(t.size());
    if (n == "w_q" || n == "w_k" || n == "w_v") {
      rows = p.channels;
      cols = p.proj_channels;
    } else if (n == "w_o") {
      rows = p.proj_channels;
      cols = p.channels;
    } else if (n == "w1") {
      rows = p.channels;
      cols = p.channels * p.mlp_ratio;
    } else if (n == "w2") {
      rows = p.channels * p.mlp_ratio;
      cols = p.channels;
    }
    put_block(rows, cols, t);
  });
  put_block(1, 1, {p.norm_eps});
  io::detail::dump(path, out);
}

inline AttentionParams load_params(const std::filesystem::path & path)
{
  const std::string data = io::detail::slurp(path);
  const std::string name = path.filename().string();
  io::detail::ByteReader r(data, name);
  r.expect_magic("ATN1");
  const int channels = r.u16();
  const int proj_channels = r.u16();
  const int mlp_ratio = r.u16();
  const int heads = r.u16();
  std::size_t off = 12;
  AttentionParams p = AttentionParams::zeros(channels, proj_channels, mlp_ratio, heads);
  auto read_block = [&](std::vector<double> & t, int rows, int cols) {
    const std::size_t bytes = 12 + static_cast<std::size_t>(rows) * cols * 4;
    if (data.size() < off + bytes) {
      throw Error(name + ": truncated file");
    }
    const VoxelGrid g = io::decode_voxels(std::string_view(data).substr(off, bytes), name);
    if (g.width() != cols || g.height() != rows || g.channels() != 1) {
      throw Error(name + ": tensor block has unexpected shape");
    }
    t = g.values();
    off += bytes;
  };
  detail::for_each_param_tensor(p, [&](const char * n, std::vector<double> & t) {
    const std::string nm(n);
    int rows = 1;
    int cols = static_cast<int>(t.size());
    if (nm == "w_q" || nm == "w_k" || nm == "w_v") {
      rows = channels;
      cols = proj_channels;
    } else if (nm == "w_o") {
      rows = proj_channels;
      cols = channels;
    } else if (nm == "w1") {
      rows = channels;
      cols = channels * mlp_ratio;
    } else if (nm == "w2") {
      rows = channels * mlp_ratio;
      cols = channels;
    }
    read_block(t, rows, cols);
  });
  std::vector<double> eps_block;
  {
    std::vector<double> tmp(1, 0.0);
    read_block(tmp, 1, 1);
    eps_block = tmp;
  }
  if (off != data.size()) {
    throw Error(name + ": trailing bytes after payload");
  }
  p.norm_eps = eps_block[0];
  p.validate();
  return p;
}
}  // namespace evblur

#endif  // EVBLUR_ATTENTION_HPP
