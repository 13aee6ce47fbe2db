#include <catch2/catch_amalgamated.hpp>

#include "evblur/attention.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using evblur::AttentionParams;
using evblur::EicaGradients;
using evblur::EicaOptions;
using evblur::EicaTrace;
using evblur::FeatureGrid;
using evblur::GradCheckReport;
using evblur::Matrix;

TEST_CASE("smooth step activation matches its closed form")
{
  CHECK(evblur::detail::gelu(0.0) == 0.0);
  CHECK(evblur::detail::gelu(1.0) ==
        Catch::Approx(0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)))).epsilon(1e-14));
  CHECK(evblur::detail::gelu(-1.0) ==
        Catch::Approx(-0.5 * (1.0 + std::erf(-1.0 / std::sqrt(2.0)))).epsilon(1e-14));
  for (double x : {-2.0, -0.7, 0.0, 0.3, 1.9}) {
    const double h = 1e-6;
    const double numeric = (evblur::detail::gelu(x + h) - evblur::detail::gelu(x - h)) / (2.0 * h);
    CHECK(evblur::detail::gelu_grad(x) == Catch::Approx(numeric).margin(1e-9));
  }
}

TEST_CASE("the fused block matches a scalar reference evaluation")
{
  const AttentionParams p = AttentionParams::random(6, 3, 2, 1, 11);
  const FeatureGrid img = FeatureGrid::random(3, 4, 6, 21);
  const FeatureGrid evt = FeatureGrid::random(3, 4, 6, 22);
  EicaTrace trace;
  const FeatureGrid out = evblur::eica_forward(img, evt, p, {}, &trace);
  const oracles::EicaOracleOut ref = oracles::eica_forward_scalar(img, evt, p);

  REQUIRE(out.v.size() == ref.out.size());
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    REQUIRE(out.v[i] == Catch::Approx(ref.out[i]).margin(1e-12));
  }
  REQUIRE(trace.attention.size() == 1);
  const Matrix & a = trace.attention[0];
  REQUIRE(a.rows == 3);
  REQUIRE(a.cols == 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      REQUIRE(a.at(i, j) == Catch::Approx(ref.att[i][j]).margin(1e-12));
    }
  }
}

TEST_CASE("attention maps are channel-square probability columns at any image size")
{
  const int c = 4;
  const AttentionParams p = AttentionParams::random(8, c, 2, 1, 5);
  for (int side : {4, 8, 16, 32}) {
    const FeatureGrid img = FeatureGrid::random(side, side, 8, 1);
    const FeatureGrid evt = FeatureGrid::random(side, side, 8, 2);
    EicaTrace trace;
    evblur::eica_forward(img, evt, p, {}, &trace);
    REQUIRE(trace.attention.size() == 1);
    const Matrix & a = trace.attention[0];
    CHECK(a.rows == c);
    CHECK(a.cols == c);
    for (double v : a.v) {
      CHECK(v >= 0.0);
    }
    for (double s : evblur::detail::column_sums(a)) {
      CHECK(s == Catch::Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("strict mode rejects projections as wide as the pixel count")
{
  const AttentionParams p = AttentionParams::random(8, 16, 2, 1, 3);
  const FeatureGrid img = FeatureGrid::random(4, 4, 8, 1);
  const FeatureGrid evt = FeatureGrid::random(4, 4, 8, 2);
  CHECK_THROWS_WITH(evblur::eica_forward(img, evt, p),
                    Catch::Matchers::ContainsSubstring("pixel count"));
  EicaOptions relaxed;
  relaxed.strict = false;
  CHECK_NOTHROW(evblur::eica_forward(img, evt, p, relaxed));
}

TEST_CASE("all-zero parameters make the block an identity map")
{
  const AttentionParams p = AttentionParams::zeros(5, 2, 2);
  const FeatureGrid img = FeatureGrid::random(4, 5, 5, 77);
  const FeatureGrid evt = FeatureGrid::random(4, 5, 5, 78);
  const FeatureGrid out = evblur::eica_forward(img, evt, p);
  CHECK(out.v == img.v);
}

TEST_CASE("bypassing attention leaves a plain residual MLP")
{
  const AttentionParams p = AttentionParams::random(4, 2, 2, 1, 9);
  const FeatureGrid img = FeatureGrid::random(3, 3, 4, 31);
  const FeatureGrid evt = FeatureGrid::random(3, 3, 4, 32);
  EicaOptions opts;
  opts.bypass_attention = true;
  const FeatureGrid out = evblur::eica_forward(img, evt, p, opts);

  const int P = img.pixels();
  const int C = 4;
  const int H = C * p.mlp_ratio;
  for (int pixel = 0; pixel < P; ++pixel) {
    for (int i = 0; i < C; ++i) {
      double z = 0.0;
      for (int hidden = 0; hidden < H; ++hidden) {
        double u = p.b1[static_cast<std::size_t>(hidden)];
        for (int j = 0; j < C; ++j) {
          u += img.v[static_cast<std::size_t>(pixel) * C + j] * p.w1.at(j, hidden);
        }
        z += evblur::detail::gelu(u) * p.w2.at(hidden, i);
      }
      z += p.b2[static_cast<std::size_t>(i)];
      const double expect = img.v[static_cast<std::size_t>(pixel) * C + i] + z;
      REQUIRE(out.v[static_cast<std::size_t>(pixel) * C + i] ==
              Catch::Approx(expect).margin(1e-12));
    }
  }
}

TEST_CASE("analytic gradients agree with central differences")
{
  const AttentionParams p = AttentionParams::random(8, 4, 2, 1, 13);
  const GradCheckReport report = evblur::grad_check(p, 4, 4, 1e-5, 99);
  INFO("max relative error " << report.max_rel_err);
  CHECK(report.pass);
  CHECK(report.max_rel_err > 0.0);
  CHECK(report.max_rel_err <= 1e-5);
  CHECK(report.groups.size() == 18);  // both inputs plus sixteen parameter tensors
}

TEST_CASE("two-head gradients verify as well")
{
  const AttentionParams p = AttentionParams::random(6, 4, 2, 2, 17);
  const GradCheckReport report = evblur::grad_check(p, 4, 4, 1e-5, 7);
  INFO("max relative error " << report.max_rel_err);
  CHECK(report.pass);

  const FeatureGrid img = FeatureGrid::random(4, 4, 6, 1);
  const FeatureGrid evt = FeatureGrid::random(4, 4, 6, 2);
  EicaTrace trace;
  evblur::eica_forward(img, evt, p, {}, &trace);
  REQUIRE(trace.attention.size() == 2);
  CHECK(trace.attention[0].rows == 2);
  CHECK(trace.attention[0].cols == 2);
}

TEST_CASE("a corrupted gradient cannot pass the finite-difference gate")
{
  const AttentionParams p = AttentionParams::random(6, 3, 2, 1, 23);
  const FeatureGrid img = FeatureGrid::random(4, 4, 6, 3);
  const FeatureGrid evt = FeatureGrid::random(4, 4, 6, 4);
  FeatureGrid upstream(4, 4, 6);
  for (double & x : upstream.v) {
    x = 1.0;
  }
  EicaGradients analytic = evblur::eica_backward(img, evt, p, upstream);
  const EicaGradients numeric = evblur::finite_difference_gradients(img, evt, p);
  CHECK(evblur::max_gradient_difference(analytic, numeric) <= 1e-5);

  for (double & x : analytic.d_params.w_v.v) {
    x *= 1.01;
  }
  CHECK(evblur::max_gradient_difference(analytic, numeric) > 1e-5);
}

TEST_CASE("gradient layouts must line up to be compared")
{
  const AttentionParams a = AttentionParams::random(4, 2, 2, 1, 1);
  const AttentionParams b = AttentionParams::random(4, 4, 2, 1, 1);
  const FeatureGrid img = FeatureGrid::random(3, 3, 4, 1);
  const FeatureGrid evt = FeatureGrid::random(3, 3, 4, 2);
  FeatureGrid ones(3, 3, 4);
  for (double & x : ones.v) {
    x = 1.0;
  }
  const EicaGradients ga = evblur::eica_backward(img, evt, a, ones);
  const EicaGradients gb = evblur::eica_backward(img, evt, b, ones);
  CHECK_THROWS(evblur::max_gradient_difference(ga, gb));
}

TEST_CASE("shape validation covers inputs, upstream, and parameters")
{
  AttentionParams p = AttentionParams::random(6, 3, 2, 1, 2);
  const FeatureGrid img = FeatureGrid::random(4, 4, 6, 1);
  CHECK_THROWS(evblur::eica_forward(img, FeatureGrid::random(4, 5, 6, 2), p));
  CHECK_THROWS(evblur::eica_forward(img, FeatureGrid::random(4, 4, 5, 2), p));

  FeatureGrid bad_upstream(4, 4, 5);
  CHECK_THROWS(evblur::eica_backward(img, FeatureGrid::random(4, 4, 6, 2), p, bad_upstream));

  AttentionParams q = p;
  q.w_q = Matrix(5, 3);
  CHECK_THROWS_WITH(q.validate(), Catch::Matchers::ContainsSubstring("shapes"));
  CHECK_THROWS(AttentionParams::zeros(4, 3, 2, 2));  // heads must divide c
  CHECK_THROWS(AttentionParams::zeros(0, 1, 1, 1));
}

TEST_CASE("parameters survive a disk round trip at single precision")
{
  testutil::TempDir dir;
  const auto path = dir.path() / "block.atn";
  const AttentionParams p = AttentionParams::random(6, 4, 2, 2, 55);
  evblur::save_params(p, path);
  const AttentionParams q = evblur::load_params(path);

  CHECK(q.channels == 6);
  CHECK(q.proj_channels == 4);
  CHECK(q.mlp_ratio == 2);
  CHECK(q.heads == 2);
  CHECK(q.norm_eps == Catch::Approx(p.norm_eps).epsilon(1e-6));
  for (std::size_t i = 0; i < p.w_q.v.size(); ++i) {
    CHECK(q.w_q.v[i] == static_cast<double>(static_cast<float>(p.w_q.v[i])));
  }
  for (std::size_t i = 0; i < p.b2.size(); ++i) {
    CHECK(q.b2[i] == static_cast<double>(static_cast<float>(p.b2[i])));
  }

  // a second trip is bit-stable
  const auto path2 = dir.path() / "block2.atn";
  evblur::save_params(q, path2);
  const AttentionParams r = evblur::load_params(path2);
  CHECK(r.w_o.v == q.w_o.v);
  CHECK(r.gamma_img == q.gamma_img);

  std::ifstream f1(path, std::ios::binary);
  std::ifstream f2(path2, std::ios::binary);
  const std::string bytes1((std::istreambuf_iterator<char>(f1)), {});
  const std::string bytes2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(bytes1 == bytes2);
}

TEST_CASE("loading rejects foreign or truncated files")
{
  testutil::TempDir dir;
  const auto path = dir.path() / "bad.atn";
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOPE";
  }
  CHECK_THROWS(evblur::load_params(path));

  const auto path2 = dir.path() / "short.atn";
  const AttentionParams p = AttentionParams::random(4, 2, 2, 1, 3);
  evblur::save_params(p, path2);
  std::string data;
  {
    std::ifstream f(path2, std::ios::binary);
    data.assign((std::istreambuf_iterator<char>(f)), {});
  }
  {
    std::ofstream f(path2, std::ios::binary);
    f.write(data.data(), static_cast<std::streamsize>(data.size() / 2));
  }
  CHECK_THROWS_WITH(evblur::load_params(path2),
                    Catch::Matchers::ContainsSubstring("truncated"));
}

TEST_CASE("the forward pass is deterministic for fixed seeds")
{
  const AttentionParams p = AttentionParams::random(6, 3, 2, 1, 5);
  const AttentionParams q = AttentionParams::random(6, 3, 2, 1, 5);
  CHECK(p.w_q.v == q.w_q.v);
  CHECK(p.b2 == q.b2);
  const FeatureGrid a = FeatureGrid::random(4, 4, 6, 9);
  const FeatureGrid b = FeatureGrid::random(4, 4, 6, 9);
  CHECK(a.v == b.v);
  CHECK(evblur::eica_forward(a, b, p).v == evblur::eica_forward(a, b, q).v);
}
