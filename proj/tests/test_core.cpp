#include <catch2/catch_amalgamated.hpp>

#include "evblur/core.hpp"

using evblur::Error;
using evblur::Event;
using evblur::EventStream;
using evblur::Image;
using evblur::ThresholdMap;
using evblur::VoxelGrid;

TEST_CASE("canonical order sorts by time, then row, column, polarity")
{
  const Event a{10, 0, 0, 1};
  const Event b{10, 1, 0, 1};
  const Event c{10, 0, 1, 1};
  const Event d{10, 1, 0, -1};
  const Event e{11, 0, 0, -1};
  CHECK(evblur::canonical_less(a, b));
  CHECK(evblur::canonical_less(b, c));   // same t: y breaks the tie before x
  CHECK(evblur::canonical_less(d, b));   // same t, y, x: -1 sorts before +1
  CHECK(evblur::canonical_less(a, e));
  CHECK_FALSE(evblur::canonical_less(a, a));
}

TEST_CASE("event stream canonicalizes unsorted input")
{
  std::vector<Event> events = {{50, 2, 3, 1}, {10, 1, 1, -1}, {50, 2, 2, 1}};
  const EventStream s(8, 8, 0, 100, events);
  REQUIRE(s.size() == 3);
  CHECK(s.events()[0].t == 10);
  CHECK(s.events()[1].y == 2);
  CHECK(s.events()[2].y == 3);
}

TEST_CASE("streams built from permuted event multisets compare equal")
{
  std::vector<Event> fwd = {{5, 0, 0, 1}, {5, 1, 0, -1}, {9, 3, 2, 1}};
  std::vector<Event> rev(fwd.rbegin(), fwd.rend());
  CHECK(EventStream(4, 4, 0, 10, fwd) == EventStream(4, 4, 0, 10, rev));
}

TEST_CASE("from_canonical rejects out-of-order events")
{
  std::vector<Event> events = {{50, 0, 0, 1}, {10, 0, 0, 1}};
  CHECK_THROWS_WITH(EventStream::from_canonical(4, 4, 0, 100, events),
                    Catch::Matchers::ContainsSubstring("canonical"));
  std::sort(events.begin(), events.end(), evblur::canonical_less);
  CHECK_NOTHROW(EventStream::from_canonical(4, 4, 0, 100, events));
}

TEST_CASE("event stream validation")
{
  CHECK_THROWS_WITH(EventStream(4, 4, 10, 5), Catch::Matchers::ContainsSubstring("window"));
  CHECK_THROWS_WITH(EventStream(4, 4, 0, 10, {{11, 0, 0, 1}}),
                    Catch::Matchers::ContainsSubstring("timestamp out of window"));
  CHECK_THROWS_WITH(EventStream(4, 4, 5, 10, {{4, 0, 0, 1}}),
                    Catch::Matchers::ContainsSubstring("timestamp out of window"));
  CHECK_THROWS_WITH(EventStream(4, 4, 0, 10, {{5, 4, 0, 1}}),
                    Catch::Matchers::ContainsSubstring("out of bounds"));
  CHECK_THROWS_WITH(EventStream(4, 4, 0, 10, {{5, 0, 4, 1}}),
                    Catch::Matchers::ContainsSubstring("out of bounds"));
  CHECK_THROWS_WITH(EventStream(4, 4, 0, 10, {{5, 0, 0, 0}}),
                    Catch::Matchers::ContainsSubstring("polarity"));
  CHECK_THROWS(EventStream(0, 4, 0, 10));
  CHECK_NOTHROW(EventStream(4, 4, 7, 7, {{7, 0, 0, 1}}));  // degenerate window is allowed
}

TEST_CASE("window edges are inside the window")
{
  const EventStream s(2, 2, 100, 200, {{100, 0, 0, 1}, {200, 1, 1, -1}});
  CHECK(s.size() == 2);
  CHECK(s.duration() == 100);
}

TEST_CASE("image factory clamps while the unclamped one preserves")
{
  const Image c = Image::from_values(2, 1, {-0.5, 1.5});
  CHECK(c.at(0, 0) == 0.0);
  CHECK(c.at(1, 0) == 1.0);
  const Image u = Image::from_values_unclamped(2, 1, {-0.5, 1.5});
  CHECK(u.at(0, 0) == -0.5);
  CHECK(u.at(1, 0) == 1.5);
}

TEST_CASE("image validation")
{
  CHECK_THROWS(Image::from_values(2, 2, {0.0, 0.0, 0.0}));
  CHECK_THROWS_WITH(Image::from_values_unclamped(1, 1, {std::nan("")}),
                    Catch::Matchers::ContainsSubstring("non-finite"));
  CHECK_THROWS(Image(0, 5));
  CHECK_THROWS(Image(70000, 5));
}

TEST_CASE("image indexing is row-major")
{
  Image img(3, 2);
  img.at(2, 1) = 0.5;
  CHECK(img.values()[5] == 0.5);
}

TEST_CASE("voxel grid stores channels outermost")
{
  VoxelGrid g(2, 2, 3);
  g.at(1, 0, 2) = 7.0;
  CHECK(g.values()[2 * 4 + 1] == 7.0);
  CHECK_THROWS(VoxelGrid(2, 2, 0));
  CHECK_THROWS(VoxelGrid::from_values(2, 2, 1, {1.0}));
}

TEST_CASE("threshold map requires positive finite values")
{
  CHECK_THROWS_WITH(ThresholdMap(1, 1, {0.0}), Catch::Matchers::ContainsSubstring("positive"));
  CHECK_THROWS(ThresholdMap(1, 1, {-0.2}));
  CHECK_THROWS(ThresholdMap(1, 1, {std::numeric_limits<double>::infinity()}));
  const ThresholdMap m(2, 1, {0.1, 0.3});
  CHECK(m.at(1, 0) == 0.3);
}

TEST_CASE("log intensity applies the offset")
{
  const Image img = Image::from_values(2, 1, {0.0, 1.0});
  const Image lg = evblur::log_intensity(img, 1e-3);
  CHECK(lg.at(0, 0) == Catch::Approx(std::log(1e-3)));
  CHECK(lg.at(1, 0) == Catch::Approx(std::log(1.001)));
  CHECK_THROWS(evblur::log_intensity(img, 0.0));
}
