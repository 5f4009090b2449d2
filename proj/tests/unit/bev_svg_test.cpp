#include <doctest.h>

#include <string>
#include <vector>

#include "mvlift/bev_svg.hpp"

using namespace mvlift;

namespace {

int count_of(const std::string& text, const std::string& needle) {
  int n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size()))
    ++n;
  return n;
}

Box3D at(double x, double y) {
  Box3D b;
  b.center = {x, y, 0.8};
  return b;
}

}  // namespace

TEST_CASE("world coordinates map into the fixed plot frame") {
  const Vec2 p = bev_to_svg(10.0, 0.0);
  CHECK(p.x() == doctest::Approx(192.0).epsilon(1e-12));
  CHECK(p.y() == doctest::Approx(172.0).epsilon(1e-12));
  const Vec2 origin = bev_to_svg(0.0, 0.0);
  CHECK(origin.x() == doctest::Approx(172.0).epsilon(1e-12));
  CHECK(origin.y() == doctest::Approx(172.0).epsilon(1e-12));
  // +y points up on the plot.
  CHECK(bev_to_svg(0.0, 10.0).y() < origin.y());
  // The extreme corners stay inside the margin-padded canvas.
  const Vec2 lo = bev_to_svg(-kBevExtent, -kBevExtent);
  const Vec2 hi = bev_to_svg(kBevExtent, kBevExtent);
  CHECK(lo.x() == doctest::Approx(kBevMargin));
  CHECK(lo.y() == doctest::Approx(kBevCanvas - kBevMargin));
  CHECK(hi.x() == doctest::Approx(kBevCanvas - kBevMargin));
  CHECK(hi.y() == doctest::Approx(kBevMargin));
}

TEST_CASE("rendered markers use one glyph class per source") {
  const std::vector<Box3D> gts = {at(10, 0), at(-5, 20)};
  const std::vector<Vec3> refs = {{1, 2, 0.5}, {3, 4, 0.5}, {5, 6, 0.5}};
  const std::vector<Box3D> preds = {at(9.5, 0.25)};
  const std::string svg = render_bev_svg(gts, refs, preds);
  CHECK(count_of(svg, "class=\"gt\"") == 2);
  CHECK(count_of(svg, "class=\"ref\"") == 3);
  CHECK(count_of(svg, "class=\"pred\"") == 1);
  CHECK(svg.find("192.00") != std::string::npos);  // gt at (10, 0)
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.rfind("</svg>") != std::string::npos);
  CHECK(svg.find("344") != std::string::npos);  // canvas size
}

TEST_CASE("an empty plot still draws its axes and captions") {
  const std::string svg = render_bev_svg({}, {}, {});
  CHECK(count_of(svg, "class=\"gt\"") == 0);
  CHECK(count_of(svg, "class=\"ref\"") == 0);
  CHECK(count_of(svg, "class=\"pred\"") == 0);
  CHECK(svg.find("x (m)") != std::string::npos);
  CHECK(svg.find("y (m)") != std::string::npos);
  CHECK(svg.find("-66") != std::string::npos);
  CHECK(svg.find("-33") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("rendering twice produces identical bytes") {
  const std::vector<Box3D> gts = {at(1.234567, -9.87654)};
  const std::vector<Vec3> refs = {{0.1, 0.2, 0.3}};
  CHECK(render_bev_svg(gts, refs, {}) == render_bev_svg(gts, refs, {}));
}
