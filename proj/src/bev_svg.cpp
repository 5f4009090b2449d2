#include "mvlift/bev_svg.hpp"

#include <cstdio>
#include <sstream>

namespace mvlift {

Vec2 bev_to_svg(double x, double y) {
  return {kBevMargin + (x + kBevExtent) / kBevMetersPerPixel,
          kBevMargin + (kBevExtent - y) / kBevMetersPerPixel};
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

void cross(std::ostream& out, const Vec2& p, double arm, const char* cls, const char* color) {
  out << "  <path class=\"" << cls << "\" d=\"M " << fmt(p.x() - arm) << ' ' << fmt(p.y())
      << " L " << fmt(p.x() + arm) << ' ' << fmt(p.y()) << " M " << fmt(p.x()) << ' '
      << fmt(p.y() - arm) << " L " << fmt(p.x()) << ' ' << fmt(p.y() + arm) << "\" stroke=\""
      << color << "\" stroke-width=\"1.5\" fill=\"none\"/>\n";
}

void circle(std::ostream& out, const Vec2& p, double r, const char* cls, const char* color) {
  out << "  <circle class=\"" << cls << "\" cx=\"" << fmt(p.x()) << "\" cy=\"" << fmt(p.y())
      << "\" r=\"" << fmt(r) << "\" stroke=\"" << color << "\" fill=\"none\"/>\n";
}

}  // namespace

std::string render_bev_svg(const std::vector<Box3D>& gts, const std::vector<Vec3>& refs,
                           const std::vector<Box3D>& preds) {
  std::ostringstream out;
  const int side = kBevCanvas;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << side << "\" height=\"" << side
      << "\" viewBox=\"0 0 " << side << ' ' << side << "\">\n";
  out << "  <rect x=\"0\" y=\"0\" width=\"" << side << "\" height=\"" << side
      << "\" fill=\"white\"/>\n";
  const Vec2 lo = bev_to_svg(-kBevExtent, kBevExtent);   // top-left of the plot area
  const Vec2 hi = bev_to_svg(kBevExtent, -kBevExtent);   // bottom-right
  out << "  <rect x=\"" << fmt(lo.x()) << "\" y=\"" << fmt(lo.y()) << "\" width=\""
      << fmt(hi.x() - lo.x()) << "\" height=\"" << fmt(hi.y() - lo.y())
      << "\" fill=\"none\" stroke=\"black\"/>\n";

  // Tick labels in meters along the bottom (x) and left (y) edges.
  for (double t = -kBevExtent; t <= kBevExtent; t += kBevExtent / 2) {
    const Vec2 bx = bev_to_svg(t, -kBevExtent);
    out << "  <text x=\"" << fmt(bx.x()) << "\" y=\"" << fmt(bx.y() + 14)
        << "\" font-size=\"9\" text-anchor=\"middle\">" << fmt(t) << "</text>\n";
    const Vec2 by = bev_to_svg(-kBevExtent, t);
    out << "  <text x=\"" << fmt(by.x() - 4) << "\" y=\"" << fmt(by.y() + 3)
        << "\" font-size=\"9\" text-anchor=\"end\">" << fmt(t) << "</text>\n";
  }
  out << "  <text x=\"" << fmt(side / 2.0) << "\" y=\"" << fmt(side - 6)
      << "\" font-size=\"10\" text-anchor=\"middle\">x (m)</text>\n";
  out << "  <text x=\"10\" y=\"" << fmt(side / 2.0)
      << "\" font-size=\"10\" text-anchor=\"middle\" transform=\"rotate(-90 10 "
      << fmt(side / 2.0) << ")\">y (m)</text>\n";

  for (const auto& g : gts) cross(out, bev_to_svg(g.center.x(), g.center.y()), 4, "gt", "black");
  for (const auto& r : refs) circle(out, bev_to_svg(r.x(), r.y()), 2, "ref", "#888888");
  for (const auto& p : preds)
    circle(out, bev_to_svg(p.center.x(), p.center.y()), 3, "pred", "#cc2222");

  out << "</svg>\n";
  return out.str();
}

}  // namespace mvlift
