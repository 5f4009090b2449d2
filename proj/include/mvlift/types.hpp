#ifndef MVLIFT_TYPES_HPP
#define MVLIFT_TYPES_HPP

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <utility>

namespace mvlift {

// Geometry runs in double precision throughout; network math reuses the
// same scalar so finite-difference checks stay meaningful.
using Scalar = double;

using Mat4 = Eigen::Matrix4d;
using Mat3 = Eigen::Matrix3d;
using Vec4 = Eigen::Vector4d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Vector = Eigen::VectorXd;

/// Points with camera-frame depth at or below this are treated as behind
/// the camera (meters).
inline constexpr double kBehindCameraEps = 1e-6;

/// Axis-aligned 2D box in image pixels, corners (x_min, y_min)-(x_max, y_max).
struct Box2D {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  double score = 1.0;
  int class_id = 0;
  int box_id = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  bool valid() const { return x_max > x_min && y_max > y_min; }
  bool contains(double u, double v) const {
    return u > x_min && u < x_max && v > y_min && v < y_max;
  }
};

/// Oriented 3D box: center (m), size (width, length, height in m),
/// yaw about world z, planar velocity (m/s).
struct Box3D {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  double yaw = 0;
  Vec2 velocity = Vec2::Zero();
  int class_id = 0;
  int object_id = 0;
};

/// The eight corners of a Box3D in world coordinates.
/// Order: all combinations of (+-length/2, +-width/2, +-height/2) in the
/// box frame, x along the heading.
inline std::array<Vec3, 8> box3d_corners(const Box3D& b) {
  const double hw = 0.5 * b.size.x(), hl = 0.5 * b.size.y(), hh = 0.5 * b.size.z();
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  std::array<Vec3, 8> out;
  int k = 0;
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0})
      for (double sz : {-1.0, 1.0}) {
        const double lx = sx * hl, ly = sy * hw, lz = sz * hh;
        out[k++] = b.center + Vec3(c * lx - s * ly, s * lx + c * ly, lz);
      }
  return out;
}

/// Edge list of the corner ordering above (12 edges of a cuboid).
inline const std::array<std::pair<int, int>, 12>& box_corner_edges() {
  static const std::array<std::pair<int, int>, 12> e = {{{0, 1}, {2, 3}, {4, 5}, {6, 7},
                                                         {0, 2}, {1, 3}, {4, 6}, {5, 7},
                                                         {0, 4}, {1, 5}, {2, 6}, {3, 7}}};
  return e;
}

}  // namespace mvlift

#endif
