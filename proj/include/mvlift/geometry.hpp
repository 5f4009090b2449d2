#ifndef MVLIFT_GEOMETRY_HPP
#define MVLIFT_GEOMETRY_HPP

#include <cmath>

#include "mvlift/errors.hpp"
#include "mvlift/types.hpp"

namespace mvlift {

/// Pinhole intrinsics embedded in a 4x4 homogeneous matrix:
///   [fx  0  ox  0]
///   [ 0 fy  oy  0]
///   [ 0  0   1  0]
///   [ 0  0   0  1]
struct Intrinsics {
  double fx = 1, fy = 1, ox = 0, oy = 0;

  Mat4 matrix() const {
    Mat4 k = Mat4::Identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = ox;
    k(1, 2) = oy;
    return k;
  }

  /// Closed-form inverse of matrix().
  Mat4 inverse_matrix() const {
    Mat4 k = Mat4::Identity();
    k(0, 0) = 1.0 / fx;
    k(1, 1) = 1.0 / fy;
    k(0, 2) = -ox / fx;
    k(1, 2) = -oy / fy;
    return k;
  }
};

/// Rigid world-to-camera transform [R|t; 0 1].
struct Extrinsics {
  Mat4 world_to_cam = Mat4::Identity();

  static Extrinsics identity() { return {}; }

  /// Builds from rotation and translation; rejects non-rigid inputs.
  static Extrinsics from_rt(const Mat3& r, const Vec3& t, double tol = 1e-9) {
    if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > tol)
      throw ContractViolation("extrinsics rotation is not orthonormal");
    if (r.determinant() < 0)
      throw ContractViolation("extrinsics rotation is a reflection");
    Extrinsics e;
    e.world_to_cam.topLeftCorner<3, 3>() = r;
    e.world_to_cam.topRightCorner<3, 1>() = t;
    return e;
  }

  Mat3 rotation() const { return world_to_cam.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return world_to_cam.topRightCorner<3, 1>(); }

  /// Rigid inverse [R^T | -R^T t].
  Mat4 cam_to_world() const {
    Mat4 inv = Mat4::Identity();
    const Mat3 rt = rotation().transpose();
    inv.topLeftCorner<3, 3>() = rt;
    inv.topRightCorner<3, 1>() = -rt * translation();
    return inv;
  }

  /// Camera center in world coordinates.
  Vec3 center() const { return -(rotation().transpose() * translation()); }
};

/// One camera of the rig. view_id is unique per (physical camera, timestamp).
struct CameraView {
  Intrinsics intr;
  Extrinsics extr;
  int width = 0, height = 0;
  int view_id = 0;
  double timestamp = 0;
};

/// Intrinsics of the virtual camera whose image is exactly one RoI:
/// focal lengths scaled by the box-to-RoI ratio and the principal point
/// shifted into RoI coordinates.
struct EquivalentIntrinsics {
  double fx = 1, fy = 1, ox = 0, oy = 0;
  double rx = 1, ry = 1;
  int box_id = 0;

  Mat4 matrix() const {
    return Intrinsics{fx, fy, ox, oy}.matrix();
  }
  Mat4 inverse_matrix() const {
    return Intrinsics{fx, fy, ox, oy}.inverse_matrix();
  }
};

inline EquivalentIntrinsics equivalent_intrinsics(const Intrinsics& k, const Box2D& box,
                                                  int roi_w, int roi_h) {
  if (roi_w < 1 || roi_h < 1) throw ConfigError("RoI dimensions must be positive");
  if (!box.valid()) throw DegenerateBoxError("box has non-positive extent");
  EquivalentIntrinsics e;
  e.rx = roi_w / box.width();
  e.ry = roi_h / box.height();
  e.fx = k.fx * e.rx;
  e.fy = k.fy * e.ry;
  e.ox = (k.ox - box.x_min) * e.rx;
  e.oy = (k.oy - box.y_min) * e.ry;
  e.box_id = box.box_id;
  return e;
}

/// Image pixel -> RoI coordinate for the same box/RoI pair as
/// equivalent_intrinsics, so both describe the same virtual camera.
inline Vec2 pixel_to_roi_coords(const Box2D& box, int roi_w, int roi_h, double u, double v) {
  if (!box.valid()) throw DegenerateBoxError("box has non-positive extent");
  return {(u - box.x_min) * roi_w / box.width(), (v - box.y_min) * roi_h / box.height()};
}

/// A 2.5D image point: pixel (u, v) with camera-frame depth d.
/// Homogeneous form multiplies the pixel through by depth so that a single
/// 4x4 intrinsic inverse undoes the projection.
struct Point25D {
  double u = 0, v = 0, d = 1;

  Vec4 homogeneous() const { return {u * d, v * d, d, 1.0}; }
};

/// Lifts a 2.5D point to world coordinates through any pinhole-like
/// intrinsics (full-image or equivalent RoI intrinsics).
template <typename KLike>
Vec3 unproject_2_5d(const Point25D& p, const KLike& k, const Extrinsics& ext) {
  if (!(p.d > 0) || !std::isfinite(p.d)) throw InvalidDepthError("depth must be positive");
  const Vec4 cam = k.inverse_matrix() * p.homogeneous();
  return (ext.cam_to_world() * cam).template head<3>();
}

struct PixelProjection {
  double u = 0, v = 0;
  double depth = 0;   // camera-frame z
  bool behind = false;
};

/// World point -> pixel + depth. Points at or behind the near plane are
/// flagged rather than thrown; their pixel coordinates are meaningless.
inline PixelProjection project_world_to_pixel(const CameraView& view, const Vec3& p_world) {
  const Vec3 cam = (view.extr.world_to_cam * p_world.homogeneous()).head<3>();
  PixelProjection out;
  out.depth = cam.z();
  if (cam.z() <= kBehindCameraEps) {
    out.behind = true;
    return out;
  }
  out.u = view.intr.fx * cam.x() / cam.z() + view.intr.ox;
  out.v = view.intr.fy * cam.y() / cam.z() + view.intr.oy;
  return out;
}

/// Transform taking src-camera coordinates to dst-camera coordinates.
inline Mat4 view_transform(const CameraView& src, const CameraView& dst) {
  return dst.extr.world_to_cam * src.extr.cam_to_world();
}

}  // namespace mvlift

#endif
