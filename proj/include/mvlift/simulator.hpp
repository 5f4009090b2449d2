#ifndef MVLIFT_SIMULATOR_HPP
#define MVLIFT_SIMULATOR_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvlift/feature_map.hpp"
#include "mvlift/geometry.hpp"
#include "mvlift/types.hpp"

namespace mvlift {

/// Default time between frames (15 camera periods at roughly 12 Hz).
inline constexpr double kDefaultFrameInterval = 1.245;

/// Projected ground-truth boxes smaller than this are treated as invisible.
inline constexpr double kMinGt2DArea = 64.0;

/// Size prior (w, l, h meters) of one object class.
struct ClassPrior {
  std::string name;
  Vec3 size;
};

/// The four supported classes: car, truck, pedestrian, cyclist.
const std::vector<ClassPrior>& class_priors();

/// Ego pose of one frame (ground plane position + heading).
struct EgoFrame {
  double timestamp = 0;
  Vec2 position = Vec2::Zero();
  double yaw = 0;

  Mat4 ego_to_world() const;
};

/// A synthetic world: objects with centers stored at time t_ref, a camera
/// rig posed relative to the ego vehicle, and one ego pose per frame.
struct Scene {
  std::vector<Box3D> objects;
  std::vector<CameraView> rig;     // poses for the identity ego pose
  std::vector<EgoFrame> frames;    // frame 0 is the identity pose at t_ref
  double t_ref = 0;
  std::uint64_t seed = 0;
};

/// Outward-facing ring of pinhole cameras, evenly spaced in yaw, mounted at
/// cam_height meters on a ring of ring_radius meters around the ego origin.
std::vector<CameraView> make_ring_rig(int num_views = 6, int width = 800,
                                      int height = 450, double hfov_deg = 70.0,
                                      double cam_height = 1.5,
                                      double ring_radius = 1.0);

/// Random scene: classes uniform, centers in [-50, 50]^2 kept >= 5 m apart,
/// sizes prior +-10%, yaw uniform over (-pi, pi], speed U[0, 15] m/s along
/// the heading. Deterministic under seed.
Scene generate_scene(std::uint64_t seed, int n_objects, int num_views = 6,
                     int width = 800, int height = 450, double hfov_deg = 70.0);

/// One view per (frame, rig camera): view_id = frame * |rig| + camera index,
/// timestamp from the frame, extrinsics composed with the frame's ego pose.
std::vector<CameraView> scene_views(const Scene& s);

/// The object's box with its center advanced from t_ref to t at its
/// constant ground-plane velocity.
Box3D object_at_time(const Box3D& obj, double t_ref, double t);

/// Appends one frame dt later; the ego advances by an Euler step of
/// (speed, yaw_rate). Objects stay stored at t_ref and are re-posed at
/// render time.
Scene advance_frame(const Scene& s, double dt = kDefaultFrameInterval,
                    double ego_speed = 5.0, double ego_yaw_rate = 0.05);

struct ProjectedBox {
  Box2D clipped;    // intersected with the image rectangle (may be empty)
  Box2D unclipped;  // raw min box over the in-front projections
};

/// Min axis-aligned image box of a 3D box: projects the corners in front of
/// the camera plus the near-plane crossings of the 12 edges, so every
/// in-front point of the box projects inside the unclipped result. nullopt
/// when the box is entirely behind the camera.
std::optional<ProjectedBox> project_box3d(const CameraView& view, const Box3D& box);

/// A 2D box tagged with the ground-truth object that produced it.
struct Detection2D {
  Box2D box;
  int object_id = -1;  // -1 marks a false positive
};

/// Ground-truth 2D boxes of the view at its timestamp; boxes are clipped to
/// the image and must keep at least min_area. box_id = output position.
std::vector<Detection2D> render_gt_2d(const Scene& scene, const CameraView& view,
                                      double min_area = kMinGt2DArea);

struct DetectorStubConfig {
  double jitter_sigma = 0.02;    // edge noise as a fraction of box extent
  double drop_prob = 0.05;
  double fp_rate = 0.2;          // Poisson mean false positives per view
  double score_sigma = 0.05;     // gt score = clip(IoU(jittered, gt) + noise)
  double score_threshold = 0.05;
  double nms_iou = 0.6;
  std::uint64_t seed = 0;
};

/// Noisy detector stand-in: jitter edges, drop boxes, inject false
/// positives, attach scores, drop scores under the threshold, then greedy
/// per-class NMS. Surviving boxes get box_ids in descending score order.
/// Deterministic under (cfg.seed, view_id).
std::vector<Detection2D> detector_stub(const std::vector<Detection2D>& gt,
                                       const CameraView& view,
                                       const DetectorStubConfig& cfg);

/// Deterministic per-cell features: a fixed sinusoidal code of the cell's
/// camera-ray direction, plus a per-class signature attenuated with depth
/// for the nearest object whose 2D box covers the cell center, plus
/// scene-seeded Gaussian noise.
FeatureMap synth_feature_map(const Scene& scene, const CameraView& view, int channels,
                             int stride = kDefaultStride, double noise_sigma = 0.05);

}  // namespace mvlift

#endif
