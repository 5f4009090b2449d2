#include "mvlift/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvlift/association.hpp"
#include "mvlift/errors.hpp"
#include "mvlift/rng.hpp"

namespace mvlift {

namespace {
constexpr std::uint64_t kSceneStream = 0x5ce;
constexpr std::uint64_t kFeatureBaseSeed = 0xFEA7BA5E;
constexpr std::uint64_t kFeatureNoiseStream = 0xF000;
}  // namespace

const std::vector<ClassPrior>& class_priors() {
  static const std::vector<ClassPrior> priors = {
      {"car", Vec3(1.9, 4.5, 1.6)},
      {"truck", Vec3(2.6, 7.5, 3.0)},
      {"pedestrian", Vec3(0.6, 0.7, 1.7)},
      {"cyclist", Vec3(0.6, 1.8, 1.5)},
  };
  return priors;
}

Mat4 EgoFrame::ego_to_world() const {
  Mat4 m = Mat4::Identity();
  const double c = std::cos(yaw), s = std::sin(yaw);
  m(0, 0) = c;
  m(0, 1) = -s;
  m(1, 0) = s;
  m(1, 1) = c;
  m(0, 3) = position.x();
  m(1, 3) = position.y();
  return m;
}

std::vector<CameraView> make_ring_rig(int num_views, int width, int height,
                                      double hfov_deg, double cam_height,
                                      double ring_radius) {
  if (num_views < 1 || width < 1 || height < 1)
    throw ConfigError("make_ring_rig: counts and sizes must be positive");
  if (!(hfov_deg > 0) || hfov_deg >= 180)
    throw ConfigError("make_ring_rig: hfov must be in (0, 180)");
  const double f = (width / 2.0) / std::tan(hfov_deg * M_PI / 360.0);
  std::vector<CameraView> rig;
  for (int i = 0; i < num_views; ++i) {
    const double phi = 2.0 * M_PI * i / num_views;
    const double c = std::cos(phi), s = std::sin(phi);
    const Vec3 right(s, -c, 0), down(0, 0, -1), forward(c, s, 0);
    const Vec3 center(ring_radius * c, ring_radius * s, cam_height);
    Mat3 rot;
    rot.row(0) = right.transpose();
    rot.row(1) = down.transpose();
    rot.row(2) = forward.transpose();
    CameraView v;
    v.intr = {f, f, width / 2.0, height / 2.0};
    v.extr = Extrinsics::from_rt(rot, -rot * center);
    v.width = width;
    v.height = height;
    v.view_id = i;
    v.timestamp = 0;
    rig.push_back(v);
  }
  return rig;
}

Scene generate_scene(std::uint64_t seed, int n_objects, int num_views, int width,
                     int height, double hfov_deg) {
  if (n_objects < 0) throw ConfigError("generate_scene: n_objects must be >= 0");
  Scene s;
  s.seed = seed;
  s.t_ref = 0;
  s.rig = make_ring_rig(num_views, width, height, hfov_deg);
  s.frames.push_back({0.0, Vec2::Zero(), 0.0});
  Rng rng(Rng::mix(seed, kSceneStream));
  const auto& priors = class_priors();
  for (int i = 0; i < n_objects; ++i) {
    Box3D obj;
    obj.object_id = i;
    obj.class_id = rng.uniform_int(0, static_cast<int>(priors.size()) - 1);
    const Vec3& prior = priors[static_cast<std::size_t>(obj.class_id)].size;
    obj.size = Vec3(prior.x() * (1 + rng.uniform(-0.1, 0.1)),
                    prior.y() * (1 + rng.uniform(-0.1, 0.1)),
                    prior.z() * (1 + rng.uniform(-0.1, 0.1)));
    Vec2 c = Vec2::Zero();
    for (int attempt = 0; attempt < 100; ++attempt) {
      c = Vec2(rng.uniform(-50, 50), rng.uniform(-50, 50));
      // Objects keep 5 m from each other and from the ego, whose body
      // carries the camera ring; a center closer than that would put the
      // object inside or on top of the rig.
      bool clear = c.norm() >= 5.0;
      for (const Box3D& prev : s.objects) {
        if ((prev.center.head<2>() - c).norm() < 5.0) {
          clear = false;
          break;
        }
      }
      if (clear) break;
    }
    obj.center = Vec3(c.x(), c.y(), obj.size.z() / 2.0);
    // uniform(lo, hi) covers [lo, hi); negating flips it to (-pi, pi].
    obj.yaw = -rng.uniform(-M_PI, M_PI);
    const double speed = rng.uniform(0, 15);
    obj.velocity = speed * Vec2(std::cos(obj.yaw), std::sin(obj.yaw));
    s.objects.push_back(obj);
  }
  return s;
}

std::vector<CameraView> scene_views(const Scene& s) {
  const int n = static_cast<int>(s.rig.size());
  std::vector<CameraView> out;
  for (std::size_t k = 0; k < s.frames.size(); ++k) {
    const Mat4 e2w = s.frames[k].ego_to_world();
    Mat4 w2e = Mat4::Identity();
    w2e.topLeftCorner<3, 3>() = e2w.topLeftCorner<3, 3>().transpose();
    w2e.topRightCorner<3, 1>() =
        -e2w.topLeftCorner<3, 3>().transpose() * e2w.topRightCorner<3, 1>();
    for (int i = 0; i < n; ++i) {
      CameraView v = s.rig[static_cast<std::size_t>(i)];
      const Mat4 w2c = v.extr.world_to_cam * w2e;
      v.extr = Extrinsics::from_rt(w2c.topLeftCorner<3, 3>(), w2c.topRightCorner<3, 1>());
      v.view_id = static_cast<int>(k) * n + i;
      v.timestamp = s.frames[k].timestamp;
      out.push_back(v);
    }
  }
  return out;
}

Box3D object_at_time(const Box3D& obj, double t_ref, double t) {
  Box3D out = obj;
  out.center.x() += obj.velocity.x() * (t - t_ref);
  out.center.y() += obj.velocity.y() * (t - t_ref);
  return out;
}

Scene advance_frame(const Scene& s, double dt, double ego_speed, double ego_yaw_rate) {
  if (s.frames.empty()) throw ContractViolation("advance_frame: scene has no frames");
  if (dt < 0) throw ConfigError("advance_frame: dt must be non-negative");
  Scene out = s;
  const EgoFrame& last = s.frames.back();
  EgoFrame next;
  next.timestamp = last.timestamp + dt;
  next.position = last.position + ego_speed * dt * Vec2(std::cos(last.yaw), std::sin(last.yaw));
  next.yaw = last.yaw + ego_yaw_rate * dt;
  out.frames.push_back(next);
  return out;
}

std::optional<ProjectedBox> project_box3d(const CameraView& view, const Box3D& box) {
  const auto corners = box3d_corners(box);
  std::array<Vec3, 8> cam;
  for (int k = 0; k < 8; ++k)
    cam[static_cast<std::size_t>(k)] =
        (view.extr.world_to_cam * corners[static_cast<std::size_t>(k)].homogeneous())
            .head<3>();

  double u0 = std::numeric_limits<double>::infinity(), v0 = u0;
  double u1 = -u0, v1 = -u0;
  bool any = false;
  const auto absorb = [&](const Vec3& p) {
    const double u = view.intr.fx * p.x() / p.z() + view.intr.ox;
    const double v = view.intr.fy * p.y() / p.z() + view.intr.oy;
    u0 = std::min(u0, u);
    v0 = std::min(v0, v);
    u1 = std::max(u1, u);
    v1 = std::max(v1, v);
    any = true;
  };
  for (const Vec3& p : cam)
    if (p.z() > kBehindCameraEps) absorb(p);
  // Near-plane crossings keep in-front slices of straddling edges inside
  // the min box.
  for (const auto& [a, b] : box_corner_edges()) {
    const Vec3& pa = cam[static_cast<std::size_t>(a)];
    const Vec3& pb = cam[static_cast<std::size_t>(b)];
    const bool fa = pa.z() > kBehindCameraEps, fb = pb.z() > kBehindCameraEps;
    if (fa == fb) continue;
    const double t = (kBehindCameraEps - pa.z()) / (pb.z() - pa.z());
    absorb(pa + t * (pb - pa));
  }
  if (!any) return std::nullopt;

  ProjectedBox out;
  out.unclipped = {u0, v0, u1, v1, 1.0, box.class_id, 0};
  out.clipped = out.unclipped;
  out.clipped.x_min = std::max(0.0, u0);
  out.clipped.y_min = std::max(0.0, v0);
  out.clipped.x_max = std::min(static_cast<double>(view.width), u1);
  out.clipped.y_max = std::min(static_cast<double>(view.height), v1);
  return out;
}

std::vector<Detection2D> render_gt_2d(const Scene& scene, const CameraView& view,
                                      double min_area) {
  std::vector<Detection2D> out;
  for (const Box3D& obj : scene.objects) {
    const Box3D posed = object_at_time(obj, scene.t_ref, view.timestamp);
    const auto pb = project_box3d(view, posed);
    if (!pb || !pb->clipped.valid() || pb->clipped.area() < min_area) continue;
    Box2D b = pb->clipped;
    b.score = 1.0;
    b.class_id = obj.class_id;
    b.box_id = static_cast<int>(out.size());
    out.push_back({b, obj.object_id});
  }
  return out;
}

std::vector<Detection2D> detector_stub(const std::vector<Detection2D>& gt,
                                       const CameraView& view,
                                       const DetectorStubConfig& cfg) {
  if (cfg.drop_prob < 0 || cfg.drop_prob > 1 || cfg.nms_iou < 0 || cfg.nms_iou > 1)
    throw ConfigError("detector_stub: probabilities must lie in [0, 1]");
  if (cfg.jitter_sigma < 0 || cfg.fp_rate < 0 || cfg.score_sigma < 0)
    throw ConfigError("detector_stub: noise magnitudes must be non-negative");
  Rng rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(view.view_id)));

  struct Cand {
    Box2D box;
    Box2D original;
    int object_id;
    bool fp;
  };
  std::vector<Cand> cands;
  for (const Detection2D& d : gt) {
    Box2D b = d.box;
    const double w = b.width(), h = b.height();
    b.x_min += rng.normal(0, cfg.jitter_sigma * w);
    b.x_max += rng.normal(0, cfg.jitter_sigma * w);
    b.y_min += rng.normal(0, cfg.jitter_sigma * h);
    b.y_max += rng.normal(0, cfg.jitter_sigma * h);
    b.x_min = std::max(0.0, b.x_min);
    b.y_min = std::max(0.0, b.y_min);
    b.x_max = std::min(static_cast<double>(view.width), b.x_max);
    b.y_max = std::min(static_cast<double>(view.height), b.y_max);
    if (!b.valid()) continue;
    cands.push_back({b, d.box, d.object_id, false});
  }

  std::vector<Cand> kept;
  for (const Cand& c : cands)
    if (rng.uniform() >= cfg.drop_prob) kept.push_back(c);

  const int num_classes = static_cast<int>(class_priors().size());
  const int n_fp = rng.poisson(cfg.fp_rate);
  for (int i = 0; i < n_fp; ++i) {
    const double w = rng.uniform(16, 160);
    const double h = rng.uniform(16, 160);
    const double cx = rng.uniform(0, view.width);
    const double cy = rng.uniform(0, view.height);
    const int cls = rng.uniform_int(0, num_classes - 1);
    Box2D b;
    b.x_min = std::max(0.0, cx - w / 2);
    b.y_min = std::max(0.0, cy - h / 2);
    b.x_max = std::min(static_cast<double>(view.width), cx + w / 2);
    b.y_max = std::min(static_cast<double>(view.height), cy + h / 2);
    b.class_id = cls;
    if (!b.valid()) continue;
    kept.push_back({b, b, -1, true});
  }

  for (Cand& c : kept) {
    if (c.fp) {
      c.box.score = rng.uniform(0.05, 0.7);
    } else {
      const double s = iou_2d(c.box, c.original) + rng.normal(0, cfg.score_sigma);
      c.box.score = std::clamp(s, 0.001, 1.0);
    }
  }

  std::erase_if(kept, [&](const Cand& c) { return c.box.score < cfg.score_threshold; });
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Cand& a, const Cand& b) { return a.box.score > b.box.score; });

  std::vector<Detection2D> out;
  for (const Cand& c : kept) {
    bool suppressed = false;
    for (const Detection2D& prev : out) {
      if (prev.box.class_id == c.box.class_id && iou_2d(prev.box, c.box) > cfg.nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (suppressed) continue;
    Box2D b = c.box;
    b.box_id = static_cast<int>(out.size());
    out.push_back({b, c.object_id});
  }
  return out;
}

FeatureMap synth_feature_map(const Scene& scene, const CameraView& view, int channels,
                             int stride, double noise_sigma) {
  if (channels < 1) throw ConfigError("synth_feature_map: channels must be positive");
  const int hc = FeatureMap::cells_for(view.height, stride);
  const int wc = FeatureMap::cells_for(view.width, stride);

  // Fixed basis shared by every scene so the decoder can learn against it.
  Rng base(kFeatureBaseSeed);
  Matrix ray_coef(4, channels);
  for (int k = 0; k < channels; ++k) {
    ray_coef(0, k) = base.uniform(-3, 3);
    ray_coef(1, k) = base.uniform(-3, 3);
    ray_coef(2, k) = base.uniform(-3, 3);
    ray_coef(3, k) = base.uniform(-M_PI, M_PI);
  }
  const int num_classes = static_cast<int>(class_priors().size());
  Matrix class_code(num_classes, channels);
  for (int cls = 0; cls < num_classes; ++cls)
    for (int k = 0; k < channels; ++k) class_code(cls, k) = base.uniform(-1, 1);

  struct Covered {
    Box2D box;
    int class_id;
    double depth;
  };
  std::vector<Covered> covered;
  for (const Box3D& obj : scene.objects) {
    const Box3D posed = object_at_time(obj, scene.t_ref, view.timestamp);
    const auto pb = project_box3d(view, posed);
    if (!pb || !pb->clipped.valid()) continue;
    const double depth =
        (view.extr.world_to_cam * posed.center.homogeneous()).z();
    if (depth <= kBehindCameraEps) continue;
    covered.push_back({pb->clipped, obj.class_id, depth});
  }

  Rng noise(Rng::mix(scene.seed, kFeatureNoiseStream + static_cast<std::uint64_t>(view.view_id)));
  Matrix values(hc * wc, channels);
  for (int r = 0; r < hc; ++r) {
    for (int c = 0; c < wc; ++c) {
      const Vec2 px((c + 0.5) * stride, (r + 0.5) * stride);
      const Vec3 dir = Vec3((px.x() - view.intr.ox) / view.intr.fx,
                            (px.y() - view.intr.oy) / view.intr.fy, 1.0)
                           .normalized();
      const Covered* hit = nullptr;
      for (const Covered& cov : covered) {
        if (!cov.box.contains(px.x(), px.y())) continue;
        if (hit == nullptr || cov.depth < hit->depth) hit = &cov;
      }
      const int row = r * wc + c;
      for (int k = 0; k < channels; ++k) {
        double val = std::sin(ray_coef(0, k) * dir.x() + ray_coef(1, k) * dir.y() +
                              ray_coef(2, k) * dir.z() + ray_coef(3, k));
        if (hit != nullptr)
          val += class_code(hit->class_id, k) / (1.0 + hit->depth / 20.0);
        values(row, k) = val + noise.normal(0, noise_sigma);
      }
    }
  }
  return make_feature_map(std::move(values), view.width, view.height, stride, channels,
                          view.view_id);
}

}  // namespace mvlift
