#include "mvlift/query_gen.hpp"

#include <cmath>

#include "mvlift/errors.hpp"
#include "mvlift/rng.hpp"

namespace mvlift {

namespace {

Matrix xavier(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

}  // namespace

std::vector<double> uniform_depths(int d, double lo, double hi) {
  if (d < 1) throw ConfigError("depth count must be positive");
  if (!(lo > 0) || hi < lo) throw InvalidDepthError("depth range must be positive and ordered");
  std::vector<double> out(d);
  if (d == 1) {
    out[0] = lo;
    return out;
  }
  const double step = (hi - lo) / (d - 1);
  for (int i = 0; i < d; ++i) out[i] = lo + i * step;
  return out;
}

LocationHeadParams LocationHeadParams::zeros(int channels) {
  LocationHeadParams p;
  p.channels = channels;
  p.conv_w = Matrix::Zero(9 * channels, channels);
  p.conv_b = Matrix::Zero(1, channels);
  p.fc1_w = Matrix::Zero(channels + 4, channels);
  p.fc1_b = Matrix::Zero(1, channels);
  p.fc2_w = Matrix::Zero(channels, 3);
  p.fc2_b = Matrix::Zero(1, 3);
  return p;
}

LocationHeadParams LocationHeadParams::init(int channels, std::uint64_t seed) {
  Rng rng(seed);
  LocationHeadParams p = zeros(channels);
  p.conv_w = xavier(9 * channels, channels, rng);
  p.fc1_w = xavier(channels + 4, channels, rng);
  p.fc2_w = xavier(channels, 3, rng);
  // Start depth mid-range so early reference points are not glued to the
  // camera.
  p.fc2_b(0, 2) = std::log(20.0);
  return p;
}

Eigen::RowVector4d intrinsic_descriptor(const EquivalentIntrinsics& k) {
  return Eigen::RowVector4d(k.fx, k.fy, k.ox, k.oy) / 100.0;
}

LocationHeadVars bind(ad::Tape& t, const LocationHeadParams& p) {
  return {t.leaf(p.conv_w), t.leaf(p.conv_b), t.leaf(p.fc1_w),
          t.leaf(p.fc1_b), t.leaf(p.fc2_w),  t.leaf(p.fc2_b)};
}

ad::Var location_head_ad(ad::Tape& t, const RoIFeature& roi, const EquivalentIntrinsics& k,
                         const LocationHeadVars& v) {
  if (roi.values.cols() != v.conv_w.cols())
    throw ShapeError("location head channel mismatch");
  ad::Var x = t.constant(roi.values);
  x = ad::relu(ad::conv3x3_same(x, roi.roi_h, roi.roi_w, v.conv_w, v.conv_b));
  ad::Var pooled = ad::colwise_mean(x);
  ad::Var desc = t.constant(intrinsic_descriptor(k));
  ad::Var h = ad::concat_cols({pooled, desc});
  h = ad::relu(ad::linear(h, v.fc1_w, v.fc1_b));
  return ad::linear(h, v.fc2_w, v.fc2_b);
}

Point25D predict_roi_location(const RoIFeature& roi, const EquivalentIntrinsics& k,
                              const LocationHeadParams& p) {
  ad::Tape t;
  LocationHeadVars v = bind(t, p);
  const Matrix out = location_head_ad(t, roi, k, v).value();
  return {out(0, 0), out(0, 1), std::exp(out(0, 2))};
}

Point25D oracle_roi_location(int roi_w, int roi_h, const CameraView& view,
                             const Vec3& gt_center) {
  const Vec3 cam = (view.extr.world_to_cam * gt_center.homogeneous()).head<3>();
  if (cam.z() <= kBehindCameraEps) throw InvalidDepthError("object is behind the camera");
  return {roi_w / 2.0, roi_h / 2.0, cam.z()};
}

ad::Var lift_ad(ad::Tape& t, ad::Var uv_logd, const EquivalentIntrinsics& k,
                const Extrinsics& ext) {
  if (uv_logd.rows() != 1 || uv_logd.cols() != 3) throw ShapeError("lift expects 1x3");
  ad::Var u = ad::slice_cols(uv_logd, 0, 1);
  ad::Var v = ad::slice_cols(uv_logd, 1, 1);
  ad::Var d = ad::exp_(ad::slice_cols(uv_logd, 2, 1));
  // Camera point ((u-ox)/fx * d, (v-oy)/fy * d, d), then rigid cam->world.
  Matrix ox(1, 1), oy(1, 1);
  ox(0, 0) = k.ox;
  oy(0, 0) = k.oy;
  ad::Var cx = ad::scale(ad::cmul(ad::sub(u, t.constant(ox)), d), 1.0 / k.fx);
  ad::Var cy = ad::scale(ad::cmul(ad::sub(v, t.constant(oy)), d), 1.0 / k.fy);
  ad::Var cam = ad::concat_cols({cx, cy, d});
  const Mat4 c2w = ext.cam_to_world();
  ad::Var world = ad::matmul(cam, t.constant(c2w.topLeftCorner<3, 3>().transpose()));
  return ad::add_const(world, c2w.topRightCorner<3, 1>().transpose());
}

RowVector sinusoid_code(const Vec3& x, int length) {
  if (length < 6) throw ConfigError("sinusoid code length must be at least 6");
  const int blocks = (length + 5) / 6;
  RowVector code(blocks * 6);
  for (int i = 0; i < blocks; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / length);
    for (int a = 0; a < 3; ++a) {
      code(6 * i + a) = std::sin(x(a) * freq);
      code(6 * i + 3 + a) = std::cos(x(a) * freq);
    }
  }
  return code.head(length);
}

RowVector positional_encode(const Vec3& p_ref, int length) {
  if (length % 6 != 0) throw ConfigError("positional code length must divide by 6");
  return sinusoid_code(p_ref * (M_PI / kSceneRange), length);
}

ad::Var positional_encode_rows(ad::Tape& t, ad::Var pts, int length) {
  if (length % 6 != 0) throw ConfigError("positional code length must divide by 6");
  if (pts.cols() != 3) throw ShapeError("positional_encode_rows expects n x 3");
  ad::Var scaled = ad::scale(pts, M_PI / kSceneRange);
  std::vector<ad::Var> parts;
  for (int i = 0; i < length / 6; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / length);
    ad::Var s = ad::scale(scaled, freq);
    parts.push_back(ad::sin_(s));
    parts.push_back(ad::cos_(s));
  }
  return ad::concat_cols(parts);
}

QueryGenParams QueryGenParams::init(int model_dim, std::uint64_t seed) {
  QueryGenParams p;
  p.model_dim = model_dim;
  p.head = LocationHeadParams::init(model_dim, Rng::mix(seed, 0x10c));
  Rng rng(Rng::mix(seed, 0x9e));
  p.pe_w = xavier(model_dim, model_dim, rng);
  p.pe_b = Matrix::Zero(1, model_dim);
  return p;
}

ObjectQuery init_query(const Vec3& p_ref, const QueryGenParams& p, int view_id, int box_id,
                       int query_id) {
  ObjectQuery q;
  q.p_ref = p_ref;
  q.embedding = positional_encode(p_ref, p.model_dim) * p.pe_w + p.pe_b.row(0);
  q.view_id = view_id;
  q.box_id = box_id;
  q.query_id = query_id;
  return q;
}

std::vector<Vec3> uniform_depth_refs(const Box2D& box, const CameraView& view, int d,
                                     double lo, double hi) {
  std::vector<Vec3> out;
  for (double depth : uniform_depths(d, lo, hi))
    out.push_back(unproject_2_5d({box.center_x(), box.center_y(), depth}, view.intr,
                                 view.extr));
  return out;
}

Vec3 scale_based_depth_ref(const Box2D& box, const CameraView& view, double prior_height,
                           double lo, double hi) {
  if (!box.valid()) throw DegenerateBoxError("box has non-positive extent");
  if (!(prior_height > 0)) throw ConfigError("prior height must be positive");
  const double d = std::min(std::max(view.intr.fy * prior_height / box.height(), lo), hi);
  return unproject_2_5d({box.center_x(), box.center_y(), d}, view.intr, view.extr);
}

}  // namespace mvlift
