#ifndef MVLIFT_QUERY_GEN_HPP
#define MVLIFT_QUERY_GEN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mvlift/ad.hpp"
#include "mvlift/feature_map.hpp"
#include "mvlift/geometry.hpp"

namespace mvlift {

/// Working range of world coordinates (meters, per axis) used to normalize
/// positional codes, and the depth vocabulary bounds (camera-frame meters).
inline constexpr double kSceneRange = 65.0;
inline constexpr double kDepthMin = 0.5;
inline constexpr double kDepthMax = 65.0;

/// D depth values spread uniformly over [lo, hi]; a single value sits at lo.
std::vector<double> uniform_depths(int d, double lo = kDepthMin, double hi = kDepthMax);

/// RoI location head: 3x3 conv, global average pool, then an MLP over the
/// pooled vector concatenated with 4 intrinsic descriptors. Produces RoI
/// coordinates (u', v') and log depth.
struct LocationHeadParams {
  int channels = 0;
  Matrix conv_w;  // (9*C) x C
  Matrix conv_b;  // 1 x C
  Matrix fc1_w;   // (C+4) x C
  Matrix fc1_b;   // 1 x C
  Matrix fc2_w;   // C x 3
  Matrix fc2_b;   // 1 x 3

  static LocationHeadParams zeros(int channels);
  static LocationHeadParams init(int channels, std::uint64_t seed);
};

template <typename F>
void visit_params(LocationHeadParams& p, const std::string& prefix, F&& f) {
  f(prefix + ".conv_w", p.conv_w);
  f(prefix + ".conv_b", p.conv_b);
  f(prefix + ".fc1_w", p.fc1_w);
  f(prefix + ".fc1_b", p.fc1_b);
  f(prefix + ".fc2_w", p.fc2_w);
  f(prefix + ".fc2_b", p.fc2_b);
}

/// The four scale-carrying entries of the equivalent intrinsics, each
/// divided by 100 to sit near unit scale.
Eigen::RowVector4d intrinsic_descriptor(const EquivalentIntrinsics& k);

/// Mirrored parameter handles on a tape.
struct LocationHeadVars {
  ad::Var conv_w, conv_b, fc1_w, fc1_b, fc2_w, fc2_b;
};
LocationHeadVars bind(ad::Tape& t, const LocationHeadParams& p);

/// Differentiable head evaluation: returns a 1x3 (u', v', log d).
ad::Var location_head_ad(ad::Tape& t, const RoIFeature& roi,
                         const EquivalentIntrinsics& k, const LocationHeadVars& v);

/// Plain evaluation; depth is exponentiated so it is always positive.
Point25D predict_roi_location(const RoIFeature& roi, const EquivalentIntrinsics& k,
                              const LocationHeadParams& p);

/// Ground-truth-informed head for diagnostics: the RoI center at the
/// object's true camera depth.
Point25D oracle_roi_location(int roi_w, int roi_h, const CameraView& view,
                             const Vec3& gt_center);

/// Differentiable lift of a head output (1x3 = u', v', log d) to a world
/// point (1x3) through equivalent intrinsics and extrinsics.
ad::Var lift_ad(ad::Tape& t, ad::Var uv_logd, const EquivalentIntrinsics& k,
                const Extrinsics& ext);

/// Sinusoidal code of a 3-vector: block i holds sin(x / 10000^(2i/C)) for
/// the three axes followed by the matching cos terms.
RowVector sinusoid_code(const Vec3& x, int length);

/// Position embedding of a reference point. Coordinates are scaled to
/// [-pi, pi] over [-kSceneRange, kSceneRange]. length must divide by 6.
RowVector positional_encode(const Vec3& p_ref, int length);

/// Differentiable batch version: (n x 3) -> (n x length).
ad::Var positional_encode_rows(ad::Tape& t, ad::Var pts, int length);

/// Query embedding = Linear(positional code).
struct QueryGenParams {
  int model_dim = 0;
  LocationHeadParams head;
  Matrix pe_w;  // C x C
  Matrix pe_b;  // 1 x C

  static QueryGenParams init(int model_dim, std::uint64_t seed);
};

template <typename F>
void visit_params(QueryGenParams& p, F&& f) {
  visit_params(p.head, "qgen.head", f);
  f("qgen.pe_w", p.pe_w);
  f("qgen.pe_b", p.pe_b);
}

struct ObjectQuery {
  RowVector embedding;  // 1 x C
  Vec3 p_ref = Vec3::Zero();
  int view_id = 0;  // source view
  int box_id = 0;   // source box within that view
  int query_id = 0;
};

/// Builds a query from a lifted reference point.
ObjectQuery init_query(const Vec3& p_ref, const QueryGenParams& p, int view_id, int box_id,
                       int query_id);

/// Reference points along the box-center ray at D uniform depths.
std::vector<Vec3> uniform_depth_refs(const Box2D& box, const CameraView& view, int d,
                                     double lo = kDepthMin, double hi = kDepthMax);

/// Single reference point at the pinhole depth implied by a class height
/// prior: d = fy * prior_height / box_height, clamped to the depth range.
Vec3 scale_based_depth_ref(const Box2D& box, const CameraView& view, double prior_height,
                           double lo = kDepthMin, double hi = kDepthMax);

}  // namespace mvlift

#endif
