#include "mvlift/association.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mvlift/errors.hpp"

namespace mvlift {

FrustumGrid build_frustum_grid(int roi_w, int roi_h, const std::vector<double>& depths) {
  if (roi_w < 2 || roi_h < 2) throw ConfigError("frustum grid needs RoI dimensions >= 2");
  if (depths.empty()) throw ConfigError("frustum grid needs at least one depth");
  double prev = 0;
  for (double d : depths) {
    if (!(d > prev)) throw InvalidDepthError("depths must be positive and strictly increasing");
    prev = d;
  }
  FrustumGrid g;
  g.roi_w = roi_w;
  g.roi_h = roi_h;
  g.depths = depths;
  g.points.resize(4, static_cast<Eigen::Index>(roi_w) * roi_h * depths.size());
  Eigen::Index col = 0;
  for (std::size_t k = 0; k < depths.size(); ++k) {
    const double d = depths[k];
    for (int i = 0; i < roi_h; ++i) {
      const double y = i * double(roi_h) / (roi_h - 1);
      for (int j = 0; j < roi_w; ++j) {
        const double x = j * double(roi_w) / (roi_w - 1);
        g.points.col(col++) = Vec4(x * d, y * d, d, 1.0);
      }
    }
  }
  return g;
}

double iou_2d(const Box2D& a, const Box2D& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::optional<FrustumBox> project_frustum_min_box(const FrustumGrid& grid,
                                                  const EquivalentIntrinsics& k_roi,
                                                  const CameraView& src,
                                                  const CameraView& dst) {
  if (src.view_id == dst.view_id && src.timestamp == dst.timestamp)
    throw ContractViolation("frustum projection requires distinct views");

  // RoI homogeneous point -> dst camera coordinates (affine in the point).
  const Mat4 to_dst_cam = view_transform(src, dst) * k_roi.inverse_matrix();
  const Eigen::Matrix4Xd cam = to_dst_cam * grid.points;

  double x_min = std::numeric_limits<double>::infinity(), y_min = x_min;
  double x_max = -x_min, y_max = -y_min;
  bool any = false;
  auto absorb = [&](const Vec3& c) {
    const double u = dst.intr.fx * c.x() / c.z() + dst.intr.ox;
    const double v = dst.intr.fy * c.y() / c.z() + dst.intr.oy;
    x_min = std::min(x_min, u);
    x_max = std::max(x_max, u);
    y_min = std::min(y_min, v);
    y_max = std::max(y_max, v);
    any = true;
  };

  for (Eigen::Index i = 0; i < cam.cols(); ++i)
    if (cam(2, i) > kBehindCameraEps) absorb(cam.col(i).head<3>());

  // The grid alone cannot bound points whose frustum straddles the near
  // plane, so add the crossing points of the frustum's corner edges.
  const double d0 = grid.depths.front(), d1 = grid.depths.back();
  std::array<Vec3, 8> corners;
  int k = 0;
  for (double d : {d0, d1})
    for (double y : {0.0, double(grid.roi_h)})
      for (double x : {0.0, double(grid.roi_w)})
        corners[k++] = (to_dst_cam * Vec4(x * d, y * d, d, 1.0)).head<3>();
  static const std::array<std::pair<int, int>, 12> edges = {{{0, 1}, {2, 3}, {4, 5}, {6, 7},
                                                             {0, 2}, {1, 3}, {4, 6}, {5, 7},
                                                             {0, 4}, {1, 5}, {2, 6}, {3, 7}}};
  for (const auto& [a, b] : edges) {
    const double za = corners[a].z() - kBehindCameraEps;
    const double zb = corners[b].z() - kBehindCameraEps;
    if (za * zb >= 0) continue;
    const double t = za / (za - zb);
    Vec3 p = corners[a] + t * (corners[b] - corners[a]);
    p.z() = kBehindCameraEps;
    absorb(p);
  }

  if (!any) return std::nullopt;

  FrustumBox out;
  out.unclipped = {x_min, y_min, x_max, y_max};
  out.box = {std::max(x_min, 0.0), std::max(y_min, 0.0),
             std::min(x_max, double(dst.width)), std::min(y_max, double(dst.height))};
  if (!out.box.valid()) return std::nullopt;
  return out;
}

RelevantSet select_relevant(const BoxRef& source, const Box2D& source_box,
                            const std::vector<CameraView>& views, const ViewBoxes& boxes,
                            const FrustumGrid& grid, RelevanceRule rule, int query_id) {
  const CameraView* src_view = nullptr;
  for (const CameraView& v : views)
    if (v.view_id == source.view_id) src_view = &v;
  if (!src_view) throw ContractViolation("source view is not part of the rig");

  const EquivalentIntrinsics k_roi =
      equivalent_intrinsics(src_view->intr, source_box, grid.roi_w, grid.roi_h);

  RelevantSet rset;
  rset.query_id = query_id;
  rset.source = source;
  rset.rule = rule;
  rset.members.push_back(source);

  for (const CameraView& dst : views) {
    if (dst.view_id == source.view_id) continue;
    const auto it = boxes.find(dst.view_id);
    if (it == boxes.end() || it->second.empty()) continue;
    const auto projected = project_frustum_min_box(grid, k_roi, *src_view, dst);
    if (!projected) continue;
    rset.projected[dst.view_id] = projected->box;

    if (rule == RelevanceRule::kTop1) {
      double best = 0;
      int best_id = -1;
      for (const Box2D& b : it->second) {
        const double o = iou_2d(projected->box, b);
        if (o > best || (o == best && o > 0 && b.box_id < best_id)) {
          best = o;
          best_id = b.box_id;
        }
      }
      if (best_id >= 0) rset.members.push_back({dst.view_id, best_id});
    } else {
      for (const Box2D& b : it->second)
        if (iou_2d(projected->box, b) > 0) rset.members.push_back({dst.view_id, b.box_id});
    }
  }
  std::sort(rset.members.begin(), rset.members.end());
  rset.members.erase(std::unique(rset.members.begin(), rset.members.end()),
                     rset.members.end());
  return rset;
}

namespace {

const Box2D* find_box(const ViewBoxes& boxes, const BoxRef& ref) {
  const auto it = boxes.find(ref.view_id);
  if (it == boxes.end()) return nullptr;
  for (const Box2D& b : it->second)
    if (b.box_id == ref.box_id) return &b;
  return nullptr;
}

}  // namespace

KeyIndexSet gather_key_indices(const RelevantSet& rset, const ViewBoxes& boxes,
                               const std::map<int, const FeatureMap*>& features) {
  std::set<KeyIndex> cells;
  for (const BoxRef& m : rset.members) {
    const Box2D* box = find_box(boxes, m);
    const auto fit = features.find(m.view_id);
    if (!box || fit == features.end()) throw ContractViolation("member box without features");
    const FeatureMap& fm = *fit->second;
    const double s = fm.stride;
    const int col_lo = std::max(0, int(std::floor(box->x_min / s - 0.5)) );
    const int col_hi = std::min(fm.width_cells - 1, int(std::ceil(box->x_max / s)));
    const int row_lo = std::max(0, int(std::floor(box->y_min / s - 0.5)));
    const int row_hi = std::min(fm.height_cells - 1, int(std::ceil(box->y_max / s)));
    for (int r = row_lo; r <= row_hi; ++r)
      for (int c = col_lo; c <= col_hi; ++c) {
        const Vec2 center = fm.cell_center(r, c);
        if (box->contains(center.x(), center.y())) cells.insert({m.view_id, r, c});
      }
  }

  KeyIndexSet out;
  out.query_id = rset.query_id;
  if (cells.empty()) {
    // Every member box is sub-stride; fall back to the cell nearest the
    // source box center.
    const Box2D* box = find_box(boxes, rset.source);
    const FeatureMap& fm = *features.at(rset.source.view_id);
    const int col = std::clamp(int(std::floor(box->center_x() / fm.stride)), 0,
                               fm.width_cells - 1);
    const int row = std::clamp(int(std::floor(box->center_y() / fm.stride)), 0,
                               fm.height_cells - 1);
    out.indices.push_back({rset.source.view_id, row, col});
    return out;
  }
  out.indices.assign(cells.begin(), cells.end());
  return out;
}

}  // namespace mvlift
