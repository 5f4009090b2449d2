#ifndef MVLIFT_ASSOCIATION_HPP
#define MVLIFT_ASSOCIATION_HPP

#include <map>
#include <optional>
#include <vector>

#include "mvlift/feature_map.hpp"
#include "mvlift/geometry.hpp"
#include "mvlift/query_gen.hpp"

namespace mvlift {

/// Regular grid of 2.5D points covering one RoI at a set of depths.
/// Grid coordinates span the full RoI extent [0, roi_w] x [0, roi_h]
/// endpoint-inclusive; each point is stored as (x*d, y*d, d, 1).
struct FrustumGrid {
  Eigen::Matrix4Xd points;  // columns are homogeneous 2.5D points
  std::vector<double> depths;
  int roi_w = 0, roi_h = 0;
};

FrustumGrid build_frustum_grid(int roi_w, int roi_h, const std::vector<double>& depths);

double iou_2d(const Box2D& a, const Box2D& b);

struct FrustumBox {
  Box2D box;       // clipped to the destination image
  Box2D unclipped;
};

/// Projects the RoI frustum of (src view, equivalent intrinsics) into dst
/// and returns the bounding box of the projected points. Grid points behind
/// dst's near plane are dropped; frustum edges that cross the near plane
/// contribute their crossing point so the box still bounds every in-front
/// point of the frustum. Returns nothing when the frustum is entirely
/// behind dst or the clipped box is empty.
std::optional<FrustumBox> project_frustum_min_box(const FrustumGrid& grid,
                                                  const EquivalentIntrinsics& k_roi,
                                                  const CameraView& src,
                                                  const CameraView& dst);

enum class RelevanceRule { kTop1, kAllOverlapped };

/// Boxes per view, keyed by view_id. Each box's box_id indexes into the
/// view's list.
using ViewBoxes = std::map<int, std::vector<Box2D>>;

struct BoxRef {
  int view_id = 0;
  int box_id = 0;
  friend bool operator==(const BoxRef&, const BoxRef&) = default;
  friend auto operator<=>(const BoxRef&, const BoxRef&) = default;
};

struct RelevantSet {
  int query_id = 0;
  BoxRef source;
  RelevanceRule rule = RelevanceRule::kAllOverlapped;
  std::vector<BoxRef> members;                 // always includes source
  std::map<int, Box2D> projected;              // per dst view, diagnostics
};

/// Selects the boxes in other views that look at the same object as the
/// source box: per destination view, either the best-overlap box (top-1,
/// ties to the lowest box_id) or every box with positive overlap.
RelevantSet select_relevant(const BoxRef& source, const Box2D& source_box,
                            const std::vector<CameraView>& views, const ViewBoxes& boxes,
                            const FrustumGrid& grid, RelevanceRule rule, int query_id);

struct KeyIndex {
  int view_id = 0;
  int row = 0;
  int col = 0;
  friend bool operator==(const KeyIndex&, const KeyIndex&) = default;
  friend auto operator<=>(const KeyIndex&, const KeyIndex&) = default;
};

struct KeyIndexSet {
  int query_id = 0;
  std::vector<KeyIndex> indices;  // sorted by (view_id, row, col), unique
};

/// Feature cells whose pixel centers fall strictly inside any member box.
/// If every member box is smaller than one stride and covers no cell
/// center, the single cell nearest the source box center is used instead,
/// so a query always has at least one key.
KeyIndexSet gather_key_indices(const RelevantSet& rset, const ViewBoxes& boxes,
                               const std::map<int, const FeatureMap*>& features);

}  // namespace mvlift

#endif
