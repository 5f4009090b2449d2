#ifndef MVLIFT_FEATURE_MAP_HPP
#define MVLIFT_FEATURE_MAP_HPP

#include "mvlift/geometry.hpp"
#include "mvlift/types.hpp"

namespace mvlift {

inline constexpr int kDefaultStride = 16;
inline constexpr int kDefaultRoISize = 7;

/// Dense per-view feature grid at a fixed stride. Cells are stored
/// row-major: values.row(row * width_cells + col) is the C-vector of
/// cell (row, col).
struct FeatureMap {
  Matrix values;  // (height_cells * width_cells) x channels
  int height_cells = 0, width_cells = 0, channels = 0;
  int stride = kDefaultStride;
  int image_width = 0, image_height = 0;
  int view_id = 0;

  int cell_index(int row, int col) const { return row * width_cells + col; }

  /// Pixel coordinates of a cell center.
  Vec2 cell_center(int row, int col) const {
    return {col * double(stride) + 0.5 * stride, row * double(stride) + 0.5 * stride};
  }

  static int cells_for(int pixels, int stride) { return (pixels + stride - 1) / stride; }
};

/// Validates the cell-count/shape contract and returns the map.
FeatureMap make_feature_map(Matrix values, int image_width, int image_height, int stride,
                            int channels, int view_id);

/// Fixed-size feature patch sampled from one box.
struct RoIFeature {
  Matrix values;  // (roi_h * roi_w) x channels, row-major cells
  int roi_w = kDefaultRoISize, roi_h = kDefaultRoISize;
  int box_id = 0;
};

/// Bilinear RoI pooling with one sample per output cell, taken at the cell
/// center of the box's uniform roi_w x roi_h grid. The box is given in
/// image pixels and divided by the map's stride internally.
RoIFeature roi_align(const FeatureMap& fm, const Box2D& box, int roi_w = kDefaultRoISize,
                     int roi_h = kDefaultRoISize);

}  // namespace mvlift

#endif
