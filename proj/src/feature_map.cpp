#include "mvlift/feature_map.hpp"

#include "mvlift/errors.hpp"

namespace mvlift {

FeatureMap make_feature_map(Matrix values, int image_width, int image_height, int stride,
                            int channels, int view_id) {
  if (stride < 1 || image_width < 1 || image_height < 1 || channels < 1)
    throw ConfigError("feature map dimensions must be positive");
  FeatureMap fm;
  fm.width_cells = FeatureMap::cells_for(image_width, stride);
  fm.height_cells = FeatureMap::cells_for(image_height, stride);
  if (values.rows() != fm.height_cells * fm.width_cells || values.cols() != channels)
    throw ShapeError("feature values do not match ceil(H/stride) x ceil(W/stride) x C");
  fm.values = std::move(values);
  fm.channels = channels;
  fm.stride = stride;
  fm.image_width = image_width;
  fm.image_height = image_height;
  fm.view_id = view_id;
  return fm;
}

namespace {

// Bilinear sample of one cell vector at continuous feature coordinates.
// Samples past the border by more than one cell read as zero; the border
// itself clamps, matching common RoI-align implementations.
RowVector bilinear_sample(const FeatureMap& fm, double x, double y) {
  const int w = fm.width_cells, h = fm.height_cells;
  RowVector out = RowVector::Zero(fm.channels);
  if (x < -1.0 || x > w || y < -1.0 || y > h) return out;
  x = std::max(x, 0.0);
  y = std::max(y, 0.0);
  int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  int x1 = x0 + 1, y1 = y0 + 1;
  if (x0 >= w - 1) { x0 = x1 = w - 1; x = x0; }
  if (y0 >= h - 1) { y0 = y1 = h - 1; y = y0; }
  const double lx = x - x0, ly = y - y0;
  out = (1 - ly) * ((1 - lx) * fm.values.row(fm.cell_index(y0, x0)) +
                    lx * fm.values.row(fm.cell_index(y0, x1))) +
        ly * ((1 - lx) * fm.values.row(fm.cell_index(y1, x0)) +
              lx * fm.values.row(fm.cell_index(y1, x1)));
  return out;
}

}  // namespace

RoIFeature roi_align(const FeatureMap& fm, const Box2D& box, int roi_w, int roi_h) {
  if (roi_w < 1 || roi_h < 1) throw ConfigError("RoI dimensions must be positive");
  if (!box.valid()) throw DegenerateBoxError("box has non-positive extent");
  if (box.x_max <= 0 || box.y_max <= 0 || box.x_min >= fm.image_width ||
      box.y_min >= fm.image_height)
    throw EmptyRegionError("box does not intersect the image");

  // Cell (r, c) holds the value at pixel center ((c+0.5)*stride, (r+0.5)*stride),
  // so pixel (u, v) sits at feature coordinates (u/stride - 0.5, v/stride - 0.5).
  const double x0 = box.x_min / fm.stride - 0.5, y0 = box.y_min / fm.stride - 0.5;
  const double bin_w = box.width() / fm.stride / roi_w;
  const double bin_h = box.height() / fm.stride / roi_h;

  RoIFeature roi;
  roi.roi_w = roi_w;
  roi.roi_h = roi_h;
  roi.box_id = box.box_id;
  roi.values.resize(roi_h * roi_w, fm.channels);
  for (int i = 0; i < roi_h; ++i)
    for (int j = 0; j < roi_w; ++j)
      roi.values.row(i * roi_w + j) =
          bilinear_sample(fm, x0 + (j + 0.5) * bin_w, y0 + (i + 0.5) * bin_h);
  return roi;
}

}  // namespace mvlift
