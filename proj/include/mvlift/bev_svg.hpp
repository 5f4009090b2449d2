#ifndef MVLIFT_BEV_SVG_HPP
#define MVLIFT_BEV_SVG_HPP

#include <string>
#include <vector>

#include "mvlift/types.hpp"

namespace mvlift {

inline constexpr double kBevMargin = 40;          // pixels around the plot area
inline constexpr double kBevExtent = 66;          // plot covers [-extent, extent] meters
inline constexpr double kBevMetersPerPixel = 0.5;
inline constexpr int kBevCanvas = 344;            // 2 * margin + 2 * extent / m-per-px

/// World ground-plane (x, y) in meters -> SVG pixel position. +x right,
/// +y up in world; SVG y grows downward, so y is flipped.
Vec2 bev_to_svg(double x, double y);

/// Bird's-eye plot: truths as crosses, query reference points as small
/// circles, predicted centers as larger circles. One glyph element per
/// input; an empty scene still yields a valid frame with labeled axes.
std::string render_bev_svg(const std::vector<Box3D>& gts, const std::vector<Vec3>& refs,
                           const std::vector<Box3D>& preds);

}  // namespace mvlift

#endif
