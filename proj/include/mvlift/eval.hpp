#ifndef MVLIFT_EVAL_HPP
#define MVLIFT_EVAL_HPP

#include <utility>
#include <vector>

#include "mvlift/simulator.hpp"
#include "mvlift/types.hpp"

namespace mvlift {

/// A predicted 3D box with a detection confidence.
struct ScoredBox3D {
  Box3D box;
  double score = 1.0;
};

struct PrSample {
  double score = 0;
  double precision = 0;
  double recall = 0;
};

struct ClassEval {
  int class_id = 0;
  double ap = 0;
  int num_gt = 0;
  std::vector<PrSample> pr;
};

struct EvalResult {
  std::vector<ClassEval> per_class;  // classes with ground truth, ascending id
  double mean_ap = 0;
};

/// 101-point interpolated average precision over (score, hit) detections.
double average_precision(std::vector<std::pair<double, bool>> scored_hits, int num_gt,
                         std::vector<PrSample>* pr = nullptr);

/// Projected-2D protocol: predictions and truths are projected into every
/// view with identical geometry and visibility rules (min box of in-front
/// corners plus near-plane crossings, clipped, area >= min_area), then
/// matched greedily in descending score order per class, pooled over views.
EvalResult eval_projected_2d(const std::vector<ScoredBox3D>& preds,
                             const std::vector<Box3D>& gts,
                             const std::vector<CameraView>& views, double t_ref = 0,
                             double iou_thresh = 0.5, double min_area = kMinGt2DArea);

/// Simplified 3D metric: a prediction in descending score order matches the
/// nearest unmatched truth of its class within center_dist meters.
EvalResult eval_3d_center_distance(const std::vector<ScoredBox3D>& preds,
                                   const std::vector<Box3D>& gts,
                                   double center_dist = 2.0);

}  // namespace mvlift

#endif
