#ifndef MVLIFT_LOSSES_HPP
#define MVLIFT_LOSSES_HPP

#include <vector>

#include "mvlift/ad.hpp"
#include "mvlift/matching.hpp"
#include "mvlift/types.hpp"

namespace mvlift {

/// Loss term weights and focal shape parameters.
struct LossWeights {
  double lambda_cls = 2.0;
  double lambda_box = 0.1;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
};

/// Binary cross entropy -t log p - (1-t) log(1-p) on a sigmoid probability.
double binary_cross_entropy(double logit, double target);

/// Sigmoid focal loss for one logit against a 0/1 target.
double focal_loss(double logit, double target, double alpha = 0.25,
                  double gamma = 2.0);

/// Elementwise sigmoid focal loss of a logit matrix against a 0/1 target
/// matrix of the same shape. Logits are clamped to [-30, 30] first so the
/// log terms stay finite.
ad::Var focal_loss_ad(ad::Var logits, const Matrix& targets, double alpha,
                      double gamma);

/// 10-value regression target for a ground-truth box relative to a query
/// reference point: center offset (3), log size (3), sin/cos yaw, velocity.
RowVector encode_box3d(const Box3D& gt, const Vec3& p_ref);

/// Mean absolute difference over all entries.
double box_l1_loss(const RowVector& pred, const RowVector& target);

/// lambda_cls * cls + lambda_box * box.
double total_loss(double cls, double box, const LossWeights& w = {});

/// Matching cost between each prediction row and each ground-truth box:
/// lambda_cls * (-sigmoid class score of the truth's class) plus the mean
/// absolute regression error against that truth's encoding.
Matrix match_cost_matrix(const Matrix& logits, const Matrix& reg,
                         const std::vector<Vec3>& p_refs,
                         const std::vector<Box3D>& gts,
                         const LossWeights& w = {});

struct DetectionLoss {
  double cls = 0;
  double box = 0;
  double total = 0;
  Assignment assignment;
};

struct DetectionLossVars {
  ad::Var cls;
  ad::Var box;
  ad::Var total;
  Assignment assignment;
};

/// Set-based detection loss: Hungarian-match predictions to truths on
/// match_cost_matrix, then score focal classification over every
/// prediction (matched rows one-hot, the rest all-background) and mean
/// absolute regression error over matched rows only. The assignment is
/// computed from current values and treated as fixed during
/// differentiation; gradients do flow into p_refs (n x 3) through the
/// center-offset targets.
DetectionLossVars detection_loss_ad(ad::Tape& t, ad::Var logits, ad::Var reg,
                                    ad::Var p_refs,
                                    const std::vector<Box3D>& gts,
                                    const LossWeights& w = {});

/// Same loss with fixed (non-differentiable) reference points.
DetectionLossVars detection_loss_ad(ad::Tape& t, ad::Var logits, ad::Var reg,
                                    const std::vector<Vec3>& p_refs,
                                    const std::vector<Box3D>& gts,
                                    const LossWeights& w = {});

/// Plain-value wrapper around detection_loss_ad.
DetectionLoss detection_loss(const Matrix& logits, const Matrix& reg,
                             const std::vector<Vec3>& p_refs,
                             const std::vector<Box3D>& gts,
                             const LossWeights& w = {});

}  // namespace mvlift

#endif
