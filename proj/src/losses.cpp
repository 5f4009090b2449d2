#include "mvlift/losses.hpp"

#include <algorithm>
#include <cmath>

#include "mvlift/errors.hpp"

namespace mvlift {

namespace {
constexpr double kLogitClamp = 30.0;

double stable_sigmoid(double logit) {
  const double x = std::clamp(logit, -kLogitClamp, kLogitClamp);
  return 1.0 / (1.0 + std::exp(-x));
}
}  // namespace

double binary_cross_entropy(double logit, double target) {
  const double p = stable_sigmoid(logit);
  return -target * std::log(p) - (1.0 - target) * std::log(1.0 - p);
}

double focal_loss(double logit, double target, double alpha, double gamma) {
  const double p = stable_sigmoid(logit);
  if (target > 0.5) {
    return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
  }
  return -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
}

ad::Var focal_loss_ad(ad::Var logits, const Matrix& targets, double alpha,
                      double gamma) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw ShapeError("focal_loss_ad: logits/targets shape mismatch");
  }
  using namespace ad;
  const Matrix ones = Matrix::Ones(targets.rows(), targets.cols());
  Var p = sigmoid(clamp(logits, -kLogitClamp, kLogitClamp));
  Var q = add_const(neg(p), ones);  // 1 - p
  Var pos = cmul(pow_const(q, gamma), log_(p));
  Var negterm = cmul(pow_const(p, gamma), log_(q));
  Var weighted = add(cmul_const(pos, alpha * targets),
                     cmul_const(negterm, (1.0 - alpha) * (ones - targets)));
  return neg(weighted);
}

RowVector encode_box3d(const Box3D& gt, const Vec3& p_ref) {
  if (gt.size.minCoeff() <= 0) {
    throw DegenerateBoxError("encode_box3d: non-positive box size");
  }
  RowVector t(10);
  t << gt.center.x() - p_ref.x(), gt.center.y() - p_ref.y(),
      gt.center.z() - p_ref.z(), std::log(gt.size.x()), std::log(gt.size.y()),
      std::log(gt.size.z()), std::sin(gt.yaw), std::cos(gt.yaw),
      gt.velocity.x(), gt.velocity.y();
  return t;
}

double box_l1_loss(const RowVector& pred, const RowVector& target) {
  if (pred.size() != target.size() || pred.size() == 0) {
    throw ShapeError("box_l1_loss: size mismatch or empty");
  }
  return (pred - target).cwiseAbs().mean();
}

double total_loss(double cls, double box, const LossWeights& w) {
  return w.lambda_cls * cls + w.lambda_box * box;
}

Matrix match_cost_matrix(const Matrix& logits, const Matrix& reg,
                         const std::vector<Vec3>& p_refs,
                         const std::vector<Box3D>& gts,
                         const LossWeights& w) {
  const int n = static_cast<int>(logits.rows());
  const int m = static_cast<int>(gts.size());
  if (reg.rows() != n || static_cast<int>(p_refs.size()) != n) {
    throw ShapeError("match_cost_matrix: prediction row count mismatch");
  }
  Matrix cost(n, m);
  for (int j = 0; j < m; ++j) {
    const int cls_id = gts[j].class_id;
    if (cls_id < 0 || cls_id >= logits.cols()) {
      throw ConfigError("match_cost_matrix: class id outside logit range");
    }
    for (int i = 0; i < n; ++i) {
      const RowVector target = encode_box3d(gts[j], p_refs[i]);
      cost(i, j) = w.lambda_cls * -stable_sigmoid(logits(i, cls_id)) +
                   box_l1_loss(reg.row(i), target);
    }
  }
  return cost;
}

DetectionLossVars detection_loss_ad(ad::Tape& t, ad::Var logits, ad::Var reg,
                                    ad::Var p_refs,
                                    const std::vector<Box3D>& gts,
                                    const LossWeights& w) {
  using namespace ad;
  const int n = static_cast<int>(logits.rows());
  const int num_classes = static_cast<int>(logits.cols());
  if (reg.rows() != n || reg.cols() != 10 || p_refs.rows() != n ||
      p_refs.cols() != 3) {
    throw ShapeError("detection_loss_ad: prediction shape mismatch");
  }

  std::vector<Vec3> ref_values;
  for (int i = 0; i < n; ++i) ref_values.push_back(p_refs.value().row(i).transpose());

  DetectionLossVars out;
  if (n > 0 && !gts.empty()) {
    out.assignment = hungarian_assign(
        match_cost_matrix(logits.value(), reg.value(), ref_values, gts, w));
  } else {
    for (int i = 0; i < n; ++i) out.assignment.unmatched_rows.push_back(i);
  }

  if (n == 0) {
    out.cls = t.constant(Matrix::Zero(1, 1));
    out.box = t.constant(Matrix::Zero(1, 1));
    out.total = t.constant(Matrix::Zero(1, 1));
    return out;
  }

  Matrix targets = Matrix::Zero(n, num_classes);
  for (const auto& [i, j] : out.assignment.pairs) {
    targets(i, gts[j].class_id) = 1.0;
  }
  out.cls = mean(focal_loss_ad(logits, targets, w.focal_alpha, w.focal_gamma));

  if (!out.assignment.pairs.empty()) {
    const int pairs = static_cast<int>(out.assignment.pairs.size());
    std::vector<int> rows;
    Matrix abs_targets(pairs, 10);
    for (int k = 0; k < pairs; ++k) {
      const auto& [i, j] = out.assignment.pairs[static_cast<std::size_t>(k)];
      rows.push_back(i);
      abs_targets.row(k) = encode_box3d(gts[j], Vec3::Zero());
    }
    // reg - (target - p_ref) = reg + [p_ref | 0...] - absolute target.
    Var padded_ref = concat_cols(
        {gather_rows(p_refs, rows), t.constant(Matrix::Zero(pairs, 7))});
    Var diff = add_const(add(gather_rows(reg, rows), padded_ref), -abs_targets);
    out.box = mean(abs_(diff));
  } else {
    out.box = t.constant(Matrix::Zero(1, 1));
  }

  out.total = add(scale(out.cls, w.lambda_cls), scale(out.box, w.lambda_box));
  return out;
}

DetectionLossVars detection_loss_ad(ad::Tape& t, ad::Var logits, ad::Var reg,
                                    const std::vector<Vec3>& p_refs,
                                    const std::vector<Box3D>& gts,
                                    const LossWeights& w) {
  Matrix refs(static_cast<Eigen::Index>(p_refs.size()), 3);
  for (std::size_t i = 0; i < p_refs.size(); ++i)
    refs.row(static_cast<Eigen::Index>(i)) = p_refs[i].transpose();
  return detection_loss_ad(t, logits, reg, t.constant(std::move(refs)), gts, w);
}

DetectionLoss detection_loss(const Matrix& logits, const Matrix& reg,
                             const std::vector<Vec3>& p_refs,
                             const std::vector<Box3D>& gts,
                             const LossWeights& w) {
  ad::Tape t;
  auto vars = detection_loss_ad(t, t.constant(logits), t.constant(reg),
                                p_refs, gts, w);
  DetectionLoss out;
  out.cls = vars.cls.value()(0, 0);
  out.box = vars.box.value()(0, 0);
  out.total = vars.total.value()(0, 0);
  out.assignment = std::move(vars.assignment);
  return out;
}

}  // namespace mvlift
