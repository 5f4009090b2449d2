#include "mvlift/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mvlift/association.hpp"
#include "mvlift/errors.hpp"

namespace mvlift {

double average_precision(std::vector<std::pair<double, bool>> scored_hits, int num_gt,
                         std::vector<PrSample>* pr) {
  if (pr) pr->clear();
  if (num_gt <= 0) throw ConfigError("average_precision: num_gt must be positive");
  std::stable_sort(scored_hits.begin(), scored_hits.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  // Precision/recall after each prefix of the ranked list.
  std::vector<double> precisions, recalls;
  int tp = 0;
  for (std::size_t i = 0; i < scored_hits.size(); ++i) {
    if (scored_hits[i].second) ++tp;
    const double prec = static_cast<double>(tp) / static_cast<double>(i + 1);
    const double rec = static_cast<double>(tp) / num_gt;
    precisions.push_back(prec);
    recalls.push_back(rec);
    if (pr) pr->push_back({scored_hits[i].first, prec, rec});
  }
  double sum = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    double best = 0;
    for (std::size_t i = 0; i < recalls.size(); ++i)
      if (recalls[i] >= r - 1e-12) best = std::max(best, precisions[i]);
    sum += best;
  }
  return sum / 101.0;
}

namespace {

/// One projected instance: where a 3D box landed in one view.
struct Instance {
  int view_id = 0;
  int class_id = 0;
  Box2D box;        // clipped to the image
  double score = 0;  // predictions only
};

/// Projects a box into every view at that view's timestamp, keeping
/// instances that survive clipping with enough area.
std::vector<Instance> project_instances(const Box3D& box, double score,
                                        const std::vector<CameraView>& views,
                                        double t_ref, double min_area) {
  std::vector<Instance> out;
  for (const auto& view : views) {
    const Box3D posed = object_at_time(box, t_ref, view.timestamp);
    const auto pb = project_box3d(view, posed);
    if (!pb || !pb->clipped.valid() || pb->clipped.area() < min_area) continue;
    out.push_back({view.view_id, box.class_id, pb->clipped, score});
  }
  return out;
}

EvalResult summarize(std::map<int, std::vector<std::pair<double, bool>>>& hits_by_class,
                     const std::map<int, int>& gt_count_by_class) {
  EvalResult result;
  double ap_sum = 0;
  for (const auto& [cls, num_gt] : gt_count_by_class) {
    ClassEval ce;
    ce.class_id = cls;
    ce.num_gt = num_gt;
    auto it = hits_by_class.find(cls);
    std::vector<std::pair<double, bool>> scored = it == hits_by_class.end()
                                                      ? std::vector<std::pair<double, bool>>{}
                                                      : it->second;
    ce.ap = average_precision(std::move(scored), num_gt, &ce.pr);
    ap_sum += ce.ap;
    result.per_class.push_back(std::move(ce));
  }
  result.mean_ap = result.per_class.empty() ? 0 : ap_sum / result.per_class.size();
  return result;
}

}  // namespace

EvalResult eval_projected_2d(const std::vector<ScoredBox3D>& preds,
                             const std::vector<Box3D>& gts,
                             const std::vector<CameraView>& views, double t_ref,
                             double iou_thresh, double min_area) {
  if (views.empty()) throw ConfigError("eval_projected_2d: no views");
  std::vector<Instance> gt_instances;
  std::map<int, int> gt_count_by_class;
  for (const auto& gt : gts)
    for (auto& inst : project_instances(gt, 1.0, views, t_ref, min_area)) {
      ++gt_count_by_class[inst.class_id];
      gt_instances.push_back(std::move(inst));
    }

  std::vector<Instance> pred_instances;
  for (const auto& p : preds)
    for (auto& inst : project_instances(p.box, p.score, views, t_ref, min_area))
      pred_instances.push_back(std::move(inst));
  std::stable_sort(pred_instances.begin(), pred_instances.end(),
                   [](const Instance& a, const Instance& b) { return a.score > b.score; });

  // Greedy matching: each prediction claims the best still-free truth
  // instance in the same view with the same class.
  std::vector<bool> taken(gt_instances.size(), false);
  std::map<int, std::vector<std::pair<double, bool>>> hits_by_class;
  for (const auto& pi : pred_instances) {
    int best = -1;
    double best_iou = -1;
    for (std::size_t j = 0; j < gt_instances.size(); ++j) {
      if (taken[j]) continue;
      const auto& gi = gt_instances[j];
      if (gi.view_id != pi.view_id || gi.class_id != pi.class_id) continue;
      const double iou = iou_2d(pi.box, gi.box);
      if (iou >= iou_thresh && iou > best_iou) {  // ties keep the first truth
        best = static_cast<int>(j);
        best_iou = iou;
      }
    }
    if (best >= 0) taken[best] = true;
    if (gt_count_by_class.count(pi.class_id))
      hits_by_class[pi.class_id].push_back({pi.score, best >= 0});
  }
  return summarize(hits_by_class, gt_count_by_class);
}

EvalResult eval_3d_center_distance(const std::vector<ScoredBox3D>& preds,
                                   const std::vector<Box3D>& gts, double center_dist) {
  std::map<int, int> gt_count_by_class;
  for (const auto& gt : gts) ++gt_count_by_class[gt.class_id];

  std::vector<std::size_t> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score > preds[b].score;
  });

  std::vector<bool> taken(gts.size(), false);
  std::map<int, std::vector<std::pair<double, bool>>> hits_by_class;
  for (std::size_t i : order) {
    const auto& p = preds[i];
    int best = -1;
    double best_dist = center_dist + 1;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[j] || gts[j].class_id != p.box.class_id) continue;
      const double d = (gts[j].center - p.box.center).norm();
      if (d <= center_dist && d < best_dist) {
        best = static_cast<int>(j);
        best_dist = d;
      }
    }
    if (best >= 0) taken[best] = true;
    if (gt_count_by_class.count(p.box.class_id))
      hits_by_class[p.box.class_id].push_back({p.score, best >= 0});
  }
  return summarize(hits_by_class, gt_count_by_class);
}

}  // namespace mvlift
