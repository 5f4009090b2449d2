#ifndef MVLIFT_PIPELINE_HPP
#define MVLIFT_PIPELINE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mvlift/decoder.hpp"
#include "mvlift/eval.hpp"
#include "mvlift/io.hpp"
#include "mvlift/losses.hpp"
#include "mvlift/simulator.hpp"

namespace mvlift {

/// How reference points are produced from 2D boxes.
///   learned       trained RoI location head
///   oracle        RoI center at the true camera depth (diagnostics)
///   uniform_depth one query per depth-vocabulary entry along the box ray
///   scale_depth   pinhole depth from the class height prior
struct PipelineConfig {
  std::uint64_t seed = 0;
  int n_views = 6;
  int n_objects = 8;
  int frames = 1;  // 1 or 2
  std::string rule = "top1";
  std::string query_generator = "learned";
  int model_dim = 72;
  int num_layers = 6;
  int num_heads = 4;
  int num_classes = 4;
  int num_depths = 10;
  int roi_size = kDefaultRoISize;
  int stride = kDefaultStride;
  int width = 800, height = 450;
  double hfov_deg = 70.0;
  double score_threshold = 0.05;
  double nms_iou = 0.6;
  double jitter_sigma = 0.02;
  double drop_prob = 0.05;
  double fp_rate = 0.2;
  double score_sigma = 0.05;
  LossWeights loss;
  std::string out_dir = "out";  // never serialized, so runs into different
                                // directories emit identical files

  Json to_json() const;
  static PipelineConfig from_json(const Json& j);
};

/// Throws ConfigError when any field is out of range or inconsistent.
void validate(const PipelineConfig& cfg);

/// Returns cfg.query_generator checked against the four known modes.
std::string checked_generator(const PipelineConfig& cfg);

namespace artifact {
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kScene = "scene.json";
inline constexpr const char* kRig = "rig.json";
inline constexpr const char* kDetections = "detections.json";
inline constexpr const char* kQueries = "queries.json";
inline constexpr const char* kAssociations = "associations.json";
inline constexpr const char* kPredictions = "predictions.json";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kWeights = "weights.json";
inline constexpr const char* kBev = "bev.svg";
inline constexpr const char* kTraining = "training.json";
}  // namespace artifact

/// cfg.out_dir joined with an artifact filename.
std::string artifact_path(const PipelineConfig& cfg, const char* name);

/// Reads weights.json from cfg.out_dir when present; otherwise initializes
/// both parameter sets from cfg.seed and writes the file. Either way the
/// result matches what the file holds, so reruns are idempotent.
std::pair<QueryGenParams, DecoderParams> load_or_init_weights(const PipelineConfig& cfg);

struct PipelineResult {
  Scene scene;
  std::vector<CameraView> views;  // per (frame, camera), from scene_views
  std::map<int, std::vector<Detection2D>> detections;
  std::vector<ObjectQuery> queries;
  std::vector<RelevantSet> associations;
  std::vector<Prediction3D> predictions;
  EvalResult projected_2d;
  EvalResult center_3d;
  DetectionLoss loss;
};

// Each stage writes its artifact(s) into cfg.out_dir and reports failures
// prefixed with the stage name.

/// scene.json + rig.json (the posed per-frame views).
Scene stage_simulate(const PipelineConfig& cfg);

/// detections.json: detector stub over every posed view.
std::map<int, std::vector<Detection2D>> stage_detect(const PipelineConfig& cfg,
                                                     const Scene& scene);

/// queries.json: one (or, for uniform_depth, num_depths) object queries per
/// detection. Loads weights.json from cfg.out_dir when present; otherwise
/// initializes from cfg.seed and saves it.
std::vector<ObjectQuery> stage_lift(const PipelineConfig& cfg, const Scene& scene,
                                    const std::map<int, std::vector<Detection2D>>& dets);

/// associations.json: frustum-projected relevant sets per query.
std::vector<RelevantSet> stage_associate(
    const PipelineConfig& cfg, const Scene& scene,
    const std::map<int, std::vector<Detection2D>>& dets,
    const std::vector<ObjectQuery>& queries);

/// predictions.json: decoder forward pass + box decoding.
std::vector<Prediction3D> stage_forward(const PipelineConfig& cfg, const Scene& scene,
                                        const std::map<int, std::vector<Detection2D>>& dets,
                                        const std::vector<ObjectQuery>& queries,
                                        const std::vector<RelevantSet>& sets);

struct EvalOutputs {
  EvalResult projected_2d;
  EvalResult center_3d;
  DetectionLoss loss;
};

/// metrics.json: projected-2D AP, center-distance AP, loss breakdown.
EvalOutputs stage_eval(const PipelineConfig& cfg, const Scene& scene,
                       const std::vector<ObjectQuery>& queries,
                       const std::vector<Prediction3D>& preds);

/// bev.svg: truths, reference points and predicted centers from above.
std::string stage_plot(const PipelineConfig& cfg, const Scene& scene,
                       const std::vector<ObjectQuery>& queries,
                       const std::vector<Prediction3D>& preds);

/// Full pipeline; also writes config.json. Deterministic: the same config
/// yields byte-identical artifacts.
PipelineResult run_pipeline(const PipelineConfig& cfg);

/// Gradient-descent loop over the location head, query embedding and
/// decoder on one scene built from cfg (regardless of cfg.query_generator
/// the learned path is trained, since it is the only differentiable one).
/// Returns iters + 1 losses: entry i is the loss before step i, the last
/// entry is the final loss. iters = 0 evaluates once and leaves the
/// weights untouched; otherwise the updated weights are saved.
std::vector<double> train_toy(const PipelineConfig& cfg, int iters, double lr = 1e-3);

}  // namespace mvlift

#endif
