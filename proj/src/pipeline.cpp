#include "mvlift/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "mvlift/bev_svg.hpp"
#include "mvlift/errors.hpp"

namespace mvlift {

namespace {

template <typename Fn>
auto with_stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(name) + ": " + e.what());
  }
}

void ensure_out_dir(const PipelineConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
}

std::map<int, CameraView> view_map(const std::vector<CameraView>& views) {
  std::map<int, CameraView> m;
  for (const auto& v : views) m[v.view_id] = v;
  return m;
}

/// Synthetic backbone output for every posed view.
std::map<int, FeatureMap> feature_maps(const PipelineConfig& cfg, const Scene& scene,
                                       const std::vector<CameraView>& views) {
  std::map<int, FeatureMap> maps;
  for (const auto& v : views)
    maps.emplace(v.view_id, synth_feature_map(scene, v, cfg.model_dim, cfg.stride));
  return maps;
}

std::map<int, const FeatureMap*> feature_ptrs(const std::map<int, FeatureMap>& maps) {
  std::map<int, const FeatureMap*> ptrs;
  for (const auto& [id, fm] : maps) ptrs.emplace(id, &fm);
  return ptrs;
}

ViewBoxes to_view_boxes(const std::map<int, std::vector<Detection2D>>& dets) {
  ViewBoxes boxes;
  for (const auto& [view_id, list] : dets) {
    auto& out = boxes[view_id];
    out.reserve(list.size());
    for (const auto& d : list) out.push_back(d.box);
  }
  return boxes;
}

const Box2D& source_box(const std::map<int, std::vector<Detection2D>>& dets,
                        const ObjectQuery& q) {
  auto it = dets.find(q.view_id);
  if (it == dets.end() || q.box_id < 0 ||
      q.box_id >= static_cast<int>(it->second.size()))
    throw ContractViolation("query references a missing detection");
  return it->second[static_cast<std::size_t>(q.box_id)].box;
}

}  // namespace

Json PipelineConfig::to_json() const {
  Json j;
  j["seed"] = seed;
  j["n_views"] = n_views;
  j["n_objects"] = n_objects;
  j["frames"] = frames;
  j["rule"] = rule;
  j["query_generator"] = query_generator;
  j["model_dim"] = model_dim;
  j["num_layers"] = num_layers;
  j["num_heads"] = num_heads;
  j["num_classes"] = num_classes;
  j["num_depths"] = num_depths;
  j["roi_size"] = roi_size;
  j["stride"] = stride;
  j["width"] = width;
  j["height"] = height;
  j["hfov_deg"] = hfov_deg;
  j["score_threshold"] = score_threshold;
  j["nms_iou"] = nms_iou;
  j["jitter_sigma"] = jitter_sigma;
  j["drop_prob"] = drop_prob;
  j["fp_rate"] = fp_rate;
  j["score_sigma"] = score_sigma;
  j["lambda_cls"] = loss.lambda_cls;
  j["lambda_box"] = loss.lambda_box;
  j["focal_alpha"] = loss.focal_alpha;
  j["focal_gamma"] = loss.focal_gamma;
  return j;
}

PipelineConfig PipelineConfig::from_json(const Json& j) {
  PipelineConfig c;
  c.seed = j.value("seed", c.seed);
  c.n_views = j.value("n_views", c.n_views);
  c.n_objects = j.value("n_objects", c.n_objects);
  c.frames = j.value("frames", c.frames);
  c.rule = j.value("rule", c.rule);
  c.query_generator = j.value("query_generator", c.query_generator);
  c.model_dim = j.value("model_dim", c.model_dim);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.num_depths = j.value("num_depths", c.num_depths);
  c.roi_size = j.value("roi_size", c.roi_size);
  c.stride = j.value("stride", c.stride);
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.hfov_deg = j.value("hfov_deg", c.hfov_deg);
  c.score_threshold = j.value("score_threshold", c.score_threshold);
  c.nms_iou = j.value("nms_iou", c.nms_iou);
  c.jitter_sigma = j.value("jitter_sigma", c.jitter_sigma);
  c.drop_prob = j.value("drop_prob", c.drop_prob);
  c.fp_rate = j.value("fp_rate", c.fp_rate);
  c.score_sigma = j.value("score_sigma", c.score_sigma);
  c.loss.lambda_cls = j.value("lambda_cls", c.loss.lambda_cls);
  c.loss.lambda_box = j.value("lambda_box", c.loss.lambda_box);
  c.loss.focal_alpha = j.value("focal_alpha", c.loss.focal_alpha);
  c.loss.focal_gamma = j.value("focal_gamma", c.loss.focal_gamma);
  return c;
}

std::string checked_generator(const PipelineConfig& cfg) {
  const auto& g = cfg.query_generator;
  if (g != "learned" && g != "oracle" && g != "uniform_depth" && g != "scale_depth")
    throw ConfigError("unknown query generator: " + g);
  return g;
}

void validate(const PipelineConfig& cfg) {
  if (cfg.n_views < 1) throw ConfigError("n_views must be positive");
  if (cfg.n_objects < 0) throw ConfigError("n_objects must be non-negative");
  if (cfg.frames != 1 && cfg.frames != 2) throw ConfigError("frames must be 1 or 2");
  rule_from_string(cfg.rule);
  checked_generator(cfg);
  if (cfg.model_dim < 6 || cfg.model_dim % 6 != 0)
    throw ConfigError("model_dim must be a positive multiple of 6");
  if (cfg.num_heads < 1 || cfg.model_dim % cfg.num_heads != 0)
    throw ConfigError("model_dim must divide evenly into num_heads");
  if (cfg.num_layers < 0) throw ConfigError("num_layers must be non-negative");
  if (cfg.num_classes < static_cast<int>(class_priors().size()))
    throw ConfigError("num_classes must cover every simulator class");
  if (cfg.num_depths < 1) throw ConfigError("num_depths must be positive");
  if (cfg.roi_size < 2) throw ConfigError("roi_size must be at least 2");
  if (cfg.stride < 1) throw ConfigError("stride must be positive");
  if (cfg.width < cfg.stride || cfg.height < cfg.stride)
    throw ConfigError("image must cover at least one feature cell");
  if (!(cfg.hfov_deg > 0) || !(cfg.hfov_deg < 180))
    throw ConfigError("hfov_deg must lie in (0, 180)");
  if (cfg.score_threshold < 0 || cfg.score_threshold > 1)
    throw ConfigError("score_threshold must lie in [0, 1]");
  if (cfg.nms_iou < 0 || cfg.nms_iou > 1) throw ConfigError("nms_iou must lie in [0, 1]");
  if (cfg.jitter_sigma < 0 || cfg.score_sigma < 0 || cfg.fp_rate < 0)
    throw ConfigError("noise rates must be non-negative");
  if (cfg.drop_prob < 0 || cfg.drop_prob > 1)
    throw ConfigError("drop_prob must lie in [0, 1]");
  if (cfg.loss.lambda_cls < 0 || cfg.loss.lambda_box < 0)
    throw ConfigError("loss weights must be non-negative");
  if (!(cfg.loss.focal_alpha > 0) || !(cfg.loss.focal_alpha < 1))
    throw ConfigError("focal_alpha must lie in (0, 1)");
  if (cfg.loss.focal_gamma < 0) throw ConfigError("focal_gamma must be non-negative");
  if (cfg.out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

std::string artifact_path(const PipelineConfig& cfg, const char* name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

std::pair<QueryGenParams, DecoderParams> load_or_init_weights(const PipelineConfig& cfg) {
  QueryGenParams qgen = QueryGenParams::init(cfg.model_dim, cfg.seed);
  DecoderParams dec = DecoderParams::init(cfg.model_dim, cfg.num_heads, cfg.num_layers,
                                          cfg.num_classes, cfg.seed);
  const std::string path = artifact_path(cfg, artifact::kWeights);
  if (std::filesystem::exists(path)) {
    weights_from_json(read_json_file(path), qgen, dec);
  } else {
    ensure_out_dir(cfg);
    write_json_file(path, weights_to_json(qgen, dec));
  }
  return {std::move(qgen), std::move(dec)};
}

Scene stage_simulate(const PipelineConfig& cfg) {
  return with_stage("simulate", [&] {
    validate(cfg);
    Scene scene = generate_scene(cfg.seed, cfg.n_objects, cfg.n_views, cfg.width,
                                 cfg.height, cfg.hfov_deg);
    if (cfg.frames == 2) scene = advance_frame(scene);
    ensure_out_dir(cfg);
    write_json_file(artifact_path(cfg, artifact::kScene), scene_to_json(scene));
    write_json_file(artifact_path(cfg, artifact::kRig), rig_to_json(scene_views(scene)));
    return scene;
  });
}

std::map<int, std::vector<Detection2D>> stage_detect(const PipelineConfig& cfg,
                                                     const Scene& scene) {
  return with_stage("detect", [&] {
    DetectorStubConfig det;
    det.jitter_sigma = cfg.jitter_sigma;
    det.drop_prob = cfg.drop_prob;
    det.fp_rate = cfg.fp_rate;
    det.score_sigma = cfg.score_sigma;
    det.score_threshold = cfg.score_threshold;
    det.nms_iou = cfg.nms_iou;
    det.seed = cfg.seed;
    std::map<int, std::vector<Detection2D>> out;
    for (const auto& view : scene_views(scene))
      out[view.view_id] = detector_stub(render_gt_2d(scene, view), view, det);
    ensure_out_dir(cfg);
    write_json_file(artifact_path(cfg, artifact::kDetections), detections_to_json(out));
    return out;
  });
}

std::vector<ObjectQuery> stage_lift(const PipelineConfig& cfg, const Scene& scene,
                                    const std::map<int, std::vector<Detection2D>>& dets) {
  return with_stage("lift", [&] {
    const std::string generator = checked_generator(cfg);
    auto [qgen, dec] = load_or_init_weights(cfg);
    const auto views = view_map(scene_views(scene));

    // Feature maps are only needed by the learned head.
    std::map<int, FeatureMap> maps;
    if (generator == "learned") {
      std::vector<CameraView> with_dets;
      for (const auto& [view_id, list] : dets)
        if (!list.empty()) with_dets.push_back(views.at(view_id));
      maps = feature_maps(cfg, scene, with_dets);
    }

    std::vector<ObjectQuery> queries;
    int query_id = 0;
    for (const auto& [view_id, list] : dets) {
      if (list.empty()) continue;
      const CameraView& view = views.at(view_id);
      for (const auto& det : list) {
        const Box2D& box = det.box;
        const auto k_roi = equivalent_intrinsics(view.intr, box, cfg.roi_size, cfg.roi_size);
        std::vector<Vec3> refs;
        if (generator == "learned") {
          const auto roi = roi_align(maps.at(view_id), box, cfg.roi_size, cfg.roi_size);
          const Point25D loc = predict_roi_location(roi, k_roi, qgen.head);
          refs.push_back(unproject_2_5d(loc, k_roi, view.extr));
        } else if (generator == "oracle") {
          if (det.object_id >= 0 &&
              det.object_id < static_cast<int>(scene.objects.size())) {
            const Box3D posed = object_at_time(scene.objects[det.object_id], scene.t_ref,
                                               view.timestamp);
            const Point25D loc =
                oracle_roi_location(cfg.roi_size, cfg.roi_size, view, posed.center);
            refs.push_back(unproject_2_5d(loc, k_roi, view.extr));
          } else {
            // False positives carry no truth; fall back to the scale prior.
            refs.push_back(scale_based_depth_ref(
                box, view, class_priors()[box.class_id].size.z()));
          }
        } else if (generator == "scale_depth") {
          refs.push_back(
              scale_based_depth_ref(box, view, class_priors()[box.class_id].size.z()));
        } else {  // uniform_depth
          refs = uniform_depth_refs(box, view, cfg.num_depths);
        }
        for (const auto& p_ref : refs)
          queries.push_back(init_query(p_ref, qgen, view_id, box.box_id, query_id++));
      }
    }
    ensure_out_dir(cfg);
    write_json_file(artifact_path(cfg, artifact::kQueries), queries_to_json(queries));
    return queries;
  });
}

std::vector<RelevantSet> stage_associate(
    const PipelineConfig& cfg, const Scene& scene,
    const std::map<int, std::vector<Detection2D>>& dets,
    const std::vector<ObjectQuery>& queries) {
  return with_stage("associate", [&] {
    const auto views = scene_views(scene);
    const ViewBoxes boxes = to_view_boxes(dets);
    const FrustumGrid grid =
        build_frustum_grid(cfg.roi_size, cfg.roi_size, uniform_depths(cfg.num_depths));
    std::vector<RelevantSet> sets;
    sets.reserve(queries.size());
    for (const auto& q : queries)
      sets.push_back(select_relevant({q.view_id, q.box_id}, source_box(dets, q), views,
                                     boxes, grid, rule_from_string(cfg.rule), q.query_id));
    ensure_out_dir(cfg);
    write_json_file(artifact_path(cfg, artifact::kAssociations),
                    associations_to_json(sets));
    return sets;
  });
}

std::vector<Prediction3D> stage_forward(const PipelineConfig& cfg, const Scene& scene,
                                        const std::map<int, std::vector<Detection2D>>& dets,
                                        const std::vector<ObjectQuery>& queries,
                                        const std::vector<RelevantSet>& sets) {
  return with_stage("forward", [&] {
    ensure_out_dir(cfg);
    if (queries.empty()) {
      write_json_file(artifact_path(cfg, artifact::kPredictions), predictions_to_json({}));
      return std::vector<Prediction3D>{};
    }
    if (sets.size() != queries.size())
      throw ShapeError("association count does not match the query count");
    auto [qgen, dec] = load_or_init_weights(cfg);
    const auto all_views = scene_views(scene);
    const auto views = view_map(all_views);
    const auto maps = feature_maps(cfg, scene, all_views);
    const auto ptrs = feature_ptrs(maps);
    const ViewBoxes boxes = to_view_boxes(dets);

    Matrix q_mat(static_cast<Eigen::Index>(queries.size()), cfg.model_dim);
    std::vector<KeySet> keysets;
    keysets.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
      if (queries[i].embedding.size() != cfg.model_dim)
        throw ShapeError("query embedding width does not match model_dim");
      q_mat.row(static_cast<Eigen::Index>(i)) = queries[i].embedding;
      const auto indices = gather_key_indices(sets[i], boxes, ptrs);
      keysets.push_back(
          build_key_set(indices, ptrs, views, cfg.model_dim, cfg.num_depths));
    }

    const DecoderResult fw = decoder_forward(q_mat, keysets, dec);
    auto preds = predict_boxes(fw.logits, fw.reg, queries);
    write_json_file(artifact_path(cfg, artifact::kPredictions),
                    predictions_to_json(preds));
    return preds;
  });
}

EvalOutputs stage_eval(const PipelineConfig& cfg, const Scene& scene,
                       const std::vector<ObjectQuery>& queries,
                       const std::vector<Prediction3D>& preds) {
  return with_stage("eval", [&] {
    if (preds.size() != queries.size())
      throw ShapeError("prediction count does not match the query count");
    std::vector<ScoredBox3D> scored;
    scored.reserve(preds.size());
    for (const auto& p : preds) scored.push_back({as_box3d(p), p.score});

    EvalOutputs out;
    out.projected_2d =
        eval_projected_2d(scored, scene.objects, scene_views(scene), scene.t_ref);
    out.center_3d = eval_3d_center_distance(scored, scene.objects);

    Matrix logits(static_cast<Eigen::Index>(preds.size()), cfg.num_classes);
    Matrix reg(static_cast<Eigen::Index>(preds.size()), 10);
    std::vector<Vec3> p_refs;
    p_refs.reserve(queries.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i].query_id != queries[i].query_id)
        throw ShapeError("predictions and queries are not aligned");
      if (preds[i].logits.size() != cfg.num_classes || preds[i].reg.size() != 10)
        throw ShapeError("prediction row width is wrong");
      logits.row(static_cast<Eigen::Index>(i)) = preds[i].logits;
      reg.row(static_cast<Eigen::Index>(i)) = preds[i].reg;
      p_refs.push_back(queries[i].p_ref);
    }
    out.loss = detection_loss(logits, reg, p_refs, scene.objects, cfg.loss);

    ensure_out_dir(cfg);
    write_json_file(artifact_path(cfg, artifact::kMetrics),
                    metrics_to_json(out.projected_2d, out.center_3d, out.loss));
    return out;
  });
}

std::string stage_plot(const PipelineConfig& cfg, const Scene& scene,
                       const std::vector<ObjectQuery>& queries,
                       const std::vector<Prediction3D>& preds) {
  return with_stage("plot", [&] {
    std::vector<Vec3> refs;
    refs.reserve(queries.size());
    for (const auto& q : queries) refs.push_back(q.p_ref);
    std::vector<Box3D> pred_boxes;
    pred_boxes.reserve(preds.size());
    for (const auto& p : preds) pred_boxes.push_back(as_box3d(p));
    const std::string svg = render_bev_svg(scene.objects, refs, pred_boxes);
    ensure_out_dir(cfg);
    const std::string path = artifact_path(cfg, artifact::kBev);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << svg;
    if (!out) throw ConfigError("write failed: " + path);
    return path;
  });
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  validate(cfg);
  ensure_out_dir(cfg);
  write_json_file(artifact_path(cfg, artifact::kConfig), cfg.to_json());
  PipelineResult r;
  r.scene = stage_simulate(cfg);
  r.views = scene_views(r.scene);
  r.detections = stage_detect(cfg, r.scene);
  r.queries = stage_lift(cfg, r.scene, r.detections);
  r.associations = stage_associate(cfg, r.scene, r.detections, r.queries);
  r.predictions = stage_forward(cfg, r.scene, r.detections, r.queries, r.associations);
  const EvalOutputs ev = stage_eval(cfg, r.scene, r.queries, r.predictions);
  r.projected_2d = ev.projected_2d;
  r.center_3d = ev.center_3d;
  r.loss = ev.loss;
  stage_plot(cfg, r.scene, r.queries, r.predictions);
  return r;
}

std::vector<double> train_toy(const PipelineConfig& cfg, int iters, double lr) {
  return with_stage("train", [&] {
    validate(cfg);
    if (iters < 0) throw ConfigError("iters must be non-negative");
    auto [qgen, dec] = load_or_init_weights(cfg);

    const Scene scene = stage_simulate(cfg);
    const auto dets = stage_detect(cfg, scene);
    const auto all_views = scene_views(scene);
    const auto views = view_map(all_views);
    const auto maps = feature_maps(cfg, scene, all_views);
    const auto ptrs = feature_ptrs(maps);
    const ViewBoxes boxes = to_view_boxes(dets);

    // Fixed per-query inputs: the trainable path starts at the RoI features.
    struct QueryInput {
      RoIFeature roi;
      EquivalentIntrinsics k_roi;
      Extrinsics extr;
    };
    std::vector<QueryInput> inputs;
    for (const auto& [view_id, list] : dets) {
      const CameraView& view = views.at(view_id);
      for (const auto& det : list) {
        const auto k_roi =
            equivalent_intrinsics(view.intr, det.box, cfg.roi_size, cfg.roi_size);
        inputs.push_back({roi_align(maps.at(view_id), det.box, cfg.roi_size, cfg.roi_size),
                          k_roi, view.extr});
      }
    }
    if (inputs.empty()) throw ConfigError("scene produced no detections to train on");

    // Association and key gathering are pure box geometry, fixed across steps.
    const FrustumGrid grid =
        build_frustum_grid(cfg.roi_size, cfg.roi_size, uniform_depths(cfg.num_depths));
    std::vector<int> key_counts;
    std::vector<Matrix> key_feature_blocks, key_pe_blocks;
    int query_id = 0;
    for (const auto& [view_id, list] : dets) {
      for (const auto& det : list) {
        const auto rset = select_relevant({view_id, det.box.box_id}, det.box, all_views,
                                          boxes, grid, rule_from_string(cfg.rule),
                                          query_id++);
        const auto ks = build_key_set(gather_key_indices(rset, boxes, ptrs), ptrs, views,
                                      cfg.model_dim, cfg.num_depths);
        key_counts.push_back(static_cast<int>(ks.features.rows()));
        key_feature_blocks.push_back(ks.features);
        key_pe_blocks.push_back(ks.pe_base);
      }
    }
    Eigen::Index total_keys = 0;
    for (const auto& b : key_feature_blocks) total_keys += b.rows();
    Matrix key_features(total_keys, cfg.model_dim), key_pe(total_keys, cfg.model_dim);
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < key_feature_blocks.size(); ++i) {
      key_features.middleRows(at, key_feature_blocks[i].rows()) = key_feature_blocks[i];
      key_pe.middleRows(at, key_pe_blocks[i].rows()) = key_pe_blocks[i];
      at += key_feature_blocks[i].rows();
    }

    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(iters) + 1);
    for (int iter = 0; iter <= iters; ++iter) {
      ad::Tape t;
      ad::ParamBinder pb(t);
      visit_params(qgen, pb);
      visit_params(dec, pb);
      const LocationHeadVars head{pb.var("qgen.head.conv_w"), pb.var("qgen.head.conv_b"),
                                  pb.var("qgen.head.fc1_w"),  pb.var("qgen.head.fc1_b"),
                                  pb.var("qgen.head.fc2_w"),  pb.var("qgen.head.fc2_b")};
      std::vector<ad::Var> ref_rows;
      ref_rows.reserve(inputs.size());
      for (const auto& in : inputs) {
        const ad::Var loc = location_head_ad(t, in.roi, in.k_roi, head);
        ref_rows.push_back(lift_ad(t, loc, in.k_roi, in.extr));
      }
      const ad::Var p_refs = ad::concat_rows(ref_rows);
      const ad::Var pe = positional_encode_rows(t, p_refs, cfg.model_dim);
      const ad::Var q = ad::linear(pe, pb.var("qgen.pe_w"), pb.var("qgen.pe_b"));

      const auto lookup = [&pb](const std::string& name, const Matrix&) {
        return pb.var(name);
      };
      const DecoderVars dv = bind_params(lookup, dec);
      const auto fw = decoder_forward_ad(q, t.constant(key_features), t.constant(key_pe),
                                         key_counts, dv);
      const auto dl = detection_loss_ad(t, fw.logits, fw.reg, p_refs, scene.objects,
                                        cfg.loss);
      losses.push_back(dl.total.value()(0, 0));
      if (iter == iters) break;
      t.backward(dl.total);
      pb.sgd_step(lr);
    }

    if (iters > 0)
      write_json_file(artifact_path(cfg, artifact::kWeights), weights_to_json(qgen, dec));
    return losses;
  });
}

}  // namespace mvlift
