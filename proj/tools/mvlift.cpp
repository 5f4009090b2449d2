#include <cstdlib>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mvlift/pipeline.hpp"

namespace {

using mvlift::PipelineConfig;

/// Options that were actually passed on the command line override the
/// stored config; everything else keeps the stored (or default) value.
struct ConfigFlags {
  std::vector<std::function<void(PipelineConfig&)>> setters;

  template <typename T, typename Assign>
  CLI::Option* opt(CLI::App* cmd, const std::string& flag, const std::string& help,
                   Assign assign) {
    auto val = std::make_shared<T>();
    CLI::Option* o = cmd->add_option(flag, *val, help);
    setters.push_back([o, val, assign](PipelineConfig& cfg) {
      if (o->count() > 0) assign(cfg, *val);
    });
    return o;
  }

  void apply(PipelineConfig& cfg) const {
    for (const auto& s : setters) s(cfg);
  }
};

struct CommandState {
  std::string out;
  ConfigFlags flags;
  int iters = 200;
  double lr = 1e-3;
};

void attach_config_flags(CLI::App* cmd, ConfigFlags& f, bool generative) {
  auto* seed = f.opt<std::uint64_t>(cmd, "--seed", "RNG seed",
                                    [](PipelineConfig& c, const std::uint64_t& v) { c.seed = v; });
  if (generative) seed->required();
  f.opt<int>(cmd, "--views", "cameras in the ring",
             [](PipelineConfig& c, const int& v) { c.n_views = v; });
  f.opt<int>(cmd, "--objects", "objects in the scene",
             [](PipelineConfig& c, const int& v) { c.n_objects = v; });
  f.opt<int>(cmd, "--frames", "frames to simulate (1 or 2)",
             [](PipelineConfig& c, const int& v) { c.frames = v; });
  f.opt<std::string>(cmd, "--rule", "relevance rule: top1 or all_overlapped",
                     [](PipelineConfig& c, const std::string& v) { c.rule = v; });
  f.opt<std::string>(cmd, "--generator",
                     "query generator: learned, oracle, uniform_depth or scale_depth",
                     [](PipelineConfig& c, const std::string& v) { c.query_generator = v; });
  f.opt<int>(cmd, "--dim", "model width (multiple of 6)",
             [](PipelineConfig& c, const int& v) { c.model_dim = v; });
  f.opt<int>(cmd, "--layers", "decoder layers",
             [](PipelineConfig& c, const int& v) { c.num_layers = v; });
  f.opt<int>(cmd, "--heads", "attention heads",
             [](PipelineConfig& c, const int& v) { c.num_heads = v; });
  f.opt<int>(cmd, "--classes", "classification head width",
             [](PipelineConfig& c, const int& v) { c.num_classes = v; });
  f.opt<int>(cmd, "--depths", "depth vocabulary size",
             [](PipelineConfig& c, const int& v) { c.num_depths = v; });
  f.opt<int>(cmd, "--roi", "RoI side length in cells",
             [](PipelineConfig& c, const int& v) { c.roi_size = v; });
  f.opt<int>(cmd, "--stride", "feature stride in pixels",
             [](PipelineConfig& c, const int& v) { c.stride = v; });
  f.opt<int>(cmd, "--width", "image width",
             [](PipelineConfig& c, const int& v) { c.width = v; });
  f.opt<int>(cmd, "--height", "image height",
             [](PipelineConfig& c, const int& v) { c.height = v; });
  f.opt<double>(cmd, "--hfov", "horizontal field of view (degrees)",
                [](PipelineConfig& c, const double& v) { c.hfov_deg = v; });
  f.opt<double>(cmd, "--score-threshold", "detector score cutoff",
                [](PipelineConfig& c, const double& v) { c.score_threshold = v; });
  f.opt<double>(cmd, "--nms-iou", "detector NMS overlap threshold",
                [](PipelineConfig& c, const double& v) { c.nms_iou = v; });
  f.opt<double>(cmd, "--jitter", "detector edge noise fraction",
                [](PipelineConfig& c, const double& v) { c.jitter_sigma = v; });
  f.opt<double>(cmd, "--drop-prob", "detector box drop probability",
                [](PipelineConfig& c, const double& v) { c.drop_prob = v; });
  f.opt<double>(cmd, "--fp-rate", "mean false positives per view",
                [](PipelineConfig& c, const double& v) { c.fp_rate = v; });
  f.opt<double>(cmd, "--score-sigma", "detector score noise",
                [](PipelineConfig& c, const double& v) { c.score_sigma = v; });
  f.opt<double>(cmd, "--lambda-cls", "classification loss weight",
                [](PipelineConfig& c, const double& v) { c.loss.lambda_cls = v; });
  f.opt<double>(cmd, "--lambda-box", "regression loss weight",
                [](PipelineConfig& c, const double& v) { c.loss.lambda_box = v; });
}

/// Stored config (if any) + command-line overrides, persisted back so the
/// directory always records the effective configuration.
PipelineConfig effective_config(const CommandState& st) {
  PipelineConfig cfg;
  cfg.out_dir = st.out;
  const std::string path = mvlift::artifact_path(cfg, mvlift::artifact::kConfig);
  if (std::filesystem::exists(path))
    cfg = PipelineConfig::from_json(mvlift::read_json_file(path));
  cfg.out_dir = st.out;
  st.flags.apply(cfg);
  mvlift::validate(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  mvlift::write_json_file(path, cfg.to_json());
  return cfg;
}

mvlift::Json load(const PipelineConfig& cfg, const char* name) {
  return mvlift::read_json_file(mvlift::artifact_path(cfg, name));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lifts per-view 2D detections to 3D boxes on a synthetic camera rig"};
  app.require_subcommand(1);

  std::string out_default = "out";
  if (const char* env = std::getenv("MVLIFT_OUT_DIR")) out_default = env;

  std::deque<CommandState> states;
  const auto add_command = [&](const std::string& name, const std::string& help,
                               bool generative,
                               std::function<void(const CommandState&)> body) {
    CLI::App* cmd = app.add_subcommand(name, help);
    states.emplace_back();
    CommandState* st = &states.back();
    st->out = out_default;
    cmd->add_option("--out", st->out, "artifact directory")->capture_default_str();
    attach_config_flags(cmd, st->flags, generative);
    cmd->callback([st, body] { body(*st); });
    return cmd;
  };

  using namespace mvlift;

  add_command("simulate", "generate a scene and write scene.json + rig.json", true,
              [](const CommandState& st) {
                const Scene scene = stage_simulate(effective_config(st));
                std::cout << "simulated " << scene.objects.size() << " objects, "
                          << scene_views(scene).size() << " views\n";
              });

  add_command("detect", "run the detector stub over the simulated scene", false,
              [](const CommandState& st) {
                const PipelineConfig cfg = effective_config(st);
                const Scene scene = scene_from_json(load(cfg, artifact::kScene));
                const auto dets = stage_detect(cfg, scene);
                std::size_t n = 0;
                for (const auto& [id, list] : dets) n += list.size();
                std::cout << "detected " << n << " boxes across " << dets.size()
                          << " views\n";
              });

  add_command("lift", "lift detections to 3D object queries", false,
              [](const CommandState& st) {
                const PipelineConfig cfg = effective_config(st);
                const Scene scene = scene_from_json(load(cfg, artifact::kScene));
                const auto dets = detections_from_json(load(cfg, artifact::kDetections));
                const auto queries = stage_lift(cfg, scene, dets);
                std::cout << "lifted " << queries.size() << " queries\n";
              });

  add_command("associate", "select cross-view relevant boxes per query", false,
              [](const CommandState& st) {
                const PipelineConfig cfg = effective_config(st);
                const Scene scene = scene_from_json(load(cfg, artifact::kScene));
                const auto dets = detections_from_json(load(cfg, artifact::kDetections));
                const auto queries = queries_from_json(load(cfg, artifact::kQueries));
                const auto sets = stage_associate(cfg, scene, dets, queries);
                std::cout << "associated " << sets.size() << " queries\n";
              });

  add_command("forward", "run the decoder and write predictions.json", false,
              [](const CommandState& st) {
                const PipelineConfig cfg = effective_config(st);
                const Scene scene = scene_from_json(load(cfg, artifact::kScene));
                const auto dets = detections_from_json(load(cfg, artifact::kDetections));
                const auto queries = queries_from_json(load(cfg, artifact::kQueries));
                const auto sets =
                    associations_from_json(load(cfg, artifact::kAssociations));
                const auto preds = stage_forward(cfg, scene, dets, queries, sets);
                std::cout << "predicted " << preds.size() << " boxes\n";
              });

  add_command("eval", "score predictions and write metrics.json", false,
              [](const CommandState& st) {
                const PipelineConfig cfg = effective_config(st);
                const Scene scene = scene_from_json(load(cfg, artifact::kScene));
                const auto queries = queries_from_json(load(cfg, artifact::kQueries));
                const auto preds =
                    predictions_from_json(load(cfg, artifact::kPredictions));
                const auto ev = stage_eval(cfg, scene, queries, preds);
                std::cout << "mean AP projected 2d: " << ev.projected_2d.mean_ap
                          << "\nmean AP 3d centers:   " << ev.center_3d.mean_ap
                          << "\nloss total:           " << ev.loss.total << '\n';
              });

  add_command("plot-bev", "render a bird's-eye SVG of the scene", false,
              [](const CommandState& st) {
                const PipelineConfig cfg = effective_config(st);
                const Scene scene = scene_from_json(load(cfg, artifact::kScene));
                const auto queries = queries_from_json(load(cfg, artifact::kQueries));
                const auto preds =
                    predictions_from_json(load(cfg, artifact::kPredictions));
                std::cout << stage_plot(cfg, scene, queries, preds) << '\n';
              });

  {
    CLI::App* cmd = app.add_subcommand("train", "gradient-descent loop on one scene");
    states.emplace_back();
    CommandState* st = &states.back();
    st->out = out_default;
    cmd->add_option("--out", st->out, "artifact directory")->capture_default_str();
    cmd->add_option("--iters", st->iters, "gradient steps")->capture_default_str();
    cmd->add_option("--lr", st->lr, "learning rate")->capture_default_str();
    attach_config_flags(cmd, st->flags, true);
    cmd->callback([st] {
      const PipelineConfig cfg = effective_config(*st);
      const auto losses = train_toy(cfg, st->iters, st->lr);
      Json j;
      j["iters"] = st->iters;
      j["lr"] = st->lr;
      j["losses"] = losses;
      write_json_file(artifact_path(cfg, artifact::kTraining), j);
      std::cout << "loss " << losses.front() << " -> " << losses.back() << " over "
                << st->iters << " steps\n";
    });
  }

  add_command("run", "full pipeline: simulate through metrics and the BEV plot", true,
              [](const CommandState& st) {
                const PipelineConfig cfg = effective_config(st);
                const PipelineResult r = run_pipeline(cfg);
                std::cout << "objects:     " << r.scene.objects.size() << '\n'
                          << "queries:     " << r.queries.size() << '\n'
                          << "predictions: " << r.predictions.size() << '\n'
                          << "mean AP projected 2d: " << r.projected_2d.mean_ap << '\n'
                          << "mean AP 3d centers:   " << r.center_3d.mean_ap << '\n';
              });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
