#include "mvlift/io.hpp"

#include <fstream>

#include "mvlift/errors.hpp"

namespace mvlift {

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw ConfigError("write failed: " + path);
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open for reading: " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
}

Json matrix_to_json(const Matrix& m) {
  Json j;
  j["shape"] = {m.rows(), m.cols()};
  Json data = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  j["data"] = std::move(data);
  return j;
}

Matrix matrix_from_json(const Json& j) {
  const auto& shape = j.at("shape");
  const auto rows = shape.at(0).get<Eigen::Index>();
  const auto cols = shape.at(1).get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ShapeError("matrix data length does not match its shape");
  Matrix m(rows, cols);
  Eigen::Index i = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data.at(i++).get<double>();
  return m;
}

std::string to_string(RelevanceRule rule) {
  return rule == RelevanceRule::kTop1 ? "top1" : "all_overlapped";
}

RelevanceRule rule_from_string(const std::string& s) {
  if (s == "top1") return RelevanceRule::kTop1;
  if (s == "all_overlapped") return RelevanceRule::kAllOverlapped;
  throw ConfigError("unknown relevance rule: " + s);
}

namespace {

Json box2d_to_json(const Box2D& b) {
  Json j;
  j["x_min"] = b.x_min;
  j["y_min"] = b.y_min;
  j["x_max"] = b.x_max;
  j["y_max"] = b.y_max;
  j["score"] = b.score;
  j["class_id"] = b.class_id;
  j["box_id"] = b.box_id;
  return j;
}

Box2D box2d_from_json(const Json& j) {
  Box2D b;
  b.x_min = j.at("x_min").get<double>();
  b.y_min = j.at("y_min").get<double>();
  b.x_max = j.at("x_max").get<double>();
  b.y_max = j.at("y_max").get<double>();
  b.score = j.at("score").get<double>();
  b.class_id = j.at("class_id").get<int>();
  b.box_id = j.at("box_id").get<int>();
  return b;
}

Json box3d_to_json(const Box3D& b) {
  Json j;
  j["center"] = {b.center.x(), b.center.y(), b.center.z()};
  j["size"] = {b.size.x(), b.size.y(), b.size.z()};
  j["yaw"] = b.yaw;
  j["velocity"] = {b.velocity.x(), b.velocity.y()};
  j["class_id"] = b.class_id;
  j["object_id"] = b.object_id;
  return j;
}

Box3D box3d_from_json(const Json& j) {
  Box3D b;
  const auto& c = j.at("center");
  b.center = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
  const auto& s = j.at("size");
  b.size = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
  b.yaw = j.at("yaw").get<double>();
  const auto& v = j.at("velocity");
  b.velocity = {v.at(0).get<double>(), v.at(1).get<double>()};
  b.class_id = j.at("class_id").get<int>();
  b.object_id = j.at("object_id").get<int>();
  return b;
}

Json view_to_json(const CameraView& v) {
  Json j;
  j["id"] = v.view_id;
  j["timestamp"] = v.timestamp;
  j["width"] = v.width;
  j["height"] = v.height;
  j["fx"] = v.intr.fx;
  j["fy"] = v.intr.fy;
  j["ox"] = v.intr.ox;
  j["oy"] = v.intr.oy;
  Json ext = Json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) ext.push_back(v.extr.world_to_cam(r, c));
  j["extrinsic"] = std::move(ext);
  return j;
}

CameraView view_from_json(const Json& j) {
  CameraView v;
  v.view_id = j.at("id").get<int>();
  v.timestamp = j.at("timestamp").get<double>();
  v.width = j.at("width").get<int>();
  v.height = j.at("height").get<int>();
  v.intr = {j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("ox").get<double>(),
            j.at("oy").get<double>()};
  const auto& ext = j.at("extrinsic");
  if (ext.size() != 16) throw ShapeError("extrinsic must hold 16 values");
  Mat4 m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = ext.at(r * 4 + c).get<double>();
  // Rebuilding from R|t re-validates rigidity on load.
  v.extr = Extrinsics::from_rt(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>(), 1e-6);
  return v;
}

}  // namespace

Json rig_to_json(const std::vector<CameraView>& views) {
  Json j;
  Json arr = Json::array();
  for (const auto& v : views) arr.push_back(view_to_json(v));
  j["views"] = std::move(arr);
  return j;
}

std::vector<CameraView> rig_from_json(const Json& j) {
  std::vector<CameraView> views;
  for (const auto& v : j.at("views")) views.push_back(view_from_json(v));
  return views;
}

Json scene_to_json(const Scene& s) {
  Json j;
  j["seed"] = s.seed;
  j["t_ref"] = s.t_ref;
  Json objs = Json::array();
  for (const auto& o : s.objects) objs.push_back(box3d_to_json(o));
  j["objects"] = std::move(objs);
  j["rig"] = rig_to_json(s.rig);
  Json frames = Json::array();
  for (const auto& f : s.frames) {
    Json jf;
    jf["timestamp"] = f.timestamp;
    jf["position"] = {f.position.x(), f.position.y()};
    jf["yaw"] = f.yaw;
    frames.push_back(std::move(jf));
  }
  j["frames"] = std::move(frames);
  return j;
}

Scene scene_from_json(const Json& j) {
  Scene s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.t_ref = j.at("t_ref").get<double>();
  for (const auto& o : j.at("objects")) s.objects.push_back(box3d_from_json(o));
  s.rig = rig_from_json(j.at("rig"));
  for (const auto& jf : j.at("frames")) {
    EgoFrame f;
    f.timestamp = jf.at("timestamp").get<double>();
    const auto& p = jf.at("position");
    f.position = {p.at(0).get<double>(), p.at(1).get<double>()};
    f.yaw = jf.at("yaw").get<double>();
    s.frames.push_back(f);
  }
  return s;
}

Json detections_to_json(const std::map<int, std::vector<Detection2D>>& per_view) {
  Json j;
  Json arr = Json::array();
  for (const auto& [view_id, dets] : per_view) {
    Json jv;
    jv["view_id"] = view_id;
    Json list = Json::array();
    for (const auto& d : dets) {
      Json jd = box2d_to_json(d.box);
      jd["object_id"] = d.object_id;
      list.push_back(std::move(jd));
    }
    jv["detections"] = std::move(list);
    arr.push_back(std::move(jv));
  }
  j["views"] = std::move(arr);
  return j;
}

std::map<int, std::vector<Detection2D>> detections_from_json(const Json& j) {
  std::map<int, std::vector<Detection2D>> per_view;
  for (const auto& jv : j.at("views")) {
    auto& dets = per_view[jv.at("view_id").get<int>()];
    for (const auto& jd : jv.at("detections")) {
      Detection2D d;
      d.box = box2d_from_json(jd);
      d.object_id = jd.at("object_id").get<int>();
      dets.push_back(d);
    }
  }
  return per_view;
}

Json queries_to_json(const std::vector<ObjectQuery>& queries) {
  Json j;
  Json arr = Json::array();
  for (const auto& q : queries) {
    Json jq;
    jq["query_id"] = q.query_id;
    jq["view_id"] = q.view_id;
    jq["box_id"] = q.box_id;
    jq["p_ref"] = {q.p_ref.x(), q.p_ref.y(), q.p_ref.z()};
    Json emb = Json::array();
    for (Eigen::Index i = 0; i < q.embedding.size(); ++i) emb.push_back(q.embedding(i));
    jq["embedding"] = std::move(emb);
    arr.push_back(std::move(jq));
  }
  j["queries"] = std::move(arr);
  return j;
}

std::vector<ObjectQuery> queries_from_json(const Json& j) {
  std::vector<ObjectQuery> queries;
  for (const auto& jq : j.at("queries")) {
    ObjectQuery q;
    q.query_id = jq.at("query_id").get<int>();
    q.view_id = jq.at("view_id").get<int>();
    q.box_id = jq.at("box_id").get<int>();
    const auto& p = jq.at("p_ref");
    q.p_ref = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
    const auto& emb = jq.at("embedding");
    q.embedding.resize(static_cast<Eigen::Index>(emb.size()));
    for (Eigen::Index i = 0; i < q.embedding.size(); ++i) q.embedding(i) = emb.at(i).get<double>();
    queries.push_back(std::move(q));
  }
  return queries;
}

Json associations_to_json(const std::vector<RelevantSet>& sets) {
  Json j;
  Json arr = Json::array();
  for (const auto& s : sets) {
    Json js;
    js["query_id"] = s.query_id;
    js["source"] = {{"view_id", s.source.view_id}, {"box_id", s.source.box_id}};
    js["rule"] = to_string(s.rule);
    Json members = Json::array();
    for (const auto& m : s.members)
      members.push_back({{"view_id", m.view_id}, {"box_id", m.box_id}});
    js["members"] = std::move(members);
    Json projected = Json::array();
    for (const auto& [view_id, box] : s.projected) {
      Json jp;
      jp["view_id"] = view_id;
      jp["box"] = box2d_to_json(box);
      projected.push_back(std::move(jp));
    }
    js["projected"] = std::move(projected);
    arr.push_back(std::move(js));
  }
  j["sets"] = std::move(arr);
  return j;
}

std::vector<RelevantSet> associations_from_json(const Json& j) {
  std::vector<RelevantSet> sets;
  for (const auto& js : j.at("sets")) {
    RelevantSet s;
    s.query_id = js.at("query_id").get<int>();
    s.source = {js.at("source").at("view_id").get<int>(), js.at("source").at("box_id").get<int>()};
    s.rule = rule_from_string(js.at("rule").get<std::string>());
    for (const auto& m : js.at("members"))
      s.members.push_back({m.at("view_id").get<int>(), m.at("box_id").get<int>()});
    for (const auto& jp : js.at("projected"))
      s.projected[jp.at("view_id").get<int>()] = box2d_from_json(jp.at("box"));
    sets.push_back(std::move(s));
  }
  return sets;
}

Json predictions_to_json(const std::vector<Prediction3D>& preds) {
  Json j;
  Json arr = Json::array();
  for (const auto& p : preds) {
    Json jp;
    jp["query_id"] = p.query_id;
    jp["view_id"] = p.view_id;
    jp["box_id"] = p.box_id;
    jp["class_id"] = p.class_id;
    jp["score"] = p.score;
    Json logits = Json::array();
    for (Eigen::Index i = 0; i < p.logits.size(); ++i) logits.push_back(p.logits(i));
    jp["logits"] = std::move(logits);
    Json reg = Json::array();
    for (Eigen::Index i = 0; i < p.reg.size(); ++i) reg.push_back(p.reg(i));
    jp["reg"] = std::move(reg);
    jp["center"] = {p.center.x(), p.center.y(), p.center.z()};
    jp["size"] = {p.size.x(), p.size.y(), p.size.z()};
    jp["yaw"] = p.yaw;
    jp["velocity"] = {p.velocity.x(), p.velocity.y()};
    arr.push_back(std::move(jp));
  }
  j["predictions"] = std::move(arr);
  return j;
}

std::vector<Prediction3D> predictions_from_json(const Json& j) {
  std::vector<Prediction3D> preds;
  for (const auto& jp : j.at("predictions")) {
    Prediction3D p;
    p.query_id = jp.at("query_id").get<int>();
    p.view_id = jp.at("view_id").get<int>();
    p.box_id = jp.at("box_id").get<int>();
    p.class_id = jp.at("class_id").get<int>();
    p.score = jp.at("score").get<double>();
    const auto& logits = jp.at("logits");
    p.logits.resize(static_cast<Eigen::Index>(logits.size()));
    for (Eigen::Index i = 0; i < p.logits.size(); ++i) p.logits(i) = logits.at(i).get<double>();
    const auto& reg = jp.at("reg");
    p.reg.resize(static_cast<Eigen::Index>(reg.size()));
    for (Eigen::Index i = 0; i < p.reg.size(); ++i) p.reg(i) = reg.at(i).get<double>();
    const auto& c = jp.at("center");
    p.center = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
    const auto& s = jp.at("size");
    p.size = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
    p.yaw = jp.at("yaw").get<double>();
    const auto& v = jp.at("velocity");
    p.velocity = {v.at(0).get<double>(), v.at(1).get<double>()};
    preds.push_back(std::move(p));
  }
  return preds;
}

Json eval_to_json(const EvalResult& r) {
  Json j;
  j["mean_ap"] = r.mean_ap;
  Json per_class = Json::array();
  for (const auto& ce : r.per_class) {
    Json jc;
    jc["class_id"] = ce.class_id;
    jc["ap"] = ce.ap;
    jc["num_gt"] = ce.num_gt;
    Json pr = Json::array();
    for (const auto& s : ce.pr)
      pr.push_back({{"score", s.score}, {"precision", s.precision}, {"recall", s.recall}});
    jc["pr"] = std::move(pr);
    per_class.push_back(std::move(jc));
  }
  j["per_class"] = std::move(per_class);
  return j;
}

EvalResult eval_from_json(const Json& j) {
  EvalResult r;
  r.mean_ap = j.at("mean_ap").get<double>();
  for (const auto& jc : j.at("per_class")) {
    ClassEval ce;
    ce.class_id = jc.at("class_id").get<int>();
    ce.ap = jc.at("ap").get<double>();
    ce.num_gt = jc.at("num_gt").get<int>();
    for (const auto& s : jc.at("pr"))
      ce.pr.push_back({s.at("score").get<double>(), s.at("precision").get<double>(),
                       s.at("recall").get<double>()});
    r.per_class.push_back(std::move(ce));
  }
  return r;
}

Json metrics_to_json(const EvalResult& projected_2d, const EvalResult& center_3d,
                     const DetectionLoss& loss) {
  Json j;
  j["projected_2d"] = eval_to_json(projected_2d);
  j["center_3d"] = eval_to_json(center_3d);
  Json jl;
  jl["cls"] = loss.cls;
  jl["box"] = loss.box;
  jl["total"] = loss.total;
  Json pairs = Json::array();
  for (const auto& [r, c] : loss.assignment.pairs) pairs.push_back({r, c});
  jl["matches"] = std::move(pairs);
  jl["unmatched"] = loss.assignment.unmatched_rows;
  jl["match_cost"] = loss.assignment.total_cost;
  j["loss"] = std::move(jl);
  return j;
}

void metrics_from_json(const Json& j, EvalResult& projected_2d, EvalResult& center_3d,
                       DetectionLoss& loss) {
  projected_2d = eval_from_json(j.at("projected_2d"));
  center_3d = eval_from_json(j.at("center_3d"));
  const auto& jl = j.at("loss");
  loss.cls = jl.at("cls").get<double>();
  loss.box = jl.at("box").get<double>();
  loss.total = jl.at("total").get<double>();
  loss.assignment.pairs.clear();
  for (const auto& p : jl.at("matches"))
    loss.assignment.pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
  loss.assignment.unmatched_rows = jl.at("unmatched").get<std::vector<int>>();
  loss.assignment.total_cost = jl.at("match_cost").get<double>();
}

Json weights_to_json(QueryGenParams& qgen, DecoderParams& decoder) {
  Json j;
  const auto emit = [&j](const std::string& name, Matrix& m) { j[name] = matrix_to_json(m); };
  visit_params(qgen, emit);
  visit_params(decoder, emit);
  return j;
}

void weights_from_json(const Json& j, QueryGenParams& qgen, DecoderParams& decoder) {
  const auto load = [&j](const std::string& name, Matrix& m) {
    if (!j.contains(name)) throw ConfigError("weights file is missing " + name);
    Matrix loaded = matrix_from_json(j.at(name));
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols())
      throw ShapeError("weights shape mismatch for " + name);
    m = std::move(loaded);
  };
  visit_params(qgen, load);
  visit_params(decoder, load);
}

}  // namespace mvlift
