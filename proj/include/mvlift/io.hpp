#ifndef MVLIFT_IO_HPP
#define MVLIFT_IO_HPP

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvlift/association.hpp"
#include "mvlift/decoder.hpp"
#include "mvlift/eval.hpp"
#include "mvlift/losses.hpp"
#include "mvlift/query_gen.hpp"
#include "mvlift/simulator.hpp"

namespace mvlift {

/// Insertion-ordered JSON so emitted files are byte-stable run to run.
using Json = nlohmann::ordered_json;

void write_json_file(const std::string& path, const Json& j);
Json read_json_file(const std::string& path);

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

std::string to_string(RelevanceRule rule);
RelevanceRule rule_from_string(const std::string& s);

Json rig_to_json(const std::vector<CameraView>& views);
std::vector<CameraView> rig_from_json(const Json& j);

Json scene_to_json(const Scene& s);
Scene scene_from_json(const Json& j);

Json detections_to_json(const std::map<int, std::vector<Detection2D>>& per_view);
std::map<int, std::vector<Detection2D>> detections_from_json(const Json& j);

Json queries_to_json(const std::vector<ObjectQuery>& queries);
std::vector<ObjectQuery> queries_from_json(const Json& j);

Json associations_to_json(const std::vector<RelevantSet>& sets);
std::vector<RelevantSet> associations_from_json(const Json& j);

Json predictions_to_json(const std::vector<Prediction3D>& preds);
std::vector<Prediction3D> predictions_from_json(const Json& j);

Json eval_to_json(const EvalResult& r);
EvalResult eval_from_json(const Json& j);

Json metrics_to_json(const EvalResult& projected_2d, const EvalResult& center_3d,
                     const DetectionLoss& loss);
void metrics_from_json(const Json& j, EvalResult& projected_2d, EvalResult& center_3d,
                       DetectionLoss& loss);

/// Every trainable array keyed by its visit_params name.
Json weights_to_json(QueryGenParams& qgen, DecoderParams& decoder);
void weights_from_json(const Json& j, QueryGenParams& qgen, DecoderParams& decoder);

}  // namespace mvlift

#endif
