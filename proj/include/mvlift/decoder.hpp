#ifndef MVLIFT_DECODER_HPP
#define MVLIFT_DECODER_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mvlift/ad.hpp"
#include "mvlift/association.hpp"
#include "mvlift/feature_map.hpp"
#include "mvlift/geometry.hpp"
#include "mvlift/query_gen.hpp"

namespace mvlift {

/// Scaled dot-product attention weights: Q, K, V and output projections,
/// each dim x dim with a 1 x dim bias.
struct AttentionParams {
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Two-layer perceptron with a ReLU hidden layer.
struct MlpParams {
  Matrix w1, b1, w2, b2;
};

/// Per-row normalization gain/bias, both 1 x dim.
struct NormParams {
  Matrix g, b;
};

/// One decoder layer: joint self-attention, sparse cross-attention, FFN,
/// each wrapped in a residual connection and post-normalization.
struct LayerParams {
  AttentionParams self_attn, cross_attn;
  MlpParams ffn;
  NormParams ln1, ln2, ln3;
};

struct DecoderParams {
  int model_dim = 72;
  int num_heads = 4;
  int num_classes = 4;
  std::vector<LayerParams> layers;
  MlpParams key_pe;    // dim -> dim -> dim perceptron over key position codes
  MlpParams cls_head;  // dim -> dim -> num_classes
  MlpParams reg_head;  // dim -> dim -> 10

  static DecoderParams init(int model_dim, int num_heads, int num_layers,
                            int num_classes, std::uint64_t seed);
};

template <typename F>
void visit_params(AttentionParams& p, const std::string& prefix, F&& f) {
  f(prefix + ".wq", p.wq);
  f(prefix + ".bq", p.bq);
  f(prefix + ".wk", p.wk);
  f(prefix + ".bk", p.bk);
  f(prefix + ".wv", p.wv);
  f(prefix + ".bv", p.bv);
  f(prefix + ".wo", p.wo);
  f(prefix + ".bo", p.bo);
}

template <typename F>
void visit_params(MlpParams& p, const std::string& prefix, F&& f) {
  f(prefix + ".w1", p.w1);
  f(prefix + ".b1", p.b1);
  f(prefix + ".w2", p.w2);
  f(prefix + ".b2", p.b2);
}

template <typename F>
void visit_params(NormParams& p, const std::string& prefix, F&& f) {
  f(prefix + ".g", p.g);
  f(prefix + ".b", p.b);
}

template <typename F>
void visit_params(LayerParams& p, const std::string& prefix, F&& f) {
  visit_params(p.self_attn, prefix + ".self", f);
  visit_params(p.cross_attn, prefix + ".cross", f);
  visit_params(p.ffn, prefix + ".ffn", f);
  visit_params(p.ln1, prefix + ".ln1", f);
  visit_params(p.ln2, prefix + ".ln2", f);
  visit_params(p.ln3, prefix + ".ln3", f);
}

template <typename F>
void visit_params(DecoderParams& p, F&& f) {
  for (std::size_t i = 0; i < p.layers.size(); ++i)
    visit_params(p.layers[i], "decoder.layer" + std::to_string(i), f);
  visit_params(p.key_pe, "decoder.key_pe", f);
  visit_params(p.cls_head, "decoder.cls", f);
  visit_params(p.reg_head, "decoder.reg", f);
}

// ---- tape-side parameter handles ------------------------------------------

struct AttentionVars {
  ad::Var wq, bq, wk, bk, wv, bv, wo, bo;
};
struct MlpVars {
  ad::Var w1, b1, w2, b2;
};
struct NormVars {
  ad::Var g, b;
};
struct LayerVars {
  AttentionVars self_attn, cross_attn;
  MlpVars ffn;
  NormVars ln1, ln2, ln3;
};
struct DecoderVars {
  int model_dim = 0;
  int num_heads = 0;
  std::vector<LayerVars> layers;
  MlpVars key_pe, cls_head, reg_head;
};

/// Binder is any callable mapping (name, matrix) to a Var: a tape constant
/// for plain evaluation, a ParamBinder for training.
template <typename Binder>
AttentionVars bind_params(Binder&& b, const AttentionParams& p, const std::string& prefix) {
  return {b(prefix + ".wq", p.wq), b(prefix + ".bq", p.bq), b(prefix + ".wk", p.wk),
          b(prefix + ".bk", p.bk), b(prefix + ".wv", p.wv), b(prefix + ".bv", p.bv),
          b(prefix + ".wo", p.wo), b(prefix + ".bo", p.bo)};
}

template <typename Binder>
MlpVars bind_params(Binder&& b, const MlpParams& p, const std::string& prefix) {
  return {b(prefix + ".w1", p.w1), b(prefix + ".b1", p.b1), b(prefix + ".w2", p.w2),
          b(prefix + ".b2", p.b2)};
}

template <typename Binder>
NormVars bind_params(Binder&& b, const NormParams& p, const std::string& prefix) {
  return {b(prefix + ".g", p.g), b(prefix + ".b", p.b)};
}

template <typename Binder>
LayerVars bind_params(Binder&& b, const LayerParams& p, const std::string& prefix) {
  return {bind_params(b, p.self_attn, prefix + ".self"),
          bind_params(b, p.cross_attn, prefix + ".cross"),
          bind_params(b, p.ffn, prefix + ".ffn"),
          bind_params(b, p.ln1, prefix + ".ln1"),
          bind_params(b, p.ln2, prefix + ".ln2"),
          bind_params(b, p.ln3, prefix + ".ln3")};
}

template <typename Binder>
DecoderVars bind_params(Binder&& b, const DecoderParams& p) {
  DecoderVars v;
  v.model_dim = p.model_dim;
  v.num_heads = p.num_heads;
  for (std::size_t i = 0; i < p.layers.size(); ++i)
    v.layers.push_back(bind_params(b, p.layers[i], "decoder.layer" + std::to_string(i)));
  v.key_pe = bind_params(b, p.key_pe, "decoder.key_pe");
  v.cls_head = bind_params(b, p.cls_head, "decoder.cls");
  v.reg_head = bind_params(b, p.reg_head, "decoder.reg");
  return v;
}

/// Binds every parameter as a tape constant (plain forward evaluation).
DecoderVars bind_constants(ad::Tape& t, const DecoderParams& p);

// ---- key sets --------------------------------------------------------------

/// The keys one query attends to: per-cell feature rows plus their
/// depth-averaged sinusoidal position codes (before the trainable
/// perceptron), with the originating cells kept for provenance.
struct KeySet {
  Matrix features;               // n_k x C
  Matrix pe_base;                // n_k x C
  std::vector<KeyIndex> origin;  // row-aligned with features
  int query_id = 0;
};

/// Depth-averaged sinusoidal code of one pixel: unproject (u, v) at every
/// depth, normalize coordinates to [0,1] over the scene range, and average
/// the per-point codes.
RowVector key_pe_base(const CameraView& view, double u, double v,
                      const std::vector<double>& depths, int length);

/// Position embeddings for a list of key cells: key_pe_base of each cell
/// center pushed through the 2-layer perceptron. Rows align with cells.
Matrix key_position_embedding(const std::vector<KeyIndex>& cells,
                              const std::map<int, CameraView>& views,
                              const std::vector<double>& depths,
                              const MlpParams& pe_mlp, int stride);

/// Assembles one query's KeySet from gathered cell indices.
KeySet build_key_set(const KeyIndexSet& indices,
                     const std::map<int, const FeatureMap*>& features,
                     const std::map<int, CameraView>& views, int model_dim,
                     int num_depths = 10, double depth_lo = kDepthMin,
                     double depth_hi = kDepthMax);

// ---- attention and the decoder stack ---------------------------------------

/// Scaled dot-product attention over pre-projected inputs. Disallowed
/// (mask01 == 0) logits are excluded from each row's softmax; heads are
/// concatenated and output-projected by wo/bo. A query row with no allowed
/// key is a contract violation.
ad::Var masked_attention_ad(ad::Var q, ad::Var k, ad::Var v, const Matrix& mask01,
                            int num_heads, ad::Var wo, ad::Var bo);

/// Plain-value wrapper around masked_attention_ad.
Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        const Matrix& mask01, int num_heads, const Matrix& wo,
                        const Matrix& bo);

struct DecoderForwardVars {
  ad::Var embeddings;  // n_q x C after the last layer
  ad::Var logits;      // n_q x num_classes
  ad::Var reg;         // n_q x 10
};

/// Runs the decoder stack: per layer, joint self-attention over all
/// queries, sparse cross-attention against the concatenated keys under a
/// block-diagonal mask (query i sees only its own key_counts[i] rows), and
/// an FFN; residual + post-norm around each. Heads read the final
/// embeddings. Key position codes go through the trainable perceptron and
/// are added to the attention keys only; values stay raw features.
DecoderForwardVars decoder_forward_ad(ad::Var queries, ad::Var key_features,
                                      ad::Var key_pe_base,
                                      const std::vector<int>& key_counts,
                                      const DecoderVars& v);

struct DecoderResult {
  Matrix embeddings;
  Matrix logits;
  Matrix reg;
};

/// Plain forward: key sets are stacked in query order (keysets[i] belongs
/// to query row i).
DecoderResult decoder_forward(const Matrix& queries,
                              const std::vector<KeySet>& keysets,
                              const DecoderParams& params);

// ---- prediction decoding ----------------------------------------------------

struct Prediction3D {
  RowVector logits;  // 1 x num_classes, raw
  RowVector reg;     // 1 x 10, raw regression values
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();  // (w, l, h) meters
  double yaw = 0;
  Vec2 velocity = Vec2::Zero();
  int class_id = 0;
  double score = 0;  // max sigmoid logit
  int query_id = 0;
  int view_id = 0;
  int box_id = 0;
};

/// Decodes one regression row against its reference point: center = p_ref +
/// offset, sizes via exp, yaw from the normalized (sin, cos) pair ((0, 0)
/// decodes to yaw 0), velocity passthrough.
Prediction3D decode_prediction(const RowVector& logits, const RowVector& reg,
                               const ObjectQuery& query);

/// Row-by-row decode; throws NumericError on non-finite outputs.
std::vector<Prediction3D> predict_boxes(const Matrix& logits, const Matrix& reg,
                                        const std::vector<ObjectQuery>& queries);

/// The prediction as a ground-truth-shaped box (object_id = -1).
Box3D as_box3d(const Prediction3D& p);

}  // namespace mvlift

#endif
