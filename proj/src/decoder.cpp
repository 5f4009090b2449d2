#include "mvlift/decoder.hpp"

#include <cmath>
#include <utility>

#include "mvlift/errors.hpp"
#include "mvlift/rng.hpp"

namespace mvlift {

namespace {

Matrix xavier(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

AttentionParams init_attention(int dim, Rng& rng) {
  AttentionParams p;
  p.wq = xavier(dim, dim, rng);
  p.bq = Matrix::Zero(1, dim);
  p.wk = xavier(dim, dim, rng);
  p.bk = Matrix::Zero(1, dim);
  p.wv = xavier(dim, dim, rng);
  p.bv = Matrix::Zero(1, dim);
  p.wo = xavier(dim, dim, rng);
  p.bo = Matrix::Zero(1, dim);
  return p;
}

MlpParams init_mlp(int in, int hidden, int out, Rng& rng) {
  MlpParams p;
  p.w1 = xavier(in, hidden, rng);
  p.b1 = Matrix::Zero(1, hidden);
  p.w2 = xavier(hidden, out, rng);
  p.b2 = Matrix::Zero(1, out);
  return p;
}

NormParams init_norm(int dim) { return {Matrix::Ones(1, dim), Matrix::Zero(1, dim)}; }

ad::Var mlp_ad(ad::Var x, const MlpVars& m) {
  return ad::linear(ad::relu(ad::linear(x, m.w1, m.b1)), m.w2, m.b2);
}

ad::Var attention_block(ad::Var x_q, ad::Var key_in, ad::Var value_in,
                        const Matrix& mask01, const AttentionVars& a, int heads) {
  return masked_attention_ad(ad::linear(x_q, a.wq, a.bq), ad::linear(key_in, a.wk, a.bk),
                             ad::linear(value_in, a.wv, a.bv), mask01, heads, a.wo, a.bo);
}

}  // namespace

DecoderParams DecoderParams::init(int model_dim, int num_heads, int num_layers,
                                  int num_classes, std::uint64_t seed) {
  if (model_dim <= 0 || num_heads <= 0 || num_layers < 0 || num_classes <= 0)
    throw ConfigError("decoder: dimensions must be positive");
  if (model_dim % num_heads != 0)
    throw ConfigError("decoder: model_dim must divide by num_heads");
  DecoderParams p;
  p.model_dim = model_dim;
  p.num_heads = num_heads;
  p.num_classes = num_classes;
  Rng rng(Rng::mix(seed, 0xdec));
  for (int l = 0; l < num_layers; ++l) {
    LayerParams lp;
    lp.self_attn = init_attention(model_dim, rng);
    lp.cross_attn = init_attention(model_dim, rng);
    lp.ffn = init_mlp(model_dim, 4 * model_dim, model_dim, rng);
    lp.ln1 = init_norm(model_dim);
    lp.ln2 = init_norm(model_dim);
    lp.ln3 = init_norm(model_dim);
    p.layers.push_back(std::move(lp));
  }
  p.key_pe = init_mlp(model_dim, model_dim, model_dim, rng);
  p.cls_head = init_mlp(model_dim, model_dim, num_classes, rng);
  // Rare-positive prior on the class bias keeps the initial focal loss from
  // swamping the regression term.
  p.cls_head.b2.setConstant(-std::log(99.0));
  p.reg_head = init_mlp(model_dim, model_dim, 10, rng);
  return p;
}

DecoderVars bind_constants(ad::Tape& t, const DecoderParams& p) {
  return bind_params([&t](const std::string&, const Matrix& m) { return t.constant(m); },
                     p);
}

RowVector key_pe_base(const CameraView& view, double u, double v,
                      const std::vector<double>& depths, int length) {
  if (depths.empty()) throw ConfigError("key_pe_base: empty depth set");
  RowVector acc = RowVector::Zero(length);
  for (double d : depths) {
    const Vec3 p = unproject_2_5d({u, v, d}, view.intr, view.extr);
    const Vec3 n = ((p.array() + kSceneRange) / (2.0 * kSceneRange)).matrix();
    acc += sinusoid_code(n, length);
  }
  return acc / static_cast<double>(depths.size());
}

Matrix key_position_embedding(const std::vector<KeyIndex>& cells,
                              const std::map<int, CameraView>& views,
                              const std::vector<double>& depths,
                              const MlpParams& pe_mlp, int stride) {
  const int dim = static_cast<int>(pe_mlp.w1.rows());
  Matrix base(static_cast<Eigen::Index>(cells.size()), dim);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto it = views.find(cells[i].view_id);
    if (it == views.end())
      throw ContractViolation("key_position_embedding: unknown view id");
    const double u = cells[i].col * static_cast<double>(stride) + stride / 2.0;
    const double v = cells[i].row * static_cast<double>(stride) + stride / 2.0;
    base.row(static_cast<Eigen::Index>(i)) = key_pe_base(it->second, u, v, depths, dim);
  }
  ad::Tape t;
  auto bind = [&t](const std::string&, const Matrix& m) { return t.constant(m); };
  return mlp_ad(t.constant(std::move(base)), bind_params(bind, pe_mlp, "pe")).value();
}

KeySet build_key_set(const KeyIndexSet& indices,
                     const std::map<int, const FeatureMap*>& features,
                     const std::map<int, CameraView>& views, int model_dim,
                     int num_depths, double depth_lo, double depth_hi) {
  if (indices.indices.empty())
    throw ContractViolation("build_key_set: query without key cells");
  const std::vector<double> depths = uniform_depths(num_depths, depth_lo, depth_hi);
  const Eigen::Index n = static_cast<Eigen::Index>(indices.indices.size());
  KeySet ks;
  ks.query_id = indices.query_id;
  ks.origin = indices.indices;
  ks.features.resize(n, model_dim);
  ks.pe_base.resize(n, model_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const KeyIndex& cell = indices.indices[static_cast<std::size_t>(i)];
    const auto fit = features.find(cell.view_id);
    const auto vit = views.find(cell.view_id);
    if (fit == features.end() || fit->second == nullptr || vit == views.end())
      throw ContractViolation("build_key_set: view without features");
    const FeatureMap& fm = *fit->second;
    if (fm.channels != model_dim)
      throw ShapeError("build_key_set: feature channels != model dim");
    ks.features.row(i) = fm.values.row(fm.cell_index(cell.row, cell.col));
    const Vec2 center = fm.cell_center(cell.row, cell.col);
    ks.pe_base.row(i) = key_pe_base(vit->second, center.x(), center.y(), depths, model_dim);
  }
  return ks;
}

ad::Var masked_attention_ad(ad::Var q, ad::Var k, ad::Var v, const Matrix& mask01,
                            int num_heads, ad::Var wo, ad::Var bo) {
  const int dim = static_cast<int>(q.cols());
  if (num_heads <= 0 || dim % num_heads != 0)
    throw ConfigError("masked_attention: head count must divide dim");
  if (k.cols() != dim || v.cols() != dim || k.rows() != v.rows())
    throw ShapeError("masked_attention: K/V shape mismatch");
  if (mask01.rows() != q.rows() || mask01.cols() != k.rows())
    throw ShapeError("masked_attention: mask must be n_q x n_k");
  const int dh = dim / num_heads;
  std::vector<ad::Var> heads;
  for (int h = 0; h < num_heads; ++h) {
    ad::Var qh = ad::slice_cols(q, h * dh, dh);
    ad::Var kh = ad::slice_cols(k, h * dh, dh);
    ad::Var vh = ad::slice_cols(v, h * dh, dh);
    ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)),
                               1.0 / std::sqrt(static_cast<double>(dh)));
    heads.push_back(ad::matmul(ad::masked_softmax_rows(scores, mask01), vh));
  }
  return ad::linear(ad::concat_cols(heads), wo, bo);
}

Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        const Matrix& mask01, int num_heads, const Matrix& wo,
                        const Matrix& bo) {
  ad::Tape t;
  return masked_attention_ad(t.constant(q), t.constant(k), t.constant(v), mask01,
                             num_heads, t.constant(wo), t.constant(bo))
      .value();
}

DecoderForwardVars decoder_forward_ad(ad::Var queries, ad::Var key_features,
                                      ad::Var key_pe_base,
                                      const std::vector<int>& key_counts,
                                      const DecoderVars& v) {
  const Eigen::Index n_q = queries.rows();
  const Eigen::Index n_k = key_features.rows();
  if (n_q < 1) throw ContractViolation("decoder: at least one query required");
  if (queries.cols() != v.model_dim || key_features.cols() != v.model_dim ||
      key_pe_base.cols() != v.model_dim)
    throw ShapeError("decoder: input width != model dim");
  if (static_cast<Eigen::Index>(key_counts.size()) != n_q)
    throw ShapeError("decoder: one key count per query");
  Eigen::Index total = 0;
  for (int c : key_counts) {
    if (c < 1) throw ContractViolation("decoder: every query needs at least one key");
    total += c;
  }
  if (total != n_k) throw ShapeError("decoder: key counts do not cover the key rows");

  Matrix cross_mask = Matrix::Zero(n_q, n_k);
  Eigen::Index offset = 0;
  for (Eigen::Index i = 0; i < n_q; ++i) {
    cross_mask.block(i, offset, 1, key_counts[static_cast<std::size_t>(i)]).setOnes();
    offset += key_counts[static_cast<std::size_t>(i)];
  }
  const Matrix self_mask = Matrix::Ones(n_q, n_q);

  ad::Var key_in = ad::add(key_features, mlp_ad(key_pe_base, v.key_pe));
  ad::Var x = queries;
  for (const LayerVars& lv : v.layers) {
    x = ad::layer_norm_rows(
        ad::add(x, attention_block(x, x, x, self_mask, lv.self_attn, v.num_heads)),
        lv.ln1.g, lv.ln1.b);
    x = ad::layer_norm_rows(
        ad::add(x, attention_block(x, key_in, key_features, cross_mask, lv.cross_attn,
                                   v.num_heads)),
        lv.ln2.g, lv.ln2.b);
    x = ad::layer_norm_rows(ad::add(x, mlp_ad(x, lv.ffn)), lv.ln3.g, lv.ln3.b);
  }
  return {x, mlp_ad(x, v.cls_head), mlp_ad(x, v.reg_head)};
}

DecoderResult decoder_forward(const Matrix& queries,
                              const std::vector<KeySet>& keysets,
                              const DecoderParams& params) {
  if (queries.rows() != static_cast<Eigen::Index>(keysets.size()))
    throw ShapeError("decoder_forward: one key set per query");
  std::vector<int> counts;
  Eigen::Index total = 0;
  for (const KeySet& ks : keysets) {
    counts.push_back(static_cast<int>(ks.features.rows()));
    total += ks.features.rows();
  }
  Matrix kf(total, params.model_dim), kp(total, params.model_dim);
  Eigen::Index offset = 0;
  for (const KeySet& ks : keysets) {
    if (ks.features.cols() != params.model_dim || ks.pe_base.cols() != params.model_dim ||
        ks.features.rows() != ks.pe_base.rows())
      throw ShapeError("decoder_forward: key set width != model dim");
    kf.middleRows(offset, ks.features.rows()) = ks.features;
    kp.middleRows(offset, ks.pe_base.rows()) = ks.pe_base;
    offset += ks.features.rows();
  }
  ad::Tape t;
  const DecoderVars v = bind_constants(t, params);
  auto fwd = decoder_forward_ad(t.constant(queries), t.constant(std::move(kf)),
                                t.constant(std::move(kp)), counts, v);
  return {fwd.embeddings.value(), fwd.logits.value(), fwd.reg.value()};
}

Prediction3D decode_prediction(const RowVector& logits, const RowVector& reg,
                               const ObjectQuery& query) {
  if (reg.size() != 10) throw ShapeError("decode_prediction: expected 10 regression values");
  if (logits.size() < 1) throw ShapeError("decode_prediction: empty logits");
  Prediction3D p;
  p.logits = logits;
  p.reg = reg;
  p.center = query.p_ref + Vec3(reg(0), reg(1), reg(2));
  p.size = Vec3(std::exp(reg(3)), std::exp(reg(4)), std::exp(reg(5)));
  const double s = reg(6), c = reg(7);
  p.yaw = (s == 0 && c == 0) ? 0.0 : std::atan2(s, c);
  p.velocity = Vec2(reg(8), reg(9));
  Eigen::Index best = 0;
  const double top = logits.maxCoeff(&best);
  p.class_id = static_cast<int>(best);
  p.score = 1.0 / (1.0 + std::exp(-top));
  p.query_id = query.query_id;
  p.view_id = query.view_id;
  p.box_id = query.box_id;
  if (!p.center.allFinite() || !p.size.allFinite() || !std::isfinite(p.yaw) ||
      !p.velocity.allFinite() || !std::isfinite(p.score))
    throw NumericError("decode_prediction: non-finite output");
  return p;
}

std::vector<Prediction3D> predict_boxes(const Matrix& logits, const Matrix& reg,
                                        const std::vector<ObjectQuery>& queries) {
  const Eigen::Index n = static_cast<Eigen::Index>(queries.size());
  if (logits.rows() != n || reg.rows() != n)
    throw ShapeError("predict_boxes: row count != query count");
  std::vector<Prediction3D> out;
  for (Eigen::Index i = 0; i < n; ++i)
    out.push_back(decode_prediction(logits.row(i), reg.row(i),
                                    queries[static_cast<std::size_t>(i)]));
  return out;
}

Box3D as_box3d(const Prediction3D& p) {
  return {p.center, p.size, p.yaw, p.velocity, p.class_id, -1};
}

}  // namespace mvlift
