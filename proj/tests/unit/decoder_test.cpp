#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "fd.hpp"
#include "mvlift/decoder.hpp"
#include "mvlift/rng.hpp"

using namespace mvlift;
using ad::Var;

namespace {

Matrix random_matrix(Rng& rng, int r, int c, double lo = -1, double hi = 1) {
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

CameraView simple_view(int id) {
  CameraView v;
  v.view_id = id;
  v.intr = {100, 100, 32, 32};
  v.extr = Extrinsics::identity();
  v.width = 64;
  v.height = 64;
  return v;
}

}  // namespace

TEST_CASE("attention with one allowed key copies that key's value row") {
  Rng rng(11);
  const int dim = 4;
  const Matrix q = random_matrix(rng, 2, dim);
  const Matrix k = random_matrix(rng, 3, dim);
  const Matrix v = random_matrix(rng, 3, dim);
  Matrix mask = Matrix::Zero(2, 3);
  mask(0, 2) = 1;
  mask(1, 0) = 1;
  const Matrix wo = Matrix::Identity(dim, dim);
  const Matrix bo = Matrix::Zero(1, dim);
  for (int heads : {1, 2, 4}) {
    const Matrix out = masked_attention(q, k, v, mask, heads, wo, bo);
    CHECK(out.row(0).isApprox(v.row(2), 1e-12));
    CHECK(out.row(1).isApprox(v.row(0), 1e-12));
  }
}

TEST_CASE("attention over identical keys averages the values") {
  Rng rng(12);
  const int dim = 6;
  const Matrix q = random_matrix(rng, 2, dim);
  const Matrix k = Matrix::Ones(4, dim);  // equal logits for every key
  const Matrix v = random_matrix(rng, 4, dim);
  const Matrix out = masked_attention(q, k, v, Matrix::Ones(2, 4), 3,
                                      Matrix::Identity(dim, dim), Matrix::Zero(1, dim));
  const RowVector avg = v.colwise().mean();
  CHECK(out.row(0).isApprox(avg, 1e-12));
  CHECK(out.row(1).isApprox(avg, 1e-12));
}

TEST_CASE("two-key attention follows the softmax weights exactly") {
  Matrix q(1, 2), k(2, 2), v(2, 2);
  q << 1.3, 0;
  k << 1, 0, 0, 1;
  v << 2, -1, 4, 3;
  const double s = 1.3 / std::sqrt(2.0);
  const double w0 = std::exp(s) / (std::exp(s) + 1.0);
  const Matrix out = masked_attention(q, k, v, Matrix::Ones(1, 2), 1,
                                      Matrix::Identity(2, 2), Matrix::Zero(1, 2));
  CHECK(out(0, 0) == doctest::Approx(w0 * 2 + (1 - w0) * 4).epsilon(1e-12));
  CHECK(out(0, 1) == doctest::Approx(w0 * -1 + (1 - w0) * 3).epsilon(1e-12));
}

TEST_CASE("attention rejects bad masks, shapes, and starved queries") {
  Rng rng(13);
  const Matrix q = random_matrix(rng, 2, 4);
  const Matrix k = random_matrix(rng, 3, 4);
  const Matrix wo = Matrix::Identity(4, 4);
  const Matrix bo = Matrix::Zero(1, 4);
  Matrix starved = Matrix::Ones(2, 3);
  starved.row(1).setZero();
  CHECK_THROWS_AS(masked_attention(q, k, k, starved, 2, wo, bo), ContractViolation);
  CHECK_THROWS_AS(masked_attention(q, k, k, Matrix::Ones(2, 2), 2, wo, bo), ShapeError);
  CHECK_THROWS_AS(masked_attention(q, k, k, Matrix::Ones(2, 3), 3, wo, bo), ConfigError);
  CHECK_THROWS_AS(
      masked_attention(q, random_matrix(rng, 3, 2), k, Matrix::Ones(2, 3), 2, wo, bo),
      ShapeError);
}

TEST_CASE("block-masked attention equals per-query dense attention") {
  Rng rng(14);
  const int dim = 8;
  const std::vector<int> counts = {2, 3, 1};
  const int n_q = int(counts.size());
  int n_k = 0;
  for (int c : counts) n_k += c;
  const Matrix q = random_matrix(rng, n_q, dim);
  const Matrix k = random_matrix(rng, n_k, dim);
  const Matrix v = random_matrix(rng, n_k, dim);
  const Matrix wo = random_matrix(rng, dim, dim);
  const Matrix bo = random_matrix(rng, 1, dim);

  Matrix mask = Matrix::Zero(n_q, n_k);
  int offset = 0;
  for (int i = 0; i < n_q; ++i) {
    mask.block(i, offset, 1, counts[i]).setOnes();
    offset += counts[i];
  }
  const Matrix sparse = masked_attention(q, k, v, mask, 2, wo, bo);

  offset = 0;
  for (int i = 0; i < n_q; ++i) {
    const Matrix dense =
        masked_attention(q.row(i), k.middleRows(offset, counts[i]),
                         v.middleRows(offset, counts[i]), Matrix::Ones(1, counts[i]), 2,
                         wo, bo);
    CHECK((sparse.row(i) - dense.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    offset += counts[i];
  }
}

TEST_CASE("attention gradients match finite differences") {
  Rng rng(15);
  const int dim = 4;
  Matrix mask = Matrix::Ones(2, 3);
  mask(0, 1) = 0;
  tests::check_gradients(
      {random_matrix(rng, 2, dim), random_matrix(rng, 3, dim), random_matrix(rng, 3, dim),
       random_matrix(rng, dim, dim), random_matrix(rng, 1, dim)},
      [&](ad::Tape&, const std::vector<Var>& l) {
        return ad::sum(masked_attention_ad(l[0], l[1], l[2], mask, 2, l[3], l[4]));
      });
}

TEST_CASE("key position codes average per-depth sinusoids of unprojections") {
  const CameraView view = simple_view(0);
  const std::vector<double> one_depth = {10.0};
  const RowVector code = key_pe_base(view, 40.0, 20.0, one_depth, 12);
  const Vec3 p = unproject_2_5d({40.0, 20.0, 10.0}, view.intr, view.extr);
  const Vec3 n = ((p.array() + 65.0) / 130.0).matrix();
  CHECK(code.isApprox(sinusoid_code(n, 12), 1e-12));

  const std::vector<double> two = {5.0, 15.0};
  const RowVector avg = key_pe_base(view, 40.0, 20.0, two, 12);
  const RowVector manual = 0.5 * (key_pe_base(view, 40.0, 20.0, {5.0}, 12) +
                                  key_pe_base(view, 40.0, 20.0, {15.0}, 12));
  CHECK(avg.isApprox(manual, 1e-12));
  CHECK_THROWS_AS(key_pe_base(view, 0, 0, {}, 12), ConfigError);
}

TEST_CASE("zeroed position perceptron leaves only its output bias") {
  const CameraView view = simple_view(0);
  MlpParams mlp;
  mlp.w1 = Matrix::Zero(12, 12);
  mlp.b1 = Matrix::Zero(1, 12);
  mlp.w2 = Matrix::Zero(12, 12);
  mlp.b2 = Matrix::Constant(1, 12, 0.25);
  const std::map<int, CameraView> views = {{0, view}};
  const std::vector<KeyIndex> cells = {{0, 0, 0}, {0, 1, 2}};
  const Matrix pe = key_position_embedding(cells, views, {5.0, 15.0}, mlp, 16);
  REQUIRE(pe.rows() == 2);
  CHECK(pe.isApprox(Matrix::Constant(2, 12, 0.25), 1e-12));
  CHECK_THROWS_AS(key_position_embedding({{7, 0, 0}}, views, {5.0}, mlp, 16),
                  ContractViolation);
}

TEST_CASE("key sets copy feature rows and encode cell centers") {
  Rng rng(16);
  const CameraView view = simple_view(0);
  const int dim = 12;
  const Matrix values = random_matrix(rng, 16, dim);  // 4x4 cells at stride 16
  const FeatureMap fm = make_feature_map(values, 64, 64, 16, dim, 0);
  const std::map<int, const FeatureMap*> features = {{0, &fm}};
  const std::map<int, CameraView> views = {{0, view}};
  KeyIndexSet idx;
  idx.query_id = 9;
  idx.indices = {{0, 1, 2}, {0, 3, 0}};
  const KeySet ks = build_key_set(idx, features, views, dim, 3, 1.0, 30.0);
  CHECK(ks.query_id == 9);
  REQUIRE(ks.features.rows() == 2);
  CHECK(ks.features.row(0).isApprox(values.row(fm.cell_index(1, 2))));
  CHECK(ks.features.row(1).isApprox(values.row(fm.cell_index(3, 0))));
  const Vec2 c0 = fm.cell_center(1, 2);
  CHECK(ks.pe_base.row(0).isApprox(
      key_pe_base(view, c0.x(), c0.y(), uniform_depths(3, 1.0, 30.0), dim), 1e-12));

  KeyIndexSet empty;
  CHECK_THROWS_AS(build_key_set(empty, features, views, dim), ContractViolation);
  KeyIndexSet wrong;
  wrong.indices = {{5, 0, 0}};
  CHECK_THROWS_AS(build_key_set(wrong, features, views, dim), ContractViolation);
  CHECK_THROWS_AS(build_key_set(idx, features, views, dim + 1), ShapeError);
}

TEST_CASE("decoder initialization validates dimensions and sets the class prior") {
  CHECK_THROWS_AS(DecoderParams::init(10, 3, 1, 4, 0), ConfigError);
  CHECK_THROWS_AS(DecoderParams::init(0, 1, 1, 4, 0), ConfigError);
  const auto p = DecoderParams::init(12, 2, 2, 4, 0);
  CHECK(p.layers.size() == 2);
  CHECK(p.cls_head.b2.cols() == 4);
  for (int j = 0; j < 4; ++j)
    CHECK(p.cls_head.b2(0, j) == doctest::Approx(-std::log(99.0)).epsilon(1e-12));
  CHECK(p.layers[0].ffn.w1.cols() == 48);  // hidden width is 4x the model dim
}

TEST_CASE("a zero-layer decoder applies the heads to raw queries") {
  Rng rng(17);
  const int dim = 8;
  auto params = DecoderParams::init(dim, 2, 0, 3, 4);
  const Matrix queries = random_matrix(rng, 2, dim);
  std::vector<KeySet> keysets(2);
  for (auto& ks : keysets) {
    ks.features = random_matrix(rng, 1, dim);
    ks.pe_base = random_matrix(rng, 1, dim);
  }
  const DecoderResult r = decoder_forward(queries, keysets, params);
  CHECK(r.embeddings.isApprox(queries, 1e-12));
  const auto mlp = [&](const Matrix& x, const MlpParams& m) {
    return ((x * m.w1 + Matrix::Ones(x.rows(), 1) * m.b1).cwiseMax(0.0) * m.w2 +
            Matrix::Ones(x.rows(), 1) * m.b2)
        .eval();
  };
  CHECK(r.logits.isApprox(mlp(queries, params.cls_head), 1e-10));
  CHECK(r.reg.isApprox(mlp(queries, params.reg_head), 1e-10));
}

TEST_CASE("decoder output is equivariant to query reordering") {
  Rng rng(18);
  const int dim = 12;
  auto params = DecoderParams::init(dim, 3, 2, 4, 9);
  const Matrix queries = random_matrix(rng, 3, dim);
  std::vector<KeySet> keysets(3);
  const std::vector<int> sizes = {2, 1, 3};
  for (int i = 0; i < 3; ++i) {
    keysets[i].features = random_matrix(rng, sizes[i], dim);
    keysets[i].pe_base = random_matrix(rng, sizes[i], dim);
  }
  const DecoderResult base = decoder_forward(queries, keysets, params);

  const std::vector<int> perm = {2, 0, 1};
  Matrix q2(3, dim);
  std::vector<KeySet> k2(3);
  for (int i = 0; i < 3; ++i) {
    q2.row(i) = queries.row(perm[i]);
    k2[i] = keysets[perm[i]];
  }
  const DecoderResult moved = decoder_forward(q2, k2, params);
  for (int i = 0; i < 3; ++i) {
    CHECK(moved.embeddings.row(i).isApprox(base.embeddings.row(perm[i]), 1e-9));
    CHECK(moved.logits.row(i).isApprox(base.logits.row(perm[i]), 1e-9));
    CHECK(moved.reg.row(i).isApprox(base.reg.row(perm[i]), 1e-9));
  }
}

TEST_CASE("decoder validates query and key bookkeeping") {
  Rng rng(19);
  const int dim = 8;
  auto params = DecoderParams::init(dim, 2, 1, 4, 2);
  ad::Tape t;
  const DecoderVars v = bind_constants(t, params);
  const Var q = t.constant(random_matrix(rng, 2, dim));
  const Var kf = t.constant(random_matrix(rng, 3, dim));
  const Var kp = t.constant(random_matrix(rng, 3, dim));
  CHECK_THROWS_AS(decoder_forward_ad(q, kf, kp, {2, 2}, v), ShapeError);
  CHECK_THROWS_AS(decoder_forward_ad(q, kf, kp, {3}, v), ShapeError);
  CHECK_THROWS_AS(decoder_forward_ad(q, kf, kp, {3, 0}, v), ContractViolation);
  CHECK_THROWS_AS(
      decoder_forward_ad(t.constant(Matrix(0, dim)), kf, kp, {}, v), ContractViolation);
  CHECK_THROWS_AS(
      decoder_forward_ad(t.constant(random_matrix(rng, 2, dim + 2)), kf, kp, {2, 1}, v),
      ShapeError);
}

TEST_CASE("zero regression decodes to the reference point and unit box") {
  ObjectQuery q;
  q.p_ref = {3, -2, 1};
  q.query_id = 4;
  q.view_id = 2;
  q.box_id = 6;
  RowVector logits(4);
  logits << -1, 2, 0.5, -3;
  const Prediction3D p = decode_prediction(logits, RowVector::Zero(10), q);
  CHECK(p.center.isApprox(Vec3(3, -2, 1)));
  CHECK(p.size.isApprox(Vec3::Ones()));
  CHECK(p.yaw == 0.0);  // the (0, 0) sin/cos pair has no angle
  CHECK(p.velocity.isZero());
  CHECK(p.class_id == 1);
  CHECK(p.score == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
  CHECK(p.query_id == 4);
  CHECK(p.view_id == 2);
  CHECK(p.box_id == 6);
}

TEST_CASE("regression fields decode offsets, exp sizes, and yaw") {
  ObjectQuery q;
  q.p_ref = {1, 1, 1};
  RowVector logits(2);
  logits << 0, 1;
  RowVector reg(10);
  reg << 0.5, -0.25, 2, std::log(1.9), std::log(4.5), std::log(1.6),
      std::sin(2.2), std::cos(2.2), 3, -4;
  const Prediction3D p = decode_prediction(logits, reg, q);
  CHECK(p.center.isApprox(Vec3(1.5, 0.75, 3)));
  CHECK(p.size.isApprox(Vec3(1.9, 4.5, 1.6), 1e-12));
  CHECK(p.yaw == doctest::Approx(2.2).epsilon(1e-12));
  CHECK(p.velocity.isApprox(Vec2(3, -4)));

  // Yaw decoding only needs the direction of the (sin, cos) pair.
  RowVector scaled = reg;
  scaled(6) *= 7;
  scaled(7) *= 7;
  CHECK(decode_prediction(logits, scaled, q).yaw == doctest::Approx(2.2).epsilon(1e-12));

  const Box3D b = as_box3d(p);
  CHECK(b.center.isApprox(p.center));
  CHECK(b.object_id == -1);
  CHECK(b.class_id == 1);

  RowVector bad = reg;
  bad(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(decode_prediction(logits, bad, q), NumericError);
  CHECK_THROWS_AS(decode_prediction(logits, RowVector::Zero(9), q), ShapeError);
}

TEST_CASE("decoder stack gradients match finite differences") {
  Rng rng(20);
  const int dim = 8;
  auto params = DecoderParams::init(dim, 2, 1, 3, 6);
  const Matrix queries = random_matrix(rng, 2, dim);
  const Matrix kf = random_matrix(rng, 3, dim);
  const Matrix kp = random_matrix(rng, 3, dim);
  const std::vector<int> counts = {2, 1};
  Matrix sum_w = random_matrix(rng, 1, 10);

  tests::check_gradients(
      {queries, kf, kp},
      [&](ad::Tape& t, const std::vector<Var>& l) {
        const DecoderVars v = bind_constants(t, params);
        const auto fwd = decoder_forward_ad(l[0], l[1], l[2], counts, v);
        return ad::sum(ad::cmul_const(fwd.reg, Matrix::Ones(2, 1) * sum_w));
      });
}
