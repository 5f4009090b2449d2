#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fd.hpp"
#include "mvlift/errors.hpp"
#include "mvlift/losses.hpp"
#include "mvlift/rng.hpp"

using namespace mvlift;
using ad::Var;

TEST_CASE("binary cross entropy freezes to ln 2 at an even guess") {
  CHECK(binary_cross_entropy(0.0, 1.0) == doctest::Approx(0.693147180559945).epsilon(1e-12));
  CHECK(binary_cross_entropy(0.0, 0.0) == doctest::Approx(0.693147180559945).epsilon(1e-12));
  CHECK(binary_cross_entropy(20.0, 1.0) < 1e-8);
  CHECK(binary_cross_entropy(-20.0, 0.0) < 1e-8);
}

TEST_CASE("focal loss freezes the 90 percent confidence case") {
  const double logit = std::log(9.0);  // sigmoid = 0.9
  CHECK(focal_loss(logit, 1.0) ==
        doctest::Approx(0.25 * 0.01 * -std::log(0.9)).epsilon(1e-12));
  CHECK(focal_loss(logit, 0.0) ==
        doctest::Approx(0.75 * 0.81 * -std::log(0.1)).epsilon(1e-12));
  // gamma = 0, alpha = 1/2 halves plain cross entropy.
  CHECK(focal_loss(0.3, 1.0, 0.5, 0.0) ==
        doctest::Approx(0.5 * binary_cross_entropy(0.3, 1.0)).epsilon(1e-12));
}

TEST_CASE("matrix focal loss matches the scalar version entrywise") {
  Rng rng(91);
  Matrix logits(3, 4), targets(3, 4);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      logits(i, j) = rng.uniform(-4, 4);
      targets(i, j) = rng.uniform(0, 1) < 0.5 ? 0.0 : 1.0;
    }
  ad::Tape t;
  const Var loss = focal_loss_ad(t.constant(logits), targets, 0.25, 2.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(loss.value()(i, j) ==
            doctest::Approx(focal_loss(logits(i, j), targets(i, j))).epsilon(1e-10));
  CHECK_THROWS_AS(focal_loss_ad(t.constant(logits), Matrix::Zero(2, 4), 0.25, 2.0),
                  ShapeError);
}

TEST_CASE("focal loss gradients match finite differences") {
  Matrix logits(2, 3);
  logits << 0.4, -1.2, 2.0, -0.3, 0.9, -2.5;
  Matrix targets(2, 3);
  targets << 1, 0, 0, 0, 1, 0;
  tests::check_gradients({logits}, [&](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(focal_loss_ad(l[0], targets, 0.25, 2.0));
  });
}

TEST_CASE("box encoding freezes offsets, log sizes, yaw pair, velocity") {
  Box3D gt;
  gt.center = {1, 2, 3};
  gt.size = {2.0, 4.5, 1.6};
  gt.yaw = M_PI / 6;
  gt.velocity = {1, -2};
  const RowVector t = encode_box3d(gt, Vec3(0.5, 0, 1));
  RowVector expected(10);
  expected << 0.5, 2, 2, std::log(2.0), std::log(4.5), std::log(1.6), 0.5,
      std::sqrt(3.0) / 2, 1, -2;
  CHECK(t.isApprox(expected, 1e-12));

  Box3D flat = gt;
  flat.size.z() = 0;
  CHECK_THROWS_AS(encode_box3d(flat, Vec3::Zero()), DegenerateBoxError);
}

TEST_CASE("box regression loss is the mean absolute difference") {
  RowVector pred = RowVector::Zero(10);
  pred(0) = 1.0;
  CHECK(box_l1_loss(pred, RowVector::Zero(10)) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK_THROWS_AS(box_l1_loss(pred, RowVector::Zero(9)), ShapeError);
}

TEST_CASE("total loss applies the 2.0 and 0.1 term weights") {
  CHECK(total_loss(0.0, 1.0) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(total_loss(1.0, 0.0) == doctest::Approx(2.0).epsilon(1e-12));
  LossWeights w;
  w.lambda_cls = 3;
  w.lambda_box = 0.5;
  CHECK(total_loss(2.0, 4.0, w) == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("match cost combines class confidence and regression error") {
  Box3D gt;
  gt.center = {1, 2, 3};
  gt.class_id = 0;
  const Vec3 p_ref(0, 0, 0);
  Matrix logits(1, 2);
  logits << std::log(9.0), 0.0;
  Matrix reg(1, 10);
  reg = encode_box3d(gt, p_ref);
  const Matrix cost = match_cost_matrix(logits, reg, {p_ref}, {gt});
  REQUIRE(cost.rows() == 1);
  REQUIRE(cost.cols() == 1);
  CHECK(cost(0, 0) == doctest::Approx(2.0 * -0.9).epsilon(1e-12));

  Box3D bad = gt;
  bad.class_id = 5;
  CHECK_THROWS_AS(match_cost_matrix(logits, reg, {p_ref}, {bad}), ConfigError);
  CHECK_THROWS_AS(match_cost_matrix(logits, Matrix::Zero(2, 10), {p_ref}, {gt}),
                  ShapeError);
}

namespace {

Box3D make_gt(const Vec3& c, int class_id, int object_id) {
  Box3D b;
  b.center = c;
  b.size = {1.9, 4.5, 1.6};
  b.yaw = 0.4;
  b.velocity = {2, 1};
  b.class_id = class_id;
  b.object_id = object_id;
  return b;
}

}  // namespace

TEST_CASE("perfect predictions drive the detection loss to zero") {
  const std::vector<Box3D> gts = {make_gt({5, 0, 1}, 0, 0), make_gt({-3, 4, 1}, 2, 1)};
  const std::vector<Vec3> p_refs = {{4.5, 0.5, 1}, {-3.5, 4.5, 1}};
  Matrix logits = Matrix::Constant(2, 4, -30.0);
  logits(0, 0) = 30.0;
  logits(1, 2) = 30.0;
  Matrix reg(2, 10);
  reg.row(0) = encode_box3d(gts[0], p_refs[0]);
  reg.row(1) = encode_box3d(gts[1], p_refs[1]);
  const DetectionLoss loss = detection_loss(logits, reg, p_refs, gts);
  CHECK(loss.cls < 1e-10);
  CHECK(loss.box < 1e-12);
  CHECK(loss.total < 1e-10);
  REQUIRE(loss.assignment.pairs.size() == 2);
  CHECK(loss.assignment.pairs[0] == std::pair<int, int>{0, 0});
  CHECK(loss.assignment.pairs[1] == std::pair<int, int>{1, 1});
}

TEST_CASE("detection loss is invariant to ground-truth ordering") {
  Rng rng(201);
  std::vector<Box3D> gts = {make_gt({5, 0, 1}, 0, 0), make_gt({-3, 4, 1}, 2, 1),
                            make_gt({10, -8, 1}, 1, 2)};
  std::vector<Vec3> p_refs;
  Matrix logits(4, 4), reg(4, 10);
  for (int i = 0; i < 4; ++i) {
    p_refs.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10), 1.0});
    for (int j = 0; j < 4; ++j) logits(i, j) = rng.uniform(-2, 2);
    for (int j = 0; j < 10; ++j) reg(i, j) = rng.uniform(-1, 1);
  }
  const DetectionLoss base = detection_loss(logits, reg, p_refs, gts);
  std::vector<Box3D> shuffled = {gts[2], gts[0], gts[1]};
  const DetectionLoss perm = detection_loss(logits, reg, p_refs, shuffled);
  CHECK(base.total == doctest::Approx(perm.total).epsilon(1e-12));
  CHECK(base.cls == doctest::Approx(perm.cls).epsilon(1e-12));
  CHECK(base.box == doctest::Approx(perm.box).epsilon(1e-12));

  // Same prediction -> object pairing regardless of list order.
  auto matched_objects = [&](const DetectionLoss& l, const std::vector<Box3D>& order) {
    std::vector<std::pair<int, int>> out;
    for (const auto& [i, j] : l.assignment.pairs) out.emplace_back(i, order[j].object_id);
    std::sort(out.begin(), out.end());
    return out;
  };
  CHECK(matched_objects(base, gts) == matched_objects(perm, shuffled));
}

TEST_CASE("surplus predictions are scored as background") {
  const std::vector<Box3D> gts = {make_gt({5, 0, 1}, 0, 0)};
  const std::vector<Vec3> p_refs = {{5, 0, 1}, {0, 0, 0}, {1, 1, 1}};
  Matrix logits = Matrix::Zero(3, 4);
  Matrix reg = Matrix::Zero(3, 10);
  reg.row(0) = encode_box3d(gts[0], p_refs[0]);
  const DetectionLoss loss = detection_loss(logits, reg, p_refs, gts);
  CHECK(loss.assignment.pairs.size() == 1);
  CHECK(loss.assignment.unmatched_rows.size() == 2);
  CHECK(loss.cls > 0);
  // The matched row contributes zero regression error.
  CHECK(loss.box < 1e-12);
}

TEST_CASE("empty truth set scores every prediction as background") {
  const std::vector<Vec3> p_refs = {{0, 0, 0}, {1, 1, 1}};
  const Matrix logits = Matrix::Zero(2, 4);
  const Matrix reg = Matrix::Zero(2, 10);
  const DetectionLoss loss = detection_loss(logits, reg, p_refs, {});
  CHECK(loss.assignment.pairs.empty());
  CHECK(loss.assignment.unmatched_rows.size() == 2);
  CHECK(loss.box == 0.0);
  CHECK(loss.cls == doctest::Approx(focal_loss(0.0, 0.0)).epsilon(1e-12));
  CHECK(loss.total == doctest::Approx(2.0 * loss.cls).epsilon(1e-12));
}

TEST_CASE("no predictions yields a zero loss") {
  const DetectionLoss loss =
      detection_loss(Matrix(0, 4), Matrix(0, 10), {}, {make_gt({1, 1, 1}, 0, 0)});
  CHECK(loss.cls == 0.0);
  CHECK(loss.box == 0.0);
  CHECK(loss.total == 0.0);
}

TEST_CASE("detection loss gradients match finite differences") {
  const std::vector<Box3D> gts = {make_gt({8, 0, 1}, 0, 0), make_gt({-6, 5, 1}, 2, 1)};
  Matrix p_refs(3, 3);
  p_refs << 7.5, 0.3, 1.1, -6.2, 5.4, 0.9, 0.0, -9.0, 1.0;
  Matrix logits(3, 4);
  logits << 1.5, -1, -1, -1, -1, -1, 1.5, -1, -0.5, 0.5, -0.5, 0.5;
  Matrix reg(3, 10);
  Rng rng(77);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 10; ++j) reg(i, j) = rng.uniform(-0.5, 0.5);

  tests::check_gradients({logits, reg, p_refs},
                         [&](ad::Tape& t, const std::vector<Var>& l) {
                           return detection_loss_ad(t, l[0], l[1], l[2], gts).total;
                         });
}

TEST_CASE("the assignment inside the loss minimizes the match cost") {
  Rng rng(303);
  std::vector<Box3D> gts = {make_gt({5, 0, 1}, 0, 0), make_gt({-3, 4, 1}, 1, 1)};
  std::vector<Vec3> p_refs;
  Matrix logits(3, 4), reg(3, 10);
  for (int i = 0; i < 3; ++i) {
    p_refs.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10), 1.0});
    for (int j = 0; j < 4; ++j) logits(i, j) = rng.uniform(-2, 2);
    for (int j = 0; j < 10; ++j) reg(i, j) = rng.uniform(-1, 1);
  }
  const DetectionLoss loss = detection_loss(logits, reg, p_refs, gts);
  const Assignment direct =
      hungarian_assign(match_cost_matrix(logits, reg, p_refs, gts));
  CHECK(loss.assignment.total_cost == doctest::Approx(direct.total_cost).epsilon(1e-12));
  CHECK(loss.assignment.pairs == direct.pairs);
}
