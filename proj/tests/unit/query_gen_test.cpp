#include <doctest.h>

#include <cmath>
#include <set>
#include <string>

#include "fd.hpp"
#include "mvlift/feature_map.hpp"
#include "mvlift/query_gen.hpp"
#include "mvlift/rng.hpp"

using namespace mvlift;
using ad::Var;

TEST_CASE("uniform depth vocabulary spans the range inclusively") {
  const auto d = uniform_depths(10);
  REQUIRE(d.size() == 10);
  CHECK(d.front() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d.back() == doctest::Approx(65.0).epsilon(1e-12));
  CHECK(d[1] - d[0] == doctest::Approx(64.5 / 9).epsilon(1e-12));
  CHECK(uniform_depths(1) == std::vector<double>{0.5});
  CHECK_THROWS_AS(uniform_depths(0), ConfigError);
  CHECK_THROWS_AS(uniform_depths(3, -1.0, 5.0), InvalidDepthError);
}

TEST_CASE("positional code of the origin freezes to the sin/cos pattern") {
  const RowVector code = positional_encode(Vec3::Zero(), 12);
  RowVector expected(12);
  expected << 0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 1;
  CHECK(code.isApprox(expected));
  CHECK_THROWS_AS(positional_encode(Vec3::Zero(), 8), ConfigError);
}

TEST_CASE("sinusoid blocks follow the inverse-power frequency ladder") {
  const Vec3 x(1.0, 2.0, 3.0);
  const RowVector code = sinusoid_code(x, 12);
  for (int block = 0; block < 2; ++block) {
    const double freq = std::pow(10000.0, -2.0 * block / 12.0);
    for (int a = 0; a < 3; ++a) {
      CHECK(code(6 * block + a) == doctest::Approx(std::sin(x(a) * freq)).epsilon(1e-12));
      CHECK(code(6 * block + 3 + a) == doctest::Approx(std::cos(x(a) * freq)).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(sinusoid_code(x, 5), ConfigError);
}

TEST_CASE("positional encoding scales coordinates to plus-minus pi") {
  const Vec3 p(65.0, -65.0, 32.5);
  const RowVector code = positional_encode(p, 18);
  const RowVector direct = sinusoid_code(p * (M_PI / 65.0), 18);
  CHECK(code.isApprox(direct));
}

TEST_CASE("positional codes separate every half-meter step on each axis") {
  for (int axis = 0; axis < 3; ++axis) {
    std::set<std::string> seen;
    for (int i = 0; i <= 260; ++i) {
      Vec3 p = Vec3::Zero();
      p(axis) = -65.0 + 0.5 * i;
      const RowVector code = positional_encode(p, 12);
      seen.insert(std::string(reinterpret_cast<const char*>(code.data()),
                              sizeof(double) * code.size()));
    }
    CHECK(seen.size() == 261);  // bit-exact distinct
  }
}

TEST_CASE("zero location head predicts the RoI origin at unit depth") {
  const auto p = LocationHeadParams::zeros(4);
  RoIFeature roi;
  roi.values = Matrix::Constant(49, 4, 0.7);
  EquivalentIntrinsics k;
  const Point25D loc = predict_roi_location(roi, k, p);
  CHECK(loc.u == 0.0);
  CHECK(loc.v == 0.0);
  CHECK(loc.d == doctest::Approx(1.0).epsilon(1e-12));  // exp(0)
}

TEST_CASE("initialized location head starts at the 20 m depth prior") {
  const auto p = LocationHeadParams::init(6, 3);
  CHECK(p.fc2_b(0, 2) == doctest::Approx(std::log(20.0)).epsilon(1e-12));
  CHECK(p.conv_w.rows() == 54);
  CHECK(p.conv_w.cols() == 6);
  CHECK(p.fc1_w.rows() == 10);  // pooled C + 4 intrinsic descriptors
}

TEST_CASE("plain head evaluation matches the differentiable graph") {
  Rng rng(31);
  const int c = 6;
  auto params = LocationHeadParams::init(c, 77);
  RoIFeature roi;
  roi.values = Matrix(49, c);
  for (Eigen::Index i = 0; i < roi.values.size(); ++i)
    roi.values(i / c, i % c) = rng.uniform(-1, 1);
  EquivalentIntrinsics k;
  k.fx = 35;
  k.fy = 70;
  k.ox = 7;
  k.oy = 10.5;
  const Point25D plain = predict_roi_location(roi, k, params);
  ad::Tape t;
  const auto vars = bind(t, params);
  const Var out = location_head_ad(t, roi, k, vars);
  CHECK(out.value()(0, 0) == doctest::Approx(plain.u).epsilon(1e-12));
  CHECK(out.value()(0, 1) == doctest::Approx(plain.v).epsilon(1e-12));
  CHECK(std::exp(out.value()(0, 2)) == doctest::Approx(plain.d).epsilon(1e-12));
}

TEST_CASE("oracle head answers the RoI center at the true camera depth") {
  CameraView view;
  view.intr = {500, 500, 400, 225};
  view.extr = Extrinsics::identity();
  const Point25D loc = oracle_roi_location(7, 7, view, {0.3, -0.2, 12.0});
  CHECK(loc.u == doctest::Approx(3.5));
  CHECK(loc.v == doctest::Approx(3.5));
  CHECK(loc.d == doctest::Approx(12.0));
  CHECK_THROWS_AS(oracle_roi_location(7, 7, view, {0, 0, -1.0}), InvalidDepthError);
}

TEST_CASE("lift matches plain 2.5D unprojection with exponentiated depth") {
  Rng rng(13);
  EquivalentIntrinsics k;
  k.fx = 35;
  k.fy = 70;
  k.ox = 7;
  k.oy = 10.5;
  const auto ext = Extrinsics::from_rt(
      Eigen::AngleAxisd(0.7, Vec3(0, 0, 1).normalized()).toRotationMatrix(), {1, 2, 3});
  Matrix uvlogd(1, 3);
  uvlogd << 2.5, 3.5, std::log(14.0);
  ad::Tape t;
  const Var lifted = lift_ad(t, t.constant(uvlogd), k, ext);
  const Vec3 expected = unproject_2_5d({2.5, 3.5, 14.0}, k, ext);
  CHECK((lifted.value().transpose() - expected).norm() < 1e-12);
  (void)rng;
}

TEST_CASE("batched positional encoding matches the single-point version") {
  Rng rng(19);
  Matrix pts(4, 3);
  for (int i = 0; i < 12; ++i) pts(i / 3, i % 3) = rng.uniform(-65, 65);
  ad::Tape t;
  const Var rows = positional_encode_rows(t, t.constant(pts), 12);
  for (int i = 0; i < 4; ++i)
    CHECK(rows.value().row(i).isApprox(positional_encode(pts.row(i).transpose(), 12)));
}

TEST_CASE("query embedding is the linear map of its positional code") {
  const auto qgen = QueryGenParams::init(12, 5);
  const Vec3 p(3.0, -4.0, 1.5);
  const ObjectQuery q = init_query(p, qgen, 2, 7, 11);
  const RowVector expected =
      positional_encode(p, 12) * qgen.pe_w + qgen.pe_b.row(0);
  CHECK(q.embedding.isApprox(expected));
  CHECK(q.view_id == 2);
  CHECK(q.box_id == 7);
  CHECK(q.query_id == 11);
  CHECK(q.p_ref.isApprox(p));
}

TEST_CASE("uniform-depth references stay on the box-center ray") {
  CameraView view;
  view.intr = {571.0, 571.0, 400, 225};
  view.extr = Extrinsics::from_rt(
      Eigen::AngleAxisd(0.5, Vec3(0.2, -0.3, 0.9).normalized()).toRotationMatrix(),
      {0.5, -1, 2});
  Box2D box{100, 50, 300, 200};
  const auto refs = uniform_depth_refs(box, view, 10);
  REQUIRE(refs.size() == 10);
  for (const auto& r : refs) {
    const auto proj = project_world_to_pixel(view, r);
    REQUIRE_FALSE(proj.behind);
    CHECK(proj.u == doctest::Approx(box.center_x()).epsilon(1e-9));
    CHECK(proj.v == doctest::Approx(box.center_y()).epsilon(1e-9));
  }
  CHECK(project_world_to_pixel(view, refs.front()).depth == doctest::Approx(0.5));
  CHECK(project_world_to_pixel(view, refs.back()).depth == doctest::Approx(65.0));
}

TEST_CASE("scale prior depth follows the pinhole relation") {
  CameraView view;
  view.intr = {800, 1000, 400, 225};
  view.extr = Extrinsics::identity();
  Box2D box{350, 200, 450, 300};  // 100 px tall
  const Vec3 r = scale_based_depth_ref(box, view, 1.5);
  const Vec3 expected = unproject_2_5d({400, 250, 15.0}, view.intr, view.extr);
  CHECK((r - expected).norm() < 1e-12);

  Box2D tiny{350, 200, 450, 210};  // 10 px tall -> depth 150, clamped to 65
  CHECK(project_world_to_pixel(view, scale_based_depth_ref(tiny, view, 1.5)).depth ==
        doctest::Approx(65.0));
  Box2D huge{350, 0, 450, 10000};
  CHECK(project_world_to_pixel(view, scale_based_depth_ref(huge, view, 1.5)).depth ==
        doctest::Approx(0.5));
}

TEST_CASE("query chain gradients match finite differences end to end") {
  Rng rng(67);
  const int c = 12;
  auto head_params = LocationHeadParams::init(c, 21);
  auto qgen = QueryGenParams::init(c, 21);

  RoIFeature roi;
  roi.roi_w = 5;
  roi.roi_h = 5;
  roi.values = Matrix(25, c);
  for (Eigen::Index i = 0; i < roi.values.rows(); ++i)
    for (Eigen::Index j = 0; j < roi.values.cols(); ++j)
      roi.values(i, j) = rng.uniform(-1, 1);
  const Intrinsics intr{571, 571, 400, 225};
  Box2D box{250, 150, 420, 280};
  const auto k_roi = equivalent_intrinsics(intr, box, 5, 5);
  const auto ext = Extrinsics::from_rt(
      Eigen::AngleAxisd(-0.9, Vec3(0.1, 0.7, 0.2).normalized()).toRotationMatrix(),
      {2, -1, 0.5});
  Matrix out_weights(1, c);
  for (int i = 0; i < c; ++i) out_weights(0, i) = rng.uniform(-1, 1);

  tests::check_gradients(
      {head_params.conv_w, head_params.conv_b, head_params.fc1_w, head_params.fc1_b,
       head_params.fc2_w, head_params.fc2_b, qgen.pe_w, qgen.pe_b},
      [&](ad::Tape& t, const std::vector<Var>& l) {
        const LocationHeadVars vars{l[0], l[1], l[2], l[3], l[4], l[5]};
        const Var loc = location_head_ad(t, roi, k_roi, vars);
        const Var world = lift_ad(t, loc, k_roi, ext);
        const Var pe = positional_encode_rows(t, world, c);
        const Var q = ad::linear(pe, l[6], l[7]);
        return ad::sum(ad::cmul_const(q, out_weights));
      },
      1e-4, 1e-5, /*probe_stride=*/3);
}
