#include <doctest.h>

#include <cmath>

#include "fd.hpp"
#include "mvlift/errors.hpp"
#include "mvlift/rng.hpp"

using namespace mvlift;
using ad::Var;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1, double hi = 1) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("arithmetic op gradients match finite differences") {
  Rng rng(1);
  const Matrix a = random_matrix(rng, 3, 4), b = random_matrix(rng, 3, 4);
  tests::check_gradients({a, b}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::add(l[0], l[1]));
  });
  tests::check_gradients({a, b}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::sub(l[0], l[1]));
  });
  tests::check_gradients({a, b}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::sum(ad::cmul(l[0], l[1]));
  });
  tests::check_gradients({a}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::scale(l[0], -2.5));
  });
  tests::check_gradients({a}, [&](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::add_const(l[0], b));
  });
  tests::check_gradients({a}, [&](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::cmul_const(l[0], b));
  });
  tests::check_gradients({a}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::neg(l[0]));
  });
}

TEST_CASE("matmul, transpose and row broadcast gradients") {
  Rng rng(2);
  const Matrix a = random_matrix(rng, 3, 4), b = random_matrix(rng, 4, 2);
  const Matrix x = random_matrix(rng, 5, 3), row = random_matrix(rng, 1, 3);
  const Matrix w = random_matrix(rng, 3, 2), bias = random_matrix(rng, 1, 2);
  tests::check_gradients({a, b}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::sum(ad::matmul(l[0], l[1]));
  });
  tests::check_gradients({a}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::sum(ad::cmul(ad::transpose(l[0]), ad::transpose(l[0])));
  });
  tests::check_gradients({x, row}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::addrow(l[0], l[1]));
  });
  tests::check_gradients({x, w, bias}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::linear(l[0], l[1], l[2]));
  });
}

TEST_CASE("nonlinearity gradients away from kinks") {
  Rng rng(3);
  Matrix a = random_matrix(rng, 3, 3, 0.2, 1.5);  // positive, clear of relu/abs/log kinks
  tests::check_gradients({a}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::sum(ad::relu(l[0]));
  });
  const Matrix mixed = random_matrix(rng, 3, 3, -2, 2);
  tests::check_gradients({mixed}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::sigmoid(l[0]));
  });
  tests::check_gradients({mixed}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::exp_(l[0]));
  });
  tests::check_gradients({a}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::log_(l[0]));
  });
  tests::check_gradients({mixed}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::sin_(l[0]));
  });
  tests::check_gradients({mixed}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::cos_(l[0]));
  });
  tests::check_gradients({a}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::abs_(ad::scale(l[0], -1.0)));
  });
  tests::check_gradients({a}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::pow_const(l[0], 2.5));
  });
  // Entries sit well inside (-3, 3), so the clamp is locally smooth.
  tests::check_gradients({mixed}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::clamp(l[0], -3.0, 3.0));
  });
}

TEST_CASE("clamp zeroes gradient outside its range") {
  ad::Tape t;
  Matrix m(1, 2);
  m << 5.0, -5.0;
  Var x = t.leaf(m);
  t.backward(ad::sum(ad::clamp(x, -1, 1)));
  CHECK(x.grad()(0, 0) == 0.0);
  CHECK(x.grad()(0, 1) == 0.0);
}

TEST_CASE("reduction and structural op gradients") {
  Rng rng(4);
  const Matrix a = random_matrix(rng, 4, 3), b = random_matrix(rng, 2, 3);
  tests::check_gradients({a}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::sum(l[0]);
  });
  tests::check_gradients({a}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(l[0]);
  });
  tests::check_gradients({a}, [&](ad::Tape& t, const std::vector<Var>& l) {
    return ad::sum(ad::cmul(ad::colwise_mean(l[0]), t.constant(Matrix::Ones(1, 3))));
  });
  tests::check_gradients({a, b}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::concat_rows({l[0], l[1]}));
  });
  tests::check_gradients({a}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::concat_cols({l[0], ad::relu(l[0])}));
  });
  tests::check_gradients({a}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::slice_cols(l[0], 1, 2));
  });
  tests::check_gradients({a}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::slice_rows(l[0], 1, 3));
  });
  tests::check_gradients({a}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::gather_rows(l[0], {2, 0, 2}));  // repeated rows accumulate
  });
}

TEST_CASE("masked softmax rows are a probability distribution") {
  Rng rng(5);
  const Matrix logits = random_matrix(rng, 3, 5, -2, 2);
  Matrix mask = Matrix::Ones(3, 5);
  mask(0, 1) = 0;
  mask(0, 3) = 0;
  mask(2, 0) = 0;
  ad::Tape t;
  const Var s = ad::masked_softmax_rows(t.leaf(logits), mask);
  for (int r = 0; r < 3; ++r) CHECK(s.value().row(r).sum() == doctest::Approx(1.0));
  CHECK(s.value()(0, 1) == 0.0);
  CHECK(s.value()(0, 3) == 0.0);
  CHECK(s.value()(2, 0) == 0.0);

  const Matrix weights = random_matrix(rng, 3, 5);
  tests::check_gradients({logits}, [&](ad::Tape&, const std::vector<Var>& l) {
    return ad::sum(ad::cmul_const(ad::masked_softmax_rows(l[0], mask), weights));
  });
}

TEST_CASE("fully masked softmax row is a contract violation") {
  ad::Tape t;
  const Matrix logits = Matrix::Zero(2, 3);
  Matrix mask = Matrix::Ones(2, 3);
  mask.row(1).setZero();
  CHECK_THROWS_AS(ad::masked_softmax_rows(t.leaf(logits), mask), ContractViolation);
}

TEST_CASE("layer norm gradients") {
  Rng rng(6);
  const Matrix x = random_matrix(rng, 3, 6), g = random_matrix(rng, 1, 6, 0.5, 1.5),
               b = random_matrix(rng, 1, 6);
  tests::check_gradients({x, g, b}, [&](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::layer_norm_rows(l[0], l[1], l[2]));
  });
  ad::Tape t;
  const Var y = ad::layer_norm_rows(t.leaf(x), t.constant(Matrix::Ones(1, 6)),
                                    t.constant(Matrix::Zero(1, 6)));
  for (int r = 0; r < 3; ++r) {
    CHECK(std::abs(y.value().row(r).mean()) < 1e-9);
    const double var = y.value().row(r).array().square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps keeps it just under 1
  }
}

TEST_CASE("3x3 same convolution matches a hand-computed cell") {
  // 1-channel 3x3 grid with identity-like weights summing the neighborhood.
  Matrix x(9, 1);
  for (int i = 0; i < 9; ++i) x(i, 0) = i + 1;
  const Matrix w = Matrix::Ones(9, 1);  // every tap weight 1
  const Matrix b = Matrix::Zero(1, 1);
  ad::Tape t;
  const Var y = ad::conv3x3_same(t.leaf(x), 3, 3, t.leaf(w), t.leaf(b));
  // Center cell sees the full grid: 1+2+...+9 = 45. Zero padding elsewhere.
  CHECK(y.value()(4, 0) == doctest::Approx(45.0));
  CHECK(y.value()(0, 0) == doctest::Approx(1 + 2 + 4 + 5));

  Rng rng(8);
  const Matrix xr = random_matrix(rng, 12, 2), wr = random_matrix(rng, 18, 3),
               br = random_matrix(rng, 1, 3);
  tests::check_gradients({xr, wr, br}, [](ad::Tape&, const std::vector<Var>& l) {
    return ad::mean(ad::conv3x3_same(l[0], 3, 4, l[1], l[2]));
  });
}

TEST_CASE("backward rejects non-scalar roots and constants stay gradient-free") {
  ad::Tape t;
  const Var x = t.leaf(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(x), ShapeError);
  const Var c = t.constant(Matrix::Ones(2, 2));
  const Var y = ad::sum(ad::cmul(x, c));
  t.backward(y);
  CHECK(x.grad().isApprox(Matrix::Ones(2, 2)));
}

TEST_CASE("parameter binder registers, reuses and steps parameters") {
  ad::Tape t;
  ad::ParamBinder pb(t);
  Matrix w = Matrix::Ones(2, 2);
  const Var v1 = pb("w", w);
  const Var v2 = pb("w", w);
  CHECK(v1.id == v2.id);
  CHECK(pb.size() == 1);
  Matrix other = Matrix::Zero(2, 2);
  CHECK_THROWS_AS(pb("w", other), ContractViolation);
  CHECK_THROWS_AS(pb.var("nope"), ContractViolation);
  CHECK(pb.var("w").id == v1.id);

  Matrix unused = Matrix::Ones(1, 1);
  pb("unused", unused);
  t.backward(ad::sum(ad::scale(v1, 3.0)));
  pb.sgd_step(0.5);
  CHECK(w.isApprox(Matrix::Constant(2, 2, 1.0 - 0.5 * 3.0)));
  CHECK(unused(0, 0) == 1.0);  // untouched by backward, so no step
}
