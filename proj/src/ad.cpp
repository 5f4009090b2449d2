#include "mvlift/ad.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "mvlift/errors.hpp"

namespace mvlift::ad {

const Matrix& Var::value() const { return tape->value_of(id); }
const Matrix& Var::grad() const { return tape->grad_of(id); }

Var Tape::constant(Matrix v) { return emit(std::move(v), false, nullptr); }
Var Tape::leaf(Matrix v) { return emit(std::move(v), true, nullptr); }

Var Tape::emit(Matrix value, bool requires_grad, BackFn back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad_of(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& root) {
  if (root.tape != this) throw ContractViolation("backward on a foreign tape");
  if (root.rows() != 1 || root.cols() != 1)
    throw ShapeError("backward root must be a 1x1 scalar");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  grad_of(root.id)(0, 0) = 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.back || !n.requires_grad || n.grad.size() == 0) continue;
    n.back(*this, id);
  }
}

namespace {

void check_same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape) throw ContractViolation("operands from different tapes");
}

bool rg(const Var& v) { return v.tape->requires_grad(v.id); }

}  // namespace

Var add(Var a, Var b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: shape mismatch");
  const bool need = rg(a) || rg(b);
  return a.tape->emit(a.value() + b.value(), need,
                      need ? [a, b](Tape& t, int self) {
                        const Matrix& g = t.grad_of(self);
                        if (t.requires_grad(a.id)) t.grad_of(a.id) += g;
                        if (t.requires_grad(b.id)) t.grad_of(b.id) += g;
                      } : Tape::BackFn{});
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("sub: shape mismatch");
  const bool need = rg(a) || rg(b);
  return a.tape->emit(a.value() - b.value(), need,
                      need ? [a, b](Tape& t, int self) {
                        const Matrix& g = t.grad_of(self);
                        if (t.requires_grad(a.id)) t.grad_of(a.id) += g;
                        if (t.requires_grad(b.id)) t.grad_of(b.id) -= g;
                      } : Tape::BackFn{});
}

Var cmul(Var a, Var b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("cmul: shape mismatch");
  const bool need = rg(a) || rg(b);
  return a.tape->emit(a.value().cwiseProduct(b.value()), need,
                      need ? [a, b](Tape& t, int self) {
                        const Matrix& g = t.grad_of(self);
                        if (t.requires_grad(a.id))
                          t.grad_of(a.id) += g.cwiseProduct(t.value_of(b.id));
                        if (t.requires_grad(b.id))
                          t.grad_of(b.id) += g.cwiseProduct(t.value_of(a.id));
                      } : Tape::BackFn{});
}

Var scale(Var a, double s) {
  const bool need = rg(a);
  return a.tape->emit(a.value() * s, need,
                      need ? [a, s](Tape& t, int self) {
                        t.grad_of(a.id) += s * t.grad_of(self);
                      } : Tape::BackFn{});
}

Var add_const(Var a, const Matrix& m) {
  if (a.rows() != m.rows() || a.cols() != m.cols()) throw ShapeError("add_const: shape mismatch");
  const bool need = rg(a);
  return a.tape->emit(a.value() + m, need,
                      need ? [a](Tape& t, int self) {
                        t.grad_of(a.id) += t.grad_of(self);
                      } : Tape::BackFn{});
}

Var cmul_const(Var a, const Matrix& m) {
  if (a.rows() != m.rows() || a.cols() != m.cols()) throw ShapeError("cmul_const: shape mismatch");
  const bool need = rg(a);
  Matrix mc = m;
  return a.tape->emit(a.value().cwiseProduct(m), need,
                      need ? [a, mc](Tape& t, int self) {
                        t.grad_of(a.id) += t.grad_of(self).cwiseProduct(mc);
                      } : Tape::BackFn{});
}

Var neg(Var a) { return scale(a, -1.0); }

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  const bool need = rg(a) || rg(b);
  return a.tape->emit(a.value() * b.value(), need,
                      need ? [a, b](Tape& t, int self) {
                        const Matrix& g = t.grad_of(self);
                        if (t.requires_grad(a.id))
                          t.grad_of(a.id) += g * t.value_of(b.id).transpose();
                        if (t.requires_grad(b.id))
                          t.grad_of(b.id) += t.value_of(a.id).transpose() * g;
                      } : Tape::BackFn{});
}

Var transpose(Var a) {
  const bool need = rg(a);
  return a.tape->emit(a.value().transpose(), need,
                      need ? [a](Tape& t, int self) {
                        t.grad_of(a.id) += t.grad_of(self).transpose();
                      } : Tape::BackFn{});
}

Var addrow(Var x, Var row) {
  check_same_tape(x, row);
  if (row.rows() != 1 || row.cols() != x.cols()) throw ShapeError("addrow: bias must be 1 x cols");
  const bool need = rg(x) || rg(row);
  Matrix v = x.value();
  v.rowwise() += Eigen::RowVectorXd(row.value().row(0));
  return x.tape->emit(std::move(v), need,
                      need ? [x, row](Tape& t, int self) {
                        const Matrix& g = t.grad_of(self);
                        if (t.requires_grad(x.id)) t.grad_of(x.id) += g;
                        if (t.requires_grad(row.id))
                          t.grad_of(row.id) += g.colwise().sum();
                      } : Tape::BackFn{});
}

namespace {

template <typename FwdFn, typename GradFn>
Var unary_elementwise(Var a, FwdFn fwd, GradFn dfdx) {
  const bool need = rg(a);
  Matrix v = a.value().unaryExpr(fwd);
  return a.tape->emit(std::move(v), need,
                      need ? Tape::BackFn([a, dfdx](Tape& t, int self) {
                        t.grad_of(a.id) +=
                            t.grad_of(self).cwiseProduct(t.value_of(a.id).unaryExpr(dfdx));
                      }) : Tape::BackFn{});
}

}  // namespace

Var relu(Var a) {
  return unary_elementwise(a, [](double x) { return x > 0 ? x : 0.0; },
                           [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  auto sg = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  return unary_elementwise(a, sg, [sg](double x) {
    const double s = sg(x);
    return s * (1.0 - s);
  });
}

Var exp_(Var a) {
  return unary_elementwise(a, [](double x) { return std::exp(x); },
                           [](double x) { return std::exp(x); });
}

Var log_(Var a) {
  if ((a.value().array() <= 0).any()) throw NumericError("log of non-positive value");
  return unary_elementwise(a, [](double x) { return std::log(x); },
                           [](double x) { return 1.0 / x; });
}

Var sin_(Var a) {
  return unary_elementwise(a, [](double x) { return std::sin(x); },
                           [](double x) { return std::cos(x); });
}

Var cos_(Var a) {
  return unary_elementwise(a, [](double x) { return std::cos(x); },
                           [](double x) { return -std::sin(x); });
}

Var abs_(Var a) {
  return unary_elementwise(a, [](double x) { return std::abs(x); },
                           [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var pow_const(Var a, double p) {
  if ((a.value().array() < 0).any()) throw NumericError("pow_const of negative value");
  return unary_elementwise(a, [p](double x) { return std::pow(x, p); },
                           [p](double x) { return x == 0 ? 0.0 : p * std::pow(x, p - 1); });
}

Var clamp(Var a, double lo, double hi) {
  return unary_elementwise(a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
                           [lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var sum(Var a) {
  const bool need = rg(a);
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return a.tape->emit(std::move(v), need,
                      need ? [a](Tape& t, int self) {
                        t.grad_of(a.id).array() += t.grad_of(self)(0, 0);
                      } : Tape::BackFn{});
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var colwise_mean(Var a) {
  const bool need = rg(a);
  const double n = static_cast<double>(a.rows());
  Matrix v = a.value().colwise().mean();
  return a.tape->emit(std::move(v), need,
                      need ? [a, n](Tape& t, int self) {
                        const Matrix& g = t.grad_of(self);
                        t.grad_of(a.id).rowwise() += Eigen::RowVectorXd(g.row(0) / n);
                      } : Tape::BackFn{});
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty input");
  Tape* tape = parts[0].tape;
  Eigen::Index rows = parts[0].rows(), cols = 0;
  bool need = false;
  for (const Var& p : parts) {
    if (p.tape != tape) throw ContractViolation("operands from different tapes");
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
    need = need || rg(p);
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> held = parts;
  return tape->emit(std::move(v), need,
                    need ? [held](Tape& t, int self) {
                      const Matrix& g = t.grad_of(self);
                      Eigen::Index at = 0;
                      for (const Var& p : held) {
                        const Eigen::Index n = t.value_of(p.id).cols();
                        if (t.requires_grad(p.id))
                          t.grad_of(p.id) += g.middleCols(at, n);
                        at += n;
                      }
                    } : Tape::BackFn{});
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: empty input");
  Tape* tape = parts[0].tape;
  Eigen::Index cols = parts[0].cols(), rows = 0;
  bool need = false;
  for (const Var& p : parts) {
    if (p.tape != tape) throw ContractViolation("operands from different tapes");
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
    need = need || rg(p);
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> held = parts;
  return tape->emit(std::move(v), need,
                    need ? [held](Tape& t, int self) {
                      const Matrix& g = t.grad_of(self);
                      Eigen::Index at = 0;
                      for (const Var& p : held) {
                        const Eigen::Index n = t.value_of(p.id).rows();
                        if (t.requires_grad(p.id))
                          t.grad_of(p.id) += g.middleRows(at, n);
                        at += n;
                      }
                    } : Tape::BackFn{});
}

Var slice_cols(Var a, int c0, int n) {
  if (c0 < 0 || n < 0 || c0 + n > a.cols()) throw ShapeError("slice_cols: out of range");
  const bool need = rg(a);
  return a.tape->emit(a.value().middleCols(c0, n), need,
                      need ? [a, c0, n](Tape& t, int self) {
                        t.grad_of(a.id).middleCols(c0, n) += t.grad_of(self);
                      } : Tape::BackFn{});
}

Var slice_rows(Var a, int r0, int n) {
  if (r0 < 0 || n < 0 || r0 + n > a.rows()) throw ShapeError("slice_rows: out of range");
  const bool need = rg(a);
  return a.tape->emit(a.value().middleRows(r0, n), need,
                      need ? [a, r0, n](Tape& t, int self) {
                        t.grad_of(a.id).middleRows(r0, n) += t.grad_of(self);
                      } : Tape::BackFn{});
}

Var gather_rows(Var a, std::vector<int> idx) {
  for (int i : idx)
    if (i < 0 || i >= static_cast<int>(a.rows()))
      throw ShapeError("gather_rows: index out of range");
  const bool need = rg(a);
  Matrix v(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) v.row(k) = a.value().row(idx[k]);
  return a.tape->emit(std::move(v), need,
                      need ? [a, idx](Tape& t, int self) {
                        const Matrix& g = t.grad_of(self);
                        for (std::size_t k = 0; k < idx.size(); ++k)
                          t.grad_of(a.id).row(idx[k]) += g.row(k);
                      } : Tape::BackFn{});
}

Var masked_softmax_rows(Var logits, const Matrix& mask01) {
  if (mask01.rows() != logits.rows() || mask01.cols() != logits.cols())
    throw ShapeError("masked_softmax_rows: mask shape mismatch");
  const Matrix& l = logits.value();
  Matrix s(l.rows(), l.cols());
  for (Eigen::Index r = 0; r < l.rows(); ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < l.cols(); ++c)
      if (mask01(r, c) != 0) m = std::max(m, l(r, c));
    if (!std::isfinite(m))
      throw ContractViolation("masked softmax row has no allowed entries");
    double z = 0;
    for (Eigen::Index c = 0; c < l.cols(); ++c) {
      const double e = mask01(r, c) != 0 ? std::exp(l(r, c) - m) : 0.0;
      s(r, c) = e;
      z += e;
    }
    s.row(r) /= z;
  }
  const bool need = rg(logits);
  Matrix sv = s;
  return logits.tape->emit(std::move(s), need,
                           need ? [logits, sv](Tape& t, int self) {
                             const Matrix& g = t.grad_of(self);
                             Matrix& gl = t.grad_of(logits.id);
                             for (Eigen::Index r = 0; r < g.rows(); ++r) {
                               const double dot = g.row(r).dot(sv.row(r));
                               gl.row(r) += sv.row(r).cwiseProduct(
                                   (g.row(r).array() - dot).matrix());
                             }
                           } : Tape::BackFn{});
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  check_same_tape(x, gain);
  check_same_tape(x, bias);
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 ||
      bias.cols() != x.cols())
    throw ShapeError("layer_norm_rows: gain/bias must be 1 x cols");
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.rows(), c = xv.cols();
  Matrix xhat(n, c);
  Eigen::VectorXd inv_s(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_s(r) = is;
    xhat.row(r) = (xv.row(r).array() - mu) * is;
  }
  Matrix y = xhat;
  const Eigen::RowVectorXd gv = gain.value().row(0);
  const Eigen::RowVectorXd bv = bias.value().row(0);
  y.array().rowwise() *= gv.array();
  y.rowwise() += bv;
  const bool need = rg(x) || rg(gain) || rg(bias);
  return x.tape->emit(std::move(y), need,
                      need ? [x, gain, bias, xhat, inv_s](Tape& t, int self) {
                        const Matrix& g = t.grad_of(self);
                        const Eigen::Index c = g.cols();
                        if (t.requires_grad(gain.id))
                          t.grad_of(gain.id) += g.cwiseProduct(xhat).colwise().sum();
                        if (t.requires_grad(bias.id))
                          t.grad_of(bias.id) += g.colwise().sum();
                        if (t.requires_grad(x.id)) {
                          Matrix& gx = t.grad_of(x.id);
                          const Eigen::RowVectorXd gr = t.value_of(gain.id).row(0);
                          for (Eigen::Index r = 0; r < g.rows(); ++r) {
                            const Eigen::RowVectorXd dxhat =
                                g.row(r).cwiseProduct(gr);
                            const double mean_dxhat = dxhat.mean();
                            const double mean_dxhat_xhat =
                                dxhat.cwiseProduct(xhat.row(r)).mean();
                            gx.row(r) += inv_s(r) *
                                         (dxhat.array() - mean_dxhat -
                                          xhat.row(r).array() * mean_dxhat_xhat)
                                             .matrix();
                          }
                          (void)c;
                        }
                      } : Tape::BackFn{});
}

namespace {

// Builds the (H*W) x (9*C_in) patch matrix for a 3x3 same convolution.
Matrix im2col3x3(const Matrix& x, int grid_h, int grid_w) {
  const Eigen::Index cin = x.cols();
  Matrix p = Matrix::Zero(x.rows(), 9 * cin);
  for (int i = 0; i < grid_h; ++i)
    for (int j = 0; j < grid_w; ++j) {
      const int row = i * grid_w + j;
      int tap = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx, ++tap) {
          const int si = i + dy, sj = j + dx;
          if (si < 0 || si >= grid_h || sj < 0 || sj >= grid_w) continue;
          p.block(row, tap * cin, 1, cin) = x.row(si * grid_w + sj);
        }
    }
  return p;
}

}  // namespace

Var conv3x3_same(Var x, int grid_h, int grid_w, Var weight, Var bias) {
  check_same_tape(x, weight);
  check_same_tape(x, bias);
  if (x.rows() != static_cast<Eigen::Index>(grid_h) * grid_w)
    throw ShapeError("conv3x3_same: rows != grid_h * grid_w");
  if (weight.rows() != 9 * x.cols()) throw ShapeError("conv3x3_same: weight rows != 9*C_in");
  if (bias.rows() != 1 || bias.cols() != weight.cols())
    throw ShapeError("conv3x3_same: bias must be 1 x C_out");
  Matrix patches = im2col3x3(x.value(), grid_h, grid_w);
  Matrix y = patches * weight.value();
  y.rowwise() += Eigen::RowVectorXd(bias.value().row(0));
  const bool need = rg(x) || rg(weight) || rg(bias);
  return x.tape->emit(
      std::move(y), need,
      need ? [x, weight, bias, patches, grid_h, grid_w](Tape& t, int self) {
        const Matrix& g = t.grad_of(self);
        if (t.requires_grad(weight.id))
          t.grad_of(weight.id) += patches.transpose() * g;
        if (t.requires_grad(bias.id)) t.grad_of(bias.id) += g.colwise().sum();
        if (t.requires_grad(x.id)) {
          const Matrix gp = g * t.value_of(weight.id).transpose();
          Matrix& gx = t.grad_of(x.id);
          const Eigen::Index cin = t.value_of(x.id).cols();
          for (int i = 0; i < grid_h; ++i)
            for (int j = 0; j < grid_w; ++j) {
              const int row = i * grid_w + j;
              int tap = 0;
              for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx, ++tap) {
                  const int si = i + dy, sj = j + dx;
                  if (si < 0 || si >= grid_h || sj < 0 || sj >= grid_w) continue;
                  gx.row(si * grid_w + sj) += gp.block(row, tap * cin, 1, cin);
                }
            }
        }
      } : Tape::BackFn{});
}

Var linear(Var x, Var w, Var b) { return addrow(matmul(x, w), b); }

Var ParamBinder::operator()(const std::string& name, Matrix& m) {
  for (const Entry& e : entries_) {
    if (e.name == name) {
      if (e.param != &m) throw ContractViolation("ParamBinder: name bound to a different matrix");
      return e.v;
    }
  }
  Var v = tape_->leaf(m);
  entries_.push_back({name, &m, v});
  return v;
}

Var ParamBinder::var(const std::string& name) const {
  for (const Entry& e : entries_)
    if (e.name == name) return e.v;
  throw ContractViolation("ParamBinder: unknown parameter " + name);
}

void ParamBinder::sgd_step(double lr) {
  for (Entry& e : entries_) {
    const Matrix& g = tape_->grad_of(e.v.id);
    if (g.size() == 0) continue;  // never touched by backward
    *e.param -= lr * g;
  }
}

}  // namespace mvlift::ad
