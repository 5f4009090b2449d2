#ifndef MVLIFT_AD_HPP
#define MVLIFT_AD_HPP

#include <functional>
#include <string>
#include <vector>

#include "mvlift/types.hpp"

namespace mvlift::ad {

using Matrix = ::mvlift::Matrix;

class Tape;

/// Handle to a node on a tape. Values are matrices; scalars are 1x1.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode tape over dense matrices. Nodes are created in evaluation
/// order, so backward() is a single reverse sweep; no graph search needed.
class Tape {
 public:
  /// Node without gradient (fixed input).
  Var constant(Matrix v);
  /// Node that accumulates gradient (parameter or probed input).
  Var leaf(Matrix v);

  /// Seeds d(root)/d(root) = 1 and propagates to all leaves.
  /// root must be 1x1.
  void backward(const Var& root);

  std::size_t size() const { return nodes_.size(); }

  // Internal plumbing for the op layer.
  using BackFn = std::function<void(Tape&, int)>;
  Var emit(Matrix value, bool requires_grad, BackFn back);
  Matrix& grad_of(int id);
  const Matrix& value_of(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until touched by backward
    bool requires_grad = false;
    BackFn back;
  };
  std::vector<Node> nodes_;
  friend struct Var;
};

/// Registers named parameter matrices as gradient-carrying leaves and can
/// apply a gradient-descent step back onto the underlying storage.
class ParamBinder {
 public:
  explicit ParamBinder(Tape& t) : tape_(&t) {}

  /// Creates (or returns the existing) leaf for a parameter matrix.
  Var operator()(const std::string& name, Matrix& m);

  /// Looks up a previously bound leaf; throws if the name is unknown.
  Var var(const std::string& name) const;

  /// param -= lr * grad for every bound parameter touched by backward().
  void sgd_step(double lr);

  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::string name;
    Matrix* param;
    Var v;
  };
  Tape* tape_;
  std::vector<Entry> entries_;
};

// ---- elementwise and structural ops --------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cmul(Var a, Var b);                    // elementwise product
Var scale(Var a, double s);
Var add_const(Var a, const Matrix& m);
Var cmul_const(Var a, const Matrix& m);
Var neg(Var a);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var addrow(Var x, Var row);                // broadcast a 1xC row over all rows

Var relu(Var a);
Var sigmoid(Var a);
Var exp_(Var a);
Var log_(Var a);
Var sin_(Var a);
Var cos_(Var a);
Var abs_(Var a);
Var pow_const(Var a, double p);            // requires positive entries
Var clamp(Var a, double lo, double hi);

Var sum(Var a);                            // -> 1x1
Var mean(Var a);                           // -> 1x1
Var colwise_mean(Var a);                   // (n x c) -> (1 x c)

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, int c0, int n);
Var slice_rows(Var a, int r0, int n);
Var gather_rows(Var a, std::vector<int> idx);

/// Row-wise softmax restricted to entries where mask01 is nonzero.
/// A row with no allowed entry is a contract violation.
Var masked_softmax_rows(Var logits, const Matrix& mask01);

/// Per-row layer normalization with learnable gain/bias (both 1xC).
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

/// 3x3 same-padding convolution over an HxW grid stored row-major as
/// (H*W) x C_in. weight is (9*C_in) x C_out with taps ordered
/// (dy, dx, c_in); bias is 1 x C_out.
Var conv3x3_same(Var x, int grid_h, int grid_w, Var weight, Var bias);

/// x (n x in) * w (in x out) + b (1 x out).
Var linear(Var x, Var w, Var b);

}  // namespace mvlift::ad

#endif
