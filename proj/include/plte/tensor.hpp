#pragma once

#include "plte/types.hpp"

#include <functional>
#include <memory>
#include <span>

namespace plte {

namespace detail {

struct TensorNode {
  Shape shape;
  ArrX values;  // flat, row-major
  ArrX grad;    // empty until first accumulation
  bool requires_grad = false;
};

}  // namespace detail

// Shared handle to a dense value with optional gradient. Copying a Tensor
// aliases the same storage (use clone() for a deep copy). Rank is 1 to 3;
// matrix ops view the flat buffer through row-major maps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, Scalar value);
  static Tensor scalar(Scalar value);
  static Tensor from_matrix(const Mat& m);
  static Tensor from_flat(Shape shape, ArrX values);
  // Leaf with requires_grad set; the usual way to make a trainable parameter.
  static Tensor leaf(Shape shape, ArrX values, bool requires_grad = true);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  Index dim(int i) const { return n_->shape[static_cast<std::size_t>(i)]; }
  Index size() const { return n_->values.size(); }
  // Leading extent and trailing row width; rank-2 rows/cols, and for rank-3
  // rows() is dim(0) while row_width() is dim(1)*dim(2).
  Index rows() const { return n_->shape[0]; }
  Index cols() const;

  const ArrX& values() const { return n_->values; }
  ArrX& values_mutable() { return n_->values; }
  Eigen::Map<const Mat> mat() const;
  Eigen::Map<Mat> mat_mutable();
  Scalar item() const;

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool v) { n_->requires_grad = v; }
  bool has_grad() const { return n_->grad.size() == n_->values.size(); }
  // Gradient buffer, zero-allocated on first use.
  ArrX& grad();
  const ArrX& grad() const;
  Eigen::Map<const Mat> grad_mat() const;
  void zero_grad();

  Tensor clone() const;

  detail::TensorNode* node() const { return n_.get(); }
  bool same_storage(const Tensor& other) const { return n_ == other.n_; }

  // internal: wrap an existing node
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : n_(std::move(n)) {}

 private:
  std::shared_ptr<detail::TensorNode> n_;
};

// Record of differentiable operations in execution order. Constructing a
// Tape makes it the active record for the current thread; ops executed while
// one is active append gradient-propagation closures. backward() replays
// them once, in reverse insertion order. A tape is confined to one thread;
// distinct threads may each run their own.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();
  void record(const Tensor& output, std::function<void()> backward_step);
  std::size_t size() const { return steps_.size(); }

  friend void backward(const Tensor& loss);

 private:
  struct Step {
    Tensor output;
    std::function<void()> fn;
  };
  std::vector<Step> steps_;
  Tape* previous_ = nullptr;
};

// Seeds d(loss)/d(loss) = 1 and propagates through the active tape. Gradients
// accumulate across repeated calls; callers reset via zero_grad().
void backward(const Tensor& loss);

// ---- operations ------------------------------------------------------
// All ops validate shapes, compute values eagerly, and record a backward
// step when a tape is active and any operand requires a gradient.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& x, Scalar factor);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

// Broadcast helpers for rank-2 operands.
Tensor add_rowvec(const Tensor& x, const Tensor& row);  // [m x n] + [1 x n]
Tensor add_colvec(const Tensor& x, const Tensor& col);  // [m x n] + [m x 1]
// Scales row i of x by the constant c[i]; c carries no gradient.
Tensor mul_colvec(const Tensor& x, const Vec& c);

Tensor concat(std::span<const Tensor> parts, int axis);  // rank-2, axis 0 or 1
// Axis-0 slice, any rank (contiguous in row-major storage).
Tensor rows(const Tensor& x, Index begin, Index count);
Tensor cols(const Tensor& x, Index begin, Index count);  // rank-2
Tensor reshape(const Tensor& x, Shape shape);

Tensor mean_rows(const Tensor& x);  // [m x n] -> [1 x n]
Tensor sum_all(const Tensor& x);    // -> [1 x 1]

// Row softmax with optional boolean mask. Masked entries are exactly zero in
// the output and receive zero gradient; each row must keep at least one
// unmasked entry. Stabilized by row-max subtraction.
Tensor softmax_rows(const Tensor& x, const BoolArr* mask = nullptr);

Tensor logsumexp_rows(const Tensor& x);  // [m x n] -> [m x 1]
// out[s][j] = log sum_i exp(a[s][i] + b[i][j]); the batched CRF forward step.
Tensor logsumexp_bilinear(const Tensor& a, const Tensor& b);

// Row gather from a rank-2 table; gradients scatter-add back into the table.
Tensor gather_rows(const Tensor& table, std::span<const Index> ids);
// Element gather x[r[i], c[i]] -> [k x 1].
Tensor pick(const Tensor& x, std::span<const Index> r, std::span<const Index> c);

// Inverted dropout: kept entries divided by keep probability; identity when
// training is false or rate is 0. rate must lie in [0, 1).
Tensor dropout(const Tensor& x, Scalar rate, bool training, Rng& rng);

// out[i][j] = sum_k q[i][k] * rk[i][j][k]   with q [n x d], rk [n x m x d].
Tensor relation_score_bias(const Tensor& q, const Tensor& rk);
// out[i][j] = sum_k alpha[i][k] * rv[i][k][j]   with alpha [n x m], rv [n x m x d].
Tensor relation_value_bias(const Tensor& alpha, const Tensor& rv);

Tensor layernorm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                      Scalar eps = 1e-5);

// Uniform(-bound, bound) fill helpers used by parameter initialization.
Tensor uniform_init(Shape shape, Scalar bound, Rng& rng, bool requires_grad = true);
Tensor glorot_init(Index fan_in, Index fan_out, Rng& rng, bool requires_grad = true);

}  // namespace plte
