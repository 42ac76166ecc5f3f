#include "plte/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace plte {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::shared_ptr<detail::TensorNode> make_node(Shape shape, ArrX values,
                                              bool requires_grad) {
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  return n;
}

Tensor result(Shape shape, ArrX values, bool rec, const char* op) {
#ifndef NDEBUG
  require(values.isFinite().all(), std::string("non-finite values produced by ") + op);
#else
  (void)op;
#endif
  return Tensor(make_node(std::move(shape), std::move(values), rec));
}

bool recording(const Tensor& a) {
  return Tape::active() != nullptr && a.requires_grad();
}
bool recording(const Tensor& a, const Tensor& b) {
  return Tape::active() != nullptr && (a.requires_grad() || b.requires_grad());
}

Eigen::Map<Mat> grad_map(Tensor& t) {
  return Eigen::Map<Mat>(t.grad().data(), t.rows(), t.cols());
}

}  // namespace

// ---- Tensor ----------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
  Index n = numel(shape);
  return Tensor(make_node(std::move(shape), ArrX::Zero(n), false));
}

Tensor Tensor::full(Shape shape, Scalar value) {
  Index n = numel(shape);
  return Tensor(make_node(std::move(shape), ArrX::Constant(n, value), false));
}

Tensor Tensor::scalar(Scalar value) { return full({1, 1}, value); }

Tensor Tensor::from_matrix(const Mat& m) {
  ArrX v = Eigen::Map<const ArrX>(m.data(), m.size());
  return Tensor(make_node({m.rows(), m.cols()}, std::move(v), false));
}

Tensor Tensor::from_flat(Shape shape, ArrX values) {
  require(numel(shape) == values.size(), "from_flat: shape does not match value count");
  return Tensor(make_node(std::move(shape), std::move(values), false));
}

Tensor Tensor::leaf(Shape shape, ArrX values, bool requires_grad) {
  require(numel(shape) == values.size(), "leaf: shape does not match value count");
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Index Tensor::cols() const {
  Index w = 1;
  for (std::size_t i = 1; i < n_->shape.size(); ++i) w *= n_->shape[i];
  return w;
}

Eigen::Map<const Mat> Tensor::mat() const {
  return Eigen::Map<const Mat>(n_->values.data(), rows(), cols());
}

Eigen::Map<Mat> Tensor::mat_mutable() {
  return Eigen::Map<Mat>(n_->values.data(), rows(), cols());
}

Scalar Tensor::item() const {
  require(size() == 1, "item: tensor is not a scalar");
  return n_->values(0);
}

ArrX& Tensor::grad() {
  if (n_->grad.size() != n_->values.size()) n_->grad = ArrX::Zero(n_->values.size());
  return n_->grad;
}

const ArrX& Tensor::grad() const {
  require(has_grad(), "grad: no gradient has been accumulated");
  return n_->grad;
}

Eigen::Map<const Mat> Tensor::grad_mat() const {
  return Eigen::Map<const Mat>(grad().data(), rows(), cols());
}

void Tensor::zero_grad() {
  if (has_grad()) n_->grad.setZero();
}

Tensor Tensor::clone() const {
  return Tensor(make_node(n_->shape, n_->values, n_->requires_grad));
}

// ---- Tape ------------------------------------------------------------

Tape::Tape() {
  previous_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(const Tensor& output, std::function<void()> backward_step) {
  steps_.push_back({output, std::move(backward_step)});
}

void backward(const Tensor& loss) {
  require(loss.defined() && loss.size() == 1, "backward: loss must be a scalar");
  Tape* tape = Tape::active();
  require(tape != nullptr, "backward: no active tape on this thread");
  require(loss.requires_grad(), "backward: loss was not recorded on the tape");
  // intermediate grads carry only the current pass; leaf grads accumulate
  for (auto& step : tape->steps_) step.output.zero_grad();
  Tensor l = loss;
  l.grad()(0) += 1.0;
  for (auto it = tape->steps_.rbegin(); it != tape->steps_.rend(); ++it) it->fn();
}

// ---- ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 operands required");
  require(a.dim(1) == b.dim(0), "matmul: inner extents differ, " +
                                    shape_str(a.shape()) + " * " + shape_str(b.shape()));
  const Index m = a.dim(0), n = b.dim(1);
  ArrX out(m * n);
  Eigen::Map<Mat>(out.data(), m, n).noalias() = a.mat() * b.mat();
  bool rec = recording(a, b);
  Tensor y = result({m, n}, std::move(out), rec, "matmul");
  if (rec) {
    Tape::active()->record(y, [a = a, b = b, y]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad_mat();
      if (a.requires_grad()) grad_map(a).noalias() += gy * b.mat().transpose();
      if (b.requires_grad()) grad_map(b).noalias() += a.mat().transpose() * gy;
    });
  }
  return y;
}

Tensor transpose(const Tensor& x) {
  require(x.rank() == 2, "transpose: rank-2 operand required");
  const Index m = x.dim(0), n = x.dim(1);
  ArrX out(m * n);
  Eigen::Map<Mat>(out.data(), n, m) = x.mat().transpose();
  bool rec = recording(x);
  Tensor y = result({n, m}, std::move(out), rec, "transpose");
  if (rec) {
    Tape::active()->record(y, [x = x, y]() mutable {
      if (!y.has_grad()) return;
      grad_map(x) += y.grad_mat().transpose();
    });
  }
  return y;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch, " +
                                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  bool rec = recording(a, b);
  Tensor y = result(a.shape(), a.values() + b.values(), rec, "add");
  if (rec) {
    Tape::active()->record(y, [a = a, b = b, y]() mutable {
      if (!y.has_grad()) return;
      if (a.requires_grad()) a.grad() += y.grad();
      if (b.requires_grad()) b.grad() += y.grad();
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  bool rec = recording(a, b);
  Tensor y = result(a.shape(), a.values() - b.values(), rec, "sub");
  if (rec) {
    Tape::active()->record(y, [a = a, b = b, y]() mutable {
      if (!y.has_grad()) return;
      if (a.requires_grad()) a.grad() += y.grad();
      if (b.requires_grad()) b.grad() -= y.grad();
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  bool rec = recording(a, b);
  Tensor y = result(a.shape(), a.values() * b.values(), rec, "mul");
  if (rec) {
    Tape::active()->record(y, [a = a, b = b, y]() mutable {
      if (!y.has_grad()) return;
      if (a.requires_grad()) a.grad() += y.grad() * b.values();
      if (b.requires_grad()) b.grad() += y.grad() * a.values();
    });
  }
  return y;
}

Tensor scale(const Tensor& x, Scalar factor) {
  bool rec = recording(x);
  Tensor y = result(x.shape(), x.values() * factor, rec, "scale");
  if (rec) {
    Tape::active()->record(y, [x = x, y, factor]() mutable {
      if (!y.has_grad()) return;
      x.grad() += y.grad() * factor;
    });
  }
  return y;
}

Tensor sigmoid(const Tensor& x) {
  // logistic via tanh keeps exp() from overflowing for large |x|
  ArrX v = 0.5 * (0.5 * x.values()).tanh() + 0.5;
  bool rec = recording(x);
  Tensor y = result(x.shape(), std::move(v), rec, "sigmoid");
  if (rec) {
    Tape::active()->record(y, [x = x, y]() mutable {
      if (!y.has_grad()) return;
      x.grad() += y.grad() * y.values() * (1.0 - y.values());
    });
  }
  return y;
}

Tensor tanh(const Tensor& x) {
  bool rec = recording(x);
  Tensor y = result(x.shape(), x.values().tanh(), rec, "tanh");
  if (rec) {
    Tape::active()->record(y, [x = x, y]() mutable {
      if (!y.has_grad()) return;
      x.grad() += y.grad() * (1.0 - y.values().square());
    });
  }
  return y;
}

Tensor add_rowvec(const Tensor& x, const Tensor& row) {
  require(x.rank() == 2 && row.rank() == 2 && row.dim(0) == 1 && row.dim(1) == x.dim(1),
          "add_rowvec: expected [m x n] + [1 x n]");
  ArrX out(x.size());
  Eigen::Map<Mat>(out.data(), x.rows(), x.cols()) =
      x.mat().rowwise() + row.mat().row(0);
  bool rec = recording(x, row);
  Tensor y = result(x.shape(), std::move(out), rec, "add_rowvec");
  if (rec) {
    Tape::active()->record(y, [x = x, row = row, y]() mutable {
      if (!y.has_grad()) return;
      if (x.requires_grad()) x.grad() += y.grad();
      if (row.requires_grad()) grad_map(row).row(0) += y.grad_mat().colwise().sum();
    });
  }
  return y;
}

Tensor add_colvec(const Tensor& x, const Tensor& col) {
  require(x.rank() == 2 && col.rank() == 2 && col.dim(1) == 1 && col.dim(0) == x.dim(0),
          "add_colvec: expected [m x n] + [m x 1]");
  ArrX out(x.size());
  Eigen::Map<Mat>(out.data(), x.rows(), x.cols()) =
      x.mat().colwise() + col.mat().col(0);
  bool rec = recording(x, col);
  Tensor y = result(x.shape(), std::move(out), rec, "add_colvec");
  if (rec) {
    Tape::active()->record(y, [x = x, col = col, y]() mutable {
      if (!y.has_grad()) return;
      if (x.requires_grad()) x.grad() += y.grad();
      if (col.requires_grad()) grad_map(col).col(0) += y.grad_mat().rowwise().sum();
    });
  }
  return y;
}

Tensor mul_colvec(const Tensor& x, const Vec& c) {
  require(x.rank() == 2 && c.size() == x.dim(0), "mul_colvec: column length mismatch");
  ArrX out(x.size());
  Eigen::Map<Mat>(out.data(), x.rows(), x.cols()) = c.asDiagonal() * x.mat();
  bool rec = recording(x);
  Tensor y = result(x.shape(), std::move(out), rec, "mul_colvec");
  if (rec) {
    Tape::active()->record(y, [x = x, y, c]() mutable {
      if (!y.has_grad()) return;
      grad_map(x) += c.asDiagonal() * y.grad_mat();
    });
  }
  return y;
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  require(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  Index m = parts[0].dim(0), n = parts[0].dim(1);
  bool rec_any = false;
  for (const Tensor& p : parts) {
    require(p.rank() == 2, "concat: rank-2 inputs required");
    if (axis == 0) {
      require(p.dim(1) == n, "concat: column mismatch");
    } else {
      require(p.dim(0) == m, "concat: row mismatch");
    }
    rec_any = rec_any || p.requires_grad();
  }
  Index total = 0;
  for (const Tensor& p : parts) total += p.dim(axis);
  Index rows_out = axis == 0 ? total : m;
  Index cols_out = axis == 0 ? n : total;
  ArrX out(rows_out * cols_out);
  Eigen::Map<Mat> om(out.data(), rows_out, cols_out);
  Index at = 0;
  for (const Tensor& p : parts) {
    if (axis == 0) {
      om.middleRows(at, p.dim(0)) = p.mat();
    } else {
      om.middleCols(at, p.dim(1)) = p.mat();
    }
    at += p.dim(axis);
  }
  bool rec = Tape::active() != nullptr && rec_any;
  Tensor y = result({rows_out, cols_out}, std::move(out), rec, "concat");
  if (rec) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    Tape::active()->record(y, [held = std::move(held), y, axis]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad_mat();
      Index at = 0;
      for (Tensor& p : held) {
        if (p.requires_grad()) {
          if (axis == 0) {
            grad_map(p) += gy.middleRows(at, p.dim(0));
          } else {
            grad_map(p) += gy.middleCols(at, p.dim(1));
          }
        }
        at += p.dim(axis);
      }
    });
  }
  return y;
}

Tensor rows(const Tensor& x, Index begin, Index count) {
  require(x.rank() >= 1, "rows: undefined input");
  require(begin >= 0 && count >= 0 && begin + count <= x.dim(0),
          "rows: slice out of range");
  const Index w = x.cols();
  Shape shape = x.shape();
  shape[0] = count;
  ArrX out = x.values().segment(begin * w, count * w);
  bool rec = recording(x);
  Tensor y = result(std::move(shape), std::move(out), rec, "rows");
  if (rec) {
    Tape::active()->record(y, [x = x, y, begin, w]() mutable {
      if (!y.has_grad()) return;
      x.grad().segment(begin * w, y.size()) += y.grad();
    });
  }
  return y;
}

Tensor cols(const Tensor& x, Index begin, Index count) {
  require(x.rank() == 2, "cols: rank-2 operand required");
  require(begin >= 0 && count >= 0 && begin + count <= x.dim(1),
          "cols: slice out of range");
  ArrX out(x.dim(0) * count);
  Eigen::Map<Mat>(out.data(), x.dim(0), count) = x.mat().middleCols(begin, count);
  bool rec = recording(x);
  Tensor y = result({x.dim(0), count}, std::move(out), rec, "cols");
  if (rec) {
    Tape::active()->record(y, [x = x, y, begin, count]() mutable {
      if (!y.has_grad()) return;
      grad_map(x).middleCols(begin, count) += y.grad_mat();
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(numel(shape) == x.size(), "reshape: element count mismatch, " +
                                        shape_str(x.shape()) + " -> " + shape_str(shape));
  bool rec = recording(x);
  Tensor y = result(std::move(shape), x.values(), rec, "reshape");
  if (rec) {
    Tape::active()->record(y, [x = x, y]() mutable {
      if (!y.has_grad()) return;
      x.grad() += y.grad();
    });
  }
  return y;
}

Tensor mean_rows(const Tensor& x) {
  require(x.rank() == 2 && x.dim(0) >= 1, "mean_rows: non-empty rank-2 operand required");
  ArrX out(x.dim(1));
  Eigen::Map<Mat>(out.data(), 1, x.dim(1)) = x.mat().colwise().mean();
  bool rec = recording(x);
  Tensor y = result({1, x.dim(1)}, std::move(out), rec, "mean_rows");
  if (rec) {
    Tape::active()->record(y, [x = x, y]() mutable {
      if (!y.has_grad()) return;
      grad_map(x).rowwise() +=
          (y.grad_mat().row(0) / static_cast<Scalar>(x.dim(0))).eval();
    });
  }
  return y;
}

Tensor sum_all(const Tensor& x) {
  bool rec = recording(x);
  Tensor y = result({1, 1}, ArrX::Constant(1, x.values().sum()), rec, "sum_all");
  if (rec) {
    Tape::active()->record(y, [x = x, y]() mutable {
      if (!y.has_grad()) return;
      x.grad() += y.grad()(0);
    });
  }
  return y;
}

Tensor softmax_rows(const Tensor& x, const BoolArr* mask) {
  require(x.rank() == 2, "softmax_rows: rank-2 operand required");
  const Index m = x.dim(0), n = x.dim(1);
  if (mask != nullptr) {
    require(mask->rows() == m && mask->cols() == n, "softmax_rows: mask shape mismatch");
  }
  ArrX out(m * n);
  Eigen::Map<Mat> om(out.data(), m, n);
  auto xm = x.mat();
  for (Index i = 0; i < m; ++i) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Index j = 0; j < n; ++j) {
      if (mask == nullptr || (*mask)(i, j)) mx = std::max(mx, xm(i, j));
    }
    require(std::isfinite(mx), "softmax_rows: fully masked row " + std::to_string(i));
    Scalar sum = 0;
    for (Index j = 0; j < n; ++j) {
      bool keep = mask == nullptr || (*mask)(i, j);
      Scalar e = keep ? std::exp(xm(i, j) - mx) : 0.0;
      om(i, j) = e;
      sum += e;
    }
    om.row(i) /= sum;
  }
  bool rec = recording(x);
  Tensor y = result({m, n}, std::move(out), rec, "softmax_rows");
  if (rec) {
    // masked outputs are exactly 0, so y*(gy - dot) vanishes there and no
    // gradient leaks through masked entries
    Tape::active()->record(y, [x = x, y]() mutable {
      if (!y.has_grad()) return;
      auto ym = y.mat();
      auto gy = y.grad_mat();
      auto gx = grad_map(x);
      for (Index i = 0; i < ym.rows(); ++i) {
        Scalar dot = ym.row(i).dot(gy.row(i));
        gx.row(i).array() += ym.row(i).array() * (gy.row(i).array() - dot);
      }
    });
  }
  return y;
}

Tensor logsumexp_rows(const Tensor& x) {
  require(x.rank() == 2, "logsumexp_rows: rank-2 operand required");
  const Index m = x.dim(0);
  ArrX out(m);
  auto xm = x.mat();
  for (Index i = 0; i < m; ++i) {
    Scalar mx = xm.row(i).maxCoeff();
    out(i) = mx + std::log((xm.row(i).array() - mx).exp().sum());
  }
  bool rec = recording(x);
  Tensor y = result({m, 1}, std::move(out), rec, "logsumexp_rows");
  if (rec) {
    Tape::active()->record(y, [x = x, y]() mutable {
      if (!y.has_grad()) return;
      auto gx = grad_map(x);
      auto xm = x.mat();
      for (Index i = 0; i < xm.rows(); ++i) {
        gx.row(i).array() +=
            y.grad()(i) * (xm.row(i).array() - y.values()(i)).exp();
      }
    });
  }
  return y;
}

Tensor logsumexp_bilinear(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "logsumexp_bilinear: expected [B x Y] and [Y x Y']");
  const Index bsz = a.dim(0), y_in = b.dim(0), y_out = b.dim(1);
  ArrX out(bsz * y_out);
  Eigen::Map<Mat> om(out.data(), bsz, y_out);
  auto am = a.mat();
  auto bm = b.mat();
  Mat m(y_in, y_out);
  for (Index s = 0; s < bsz; ++s) {
    m = bm.colwise() + am.row(s).transpose();
    RowVec mx = m.colwise().maxCoeff();
    om.row(s) = mx.array() +
                (m.rowwise() - mx).array().exp().colwise().sum().log();
  }
  bool rec = recording(a, b);
  Tensor y = result({bsz, y_out}, std::move(out), rec, "logsumexp_bilinear");
  if (rec) {
    Tape::active()->record(y, [a = a, b = b, y]() mutable {
      if (!y.has_grad()) return;
      auto am = a.mat();
      auto bm = b.mat();
      auto ym = y.mat();
      auto gy = y.grad_mat();
      Mat w(b.dim(0), b.dim(1));
      for (Index s = 0; s < am.rows(); ++s) {
        w = ((bm.colwise() + am.row(s).transpose()).rowwise() - ym.row(s))
                .array()
                .exp();
        if (a.requires_grad())
          grad_map(a).row(s).noalias() += (w * gy.row(s).transpose()).transpose();
        if (b.requires_grad()) grad_map(b).noalias() += w * gy.row(s).asDiagonal();
      }
    });
  }
  return y;
}

Tensor gather_rows(const Tensor& table, std::span<const Index> ids) {
  require(table.rank() == 2, "gather_rows: rank-2 table required");
  const Index k = static_cast<Index>(ids.size());
  const Index d = table.dim(1);
  ArrX out(k * d);
  Eigen::Map<Mat> om(out.data(), k, d);
  auto tm = table.mat();
  for (Index i = 0; i < k; ++i) {
    Index id = ids[static_cast<std::size_t>(i)];
    require(id >= 0 && id < table.dim(0),
            "gather_rows: id " + std::to_string(id) + " out of range");
    om.row(i) = tm.row(id);
  }
  bool rec = recording(table);
  Tensor y = result({k, d}, std::move(out), rec, "gather_rows");
  if (rec) {
    std::vector<Index> held(ids.begin(), ids.end());
    Tape::active()->record(y, [table = table, y, held = std::move(held)]() mutable {
      if (!y.has_grad()) return;
      auto gt = grad_map(table);
      auto gy = y.grad_mat();
      for (Index i = 0; i < gy.rows(); ++i)
        gt.row(held[static_cast<std::size_t>(i)]) += gy.row(i);
    });
  }
  return y;
}

Tensor pick(const Tensor& x, std::span<const Index> r, std::span<const Index> c) {
  require(x.rank() == 2, "pick: rank-2 operand required");
  require(r.size() == c.size(), "pick: index lists differ in length");
  const Index k = static_cast<Index>(r.size());
  ArrX out(k);
  auto xm = x.mat();
  for (Index i = 0; i < k; ++i) {
    Index ri = r[static_cast<std::size_t>(i)], ci = c[static_cast<std::size_t>(i)];
    require(ri >= 0 && ri < x.dim(0) && ci >= 0 && ci < x.dim(1),
            "pick: index out of range");
    out(i) = xm(ri, ci);
  }
  bool rec = recording(x);
  Tensor y = result({k, 1}, std::move(out), rec, "pick");
  if (rec) {
    std::vector<Index> hr(r.begin(), r.end()), hc(c.begin(), c.end());
    Tape::active()->record(y, [x = x, y, hr = std::move(hr), hc = std::move(hc)]() mutable {
      if (!y.has_grad()) return;
      auto gx = grad_map(x);
      for (std::size_t i = 0; i < hr.size(); ++i)
        gx(hr[i], hc[i]) += y.grad()(static_cast<Index>(i));
    });
  }
  return y;
}

Tensor dropout(const Tensor& x, Scalar rate, bool training, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  const Scalar keep = 1.0 - rate;
  std::bernoulli_distribution coin(keep);
  ArrX mask(x.size());
  for (Index i = 0; i < mask.size(); ++i) mask(i) = coin(rng) ? 1.0 / keep : 0.0;
  bool rec = recording(x);
  Tensor y = result(x.shape(), x.values() * mask, rec, "dropout");
  if (rec) {
    Tape::active()->record(y, [x = x, y, mask = std::move(mask)]() mutable {
      if (!y.has_grad()) return;
      x.grad() += y.grad() * mask;
    });
  }
  return y;
}

Tensor relation_score_bias(const Tensor& q, const Tensor& rk) {
  require(q.rank() == 2 && rk.rank() == 3, "relation_score_bias: expected [n x d], [n x m x d]");
  const Index n = q.dim(0), d = q.dim(1), m = rk.dim(1);
  require(rk.dim(0) == n && rk.dim(2) == d,
          "relation_score_bias: shape mismatch, " + shape_str(q.shape()) + " vs " +
              shape_str(rk.shape()));
  ArrX out(n * m);
  Eigen::Map<Mat> om(out.data(), n, m);
  auto qm = q.mat();
  for (Index i = 0; i < n; ++i) {
    Eigen::Map<const Mat> slice(rk.values().data() + i * m * d, m, d);
    om.row(i).noalias() = (slice * qm.row(i).transpose()).transpose();
  }
  bool rec = recording(q, rk);
  Tensor y = result({n, m}, std::move(out), rec, "relation_score_bias");
  if (rec) {
    Tape::active()->record(y, [q = q, rk = rk, y]() mutable {
      if (!y.has_grad()) return;
      const Index n = q.dim(0), d = q.dim(1), m = rk.dim(1);
      auto gy = y.grad_mat();
      auto qm = q.mat();
      for (Index i = 0; i < n; ++i) {
        Eigen::Map<const Mat> slice(rk.values().data() + i * m * d, m, d);
        if (q.requires_grad())
          grad_map(q).row(i).noalias() += gy.row(i) * slice;
        if (rk.requires_grad()) {
          Eigen::Map<Mat> gslice(rk.grad().data() + i * m * d, m, d);
          gslice.noalias() += gy.row(i).transpose() * qm.row(i);
        }
      }
    });
  }
  return y;
}

Tensor relation_value_bias(const Tensor& alpha, const Tensor& rv) {
  require(alpha.rank() == 2 && rv.rank() == 3,
          "relation_value_bias: expected [n x m], [n x m x d]");
  const Index n = alpha.dim(0), m = alpha.dim(1), d = rv.dim(2);
  require(rv.dim(0) == n && rv.dim(1) == m,
          "relation_value_bias: shape mismatch, " + shape_str(alpha.shape()) + " vs " +
              shape_str(rv.shape()));
  ArrX out(n * d);
  Eigen::Map<Mat> om(out.data(), n, d);
  auto am = alpha.mat();
  for (Index i = 0; i < n; ++i) {
    Eigen::Map<const Mat> slice(rv.values().data() + i * m * d, m, d);
    om.row(i).noalias() = am.row(i) * slice;
  }
  bool rec = recording(alpha, rv);
  Tensor y = result({n, d}, std::move(out), rec, "relation_value_bias");
  if (rec) {
    Tape::active()->record(y, [alpha = alpha, rv = rv, y]() mutable {
      if (!y.has_grad()) return;
      const Index n = alpha.dim(0), m = alpha.dim(1), d = rv.dim(2);
      auto gy = y.grad_mat();
      auto am = alpha.mat();
      for (Index i = 0; i < n; ++i) {
        Eigen::Map<const Mat> slice(rv.values().data() + i * m * d, m, d);
        if (alpha.requires_grad())
          grad_map(alpha).row(i).noalias() += gy.row(i) * slice.transpose();
        if (rv.requires_grad()) {
          Eigen::Map<Mat> gslice(rv.grad().data() + i * m * d, m, d);
          gslice.noalias() += am.row(i).transpose() * gy.row(i);
        }
      }
    });
  }
  return y;
}

Tensor layernorm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                      Scalar eps) {
  require(x.rank() == 2, "layernorm_rows: rank-2 operand required");
  const Index m = x.dim(0), n = x.dim(1);
  require(gain.rank() == 2 && gain.dim(0) == 1 && gain.dim(1) == n &&
              bias.rank() == 2 && bias.dim(0) == 1 && bias.dim(1) == n,
          "layernorm_rows: gain/bias must be [1 x n]");
  Mat xhat(m, n);
  Vec inv(m);
  auto xm = x.mat();
  for (Index i = 0; i < m; ++i) {
    Scalar mu = xm.row(i).mean();
    Scalar var = (xm.row(i).array() - mu).square().mean();
    inv(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xm.row(i).array() - mu) * inv(i);
  }
  ArrX out(m * n);
  Eigen::Map<Mat> om(out.data(), m, n);
  om = (xhat.array().rowwise() * gain.mat().row(0).array()).rowwise() +
       bias.mat().row(0).array();
  bool rec = Tape::active() != nullptr &&
             (x.requires_grad() || gain.requires_grad() || bias.requires_grad());
  Tensor y = result({m, n}, std::move(out), rec, "layernorm_rows");
  if (rec) {
    Tape::active()->record(y, [x = x, gain = gain, bias = bias, y, xhat = std::move(xhat),
                            inv = std::move(inv)]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad_mat();
      if (gain.requires_grad())
        grad_map(gain).row(0) += (gy.array() * xhat.array()).colwise().sum().matrix();
      if (bias.requires_grad()) grad_map(bias).row(0) += gy.colwise().sum();
      if (x.requires_grad()) {
        auto gx = grad_map(x);
        for (Index i = 0; i < xhat.rows(); ++i) {
          RowVec dxh = gy.row(i).array() * gain.mat().row(0).array();
          Scalar mean_dxh = dxh.mean();
          Scalar mean_dxh_xhat = (dxh.array() * xhat.row(i).array()).mean();
          gx.row(i).array() += inv(i) * (dxh.array() - mean_dxh -
                                         xhat.row(i).array() * mean_dxh_xhat);
        }
      }
    });
  }
  return y;
}

Tensor uniform_init(Shape shape, Scalar bound, Rng& rng, bool requires_grad) {
  std::uniform_real_distribution<Scalar> dist(-bound, bound);
  ArrX v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
  return Tensor::leaf(std::move(shape), std::move(v), requires_grad);
}

Tensor glorot_init(Index fan_in, Index fan_out, Rng& rng, bool requires_grad) {
  Scalar bound = std::sqrt(6.0 / static_cast<Scalar>(fan_in + fan_out));
  return uniform_init({fan_in, fan_out}, bound, rng, requires_grad);
}

}  // namespace plte
