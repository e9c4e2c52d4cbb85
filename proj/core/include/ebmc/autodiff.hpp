#pragma once

// Dense 2-D reverse-mode automatic differentiation.
//
// A Tensor is a row-major matrix of doubles. Operations on tensors that
// belong to a Tape are recorded on it; operations whose inputs are all
// detached produce detached results and record nothing. A Tape lives for one
// optimization step: parameters enter it through Tape::variable, the loss is
// built from ordinary operations, and Tape::backward fills in gradients.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ebmc::ad {

struct TapeState;
class Tape;

class Tensor;
void backward(const Tensor& loss);
Tensor grad_of_scalar_wrt(const Tensor& x, const Tensor& loss);

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double value);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

  std::span<const double> data() const { return data_; }
  /// Writable view; only detached tensors may be mutated.
  std::span<double> mutable_data();

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  /// Value of a 1x1 tensor.
  double item() const;

  bool on_tape() const { return static_cast<bool>(tape_); }
  std::optional<std::size_t> node_id() const;
  /// Accumulated gradient, or nullopt for detached tensors.
  std::optional<Tensor> grad() const;
  /// Same values, no tape linkage.
  Tensor detach() const;

  std::string shape_string() const;

 private:
  friend class Tape;
  friend void backward(const Tensor& loss);
  friend Tensor grad_of_scalar_wrt(const Tensor& x, const Tensor& loss);
  friend Tensor record_op(Tensor, std::initializer_list<const Tensor*>,
                          std::function<void(std::span<const double>, std::span<double* const>)>);

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
  std::shared_ptr<TapeState> tape_;
  std::size_t node_ = 0;
};

/// Adjoint rule: receives the output gradient and one accumulator per input
/// (nullptr when that input is detached).
using BackwardFn = std::function<void(std::span<const double> grad_out, std::span<double* const> grad_in)>;

/// Records `out` as the result of an operation over `inputs`. If no input is on
/// a tape the result is returned detached and `fn` is discarded.
Tensor record_op(Tensor out, std::initializer_list<const Tensor*> inputs, BackwardFn fn);

class Tape {
 public:
  Tape();

  /// New leaf that receives gradient; copies `value`.
  Tensor variable(const Tensor& value);

  std::size_t size() const;

  /// Accumulates d(loss)/d(node) into every node reachable backwards from loss.
  void backward(const Tensor& loss);
  void zero_grad();

  /// d(loss)/d(x) computed into scratch storage; stored gradients are untouched.
  Tensor gradient_of(const Tensor& loss, const Tensor& x) const;

 private:
  std::shared_ptr<TapeState> state_;
};

/// Runs backward on the loss's own tape.
void backward(const Tensor& loss);

/// d(loss)/d(x) as a detached tensor (stop-gradient), leaving stored grads unchanged.
Tensor grad_of_scalar_wrt(const Tensor& x, const Tensor& loss);

// Matrix ---------------------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise ----------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
/// Throws DomainError naming the first non-positive entry.
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
/// Subgradient 0 at 0.
Tensor abs(const Tensor& a);

// Broadcasting (row-vector bias and per-row scaling only) ---------------------
/// a[n x k] + row[1 x k] on every row.
Tensor add_row(const Tensor& a, const Tensor& row);
/// a[n x k] * col[n x 1] on every column.
Tensor scale_rows(const Tensor& a, const Tensor& col);

// Softmax ------------------------------------------------------------------
Tensor softmax_rows(const Tensor& x, double temperature = 1.0);
Tensor log_softmax_rows(const Tensor& x, double temperature = 1.0);

// Reductions ---------------------------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor l2_norm_sq(const Tensor& x);
/// Per-row sum, n x 1.
Tensor row_sum(const Tensor& x);
/// Rows scaled to unit length: x / (||x_i|| + eps).
Tensor normalize_rows(const Tensor& x, double eps);
/// Per-row cosine, n x 1. Throws DomainError on an exactly-zero row.
Tensor row_cosine(const Tensor& x, const Tensor& y);
/// Per-row cosine with 1e-12 added to each norm; never throws on zero rows.
Tensor row_cosine_stable(const Tensor& x, const Tensor& y);

// Layout -------------------------------------------------------------------
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
/// out[i] = x[i, index[i]], n x 1.
Tensor pick(const Tensor& x, std::span<const int> index);

/// Central-difference gradient check of a scalar function at x.
/// Returns the max relative error between the tape gradient and
/// (f(x + eps e_ij) - f(x - eps e_ij)) / (2 eps), with denominator
/// max(|analytic|, |numeric|, 1e-8).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

}  // namespace ebmc::ad
