#include "ebmc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include <Eigen/Core>

#include "ebmc/errors.hpp"

namespace ebmc::ad {

namespace {
constexpr std::size_t kDetached = static_cast<std::size_t>(-1);
constexpr double kCosineEps = 1e-12;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<RowMajor> as_matrix(double* p, std::size_t r, std::size_t c) {
  return {p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}
Eigen::Map<const RowMajor> as_matrix(const double* p, std::size_t r, std::size_t c) {
  return {p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}
}  // namespace

struct TapeState {
  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> inputs;  // kDetached for inputs off the tape
    BackwardFn fn;                    // empty for leaves
  };
  std::vector<Node> nodes;
  std::vector<std::vector<double>> grads;

  // Reverse sweep from `root` into `grads_out`; each node visited once.
  void sweep(std::size_t root, std::vector<std::vector<double>>& grads_out) const {
    if (grads_out.size() < nodes.size()) grads_out.resize(nodes.size());
    auto& seed = grads_out[root];
    if (seed.empty()) seed.assign(nodes[root].rows * nodes[root].cols, 0.0);
    seed[0] += 1.0;
    std::vector<double*> slots;
    for (std::size_t i = root + 1; i-- > 0;) {
      const Node& node = nodes[i];
      if (!node.fn || grads_out[i].empty()) continue;
      slots.assign(node.inputs.size(), nullptr);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const std::size_t in = node.inputs[k];
        if (in == kDetached) continue;
        auto& g = grads_out[in];
        if (g.empty()) g.assign(nodes[in].rows * nodes[in].cols, 0.0);
        slots[k] = g.data();
      }
      node.fn(grads_out[i], slots);
    }
  }
};

// Tensor ---------------------------------------------------------------------

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    std::ostringstream os;
    os << "tensor data length " << data_.size() << " does not match shape " << rows << "x" << cols;
    throw DimensionError(os.str());
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged row list in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor(1, 1, value); }

std::span<double> Tensor::mutable_data() {
  if (tape_) throw ContractError("cannot mutate a tensor recorded on a tape");
  return data_;
}

double Tensor::item() const {
  if (!is_scalar()) throw DimensionError("item() on non-scalar tensor " + shape_string());
  return data_[0];
}

std::optional<std::size_t> Tensor::node_id() const {
  if (!tape_) return std::nullopt;
  return node_;
}

std::optional<Tensor> Tensor::grad() const {
  if (!tape_) return std::nullopt;
  const auto& g = tape_->grads.size() > node_ ? tape_->grads[node_] : std::vector<double>{};
  if (g.empty()) return Tensor(rows_, cols_, 0.0);
  return Tensor(rows_, cols_, g);
}

Tensor Tensor::detach() const { return Tensor(rows_, cols_, data_); }

std::string Tensor::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

// Recording ------------------------------------------------------------------

Tensor record_op(Tensor out, std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  std::shared_ptr<TapeState> tape;
  for (const Tensor* in : inputs) {
    if (!in->tape_) continue;
    if (tape && tape != in->tape_) throw ContractError("operands belong to different tapes");
    tape = in->tape_;
  }
  if (!tape) return out;
  TapeState::Node node;
  node.rows = out.rows_;
  node.cols = out.cols_;
  node.inputs.reserve(inputs.size());
  for (const Tensor* in : inputs) node.inputs.push_back(in->tape_ ? in->node_ : kDetached);
  node.fn = std::move(fn);
  tape->nodes.push_back(std::move(node));
  out.tape_ = tape;
  out.node_ = tape->nodes.size() - 1;
  return out;
}

Tape::Tape() : state_(std::make_shared<TapeState>()) {}

Tensor Tape::variable(const Tensor& value) {
  Tensor t(value.rows(), value.cols(), std::vector<double>(value.data().begin(), value.data().end()));
  TapeState::Node node;
  node.rows = t.rows_;
  node.cols = t.cols_;
  state_->nodes.push_back(std::move(node));
  t.tape_ = state_;
  t.node_ = state_->nodes.size() - 1;
  return t;
}

std::size_t Tape::size() const { return state_->nodes.size(); }

void Tape::backward(const Tensor& loss) {
  if (loss.tape_ != state_) throw ContractError("backward: loss is not recorded on this tape");
  if (!loss.is_scalar()) throw ContractError("backward: loss must be scalar, got " + loss.shape_string());
  state_->sweep(loss.node_, state_->grads);
}

void Tape::zero_grad() { state_->grads.clear(); }

Tensor Tape::gradient_of(const Tensor& loss, const Tensor& x) const {
  if (loss.tape_ != state_) throw ContractError("gradient_of: loss is not recorded on this tape");
  return grad_of_scalar_wrt(x, loss);
}

void backward(const Tensor& loss) {
  if (!loss.tape_) throw ContractError("backward: loss is not on a tape");
  if (!loss.is_scalar()) throw ContractError("backward: loss must be scalar, got " + loss.shape_string());
  loss.tape_->sweep(loss.node_, loss.tape_->grads);
}

Tensor grad_of_scalar_wrt(const Tensor& x, const Tensor& loss) {
  if (!loss.tape_ || !loss.is_scalar()) throw ContractError("grad_of_scalar_wrt: loss must be a scalar on a tape");
  if (x.tape_ != loss.tape_) throw ContractError("grad_of_scalar_wrt: x does not participate in the loss's tape");
  if (x.node_ > loss.node_) return Tensor(x.rows(), x.cols(), 0.0);
  std::vector<std::vector<double>> scratch;
  loss.tape_->sweep(loss.node_, scratch);
  if (scratch[x.node_].empty()) return Tensor(x.rows(), x.cols(), 0.0);
  return Tensor(x.rows(), x.cols(), std::move(scratch[x.node_]));
}

// Helpers ----------------------------------------------------------------------

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

std::vector<double> copy_of(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

template <typename F, typename D>
Tensor unary(const Tensor& a, F value, D derivative) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = value(a.data()[i]);
  Tensor result(a.rows(), a.cols(), out);
  if (!a.on_tape()) return result;
  std::vector<double> x = copy_of(a);
  return record_op(std::move(result), {&a},
                   [x = std::move(x), y = std::move(out), derivative](std::span<const double> g,
                                                                       std::span<double* const> in) {
                     for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i] * derivative(x[i], y[i]);
                   });
}

}  // namespace

// Matrix -----------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + a.shape_string() + " x " + b.shape_string());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  as_matrix(out.data(), m, n).noalias() = as_matrix(a.data().data(), m, k) * as_matrix(b.data().data(), k, n);
  Tensor result(m, n, std::move(out));
  if (!a.on_tape() && !b.on_tape()) return result;
  std::vector<double> av = copy_of(a);
  std::vector<double> bv = copy_of(b);
  return record_op(std::move(result), {&a, &b},
                   [av = std::move(av), bv = std::move(bv), m, k, n](std::span<const double> g,
                                                                     std::span<double* const> in) {
                     const auto G = as_matrix(g.data(), m, n);
                     if (in[0]) as_matrix(in[0], m, k).noalias() += G * as_matrix(bv.data(), k, n).transpose();
                     if (in[1]) as_matrix(in[1], k, n).noalias() += as_matrix(av.data(), m, k).transpose() * G;
                   });
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a(i, j);
  return record_op(Tensor(c, r, std::move(out)), {&a}, [r, c](std::span<const double> g, std::span<double* const> in) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) in[0][i * c + j] += g[j * r + i];
  });
}

// Elementwise ------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return record_op(Tensor(a.rows(), a.cols(), std::move(out)), {&a, &b},
                   [](std::span<const double> g, std::span<double* const> in) {
                     for (int s = 0; s < 2; ++s)
                       if (in[s])
                         for (std::size_t i = 0; i < g.size(); ++i) in[s][i] += g[i];
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return record_op(Tensor(a.rows(), a.cols(), std::move(out)), {&a, &b},
                   [](std::span<const double> g, std::span<double* const> in) {
                     if (in[0])
                       for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i];
                     if (in[1])
                       for (std::size_t i = 0; i < g.size(); ++i) in[1][i] -= g[i];
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor result(a.rows(), a.cols(), std::move(out));
  if (!a.on_tape() && !b.on_tape()) return result;
  return record_op(std::move(result), {&a, &b},
                   [av = copy_of(a), bv = copy_of(b)](std::span<const double> g, std::span<double* const> in) {
                     if (in[0])
                       for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i] * bv[i];
                     if (in[1])
                       for (std::size_t i = 0; i < g.size(); ++i) in[1][i] += g[i] * av[i];
                   });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a.data()[i];
  return record_op(Tensor(a.rows(), a.cols(), std::move(out)), {&a},
                   [c](std::span<const double> g, std::span<double* const> in) {
                     for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += c * g[i];
                   });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
  return record_op(Tensor(a.rows(), a.cols(), std::move(out)), {&a},
                   [](std::span<const double> g, std::span<double* const> in) {
                     for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i];
                   });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a.data()[i] > 0.0)) {
      throw DomainError("log: non-positive entry " + std::to_string(a.data()[i]) + " at (" +
                        std::to_string(i / std::max<std::size_t>(a.cols(), 1)) + ", " +
                        std::to_string(i % std::max<std::size_t>(a.cols(), 1)) + ")");
    }
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor abs(const Tensor& a) {
  return unary(a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

// Broadcasting -----------------------------------------------------------------

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: expected 1x" + std::to_string(a.cols()) + " row, got " + row.shape_string() +
                         " for " + a.shape_string());
  }
  const std::size_t n = a.rows(), k = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = a.data()[i * k + j] + row.data()[j];
  return record_op(Tensor(n, k, std::move(out)), {&a, &row},
                   [n, k](std::span<const double> g, std::span<double* const> in) {
                     if (in[0])
                       for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i];
                     if (in[1])
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < k; ++j) in[1][j] += g[i * k + j];
                   });
}

Tensor scale_rows(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw DimensionError("scale_rows: expected " + std::to_string(a.rows()) + "x1 column, got " +
                         col.shape_string() + " for " + a.shape_string());
  }
  const std::size_t n = a.rows(), k = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = a.data()[i * k + j] * col.data()[i];
  Tensor result(n, k, std::move(out));
  if (!a.on_tape() && !col.on_tape()) return result;
  return record_op(std::move(result), {&a, &col},
                   [av = copy_of(a), cv = copy_of(col), n, k](std::span<const double> g,
                                                             std::span<double* const> in) {
                     for (std::size_t i = 0; i < n; ++i) {
                       double acc = 0.0;
                       for (std::size_t j = 0; j < k; ++j) {
                         if (in[0]) in[0][i * k + j] += g[i * k + j] * cv[i];
                         acc += g[i * k + j] * av[i * k + j];
                       }
                       if (in[1]) in[1][i] += acc;
                     }
                   });
}

// Softmax ----------------------------------------------------------------------

namespace {

void check_softmax_input(const Tensor& x, double temperature, const char* op) {
  if (!(temperature > 0.0)) throw ContractError(std::string(op) + ": temperature must be positive");
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

}  // namespace

Tensor softmax_rows(const Tensor& x, double temperature) {
  check_softmax_input(x, temperature, "softmax_rows");
  const std::size_t n = x.rows(), k = x.cols();
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data().data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (p[i * k + j] = std::exp((row[j] - mx) / temperature));
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] /= z;
  }
  Tensor result(n, k, p);
  if (!x.on_tape()) return result;
  // dp(y)/ds(y') = p(y) (1{y=y'} - p(y')), chained through s = x / temperature.
  return record_op(std::move(result), {&x},
                   [p = std::move(p), n, k, temperature](std::span<const double> g, std::span<double* const> in) {
                     for (std::size_t i = 0; i < n; ++i) {
                       double dot = 0.0;
                       for (std::size_t j = 0; j < k; ++j) dot += g[i * k + j] * p[i * k + j];
                       for (std::size_t j = 0; j < k; ++j)
                         in[0][i * k + j] += p[i * k + j] * (g[i * k + j] - dot) / temperature;
                     }
                   });
}

Tensor log_softmax_rows(const Tensor& x, double temperature) {
  check_softmax_input(x, temperature, "log_softmax_rows");
  const std::size_t n = x.rows(), k = x.cols();
  std::vector<double> out(x.size());
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data().data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp((row[j] - mx) / temperature);
    const double lz = std::log(z);
    for (std::size_t j = 0; j < k; ++j) {
      out[i * k + j] = (row[j] - mx) / temperature - lz;
      p[i * k + j] = std::exp(out[i * k + j]);
    }
  }
  Tensor result(n, k, std::move(out));
  if (!x.on_tape()) return result;
  return record_op(std::move(result), {&x},
                   [p = std::move(p), n, k, temperature](std::span<const double> g, std::span<double* const> in) {
                     for (std::size_t i = 0; i < n; ++i) {
                       double gs = 0.0;
                       for (std::size_t j = 0; j < k; ++j) gs += g[i * k + j];
                       for (std::size_t j = 0; j < k; ++j)
                         in[0][i * k + j] += (g[i * k + j] - p[i * k + j] * gs) / temperature;
                     }
                   });
}

// Reductions -------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t size = x.size();
  return record_op(Tensor::scalar(s), {&x}, [size](std::span<const double> g, std::span<double* const> in) {
    for (std::size_t i = 0; i < size; ++i) in[0][i] += g[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor l2_norm_sq(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  Tensor result = Tensor::scalar(s);
  if (!x.on_tape()) return result;
  return record_op(std::move(result), {&x}, [xv = copy_of(x)](std::span<const double> g, std::span<double* const> in) {
    for (std::size_t i = 0; i < xv.size(); ++i) in[0][i] += 2.0 * xv[i] * g[0];
  });
}

Tensor row_sum(const Tensor& x) {
  const std::size_t n = x.rows(), k = x.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i] += x.data()[i * k + j];
  return record_op(Tensor(n, 1, std::move(out)), {&x}, [n, k](std::span<const double> g, std::span<double* const> in) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) in[0][i * k + j] += g[i];
  });
}

Tensor normalize_rows(const Tensor& x, double eps) {
  const std::size_t n = x.rows(), k = x.cols();
  std::vector<double> norms(n, 0.0);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < k; ++j) ss += x.data()[i * k + j] * x.data()[i * k + j];
    norms[i] = std::sqrt(ss);
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = x.data()[i * k + j] / (norms[i] + eps);
  }
  Tensor result(n, k, std::move(out));
  if (!x.on_tape()) return result;
  // y = x / s with s = r + eps, r = ||x||: dx = g / s - x (g . x) / (s^2 r).
  return record_op(std::move(result), {&x},
                   [xv = copy_of(x), norms = std::move(norms), n, k, eps](std::span<const double> g,
                                                                          std::span<double* const> in) {
                     for (std::size_t i = 0; i < n; ++i) {
                       const double r = norms[i];
                       const double s = r + eps;
                       double gx = 0.0;
                       for (std::size_t j = 0; j < k; ++j) gx += g[i * k + j] * xv[i * k + j];
                       const double coeff = r > 0.0 ? gx / (s * s * r) : 0.0;
                       for (std::size_t j = 0; j < k; ++j) in[0][i * k + j] += g[i * k + j] / s - xv[i * k + j] * coeff;
                     }
                   });
}

Tensor row_cosine_stable(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "row_cosine");
  return row_sum(mul(normalize_rows(x, kCosineEps), normalize_rows(y, kCosineEps)));
}

Tensor row_cosine(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "row_cosine");
  for (const Tensor* t : {&x, &y}) {
    for (std::size_t i = 0; i < t->rows(); ++i) {
      bool zero = true;
      for (std::size_t j = 0; j < t->cols() && zero; ++j) zero = (*t)(i, j) == 0.0;
      if (zero) throw DomainError("row_cosine: zero-norm row " + std::to_string(i));
    }
  }
  return row_cosine_stable(x, y);
}

// Layout -----------------------------------------------------------------------

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    if (p.rows() != n) {
      throw DimensionError("concat_cols: row mismatch " + parts[0].shape_string() + " vs " + p.shape_string());
    }
    offsets.push_back(total);
    total += p.cols();
  }
  std::vector<double> out(n * total);
  for (std::size_t t = 0; t < parts.size(); ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < parts[t].cols(); ++j) out[i * total + offsets[t] + j] = parts[t](i, j);
  Tensor result(n, total, std::move(out));

  // record_op takes a fixed initializer list, so chain through a binary join
  // when more than one part is on a tape.
  bool any = false;
  for (const Tensor& p : parts) any = any || p.on_tape();
  if (!any) return result;

  Tensor acc = parts[0];
  std::size_t acc_cols = parts[0].cols();
  for (std::size_t t = 1; t < parts.size(); ++t) {
    const Tensor& next = parts[t];
    const std::size_t left = acc_cols, right = next.cols(), width = left + right;
    std::vector<double> joined(n * width);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < left; ++j) joined[i * width + j] = acc(i, j);
      for (std::size_t j = 0; j < right; ++j) joined[i * width + left + j] = next(i, j);
    }
    acc = record_op(Tensor(n, width, std::move(joined)), {&acc, &next},
                    [n, left, right, width](std::span<const double> g, std::span<double* const> in) {
                      for (std::size_t i = 0; i < n; ++i) {
                        if (in[0])
                          for (std::size_t j = 0; j < left; ++j) in[0][i * left + j] += g[i * width + j];
                        if (in[1])
                          for (std::size_t j = 0; j < right; ++j) in[1][i * right + j] += g[i * width + left + j];
                      }
                    });
    acc_cols = width;
  }
  return acc;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  const std::size_t k = parts[0].cols();
  Tensor acc = parts[0];
  for (std::size_t t = 1; t < parts.size(); ++t) {
    const Tensor& next = parts[t];
    if (next.cols() != k) {
      throw DimensionError("concat_rows: column mismatch " + parts[0].shape_string() + " vs " + next.shape_string());
    }
    std::vector<double> joined(acc.data().begin(), acc.data().end());
    joined.insert(joined.end(), next.data().begin(), next.data().end());
    const std::size_t top = acc.size(), bottom = next.size();
    acc = record_op(Tensor(acc.rows() + next.rows(), k, std::move(joined)), {&acc, &next},
                    [top, bottom](std::span<const double> g, std::span<double* const> in) {
                      if (in[0])
                        for (std::size_t i = 0; i < top; ++i) in[0][i] += g[i];
                      if (in[1])
                        for (std::size_t i = 0; i < bottom; ++i) in[1][i] += g[top + i];
                    });
  }
  return acc;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + x.shape_string());
  }
  const std::size_t n = x.rows(), k = x.cols();
  std::vector<double> out(n * count);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x(i, begin + j);
  return record_op(Tensor(n, count, std::move(out)), {&x},
                   [n, k, begin, count](std::span<const double> g, std::span<double* const> in) {
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < count; ++j) in[0][i * k + begin + j] += g[i * count + j];
                   });
}

Tensor pick(const Tensor& x, std::span<const int> index) {
  if (index.size() != x.rows()) {
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " + x.shape_string());
  }
  const std::size_t n = x.rows(), k = x.cols();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= k) {
      throw ContractError("pick: index " + std::to_string(index[i]) + " out of range at row " + std::to_string(i));
    }
    out[i] = x(i, static_cast<std::size_t>(index[i]));
  }
  std::vector<int> idx(index.begin(), index.end());
  return record_op(Tensor(n, 1, std::move(out)), {&x},
                   [idx = std::move(idx), k](std::span<const double> g, std::span<double* const> in) {
                     for (std::size_t i = 0; i < idx.size(); ++i) in[0][i * k + static_cast<std::size_t>(idx[i])] += g[i];
                   });
}

// Gradient check ---------------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ContractError("grad_check: eps must lie in [1e-7, 1e-3]");
  Tape tape;
  Tensor xv = tape.variable(x);
  Tensor loss = f(xv);
  if (!loss.is_scalar()) throw ContractError("grad_check: function must return a scalar");
  double worst = 0.0;
  if (!loss.on_tape()) {
    // Loss independent of x: analytic gradient is zero everywhere.
  } else {
    tape.backward(loss);
  }
  const Tensor analytic = xv.grad().value();
  Tensor probe = x.detach();
  auto values = probe.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = f(probe).item();
    values[i] = saved - eps;
    const double down = f(probe).item();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.data()[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace ebmc::ad
