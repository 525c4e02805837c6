#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lavender/errors.hpp"
#include "lavender/rng.hpp"

namespace lavender {

// Label sentinel: positions carrying this value contribute neither loss nor
// gradient in cross_entropy. Shared by every task builder.
inline constexpr int kIgnoreLabel = -100;

namespace detail {
struct TensorImpl {
  std::vector<size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // same length as data iff requires_grad
  bool requires_grad = false;
};
}  // namespace detail

// Dense f64 tensor, row major. Handles share a payload; copies are cheap and
// alias. Values are immutable by convention once an op has produced them;
// grads are written only by Tape::backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<size_t> shape, double value,
                     bool requires_grad = false);
  static Tensor from(std::vector<size_t> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(std::vector<size_t> shape, Rng& rng, double stddev,
                      bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<size_t>& shape() const { return impl_->shape; }
  size_t numel() const { return impl_->data.size(); }
  size_t rank() const { return impl_->shape.size(); }
  // 2-D accessors; throw DimensionError on other ranks.
  size_t rows() const;
  size_t cols() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);

  // A Tensor is a shared handle: const applies to the handle, not the
  // payload, mirroring shared_ptr semantics. Ops rely on this to accumulate
  // gradients through handles captured in backward closures.
  std::span<double> values() const { return impl_->data; }
  std::span<double> grad() const;
  void zero_grad() const;

  double item() const;  // scalar payloads only
  double at(size_t r, size_t c) const { return impl_->data[r * cols() + c]; }

  Tensor clone(bool requires_grad) const;  // deep copy of values
  bool same_payload(const Tensor& other) const { return impl_ == other.impl_; }

  std::string shape_str() const;

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Backward program: one record per forward op, pushed in execution order so
// the list is a topological order of the graph. backward() replays it exactly
// once in reverse, accumulating into leaf grads additively.
class Tape {
 public:
  void record(const char* op, std::function<void()> fn);
  void backward(const Tensor& loss);
  size_t size() const { return records_.size(); }

 private:
  struct Record {
    const char* op;
    std::function<void()> fn;
  };
  std::vector<Record> records_;
};

// Ops. `tape` may be null for inference-only forward passes; gradients are
// then neither tracked nor required.
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);
// a · bᵀ, i.e. matmul(a, transpose(b)) without materializing the transpose.
Tensor matmul_bt(Tape* tape, const Tensor& a, const Tensor& b);
// add/mul broadcast: shapes are aligned at the trailing dimension and an
// extent may be 1 (or missing) on one side where the other has k.
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, double s);
// tanh approximation: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))). Finite
// difference oracles in the tests match this exact form.
Tensor gelu(Tape* tape, const Tensor& x);
// Inverted dropout; p = 0 is an exact identity passthrough (the default used
// everywhere, keeping training deterministic).
Tensor dropout(Tape* tape, const Tensor& x, double p, Rng* rng);
Tensor softmax(Tape* tape, const Tensor& x, size_t axis);
// Row-wise softmax over positions where allow[i*cols+j] != 0; disallowed
// entries are exact zeros and are never read. A row with nothing allowed
// yields an all-zero row (used for padded query positions).
Tensor masked_softmax_rows(Tape* tape, const Tensor& scores,
                           std::span<const uint8_t> allow);
Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps);
// Mean negative log-softmax over rows whose label != kIgnoreLabel; 0 with
// zero gradient when all rows are ignored.
Tensor cross_entropy(Tape* tape, const Tensor& logits,
                     std::span<const int> labels);
Tensor embedding(Tape* tape, const Tensor& table, std::span<const int> ids);
Tensor gather_rows(Tape* tape, const Tensor& x, std::span<const size_t> idx);
Tensor concat_rows(Tape* tape, std::span<const Tensor> parts);
Tensor slice_cols(Tape* tape, const Tensor& x, size_t begin, size_t end);
Tensor concat_cols(Tape* tape, std::span<const Tensor> parts);
Tensor sum(Tape* tape, const Tensor& x);

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  size_t checked = 0;
};

// Compares tape gradients of a scalar-valued function against central finite
// differences, coordinate by coordinate. rel_err = |a−b| / max(|a|,|b|,1e-8).
GradCheckReport grad_check(
    const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x,
    double eps = 1e-5, double tol = 1e-4);

}  // namespace lavender
