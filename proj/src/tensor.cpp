#include "lavender/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lavender {

namespace {

size_t shape_numel(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (const size_t e : shape) n *= e;
  return n;
}

void check_finite_shape(const std::vector<size_t>& shape) {
  for (const size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive");
  }
}

// Trailing-aligned broadcast of b's shape onto a's (or vice versa).
struct BroadcastPlan {
  std::vector<size_t> out_shape;
  std::vector<size_t> a_stride;  // per out dim; 0 where a is broadcast
  std::vector<size_t> b_stride;
  size_t out_numel = 0;
};

std::string shape_to_str(const std::vector<size_t>& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

BroadcastPlan plan_broadcast(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const size_t rank = std::max(sa.size(), sb.size());
  BroadcastPlan plan;
  plan.out_shape.resize(rank);
  for (size_t d = 0; d < rank; ++d) {
    const size_t ea = d < rank - sa.size() ? 1 : sa[d - (rank - sa.size())];
    const size_t eb = d < rank - sb.size() ? 1 : sb[d - (rank - sb.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError("incompatible shapes for elementwise op: " +
                           shape_to_str(sa) + " vs " + shape_to_str(sb));
    }
    plan.out_shape[d] = std::max(ea, eb);
  }
  auto strides_for = [&](const std::vector<size_t>& s) {
    std::vector<size_t> own(s.size());
    size_t acc = 1;
    for (size_t d = s.size(); d-- > 0;) {
      own[d] = acc;
      acc *= s[d];
    }
    std::vector<size_t> out(rank, 0);
    for (size_t d = 0; d < rank; ++d) {
      if (d < rank - s.size()) continue;
      const size_t sd = s[d - (rank - s.size())];
      out[d] = (sd == 1 && plan.out_shape[d] > 1) ? 0 : own[d - (rank - s.size())];
    }
    return out;
  };
  plan.a_stride = strides_for(sa);
  plan.b_stride = strides_for(sb);
  plan.out_numel = shape_numel(plan.out_shape);
  return plan;
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <typename Fn>
void for_broadcast(const BroadcastPlan& plan, Fn&& fn) {
  const size_t rank = plan.out_shape.size();
  std::vector<size_t> coord(rank, 0);
  size_t ia = 0, ib = 0;
  for (size_t o = 0; o < plan.out_numel; ++o) {
    fn(o, ia, ib);
    for (size_t d = rank; d-- > 0;) {
      ++coord[d];
      ia += plan.a_stride[d];
      ib += plan.b_stride[d];
      if (coord[d] < plan.out_shape[d]) break;
      ia -= plan.a_stride[d] * plan.out_shape[d];
      ib -= plan.b_stride[d] * plan.out_shape[d];
      coord[d] = 0;
    }
  }
}

bool track(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void require_rank2(const Tensor& t, const char* who) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(who) + " requires a rank-2 tensor, got " +
                         t.shape_str());
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu_forward(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double gelu_backward(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(u);
  const double sech2 = 1.0 - t * t;
  return 0.5 * (1.0 + t) + 0.5 * x * sech2 * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

}  // namespace

Tensor Tensor::zeros(std::vector<size_t> shape, bool requires_grad) {
  check_finite_shape(shape);
  Tensor t;
  t.impl_ = std::make_shared<detail::TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data.assign(shape_numel(t.impl_->shape), 0.0);
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::full(std::vector<size_t> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

Tensor Tensor::from(std::vector<size_t> shape, std::vector<double> values,
                    bool requires_grad) {
  check_finite_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("value count does not match shape extents");
  }
  Tensor t;
  t.impl_ = std::make_shared<detail::TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(values);
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::randn(std::vector<size_t> shape, Rng& rng, double stddev,
                     bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.impl_->data) v = rng.normal(0.0, stddev);
  return t;
}

size_t Tensor::rows() const {
  require_rank2(*this, "rows()");
  return impl_->shape[0];
}

size_t Tensor::cols() const {
  require_rank2(*this, "cols()");
  return impl_->shape[1];
}

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (on) {
    impl_->grad.assign(impl_->data.size(), 0.0);
  } else {
    impl_->grad.clear();
  }
}

std::span<double> Tensor::grad() const {
  if (!impl_->requires_grad) throw Error("tensor does not track gradients");
  return impl_->grad;
}

void Tensor::zero_grad() const {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() requires a scalar tensor, got " + shape_str());
  }
  return impl_->data[0];
}

Tensor Tensor::clone(bool requires_grad) const {
  Tensor t;
  t.impl_ = std::make_shared<detail::TensorImpl>();
  t.impl_->shape = impl_->shape;
  t.impl_->data = impl_->data;
  t.set_requires_grad(requires_grad);
  return t;
}

std::string Tensor::shape_str() const { return shape_to_str(impl_->shape); }

void Tape::record(const char* op, std::function<void()> fn) {
  records_.push_back({op, std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw Error("backward requires a scalar loss, got " + loss.shape_str());
  }
  if (loss.requires_grad()) {
    loss.grad()[0] += 1.0;
  }
  for (size_t i = records_.size(); i-- > 0;) {
    records_[i].fn();
  }
}

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const size_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2) {
    throw DimensionError("matmul inner extents differ: " + a.shape_str() +
                         " vs " + b.shape_str());
  }
  const bool rg = track(tape, {&a, &b});
  Tensor out = Tensor::zeros({m, n}, rg);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out.values().data();
  for (size_t i = 0; i < m; ++i) {
    for (size_t kk = 0; kk < k; ++kk) {
      const double aik = pa[i * k + kk];
      if (aik == 0.0) continue;
      const double* brow = pb + kk * n;
      double* orow = po + i * n;
      for (size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  if (rg) {
    tape->record("matmul", [a, b, out, m, k, n]() mutable {
      const double* pd = out.grad().data();
      if (a.requires_grad()) {
        double* da = a.grad().data();
        const double* pb2 = b.values().data();
        for (size_t i = 0; i < m; ++i) {
          for (size_t kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            const double* drow = pd + i * n;
            const double* brow = pb2 + kk * n;
            for (size_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
            da[i * k + kk] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        double* db = b.grad().data();
        const double* pa2 = a.values().data();
        for (size_t i = 0; i < m; ++i) {
          const double* drow = pd + i * n;
          for (size_t kk = 0; kk < k; ++kk) {
            const double aik = pa2[i * k + kk];
            if (aik == 0.0) continue;
            double* brow = db + kk * n;
            for (size_t j = 0; j < n; ++j) brow[j] += aik * drow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor matmul_bt(Tape* tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_bt");
  require_rank2(b, "matmul_bt");
  const size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (k != b.cols()) {
    throw DimensionError("matmul_bt inner extents differ: " + a.shape_str() +
                         " vs " + b.shape_str());
  }
  const bool rg = track(tape, {&a, &b});
  Tensor out = Tensor::zeros({m, n}, rg);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out.values().data();
  for (size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      po[i * n + j] = acc;
    }
  }
  if (rg) {
    tape->record("matmul_bt", [a, b, out, m, k, n]() mutable {
      const double* pd = out.grad().data();
      if (a.requires_grad()) {
        double* da = a.grad().data();
        const double* pb2 = b.values().data();
        for (size_t i = 0; i < m; ++i) {
          for (size_t j = 0; j < n; ++j) {
            const double d = pd[i * n + j];
            if (d == 0.0) continue;
            const double* brow = pb2 + j * k;
            double* arow = da + i * k;
            for (size_t kk = 0; kk < k; ++kk) arow[kk] += d * brow[kk];
          }
        }
      }
      if (b.requires_grad()) {
        double* db = b.grad().data();
        const double* pa2 = a.values().data();
        for (size_t i = 0; i < m; ++i) {
          const double* arow = pa2 + i * k;
          for (size_t j = 0; j < n; ++j) {
            const double d = pd[i * n + j];
            if (d == 0.0) continue;
            double* brow = db + j * k;
            for (size_t kk = 0; kk < k; ++kk) brow[kk] += d * arow[kk];
          }
        }
      }
    });
  }
  return out;
}

namespace {

enum class BinKind { Add, Mul };

Tensor binary_op(Tape* tape, const Tensor& a, const Tensor& b, BinKind kind) {
  const BroadcastPlan plan = plan_broadcast(a, b);
  const bool rg = track(tape, {&a, &b});
  Tensor out = Tensor::zeros(plan.out_shape, rg);
  double* po = out.values().data();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  if (kind == BinKind::Add) {
    for_broadcast(plan, [&](size_t o, size_t ia, size_t ib) {
      po[o] = pa[ia] + pb[ib];
    });
  } else {
    for_broadcast(plan, [&](size_t o, size_t ia, size_t ib) {
      po[o] = pa[ia] * pb[ib];
    });
  }
  if (rg) {
    const char* name = kind == BinKind::Add ? "add" : "mul";
    tape->record(name, [a, b, out, plan, kind]() mutable {
      const double* pd = out.grad().data();
      double* da = a.requires_grad() ? a.grad().data() : nullptr;
      double* db = b.requires_grad() ? b.grad().data() : nullptr;
      const double* pa2 = a.values().data();
      const double* pb2 = b.values().data();
      for_broadcast(plan, [&](size_t o, size_t ia, size_t ib) {
        if (kind == BinKind::Add) {
          if (da) da[ia] += pd[o];
          if (db) db[ib] += pd[o];
        } else {
          if (da) da[ia] += pd[o] * pb2[ib];
          if (db) db[ib] += pd[o] * pa2[ia];
        }
      });
    });
  }
  return out;
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  return binary_op(tape, a, b, BinKind::Add);
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  return binary_op(tape, a, b, BinKind::Mul);
}

Tensor scale(Tape* tape, const Tensor& a, double s) {
  const bool rg = track(tape, {&a});
  Tensor out = Tensor::zeros(a.shape(), rg);
  const double* pa = a.values().data();
  double* po = out.values().data();
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) po[i] = pa[i] * s;
  if (rg) {
    tape->record("scale", [a, out, s, n]() mutable {
      const double* pd = out.grad().data();
      double* da = a.grad().data();
      for (size_t i = 0; i < n; ++i) da[i] += pd[i] * s;
    });
  }
  return out;
}

Tensor gelu(Tape* tape, const Tensor& x) {
  const bool rg = track(tape, {&x});
  Tensor out = Tensor::zeros(x.shape(), rg);
  const double* px = x.values().data();
  double* po = out.values().data();
  const size_t n = x.numel();
  for (size_t i = 0; i < n; ++i) po[i] = gelu_forward(px[i]);
  if (rg) {
    tape->record("gelu", [x, out, n]() mutable {
      const double* pd = out.grad().data();
      const double* px2 = x.values().data();
      double* dx = x.grad().data();
      for (size_t i = 0; i < n; ++i) dx[i] += pd[i] * gelu_backward(px2[i]);
    });
  }
  return out;
}

Tensor dropout(Tape* tape, const Tensor& x, double p, Rng* rng) {
  if (p < 0.0 || p >= 1.0) {
    throw ConfigError("dropout probability must be in [0, 1)");
  }
  if (p == 0.0) return x;
  if (!rng) throw ConfigError("dropout with p > 0 needs an rng");
  const bool rg = track(tape, {&x});
  Tensor out = Tensor::zeros(x.shape(), rg);
  const size_t n = x.numel();
  auto mask = std::make_shared<std::vector<double>>(n, 0.0);
  const double keep_scale = 1.0 / (1.0 - p);
  const double* px = x.values().data();
  double* po = out.values().data();
  for (size_t i = 0; i < n; ++i) {
    const double m = rng->bernoulli(p) ? 0.0 : keep_scale;
    (*mask)[i] = m;
    po[i] = px[i] * m;
  }
  if (rg) {
    tape->record("dropout", [x, out, mask, n]() mutable {
      const double* pd = out.grad().data();
      double* dx = x.grad().data();
      for (size_t i = 0; i < n; ++i) dx[i] += pd[i] * (*mask)[i];
    });
  }
  return out;
}

Tensor softmax(Tape* tape, const Tensor& x, size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax axis out of range for " + x.shape_str());
  }
  const auto& shape = x.shape();
  size_t outer = 1, inner = 1;
  for (size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const size_t n = shape[axis];
  const bool rg = track(tape, {&x});
  Tensor out = Tensor::zeros(shape, rg);
  const double* px = x.values().data();
  double* po = out.values().data();
  for (size_t o = 0; o < outer; ++o) {
    for (size_t in = 0; in < inner; ++in) {
      const size_t base = o * n * inner + in;
      double mx = px[base];
      for (size_t i = 1; i < n; ++i) mx = std::max(mx, px[base + i * inner]);
      double z = 0.0;
      for (size_t i = 0; i < n; ++i) {
        const double e = std::exp(px[base + i * inner] - mx);
        po[base + i * inner] = e;
        z += e;
      }
      for (size_t i = 0; i < n; ++i) po[base + i * inner] /= z;
    }
  }
  if (rg) {
    tape->record("softmax", [x, out, outer, inner, n]() mutable {
      const double* py = out.values().data();
      const double* pd = out.grad().data();
      double* dx = x.grad().data();
      for (size_t o = 0; o < outer; ++o) {
        for (size_t in = 0; in < inner; ++in) {
          const size_t base = o * n * inner + in;
          double dot = 0.0;
          for (size_t i = 0; i < n; ++i) {
            dot += py[base + i * inner] * pd[base + i * inner];
          }
          for (size_t i = 0; i < n; ++i) {
            const size_t at = base + i * inner;
            dx[at] += py[at] * (pd[at] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor masked_softmax_rows(Tape* tape, const Tensor& scores,
                           std::span<const uint8_t> allow) {
  require_rank2(scores, "masked_softmax_rows");
  if (allow.size() != scores.numel()) {
    throw DimensionError("allow mask size does not match scores");
  }
  const size_t r = scores.rows(), c = scores.cols();
  const bool rg = track(tape, {&scores});
  Tensor out = Tensor::zeros({r, c}, rg);
  const double* px = scores.values().data();
  double* po = out.values().data();
  for (size_t i = 0; i < r; ++i) {
    const uint8_t* arow = allow.data() + i * c;
    double mx = 0.0;
    bool any = false;
    for (size_t j = 0; j < c; ++j) {
      if (!arow[j]) continue;
      mx = any ? std::max(mx, px[i * c + j]) : px[i * c + j];
      any = true;
    }
    if (!any) continue;  // row stays all-zero
    double z = 0.0;
    for (size_t j = 0; j < c; ++j) {
      if (!arow[j]) continue;
      const double e = std::exp(px[i * c + j] - mx);
      po[i * c + j] = e;
      z += e;
    }
    for (size_t j = 0; j < c; ++j) {
      if (arow[j]) po[i * c + j] /= z;
    }
  }
  if (rg) {
    auto mask = std::make_shared<std::vector<uint8_t>>(allow.begin(), allow.end());
    tape->record("masked_softmax", [scores, out, mask, r, c]() mutable {
      const double* py = out.values().data();
      const double* pd = out.grad().data();
      double* dx = scores.grad().data();
      for (size_t i = 0; i < r; ++i) {
        const uint8_t* arow = mask->data() + i * c;
        double dot = 0.0;
        for (size_t j = 0; j < c; ++j) {
          if (arow[j]) dot += py[i * c + j] * pd[i * c + j];
        }
        for (size_t j = 0; j < c; ++j) {
          if (!arow[j]) continue;
          const size_t at = i * c + j;
          dx[at] += py[at] * (pd[at] - dot);
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm needs rank >= 1");
  const size_t width = x.shape().back();
  if (gain.numel() != width || bias.numel() != width) {
    throw DimensionError("layer_norm gain/bias length must equal last extent");
  }
  const size_t rows = x.numel() / width;
  const bool rg = track(tape, {&x, &gain, &bias});
  Tensor out = Tensor::zeros(x.shape(), rg);
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv = std::make_shared<std::vector<double>>(rows);
  const double* px = x.values().data();
  const double* pg = gain.values().data();
  const double* pb = bias.values().data();
  double* po = out.values().data();
  for (size_t rI = 0; rI < rows; ++rI) {
    const double* row = px + rI * width;
    double mu = 0.0;
    for (size_t j = 0; j < width; ++j) mu += row[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (size_t j = 0; j < width; ++j) {
      const double d = row[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(width);
    const double iv = 1.0 / std::sqrt(var + eps);
    (*inv)[rI] = iv;
    for (size_t j = 0; j < width; ++j) {
      const double xh = (row[j] - mu) * iv;
      (*xhat)[rI * width + j] = xh;
      po[rI * width + j] = pg[j] * xh + pb[j];
    }
  }
  if (rg) {
    tape->record("layer_norm", [x, gain, bias, out, xhat, inv, rows, width]() mutable {
      const double* pd = out.grad().data();
      const double* pg2 = gain.values().data();
      double* dg = gain.requires_grad() ? gain.grad().data() : nullptr;
      double* db = bias.requires_grad() ? bias.grad().data() : nullptr;
      double* dx = x.requires_grad() ? x.grad().data() : nullptr;
      for (size_t rI = 0; rI < rows; ++rI) {
        const double* drow = pd + rI * width;
        const double* xh = xhat->data() + rI * width;
        if (dg || db) {
          for (size_t j = 0; j < width; ++j) {
            if (dg) dg[j] += drow[j] * xh[j];
            if (db) db[j] += drow[j];
          }
        }
        if (dx) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (size_t j = 0; j < width; ++j) {
            const double dxh = drow[j] * pg2[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[j];
          }
          mean_dxhat /= static_cast<double>(width);
          mean_dxhat_xhat /= static_cast<double>(width);
          const double iv = (*inv)[rI];
          for (size_t j = 0; j < width; ++j) {
            const double dxh = drow[j] * pg2[j];
            dx[rI * width + j] +=
                iv * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy(Tape* tape, const Tensor& logits,
                     std::span<const int> labels) {
  require_rank2(logits, "cross_entropy");
  const size_t p = logits.rows(), v = logits.cols();
  if (labels.size() != p) {
    throw DimensionError("cross_entropy needs one label per logit row");
  }
  for (const int lab : labels) {
    if (lab == kIgnoreLabel) continue;
    if (lab < 0 || static_cast<size_t>(lab) >= v) {
      throw InputError("cross_entropy label " + std::to_string(lab) +
                       " outside [0, " + std::to_string(v) + ")");
    }
  }
  const bool rg = track(tape, {&logits});
  size_t labeled = 0;
  double total = 0.0;
  // Softmax rows saved for labeled positions only.
  auto probs = std::make_shared<std::vector<double>>();
  auto rows_used = std::make_shared<std::vector<size_t>>();
  const double* px = logits.values().data();
  for (size_t i = 0; i < p; ++i) {
    if (labels[i] == kIgnoreLabel) continue;
    const double* row = px + i * v;
    double mx = row[0];
    for (size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[static_cast<size_t>(labels[i])];
    if (rg) {
      rows_used->push_back(i);
      for (size_t j = 0; j < v; ++j) {
        probs->push_back(std::exp(row[j] - mx) / z);
      }
    }
    ++labeled;
  }
  const double loss = labeled ? total / static_cast<double>(labeled) : 0.0;
  Tensor out = Tensor::scalar(loss, rg);
  if (rg && labeled) {
    std::vector<int> labs(labels.begin(), labels.end());
    tape->record("cross_entropy",
                 [logits, out, probs, rows_used, labs, v, labeled]() mutable {
      const double dl = out.grad()[0] / static_cast<double>(labeled);
      double* dx = logits.grad().data();
      for (size_t k = 0; k < rows_used->size(); ++k) {
        const size_t i = (*rows_used)[k];
        const double* prow = probs->data() + k * v;
        double* drow = dx + i * v;
        const size_t lab = static_cast<size_t>(labs[i]);
        for (size_t j = 0; j < v; ++j) {
          drow[j] += dl * (prow[j] - (j == lab ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

Tensor embedding(Tape* tape, const Tensor& table, std::span<const int> ids) {
  require_rank2(table, "embedding");
  const size_t v = table.rows(), d = table.cols();
  for (const int id : ids) {
    if (id < 0 || static_cast<size_t>(id) >= v) {
      throw InputError("embedding id " + std::to_string(id) + " outside [0, " +
                       std::to_string(v) + ")");
    }
  }
  const bool rg = track(tape, {&table});
  Tensor out = Tensor::zeros({ids.size(), d}, rg);
  const double* pt = table.values().data();
  double* po = out.values().data();
  for (size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(pt + static_cast<size_t>(ids[i]) * d, d, po + i * d);
  }
  if (rg) {
    std::vector<int> idv(ids.begin(), ids.end());
    tape->record("embedding", [table, out, idv, d]() mutable {
      const double* pd = out.grad().data();
      double* dt = table.grad().data();
      for (size_t i = 0; i < idv.size(); ++i) {
        double* trow = dt + static_cast<size_t>(idv[i]) * d;
        const double* drow = pd + i * d;
        for (size_t j = 0; j < d; ++j) trow[j] += drow[j];
      }
    });
  }
  return out;
}

Tensor gather_rows(Tape* tape, const Tensor& x, std::span<const size_t> idx) {
  require_rank2(x, "gather_rows");
  const size_t r = x.rows(), c = x.cols();
  for (const size_t i : idx) {
    if (i >= r) throw DimensionError("gather_rows index out of range");
  }
  const bool rg = track(tape, {&x});
  Tensor out = Tensor::zeros({idx.size(), c}, rg);
  const double* px = x.values().data();
  double* po = out.values().data();
  for (size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(px + idx[i] * c, c, po + i * c);
  }
  if (rg) {
    std::vector<size_t> iv(idx.begin(), idx.end());
    tape->record("gather_rows", [x, out, iv, c]() mutable {
      const double* pd = out.grad().data();
      double* dx = x.grad().data();
      for (size_t i = 0; i < iv.size(); ++i) {
        double* xrow = dx + iv[i] * c;
        const double* drow = pd + i * c;
        for (size_t j = 0; j < c; ++j) xrow[j] += drow[j];
      }
    });
  }
  return out;
}

Tensor concat_rows(Tape* tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows needs >= 1 part");
  const size_t c = parts[0].cols();
  size_t total = 0;
  bool rg = false;
  for (const Tensor& t : parts) {
    if (t.cols() != c) {
      throw DimensionError("concat_rows column mismatch: " + t.shape_str());
    }
    total += t.rows();
    rg = rg || (tape && t.requires_grad());
  }
  Tensor out = Tensor::zeros({total, c}, rg);
  double* po = out.values().data();
  size_t at = 0;
  for (const Tensor& t : parts) {
    std::copy_n(t.values().data(), t.numel(), po + at);
    at += t.numel();
  }
  if (rg) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    tape->record("concat_rows", [held, out]() mutable {
      const double* pd = out.grad().data();
      size_t at2 = 0;
      for (Tensor& t : held) {
        if (t.requires_grad()) {
          double* dt = t.grad().data();
          for (size_t i = 0; i < t.numel(); ++i) dt[i] += pd[at2 + i];
        }
        at2 += t.numel();
      }
    });
  }
  return out;
}

Tensor slice_cols(Tape* tape, const Tensor& x, size_t begin, size_t end) {
  require_rank2(x, "slice_cols");
  const size_t r = x.rows(), c = x.cols();
  if (begin >= end || end > c) throw DimensionError("slice_cols range invalid");
  const size_t w = end - begin;
  const bool rg = track(tape, {&x});
  Tensor out = Tensor::zeros({r, w}, rg);
  const double* px = x.values().data();
  double* po = out.values().data();
  for (size_t i = 0; i < r; ++i) {
    std::copy_n(px + i * c + begin, w, po + i * w);
  }
  if (rg) {
    tape->record("slice_cols", [x, out, begin, r, c, w]() mutable {
      const double* pd = out.grad().data();
      double* dx = x.grad().data();
      for (size_t i = 0; i < r; ++i) {
        for (size_t j = 0; j < w; ++j) dx[i * c + begin + j] += pd[i * w + j];
      }
    });
  }
  return out;
}

Tensor concat_cols(Tape* tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols needs >= 1 part");
  const size_t r = parts[0].rows();
  size_t total = 0;
  bool rg = false;
  for (const Tensor& t : parts) {
    if (t.rows() != r) {
      throw DimensionError("concat_cols row mismatch: " + t.shape_str());
    }
    total += t.cols();
    rg = rg || (tape && t.requires_grad());
  }
  Tensor out = Tensor::zeros({r, total}, rg);
  double* po = out.values().data();
  size_t at = 0;
  for (const Tensor& t : parts) {
    const size_t w = t.cols();
    const double* pt = t.values().data();
    for (size_t i = 0; i < r; ++i) {
      std::copy_n(pt + i * w, w, po + i * total + at);
    }
    at += w;
  }
  if (rg) {
    std::vector<Tensor> held(parts.begin(), parts.end());
    tape->record("concat_cols", [held, out, r, total]() mutable {
      const double* pd = out.grad().data();
      size_t at2 = 0;
      for (Tensor& t : held) {
        const size_t w = t.cols();
        if (t.requires_grad()) {
          double* dt = t.grad().data();
          for (size_t i = 0; i < r; ++i) {
            for (size_t j = 0; j < w; ++j) {
              dt[i * w + j] += pd[i * total + at2 + j];
            }
          }
        }
        at2 += w;
      }
    });
  }
  return out;
}

Tensor sum(Tape* tape, const Tensor& x) {
  const bool rg = track(tape, {&x});
  double acc = 0.0;
  for (const double v : x.values()) acc += v;
  Tensor out = Tensor::scalar(acc, rg);
  if (rg) {
    tape->record("sum", [x, out]() mutable {
      const double d = out.grad()[0];
      double* dx = x.grad().data();
      for (size_t i = 0; i < x.numel(); ++i) dx[i] += d;
    });
  }
  return out;
}

GradCheckReport grad_check(
    const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x,
    double eps, double tol) {
  Tensor probe = x.clone(true);
  Tape tape;
  Tensor y = f(tape, probe);
  if (y.numel() != 1) {
    throw Error("grad_check requires a scalar-valued function");
  }
  tape.backward(y);
  std::vector<double> analytic(probe.grad().begin(), probe.grad().end());

  GradCheckReport report;
  report.checked = probe.numel();
  auto eval = [&]() {
    Tape t2;
    return f(t2, probe).item();
  };
  for (size_t i = 0; i < probe.numel(); ++i) {
    const double keep = probe.values()[i];
    probe.values()[i] = keep + eps;
    const double hi = eval();
    probe.values()[i] = keep - eps;
    const double lo = eval();
    probe.values()[i] = keep;
    const double numeric = (hi - lo) / (2.0 * eps);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
    report.max_rel_err =
        std::max(report.max_rel_err, std::abs(numeric - analytic[i]) / denom);
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace lavender
