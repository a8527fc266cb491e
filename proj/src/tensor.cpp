#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace ocor {

namespace {

thread_local int g_no_grad_depth = 0;

int64_t shape_numel(const std::vector<int> &shape) {
  int64_t n = 1;
  for (int e : shape) {
    if (e < 0) throw std::invalid_argument("tensor: negative extent");
    n *= e;
  }
  return n;
}

std::string shape_str(const std::vector<int> &shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor make_tensor(std::vector<int> shape) {
  auto node = std::make_shared<TensorNode>();
  node->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  node->shape = std::move(shape);
  return Tensor(node);
}

void check_finite(const Tensor &t, const char *op) {
  for (double v : t.node()->data) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string(op) +
                               ": non-finite value in result");
    }
  }
}

bool any_tracked(std::initializer_list<const Tensor *> inputs) {
  for (const Tensor *t : inputs) {
    if (t->defined() && t->node()->tracked) return true;
  }
  return false;
}

// Registers the backward function when recording is on and an input is part
// of the graph. Parents are the tracked inputs only.
void record(Tensor &out, std::initializer_list<const Tensor *> inputs,
            std::function<void()> fn) {
  if (!grad_enabled() || !any_tracked(inputs)) return;
  auto &node = *out.node();
  node.tracked = true;
  for (const Tensor *t : inputs) {
    if (t->defined() && t->node()->tracked) node.parents.push_back(t->node());
  }
  node.backward_fn = std::move(fn);
}

inline void axpy(double *y, const double *x, double a, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double dot(const double *a, const double *b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t = make_tensor(std::move(shape));
  t.node()->requires_grad = requires_grad;
  t.node()->tracked = requires_grad;
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node()->data.begin(), t.node()->data.end(), value);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data,
                    bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("Tensor::from: data size does not match " +
                                shape_str(shape));
  }
  Tensor t = zeros(std::move(shape), requires_grad);
  t.node()->data = std::move(data);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const std::vector<int> &Tensor::shape() const { return node_->shape; }
int Tensor::dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }
int64_t Tensor::numel() const { return node_->numel(); }
double *Tensor::data() { return node_->data.data(); }
const double *Tensor::data() const { return node_->data.data(); }

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item: tensor is not scalar");
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

double *Tensor::grad() {
  node_->ensure_grad();
  return node_->grad.data();
}

const double *Tensor::grad() const {
  return node_->grad.empty() ? nullptr : node_->grad.data();
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

// ---- ops ---------------------------------------------------------------------

Tensor matmul(const Tensor &a, const Tensor &b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: shape mismatch " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = make_tensor({m, n});
  const double *pa = a.data(), *pb = b.data();
  double *po = out.data();
  for (int i = 0; i < m; ++i) {
    const double *arow = pa + static_cast<size_t>(i) * k;
    double *orow = po + static_cast<size_t>(i) * n;
    for (int t = 0; t < k; ++t) {
      axpy(orow, pb + static_cast<size_t>(t) * n, arow[t], n);
    }
  }
  check_finite(out, "matmul");
  record(out, {&a, &b}, [a, b, out, m, k, n]() {
    const double *go = out.node()->grad.data();
    if (a.node()->tracked) {
      a.node()->ensure_grad();
      double *ga = a.node()->grad.data();
      const double *pb = b.data();
      // dA = dOut * B^T
      for (int i = 0; i < m; ++i) {
        const double *grow = go + static_cast<size_t>(i) * n;
        double *garow = ga + static_cast<size_t>(i) * k;
        for (int t = 0; t < k; ++t) {
          garow[t] += dot(grow, pb + static_cast<size_t>(t) * n, n);
        }
      }
    }
    if (b.node()->tracked) {
      b.node()->ensure_grad();
      double *gb = b.node()->grad.data();
      const double *pa = a.data();
      // dB = A^T * dOut
      for (int i = 0; i < m; ++i) {
        const double *arow = pa + static_cast<size_t>(i) * k;
        const double *grow = go + static_cast<size_t>(i) * n;
        for (int t = 0; t < k; ++t) {
          axpy(gb + static_cast<size_t>(t) * n, grow, arow[t], n);
        }
      }
    }
  });
  return out;
}

Tensor transpose(const Tensor &x) {
  if (x.rank() != 2) throw std::invalid_argument("transpose: rank-2 only");
  const int m = x.dim(0), n = x.dim(1);
  Tensor out = make_tensor({n, m});
  const double *px = x.data();
  double *po = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      po[static_cast<size_t>(j) * m + i] = px[static_cast<size_t>(i) * n + j];
  record(out, {&x}, [x, out, m, n]() {
    if (!x.node()->tracked) return;
    x.node()->ensure_grad();
    double *gx = x.node()->grad.data();
    const double *go = out.node()->grad.data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        gx[static_cast<size_t>(i) * n + j] +=
            go[static_cast<size_t>(j) * m + i];
  });
  return out;
}

namespace {

void check_same_shape(const Tensor &a, const Tensor &b, const char *op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor &a, const Tensor &b) {
  check_same_shape(a, b, "add");
  Tensor out = make_tensor(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  check_finite(out, "add");
  record(out, {&a, &b}, [a, b, out, n]() {
    const double *go = out.node()->grad.data();
    if (a.node()->tracked) {
      a.node()->ensure_grad();
      for (int64_t i = 0; i < n; ++i) a.node()->grad[i] += go[i];
    }
    if (b.node()->tracked) {
      b.node()->ensure_grad();
      for (int64_t i = 0; i < n; ++i) b.node()->grad[i] += go[i];
    }
  });
  return out;
}

Tensor sub(const Tensor &a, const Tensor &b) {
  check_same_shape(a, b, "sub");
  Tensor out = make_tensor(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  check_finite(out, "sub");
  record(out, {&a, &b}, [a, b, out, n]() {
    const double *go = out.node()->grad.data();
    if (a.node()->tracked) {
      a.node()->ensure_grad();
      for (int64_t i = 0; i < n; ++i) a.node()->grad[i] += go[i];
    }
    if (b.node()->tracked) {
      b.node()->ensure_grad();
      for (int64_t i = 0; i < n; ++i) b.node()->grad[i] -= go[i];
    }
  });
  return out;
}

Tensor mul(const Tensor &a, const Tensor &b) {
  check_same_shape(a, b, "mul");
  Tensor out = make_tensor(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  check_finite(out, "mul");
  record(out, {&a, &b}, [a, b, out, n]() {
    const double *go = out.node()->grad.data();
    if (a.node()->tracked) {
      a.node()->ensure_grad();
      for (int64_t i = 0; i < n; ++i) a.node()->grad[i] += go[i] * b.data()[i];
    }
    if (b.node()->tracked) {
      b.node()->ensure_grad();
      for (int64_t i = 0; i < n; ++i) b.node()->grad[i] += go[i] * a.data()[i];
    }
  });
  return out;
}

Tensor scale(const Tensor &x, double c) {
  Tensor out = make_tensor(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * c;
  check_finite(out, "scale");
  record(out, {&x}, [x, out, c, n]() {
    if (!x.node()->tracked) return;
    x.node()->ensure_grad();
    const double *go = out.node()->grad.data();
    for (int64_t i = 0; i < n; ++i) x.node()->grad[i] += go[i] * c;
  });
  return out;
}

Tensor add_rowvec(const Tensor &x, const Tensor &v) {
  if (x.rank() != 2 || v.numel() != x.dim(1)) {
    throw std::invalid_argument("add_rowvec: shape mismatch " +
                                shape_str(x.shape()) + " + " +
                                shape_str(v.shape()));
  }
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor out = make_tensor(x.shape());
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out.data()[static_cast<size_t>(i) * cols + j] =
          x.data()[static_cast<size_t>(i) * cols + j] + v.data()[j];
  check_finite(out, "add_rowvec");
  record(out, {&x, &v}, [x, v, out, rows, cols]() {
    const double *go = out.node()->grad.data();
    if (x.node()->tracked) {
      x.node()->ensure_grad();
      const int64_t n = static_cast<int64_t>(rows) * cols;
      for (int64_t i = 0; i < n; ++i) x.node()->grad[i] += go[i];
    }
    if (v.node()->tracked) {
      v.node()->ensure_grad();
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
          v.node()->grad[j] += go[static_cast<size_t>(i) * cols + j];
    }
  });
  return out;
}

Tensor sum_all(const Tensor &x) {
  Tensor out = make_tensor({1});
  double s = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) s += x.data()[i];
  out.data()[0] = s;
  check_finite(out, "sum_all");
  record(out, {&x}, [x, out]() {
    if (!x.node()->tracked) return;
    x.node()->ensure_grad();
    const double g = out.node()->grad[0];
    for (int64_t i = 0; i < x.numel(); ++i) x.node()->grad[i] += g;
  });
  return out;
}

Tensor concat_cols(const std::vector<Tensor> &xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty input");
  const int rows = xs[0].dim(0);
  int total = 0;
  for (const Tensor &t : xs) {
    if (t.rank() != 2 || t.dim(0) != rows) {
      throw std::invalid_argument("concat_cols: row count mismatch");
    }
    total += t.dim(1);
  }
  Tensor out = make_tensor({rows, total});
  int offset = 0;
  for (const Tensor &t : xs) {
    const int c = t.dim(1);
    for (int i = 0; i < rows; ++i) {
      std::copy_n(t.data() + static_cast<size_t>(i) * c, c,
                  out.data() + static_cast<size_t>(i) * total + offset);
    }
    offset += c;
  }
  bool tracked = false;
  for (const Tensor &t : xs) tracked = tracked || t.node()->tracked;
  if (grad_enabled() && tracked) {
    auto &node = *out.node();
    node.tracked = true;
    for (const Tensor &t : xs) {
      if (t.node()->tracked) node.parents.push_back(t.node());
    }
    std::vector<Tensor> inputs = xs;
    node.backward_fn = [inputs, out, rows, total]() {
      const double *go = out.node()->grad.data();
      int offset = 0;
      for (const Tensor &t : inputs) {
        const int c = t.dim(1);
        if (t.node()->tracked) {
          t.node()->ensure_grad();
          double *gt = t.node()->grad.data();
          for (int i = 0; i < rows; ++i) {
            const double *src = go + static_cast<size_t>(i) * total + offset;
            double *dst = gt + static_cast<size_t>(i) * c;
            for (int j = 0; j < c; ++j) dst[j] += src[j];
          }
        }
        offset += c;
      }
    };
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor> &xs) {
  if (xs.empty()) throw std::invalid_argument("concat_rows: empty input");
  const int cols = xs[0].dim(1);
  int total = 0;
  for (const Tensor &t : xs) {
    if (t.rank() != 2 || t.dim(1) != cols) {
      throw std::invalid_argument("concat_rows: column count mismatch");
    }
    total += t.dim(0);
  }
  Tensor out = make_tensor({total, cols});
  int row = 0;
  for (const Tensor &t : xs) {
    std::copy_n(t.data(), t.numel(),
                out.data() + static_cast<size_t>(row) * cols);
    row += t.dim(0);
  }
  bool tracked = false;
  for (const Tensor &t : xs) tracked = tracked || t.node()->tracked;
  if (grad_enabled() && tracked) {
    auto &node = *out.node();
    node.tracked = true;
    for (const Tensor &t : xs) {
      if (t.node()->tracked) node.parents.push_back(t.node());
    }
    std::vector<Tensor> inputs = xs;
    node.backward_fn = [inputs, out, cols]() {
      const double *go = out.node()->grad.data();
      int row = 0;
      for (const Tensor &t : inputs) {
        if (t.node()->tracked) {
          t.node()->ensure_grad();
          axpy(t.node()->grad.data(), go + static_cast<size_t>(row) * cols,
               1.0, static_cast<int>(t.numel()));
        }
        row += t.dim(0);
      }
    };
  }
  return out;
}

Tensor softmax(const Tensor &x) {
  if (x.rank() < 1 || x.dim(x.rank() - 1) < 1) {
    throw std::invalid_argument("softmax: needs a non-empty last axis");
  }
  const int n = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / n;
  Tensor out = make_tensor(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double *in = x.data() + r * n;
    double *o = out.data() + r * n;
    double mx = in[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (int j = 0; j < n; ++j) o[j] /= sum;
  }
  check_finite(out, "softmax");
  record(out, {&x}, [x, out, rows, n]() {
    if (!x.node()->tracked) return;
    x.node()->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const double *y = out.data() + r * n;
      const double *gy = out.node()->grad.data() + r * n;
      double *gx = x.node()->grad.data() + r * n;
      const double inner = dot(gy, y, n);
      for (int j = 0; j < n; ++j) gx[j] += y[j] * (gy[j] - inner);
    }
  });
  return out;
}

Tensor layer_norm(const Tensor &x, const Tensor &gain, const Tensor &bias) {
  if (x.rank() != 2 || gain.numel() != x.dim(1) || bias.numel() != x.dim(1)) {
    throw std::invalid_argument("layer_norm: shape mismatch");
  }
  constexpr double kEps = 1e-5;
  const int rows = x.dim(0), d = x.dim(1);
  Tensor out = make_tensor(x.shape());
  std::vector<double> means(static_cast<size_t>(rows));
  std::vector<double> inv_std(static_cast<size_t>(rows));
  for (int i = 0; i < rows; ++i) {
    const double *in = x.data() + static_cast<size_t>(i) * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += in[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= d;
    const double is = 1.0 / std::sqrt(var + kEps);
    means[static_cast<size_t>(i)] = mean;
    inv_std[static_cast<size_t>(i)] = is;
    double *o = out.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j)
      o[j] = (in[j] - mean) * is * gain.data()[j] + bias.data()[j];
  }
  check_finite(out, "layer_norm");
  record(out, {&x, &gain, &bias},
         [x, gain, bias, out, rows, d, means, inv_std]() {
           const double *go = out.node()->grad.data();
           for (int i = 0; i < rows; ++i) {
             const double *in = x.data() + static_cast<size_t>(i) * d;
             const double *gy = go + static_cast<size_t>(i) * d;
             const double mean = means[static_cast<size_t>(i)];
             const double is = inv_std[static_cast<size_t>(i)];
             if (gain.node()->tracked || bias.node()->tracked) {
               if (gain.node()->tracked) gain.node()->ensure_grad();
               if (bias.node()->tracked) bias.node()->ensure_grad();
               for (int j = 0; j < d; ++j) {
                 const double xhat = (in[j] - mean) * is;
                 if (gain.node()->tracked) gain.node()->grad[j] += gy[j] * xhat;
                 if (bias.node()->tracked) bias.node()->grad[j] += gy[j];
               }
             }
             if (x.node()->tracked) {
               x.node()->ensure_grad();
               double *gx = x.node()->grad.data() + static_cast<size_t>(i) * d;
               // dxhat = gy * gain; dx via the standard layer-norm reduction
               double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
               for (int j = 0; j < d; ++j) {
                 const double dxh = gy[j] * gain.data()[j];
                 const double xhat = (in[j] - mean) * is;
                 sum_dxhat += dxh;
                 sum_dxhat_xhat += dxh * xhat;
               }
               for (int j = 0; j < d; ++j) {
                 const double dxh = gy[j] * gain.data()[j];
                 const double xhat = (in[j] - mean) * is;
                 gx[j] += is * (dxh - sum_dxhat / d - xhat * sum_dxhat_xhat / d);
               }
             }
           }
         });
  return out;
}

Tensor conv1d(const Tensor &x, const Tensor &kernel, ConvPadding padding,
              const Tensor &pad_vec) {
  if (x.rank() != 2 || kernel.rank() != 3 || kernel.dim(1) != x.dim(1)) {
    throw std::invalid_argument("conv1d: shape mismatch, input " +
                                shape_str(x.shape()) + " kernel " +
                                shape_str(kernel.shape()));
  }
  const int len = x.dim(0), d_in = x.dim(1);
  const int k = kernel.dim(0), d_out = kernel.dim(2);
  const bool preserve = padding != ConvPadding::kNone;
  if (preserve && k % 2 == 0) {
    throw std::invalid_argument(
        "conv1d: even kernel with length-preserving padding");
  }
  if (padding == ConvPadding::kSpecialVector &&
      (!pad_vec.defined() || pad_vec.numel() != d_in)) {
    throw std::invalid_argument("conv1d: pad vector must have input width");
  }
  const int out_len = preserve ? len : len - k + 1;
  if (out_len < 1) {
    throw std::invalid_argument("conv1d: input shorter than kernel");
  }
  const int w = preserve ? (k - 1) / 2 : 0;
  Tensor out = make_tensor({out_len, d_out});
  const double *px = x.data(), *pk = kernel.data();
  const double *pp =
      padding == ConvPadding::kSpecialVector ? pad_vec.data() : nullptr;
  for (int i = 0; i < out_len; ++i) {
    double *orow = out.data() + static_cast<size_t>(i) * d_out;
    for (int t = 0; t < k; ++t) {
      const int p = i + t - w;
      const double *row = nullptr;
      if (p >= 0 && p < len) {
        row = px + static_cast<size_t>(p) * d_in;
      } else if (padding == ConvPadding::kSpecialVector) {
        row = pp;
      } else {
        continue;  // zero padding contributes nothing
      }
      const double *ktap = pk + static_cast<size_t>(t) * d_in * d_out;
      for (int c = 0; c < d_in; ++c) {
        if (row[c] != 0.0) {
          axpy(orow, ktap + static_cast<size_t>(c) * d_out, row[c], d_out);
        }
      }
    }
  }
  check_finite(out, "conv1d");
  record(out, {&x, &kernel, &pad_vec},
         [x, kernel, pad_vec, out, padding, len, d_in, k, d_out, out_len,
          w]() {
           const double *go = out.node()->grad.data();
           const double *px = x.data(), *pk = kernel.data();
           const bool track_x = x.node()->tracked;
           const bool track_k = kernel.node()->tracked;
           const bool track_p =
               pad_vec.defined() && pad_vec.node()->tracked;
           if (track_x) x.node()->ensure_grad();
           if (track_k) kernel.node()->ensure_grad();
           if (track_p) pad_vec.node()->ensure_grad();
           for (int i = 0; i < out_len; ++i) {
             const double *grow = go + static_cast<size_t>(i) * d_out;
             for (int t = 0; t < k; ++t) {
               const int p = i + t - w;
               const bool inside = p >= 0 && p < len;
               if (!inside && padding != ConvPadding::kSpecialVector) continue;
               const double *row =
                   inside ? px + static_cast<size_t>(p) * d_in
                          : pad_vec.data();
               const double *ktap =
                   pk + static_cast<size_t>(t) * d_in * d_out;
               if (track_k) {
                 double *gk = kernel.node()->grad.data() +
                              static_cast<size_t>(t) * d_in * d_out;
                 for (int c = 0; c < d_in; ++c) {
                   if (row[c] != 0.0) {
                     axpy(gk + static_cast<size_t>(c) * d_out, grow, row[c],
                          d_out);
                   }
                 }
               }
               if (inside && track_x) {
                 double *gx =
                     x.node()->grad.data() + static_cast<size_t>(p) * d_in;
                 for (int c = 0; c < d_in; ++c) {
                   gx[c] += dot(ktap + static_cast<size_t>(c) * d_out, grow,
                                d_out);
                 }
               }
               if (!inside && track_p) {
                 double *gp = pad_vec.node()->grad.data();
                 for (int c = 0; c < d_in; ++c) {
                   gp[c] += dot(ktap + static_cast<size_t>(c) * d_out, grow,
                                d_out);
                 }
               }
             }
           }
         });
  return out;
}

Tensor gelu(const Tensor &x) {
  // tanh approximation: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  Tensor out = make_tensor(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
  }
  check_finite(out, "gelu");
  record(out, {&x}, [x, out, n]() {
    if (!x.node()->tracked) return;
    x.node()->ensure_grad();
    const double *go = out.node()->grad.data();
    for (int64_t i = 0; i < n; ++i) {
      const double v = x.data()[i];
      const double u = kC * (v + kA * v * v * v);
      const double th = std::tanh(u);
      const double sech2 = 1.0 - th * th;
      const double dv =
          0.5 * (1.0 + th) + 0.5 * v * sech2 * kC * (1.0 + 3.0 * kA * v * v);
      x.node()->grad[i] += go[i] * dv;
    }
  });
  return out;
}

Tensor dropout(const Tensor &x, double rate, bool training, Rng &rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must be in [0,1)");
  }
  if (!training || rate == 0.0) return x;
  const int64_t n = x.numel();
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
  Tensor out = make_tensor(x.shape());
  for (int64_t i = 0; i < n; ++i) {
    const double m = rng.uniform() < rate ? 0.0 : keep_scale;
    (*mask)[static_cast<size_t>(i)] = m;
    out.data()[i] = x.data()[i] * m;
  }
  check_finite(out, "dropout");
  record(out, {&x}, [x, out, mask, n]() {
    if (!x.node()->tracked) return;
    x.node()->ensure_grad();
    const double *go = out.node()->grad.data();
    for (int64_t i = 0; i < n; ++i) {
      x.node()->grad[i] += go[i] * (*mask)[static_cast<size_t>(i)];
    }
  });
  return out;
}

Tensor dropout_seeded(const Tensor &x, double rate, bool training,
                      uint64_t seed) {
  Rng rng(seed);
  return dropout(x, rate, training, rng);
}

Tensor embedding_lookup(const Tensor &table, const std::vector<int> &indices) {
  if (table.rank() != 2) {
    throw std::invalid_argument("embedding_lookup: table must be rank 2");
  }
  const int vocab = table.dim(0), d = table.dim(1);
  const int len = static_cast<int>(indices.size());
  for (int idx : indices) {
    if (idx < 0 || idx >= vocab) {
      throw std::invalid_argument("embedding_lookup: index out of range");
    }
  }
  Tensor out = make_tensor({len, d});
  for (int i = 0; i < len; ++i) {
    std::copy_n(table.data() + static_cast<size_t>(indices[i]) * d, d,
                out.data() + static_cast<size_t>(i) * d);
  }
  record(out, {&table}, [table, out, indices, d, len]() {
    if (!table.node()->tracked) return;
    table.node()->ensure_grad();
    const double *go = out.node()->grad.data();
    for (int i = 0; i < len; ++i) {
      axpy(table.node()->grad.data() + static_cast<size_t>(indices[i]) * d,
           go + static_cast<size_t>(i) * d, 1.0, d);
    }
  });
  return out;
}

Tensor max_over_rows(const Tensor &x) {
  if (x.rank() != 2 || x.dim(0) < 1) {
    throw std::invalid_argument("max_over_rows: needs at least one row");
  }
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor out = make_tensor({1, cols});
  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(cols), 0);
  for (int j = 0; j < cols; ++j) {
    double best = x.data()[j];
    int arg = 0;
    for (int i = 1; i < rows; ++i) {
      const double v = x.data()[static_cast<size_t>(i) * cols + j];
      if (v > best) {
        best = v;
        arg = i;
      }
    }
    out.data()[j] = best;
    (*argmax)[static_cast<size_t>(j)] = arg;
  }
  record(out, {&x}, [x, out, argmax, cols]() {
    if (!x.node()->tracked) return;
    x.node()->ensure_grad();
    const double *go = out.node()->grad.data();
    for (int j = 0; j < cols; ++j) {
      x.node()->grad[static_cast<size_t>((*argmax)[static_cast<size_t>(j)]) *
                         cols +
                     j] += go[j];
    }
  });
  return out;
}

Tensor rowdot(const Tensor &a, const Tensor &b) {
  check_same_shape(a, b, "rowdot");
  if (a.rank() != 2) throw std::invalid_argument("rowdot: rank-2 only");
  const int rows = a.dim(0), cols = a.dim(1);
  Tensor out = make_tensor({rows, 1});
  for (int i = 0; i < rows; ++i) {
    out.data()[i] = dot(a.data() + static_cast<size_t>(i) * cols,
                        b.data() + static_cast<size_t>(i) * cols, cols);
  }
  check_finite(out, "rowdot");
  record(out, {&a, &b}, [a, b, out, rows, cols]() {
    const double *go = out.node()->grad.data();
    if (a.node()->tracked) {
      a.node()->ensure_grad();
      for (int i = 0; i < rows; ++i) {
        axpy(a.node()->grad.data() + static_cast<size_t>(i) * cols,
             b.data() + static_cast<size_t>(i) * cols, go[i], cols);
      }
    }
    if (b.node()->tracked) {
      b.node()->ensure_grad();
      for (int i = 0; i < rows; ++i) {
        axpy(b.node()->grad.data() + static_cast<size_t>(i) * cols,
             a.data() + static_cast<size_t>(i) * cols, go[i], cols);
      }
    }
  });
  return out;
}

Tensor mul_colvec(const Tensor &x, const Tensor &c) {
  if (x.rank() != 2 || c.rank() != 2 || c.dim(0) != x.dim(0) || c.dim(1) != 1) {
    throw std::invalid_argument("mul_colvec: shape mismatch");
  }
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor out = make_tensor(x.shape());
  for (int i = 0; i < rows; ++i) {
    const double m = c.data()[i];
    for (int j = 0; j < cols; ++j) {
      out.data()[static_cast<size_t>(i) * cols + j] =
          x.data()[static_cast<size_t>(i) * cols + j] * m;
    }
  }
  check_finite(out, "mul_colvec");
  record(out, {&x, &c}, [x, c, out, rows, cols]() {
    const double *go = out.node()->grad.data();
    if (x.node()->tracked) {
      x.node()->ensure_grad();
      for (int i = 0; i < rows; ++i) {
        axpy(x.node()->grad.data() + static_cast<size_t>(i) * cols,
             go + static_cast<size_t>(i) * cols, c.data()[i], cols);
      }
    }
    if (c.node()->tracked) {
      c.node()->ensure_grad();
      for (int i = 0; i < rows; ++i) {
        c.node()->grad[i] += dot(go + static_cast<size_t>(i) * cols,
                                 x.data() + static_cast<size_t>(i) * cols,
                                 cols);
      }
    }
  });
  return out;
}

Tensor sigmoid(const Tensor &x) {
  Tensor out = make_tensor(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double v = x.data()[i];
    out.data()[i] =
        v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                 : std::exp(v) / (1.0 + std::exp(v));
  }
  check_finite(out, "sigmoid");
  record(out, {&x}, [x, out, n]() {
    if (!x.node()->tracked) return;
    x.node()->ensure_grad();
    const double *go = out.node()->grad.data();
    for (int64_t i = 0; i < n; ++i) {
      const double y = out.data()[i];
      x.node()->grad[i] += go[i] * y * (1.0 - y);
    }
  });
  return out;
}

Tensor cross_entropy(const Tensor &probs, int truth_index) {
  constexpr double kFloor = 1e-12;
  if (truth_index < 0 || truth_index >= probs.numel()) {
    throw std::invalid_argument("cross_entropy: class index out of range");
  }
  const double p = probs.data()[truth_index];
  const double pe = std::max(p, kFloor);
  Tensor out = Tensor::from({1}, {-std::log(pe)});
  record(out, {&probs}, [probs, out, truth_index, pe, p]() {
    if (!probs.node()->tracked) return;
    probs.node()->ensure_grad();
    if (p >= kFloor) {
      probs.node()->grad[truth_index] += out.node()->grad[0] * (-1.0 / pe);
    }
  });
  return out;
}

// ---- backward ----------------------------------------------------------------

void backward(const Tensor &loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  }
  // Post-order DFS for a topological order, then sweep it in reverse.
  std::vector<TensorNode *> order;
  std::unordered_set<TensorNode *> visited;
  std::vector<std::pair<TensorNode *, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode *parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn();
  }
}

// ---- ParamStore ----------------------------------------------------------------

Tensor ParamStore::add(const std::string &name, Tensor t) {
  if (index_.count(name)) {
    throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  }
  t.node()->requires_grad = true;
  t.node()->tracked = true;
  index_[name] = items_.size();
  items_.emplace_back(name, t);
  return t;
}

Tensor &ParamStore::get(const std::string &name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::invalid_argument("ParamStore: unknown parameter " + name);
  }
  return items_[it->second].second;
}

const Tensor &ParamStore::get(const std::string &name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::invalid_argument("ParamStore: unknown parameter " + name);
  }
  return items_[it->second].second;
}

bool ParamStore::contains(const std::string &name) const {
  return index_.count(name) > 0;
}

int64_t ParamStore::total_params() const {
  int64_t total = 0;
  for (const auto &[name, t] : items_) total += t.numel();
  return total;
}

void ParamStore::zero_grad() {
  for (auto &[name, t] : items_) t.zero_grad();
}

// ---- Adam -----------------------------------------------------------------------

Adam::Adam(ParamStore &params, AdamConfig config)
    : params_(params), config_(config) {
  for (const auto &[name, t] : params_.items()) {
    first_moment_.emplace_back(static_cast<size_t>(t.numel()), 0.0);
    second_moment_.emplace_back(static_cast<size_t>(t.numel()), 0.0);
  }
}

void Adam::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, double(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, double(step_count_));
  for (size_t pi = 0; pi < params_.items().size(); ++pi) {
    const auto &[name, t] = params_.items()[pi];
    const double *g = t.node()->grad.empty() ? nullptr : t.node()->grad.data();
    if (g != nullptr) {
      for (int64_t i = 0; i < t.numel(); ++i) {
        if (!std::isfinite(g[i])) {
          throw std::runtime_error("adam: non-finite gradient in parameter " +
                                   name);
        }
      }
    }
    auto &m = first_moment_[pi];
    auto &v = second_moment_[pi];
    double *p = t.node()->data.data();
    for (int64_t i = 0; i < t.numel(); ++i) {
      const double gi = g ? g[i] : 0.0;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

// ---- init -----------------------------------------------------------------------

void init_uniform_fanin(Tensor &t, int fan_in, Rng &rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i) {
    t.data()[i] = (rng.uniform() * 2.0 - 1.0) * bound;
  }
}

void init_normal(Tensor &t, double stddev, Rng &rng) {
  for (int64_t i = 0; i < t.numel(); ++i) {
    t.data()[i] = rng.normal() * stddev;
  }
}

}  // namespace ocor
