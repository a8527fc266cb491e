#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "rng.hpp"

namespace ocor {

struct TensorNode;

// Dense double tensor with reverse-mode gradient tracking. A Tensor is a
// value-semantic handle to a shared node; ops return new handles and record
// the backward function when gradients are enabled and an input is tracked.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int> &shape() const;
  int dim(int i) const;
  int rank() const;
  int64_t numel() const;

  double *data();
  const double *data() const;
  double item() const;  // value of a 1-element tensor

  bool requires_grad() const;
  // Gradient array; allocated zero-filled on first access.
  double *grad();
  const double *grad() const;  // nullptr when never touched
  void zero_grad();

  std::shared_ptr<TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until touched
  bool requires_grad = false;
  bool tracked = false;  // participates in the current graph
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

// Disables graph recording in scope (inference / parallel scoring).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;
};

bool grad_enabled();

enum class ConvPadding { kZero, kSpecialVector, kNone };

// ---- ops -------------------------------------------------------------------
// All ops validate shapes, throw std::invalid_argument on mismatch, and throw
// std::runtime_error if an output value is not finite.

Tensor matmul(const Tensor &a, const Tensor &b);
Tensor transpose(const Tensor &x);
Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &x, double c);
Tensor add_rowvec(const Tensor &x, const Tensor &v);  // v: [cols of x]
Tensor sum_all(const Tensor &x);                      // -> [1]
Tensor concat_cols(const std::vector<Tensor> &xs);
Tensor concat_rows(const std::vector<Tensor> &xs);
Tensor softmax(const Tensor &x);  // over the last axis
Tensor layer_norm(const Tensor &x, const Tensor &gain, const Tensor &bias);
Tensor conv1d(const Tensor &x, const Tensor &kernel, ConvPadding padding,
              const Tensor &pad_vec = Tensor());
Tensor gelu(const Tensor &x);
Tensor dropout(const Tensor &x, double rate, bool training, Rng &rng);
Tensor dropout_seeded(const Tensor &x, double rate, bool training,
                      uint64_t seed);
Tensor embedding_lookup(const Tensor &table, const std::vector<int> &indices);
Tensor max_over_rows(const Tensor &x);              // [L,d] -> [1,d]
Tensor rowdot(const Tensor &a, const Tensor &b);    // [L,k],[L,k] -> [L,1]
Tensor mul_colvec(const Tensor &x, const Tensor &c);  // [L,k]*[L,1]
Tensor sigmoid(const Tensor &x);
// -log(max(probs[truth_index], 1e-12)); probs is a probability vector.
Tensor cross_entropy(const Tensor &probs, int truth_index);

// Reverse-mode pass from a scalar loss; accumulates into .grad of every
// tracked tensor in the graph.
void backward(const Tensor &loss);

// ---- parameters --------------------------------------------------------------

class ParamStore {
 public:
  Tensor add(const std::string &name, Tensor t);
  Tensor &get(const std::string &name);
  const Tensor &get(const std::string &name) const;
  bool contains(const std::string &name) const;
  const std::vector<std::pair<std::string, Tensor>> &items() const {
    return items_;
  }
  int64_t total_params() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> index_;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(ParamStore &params, AdamConfig config);
  // One update over every parameter with a populated gradient. Throws on a
  // non-finite gradient, naming the parameter.
  void step();
  int64_t step_count() const { return step_count_; }

 private:
  ParamStore &params_;
  AdamConfig config_;
  int64_t step_count_ = 0;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
};

// ---- init ---------------------------------------------------------------------

void init_uniform_fanin(Tensor &t, int fan_in, Rng &rng);
void init_normal(Tensor &t, double stddev, Rng &rng);

}  // namespace ocor
