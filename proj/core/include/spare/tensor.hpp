#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace spare {

struct ShapeMismatch : std::runtime_error {
  explicit ShapeMismatch(const std::string& what) : std::runtime_error("shape: " + what) {}
};
struct BadOffsets : std::runtime_error {
  explicit BadOffsets(const std::string& what) : std::runtime_error("offsets: " + what) {}
};
struct NonScalarLoss : std::runtime_error {
  explicit NonScalarLoss(const std::string& what) : std::runtime_error("loss: " + what) {}
};
struct NonFiniteGradient : std::runtime_error {
  explicit NonFiniteGradient(const std::string& what)
      : std::runtime_error("gradient: " + what) {}
};

/// Dense row-major matrix of 64-bit floats. Zero rows or columns are legal;
/// empty batches flow through every operation.
struct Tensor {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int64_t r, int64_t c)
      : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

  double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols + c)]; }
  double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols + c)]; }
  bool same_shape(const Tensor& other) const {
    return rows == other.rows && cols == other.cols;
  }
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape, accumulated by Tape::backward
};

/// Named learnable tensors in creation order; addresses stay stable.
class ParameterSet {
 public:
  Parameter& create(const std::string& name, int64_t rows, int64_t cols);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  size_t size() const { return params_.size(); }
  /// Creation order.
  const std::vector<std::unique_ptr<Parameter>>& entries() const { return params_; }
  void zero_grads();
  int64_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, size_t> index_;
};

enum class Agg { Sum, Mean };

/// Reverse-mode tape. Record a forward computation, call backward on a 1x1
/// loss, and leaf parameters receive accumulated gradients. The tape is
/// rebuilt per step; node ids index creation order, so reverse order is a
/// valid topological sweep.
class Tape {
 public:
  using Id = int32_t;

  Id constant(Tensor value);
  Id leaf(Parameter& param);
  /// y = x · Wᵀ + b with W [out × in] and b [1 × out] broadcast over rows.
  Id linear(Id x, Id w, Id b);
  Id add(Id a, Id b);
  Id relu(Id x);
  Id concat_cols(Id a, Id b);
  /// out[i] = src row indices[i]; gradient scatter-adds.
  Id gather_rows(Id src, std::vector<int64_t> indices);
  /// Row i comes from value(sources[picks[i].first]) row picks[i].second.
  /// All sources must share a column count.
  Id gather_multi(std::vector<Id> sources, std::vector<std::pair<int32_t, int64_t>> picks);
  /// Per-segment sum or mean of rows; segment i covers
  /// [offsets[i], offsets[i+1]); empty segments produce zero rows.
  Id segment_aggregate(Id x, std::vector<int64_t> offsets, Agg mode);
  /// mean((pred - target)²); pred and target are [n × 1], n ≥ 1.
  Id mse_loss(Id pred, Id target);
  /// Numerically stable binary cross-entropy on logits, labels in {0, 1}.
  Id bce_logits_loss(Id logits, Id labels);

  const Tensor& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor& grad(Id id) const { return nodes_[static_cast<size_t>(id)].grad; }

  /// Seeds d(loss)/d(loss) = 1 and sweeps in reverse creation order;
  /// every leaf adds its gradient into its Parameter.
  void backward(Id loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void()> back;  // empty for constants
  };
  Id push(Tensor value, std::function<void()> back);
  Tensor& grad_ref(Id id) { return nodes_[static_cast<size_t>(id)].grad; }

  std::vector<Node> nodes_;
};

struct MlpLayer {
  Tape::Id w = -1;
  Tape::Id b = -1;
  bool relu = false;
};

/// Chains y = act_k(W_k(... act_1(W_1 x + b_1) ...) + b_k).
Tape::Id apply_mlp(Tape& tape, const std::vector<MlpLayer>& layers, Tape::Id x);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// SGD or Adam over a ParameterSet. step() validates every gradient first
/// and throws NonFiniteGradient naming the parameter before touching any
/// value; on success it updates everything and zeroes the gradients.
class Optimizer {
 public:
  static Optimizer sgd(double lr);
  static Optimizer adam(const AdamConfig& config);

  void step(ParameterSet& params);

 private:
  Optimizer() = default;

  bool use_adam_ = false;
  double lr_ = 0.0;
  AdamConfig adam_{};
  int64_t step_count_ = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> moments_;  // m, v per parameter
};

/// Central-difference check: f(true) must compute the loss AND populate
/// analytic gradients via backward; f(false) only computes the loss at the
/// current parameter values. Returns the maximum relative error
/// |a - n| / max(1, |a|, |n|) over every parameter coordinate.
double grad_check(ParameterSet& params, const std::function<double(bool)>& f,
                  double eps = 1e-5);

}  // namespace spare
