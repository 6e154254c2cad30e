#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "vtr/check.hpp"

namespace vtr::core {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense float64 storage plus an optional gradient buffer. Nodes are shared
// between Tensor handles and the tape closures that reference them.
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = false;  // true only for user-created parameters/inputs
  std::string name;

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// During backward, leaf gradients can be redirected into a private sink so
// several tapes sharing the same parameters can run backward concurrently
// and be reduced afterwards.
using LeafGradMap = std::unordered_map<TensorNode*, std::vector<double>>;

struct BackwardCtx {
  LeafGradMap* leaf_sink = nullptr;

  std::vector<double>& grad_of(const std::shared_ptr<TensorNode>& n) {
    if (leaf_sink != nullptr && n->is_leaf) {
      auto& buf = (*leaf_sink)[n.get()];
      if (buf.size() != n->data.size()) buf.assign(n->data.size(), 0.0);
      return buf;
    }
    n->ensure_grad();
    return n->grad;
  }
};

// Value-semantics handle over a shared node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false) {
    VTR_CHECK_SHAPE(numel(shape) == static_cast<std::int64_t>(data.size()),
                    "data length ", data.size(), " does not match shape ",
                    shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    n->is_leaf = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> d(static_cast<std::size_t>(numel(shape)), 0.0);
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor full(Shape shape, double value) {
    std::vector<double> d(static_cast<std::size_t>(numel(shape)), value);
    return from_data(std::move(shape), std::move(d));
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from_data(Shape{}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim() const { return static_cast<std::int64_t>(node_->shape.size()); }
  std::int64_t size() const { return node_->size(); }
  std::int64_t extent(std::int64_t axis) const { return node_->shape[static_cast<std::size_t>(axis)]; }
  bool is_scalar() const { return size() == 1; }

  double* data() { return node_->data.data(); }
  const double* data() const { return node_->data.data(); }
  std::vector<double>& vec() { return node_->data; }
  const std::vector<double>& vec() const { return node_->data; }
  double item() const {
    VTR_CHECK(is_scalar(), "item() on tensor of shape ", shape_str(shape()));
    return node_->data[0];
  }

  // Row-major multi-index accessors, mainly for tests and small code paths.
  double at(std::initializer_list<std::int64_t> idx) const {
    return node_->data[static_cast<std::size_t>(offset(idx))];
  }
  double& at(std::initializer_list<std::int64_t> idx) {
    return node_->data[static_cast<std::size_t>(offset(idx))];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }

  Tensor& set_requires_grad(bool rg) {
    node_->requires_grad = rg;
    node_->is_leaf = rg;
    return *this;
  }
  Tensor& set_name(std::string name) {
    node_->name = std::move(name);
    return *this;
  }
  const std::string& name() const { return node_->name; }

  // Gradient of a leaf after backward; zeros if the graph never touched it.
  std::vector<double> grad() const {
    if (node_->grad.size() == node_->data.size()) return node_->grad;
    return std::vector<double>(node_->data.size(), 0.0);
  }
  std::vector<double>& grad_buffer() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::int64_t offset(std::initializer_list<std::int64_t> idx) const {
    const Shape& s = node_->shape;
    VTR_CHECK(idx.size() == s.size(), "index rank mismatch");
    std::int64_t off = 0;
    std::size_t k = 0;
    for (auto i : idx) {
      off = off * s[k] + i;
      ++k;
    }
    return off;
  }

  std::shared_ptr<TensorNode> node_;
};

// Ordered record of executed operations. Replaying the recorded steps in
// reverse propagates adjoints to every requires_grad leaf. A tape is
// single-threaded and can be consumed by backward exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // RAII activation: ops record onto the innermost active tape of the
  // current thread. No active tape means pure inference.
  class Scope {
   public:
    explicit Scope(Tape& tape) : prev_(current_) { current_ = &tape; }
    ~Scope() { current_ = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* current() { return current_; }

  void record(std::function<void(BackwardCtx&)> step) {
    steps_.push_back(std::move(step));
  }

  std::size_t num_steps() const { return steps_.size(); }
  bool consumed() const { return consumed_; }

  // Seeds d(loss)=1 and replays the tape. Leaf gradients accumulate into
  // node grad buffers, or into `sink` when provided.
  void backward(const Tensor& loss, LeafGradMap* sink = nullptr) {
    VTR_CHECK(loss.is_scalar(), "backward requires a scalar loss, got shape ",
              shape_str(loss.shape()));
    backward_seeded({{loss, {1.0}}}, sink);
  }

  // General entry: seed several roots with explicit cotangents, then replay.
  void backward_seeded(
      const std::vector<std::pair<Tensor, std::vector<double>>>& roots,
      LeafGradMap* sink = nullptr) {
    VTR_CHECK(!consumed_, "tape already consumed by backward");
    consumed_ = true;
    BackwardCtx ctx;
    ctx.leaf_sink = sink;
    for (const auto& [root, cotangent] : roots) {
      VTR_CHECK(static_cast<std::int64_t>(cotangent.size()) == root.size(),
                "cotangent size mismatch for backward root");
      auto& g = ctx.grad_of(root.node());
      for (std::size_t i = 0; i < cotangent.size(); ++i) g[i] += cotangent[i];
    }
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)(ctx);
  }

 private:
  static thread_local Tape* current_;

  std::vector<std::function<void(BackwardCtx&)>> steps_;
  bool consumed_ = false;
};

// Convenience free function matching the rest of the op surface.
inline void backward(const Tensor& loss, Tape& tape, LeafGradMap* sink = nullptr) {
  tape.backward(loss, sink);
}

}  // namespace vtr::core
