#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aaunet/tensor.hpp"

namespace aaunet {

/// One recorded value in the reverse-mode graph.
///
/// `backward_rule` reads this node's gradient and accumulates into the
/// gradients of `parents`. Values are never written after construction.
template <typename T>
struct Node {
  Tensor<T> value;
  std::optional<Tensor<T>> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_rule;
  std::string op;
  bool requires_grad = false;

  /// Gradient storage, zero-allocated on first use.
  Tensor<T>& grad_buffer() {
    if (!grad) grad.emplace(value.shape(), T(0));
    return *grad;
  }
  bool is_leaf() const { return parents.empty(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

/// Leaf node holding `value`.
template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->op = "leaf";
  return node;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
  return leaf(std::move(value), false);
}

bool grad_enabled();

/// Disables graph recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Creates an interior node. Parents and the rule are kept only when some
/// parent needs a gradient and recording is enabled.
template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> parents, std::string op,
                 std::function<void(Node<T>&)> rule) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = std::move(op);
#ifndef NDEBUG
  if (!node->value.all_finite()) {
    throw std::domain_error("non-finite value produced by op '" + node->op + "'");
  }
#endif
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_rule = std::move(rule);
  }
  return node;
}

/// Accumulates d(loss)/d(node) into every reachable node that requires a
/// gradient. Leaf gradients accumulate across calls; interior gradients are
/// recomputed on each call.
template <typename T>
void backward(const Var<T>& loss);

/// Reachable nodes in topological order (parents before children).
template <typename T>
std::vector<Node<T>*> topological_order(const Var<T>& root);

/// A learned tensor with Adam moment buffers.
template <typename T>
struct Parameter {
  std::string name;
  Var<T> node;
  Tensor<T> adam_m;
  Tensor<T> adam_v;

  Parameter(std::string n, Tensor<T> init)
      : name(std::move(n)),
        node(leaf(std::move(init), true)),
        adam_m(node->value.shape()),
        adam_v(node->value.shape()) {}

  const Tensor<T>& value() const { return node->value; }
  Tensor<T>& mutable_value() { return node->value; }
  void zero_grad() { node->grad.reset(); }
};

/// Ordered collection of uniquely named parameters.
template <typename T>
class ParameterStore {
 public:
  /// Registers a parameter; throws std::invalid_argument on a duplicate name.
  Var<T> add(const std::string& name, Tensor<T> init);

  std::vector<Parameter<T>>& all() { return params_; }
  const std::vector<Parameter<T>>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  Parameter<T>* find(const std::string& name);
  const Parameter<T>* find(const std::string& name) const;

  std::int64_t scalar_count() const;
  void zero_grad();
  /// Checksum over all parameter values in registration order.
  std::uint64_t checksum() const;

 private:
  std::vector<Parameter<T>> params_;
};

extern template void backward(const Var<float>&);
extern template void backward(const Var<double>&);
extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace aaunet
