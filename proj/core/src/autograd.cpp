#include "aaunet/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace aaunet {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
std::vector<Node<T>*> topological_order(const Var<T>& root) {
  std::vector<Node<T>*> order;
  std::unordered_set<const Node<T>*> visited;
  // Iterative post-order DFS; graphs from deep models overflow recursion.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
void backward(const Var<T>& loss) {
  if (loss->value.numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     to_string(loss->value.shape()));
  }
  if (!loss->requires_grad) return;
  auto order = topological_order(loss);
  for (Node<T>* node : order) {
    if (!node->is_leaf()) node->grad.reset();
  }
  loss->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->is_leaf() || !node->backward_rule || !node->grad) continue;
    node->backward_rule(*node);
  }
}

template <typename T>
Var<T> ParameterStore<T>::add(const std::string& name, Tensor<T> init) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
  params_.emplace_back(name, std::move(init));
  return params_.back().node;
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
std::int64_t ParameterStore<T>::scalar_count() const {
  std::int64_t total = 0;
  for (const auto& p : params_) total += p.value().numel();
  return total;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
std::uint64_t ParameterStore<T>::checksum() const {
  std::uint64_t h = 0;
  for (const auto& p : params_) h = h * 31 + aaunet::checksum(p.value());
  return h;
}

template std::vector<Node<float>*> topological_order(const Var<float>&);
template std::vector<Node<double>*> topological_order(const Var<double>&);
template void backward(const Var<float>&);
template void backward(const Var<double>&);
template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace aaunet
