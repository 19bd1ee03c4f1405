#include "dnmt/numerics/tensor.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

#include "dnmt/error.hpp"

namespace dnmt::numerics {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->data.assign(numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> data, bool requires_grad) {
  if (numel(shape) != data.size()) {
    throw ShapeError("tensor shape " + shape_string(shape) + " holds " +
                     std::to_string(numel(shape)) + " elements, got " +
                     std::to_string(data.size()));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  const auto& s = node_->shape;
  if (s.size() == 2) return s[0];
  return 1;
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  const auto& s = node_->shape;
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  return 1;
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(node_->shape, node_->data, false);
}

template <typename T>
void Tensor<T>::backward() const {
  if (size() != 1) {
    throw ShapeError("backward() needs a scalar root, got shape " +
                     shape_string(shape()));
  }
  const T one = 1;
  Tape<T>::record(*this).replay(std::span<const T>(&one, 1));
}

template <typename T>
Tape<T> Tape<T>::record(const Tensor<T>& root) {
  Tape tape;
  if (!root.defined() || !root.requires_grad()) return tape;

  // Iterative post-order DFS.
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<std::shared_ptr<Node<T>>, std::size_t>> stack;
  stack.emplace_back(root.node_ptr(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const auto& parent = node->parents[next++];
      if (parent->requires_grad && visited.insert(parent.get()).second) {
        stack.emplace_back(parent, 0);
      }
      continue;
    }
    tape.order_.push_back(node);
    stack.pop_back();
  }
  for (auto& node : tape.order_) node->ensure_grad();
  return tape;
}

template <typename T>
void Tape<T>::replay(std::span<const T> seed, bool retain_graph) {
  if (order_.empty()) return;
  Node<T>* root = order_.back().get();
  if (seed.size() != root->data.size()) {
    throw ShapeError("backward seed size does not match root shape " +
                     shape_string(root->shape));
  }
  for (std::size_t i = 0; i < seed.size(); ++i) root->grad[i] += seed[i];
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node<T>* node = it->get();
    if (node->backward) node->backward(*node);
    if (!retain_graph && !node->is_leaf()) {
      node->backward = nullptr;
      node->parents.clear();
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace dnmt::numerics
