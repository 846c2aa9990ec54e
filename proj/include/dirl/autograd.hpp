#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dirl/tensor.hpp"

namespace dirl {

// Reverse-mode tape. Every op builds a Node whose backward_fn scatters the
// node's grad into its parents' grads. The graph is a DAG owned by the output
// Var through shared_ptr parents, so dropping the loss frees the whole tape
// except leaf (parameter) nodes, which the caller keeps alive.
template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad = Tensor<T>(value.shape());
    }
};

template <class T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }
    explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

    bool defined() const { return node_ != nullptr; }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& value() { return node_->value; }
    const Tensor<T>& grad() const { return node_->grad; }
    Tensor<T>& grad_mut() {
        node_->ensure_grad();
        return node_->grad;
    }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const Shape& shape() const { return node_->value.shape(); }

    std::shared_ptr<Node<T>> node() const { return node_; }

    void zero_grad() {
        if (node_ && !node_->grad.empty()) node_->grad.fill(T(0));
    }

    // Scalar item access for loss values.
    T item() const { return node_->value[0]; }

    // Runs reverse-mode accumulation from this node, which must hold a single
    // element. Grad buffers of reachable nodes are accumulated into (callers
    // zero parameter grads between steps).
    void backward() const {
        if (shape().numel() != 1) throw ShapeError("backward() needs a scalar, got " + shape().str());
        backward_with_seed(Tensor<T>::scalar(T(1)));
    }

    void backward_with_seed(Tensor<T> seed) const {
        check_same_shape(seed, node_->value, "backward seed");
        // Iterative post-order topological sort; recursion would overflow on
        // deep decoder cascades.
        std::vector<Node<T>*> order;
        std::unordered_set<Node<T>*> visited;
        std::vector<std::pair<Node<T>*, std::size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next_child] = stack.back();
            if (next_child < n->parents.size()) {
                Node<T>* p = n->parents[next_child++].get();
                if (p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        node_->ensure_grad();
        for (std::int64_t i = 0; i < seed.numel(); ++i) node_->grad[i] += seed[i];
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<T>* n = *it;
            if (n->backward_fn) n->backward_fn(*n);
        }
    }

private:
    std::shared_ptr<Node<T>> node_;
};

namespace detail {

// Glue for op implementations: allocate the result node wired to parents.
// Parents that do not require grad are still kept as owners so their values
// stay alive for the backward closure.
template <class T>
std::shared_ptr<Node<T>> make_node(Tensor<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
                                   std::function<void(Node<T>&)> backward_fn) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    bool needs = false;
    for (const auto& p : parents) needs = needs || (p && p->requires_grad);
    n->requires_grad = needs;
    if (needs) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

template <class T>
void accumulate(Node<T>& dst, const Tensor<T>& delta) {
    dst.ensure_grad();
    T* g = dst.grad.data();
    const T* d = delta.data();
    const std::int64_t n = delta.numel();
    for (std::int64_t i = 0; i < n; ++i) g[i] += d[i];
}

}  // namespace detail

}  // namespace dirl
