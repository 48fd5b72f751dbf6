#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pointtrack/tensor.hpp"

namespace pointtrack {

namespace autograd_detail {
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace autograd_detail

/// Disables tape recording for the enclosing scope (frozen-weight inference).
struct NoGradGuard {
    NoGradGuard() : prev_(autograd_detail::grad_mode()) { autograd_detail::grad_mode() = false; }
    ~NoGradGuard() { autograd_detail::grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

inline bool grad_enabled() { return autograd_detail::grad_mode(); }

template <typename T>
struct VarNode {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<VarNode>> parents;
    std::function<void(const Tensor<T>&)> backward_fn;  // receives this node's output gradient

    void accum_grad(const Tensor<T>& g) {
        if (!grad.defined()) grad = Tensor<T>(value.shape());
        const T* src = g.data();
        T* dst = grad.data();
        const int64_t n = grad.numel();
        for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
    }
};

/// Handle to a node of the reverse-mode tape. Copies share the node.
template <typename T>
class Var {
  public:
    using Node = VarNode<T>;

    Var() = default;

    explicit Var(Tensor<T> value, bool requires_grad = false) : n_(std::make_shared<Node>()) {
        n_->value = std::move(value);
        n_->requires_grad = requires_grad && grad_enabled();
    }

    static Var leaf(Tensor<T> value, bool requires_grad = false) {
        return Var(std::move(value), requires_grad);
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor<T>& val() const { return n_->value; }
    Tensor<T>& mutable_val() { return n_->value; }
    bool requires_grad() const { return n_ && n_->requires_grad; }

    Tensor<T>& grad() {
        if (!n_->grad.defined()) n_->grad = Tensor<T>(n_->value.shape());
        return n_->grad;
    }
    const Tensor<T>& grad_or_empty() const { return n_->grad; }
    void zero_grad() { n_->grad = Tensor<T>(); }

    std::shared_ptr<Node> node() const { return n_; }

    const std::vector<int64_t>& shape() const { return n_->value.shape(); }
    int64_t numel() const { return n_->value.numel(); }
    int64_t dim(int i) const { return n_->value.dim(i); }

    /// Runs reverse-mode accumulation from this (scalar or seeded) output.
    void backward(Tensor<T> seed = Tensor<T>()) const {
        PTK_CHECK(n_, "backward on undefined Var");
        if (!n_->requires_grad) return;
        if (!seed.defined()) seed = Tensor<T>::full(n_->value.shape(), T(1));
        PTK_CHECK_SHAPE(seed.shape() == n_->value.shape(), "backward seed shape mismatch");

        // reverse DFS post-order gives a topological order: consumers before inputs
        std::vector<Node*> order;
        std::unordered_set<Node*> visited;
        struct Frame {
            Node* node;
            size_t next_parent;
        };
        std::vector<Frame> stack;
        stack.push_back({n_.get(), 0});
        visited.insert(n_.get());
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next_parent < f.node->parents.size()) {
                Node* p = f.node->parents[f.next_parent++].get();
                if (p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(f.node);
                stack.pop_back();
            }
        }

        n_->accum_grad(seed);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* node = *it;
            if (node->backward_fn && node->grad.defined()) node->backward_fn(node->grad);
        }
    }

  private:
    std::shared_ptr<Node> n_;
};

/// Builds an op node. If the tape is disabled or no parent needs gradients,
/// the result is a plain leaf and `backward` is dropped.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(const Tensor<T>&)> backward) {
    bool needs = grad_enabled();
    if (needs) {
        needs = false;
        for (const auto& p : parents)
            if (p.requires_grad()) {
                needs = true;
                break;
            }
    }
    Var<T> out(std::move(value), false);
    if (needs) {
        out.node()->requires_grad = true;
        out.node()->parents.reserve(parents.size());
        for (auto& p : parents) out.node()->parents.push_back(p.node());
        out.node()->backward_fn = std::move(backward);
    }
    return out;
}

}  // namespace pointtrack
