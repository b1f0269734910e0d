#include "falldet/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace falldet {

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

void check_finite(const char* op, std::span<const double> values) {
    for (double v : values)
        if (!std::isfinite(v))
            throw NumericFault(std::string(op) + ": non-finite value in forward pass");
}

Tensor Tensor::zeros(int rows, int cols) { return full(rows, cols, 0.0); }

Tensor Tensor::full(int rows, int cols, double fill) {
    if (rows < 1 || cols < 1) throw ShapeMismatch("Tensor: dimensions must be positive");
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->value.assign(static_cast<size_t>(rows) * cols, fill);
    return Tensor(std::move(n));
}

Tensor Tensor::from_vector(int rows, int cols, std::vector<double> data) {
    if (rows < 1 || cols < 1) throw ShapeMismatch("Tensor: dimensions must be positive");
    if (int64_t(data.size()) != int64_t(rows) * cols)
        throw ShapeMismatch("Tensor: data size does not match shape");
    check_finite("from_vector", data);
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(data);
    return Tensor(std::move(n));
}

Tensor Tensor::uniform(int rows, int cols, Rng& rng, double scale) {
    auto t = zeros(rows, cols);
    for (auto& v : t.value_mut()) v = rng.uniform(-scale, scale);
    return t;
}

void Tensor::backward() const {
    if (!node_) throw ShapeMismatch("backward: undefined tensor");
    if (numel() != 1) throw ShapeMismatch("backward: root must be a scalar");

    // Iterative post-order DFS over the grad-requiring subgraph.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    struct Item {
        TensorNode* node;
        size_t next_parent;
    };
    std::vector<Item> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& top = stack.back();
        if (top.next_parent < top.node->parents.size()) {
            TensorNode* parent = top.node->parents[top.next_parent++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.push_back({parent, 0});
            }
        } else {
            order.push_back(top.node);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
}

}  // namespace falldet
