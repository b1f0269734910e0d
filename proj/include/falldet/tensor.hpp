#pragma once
// Reverse-mode autodiff over dense 2-D double tensors.
//
// Every tensor is a rows x cols matrix ([1,1] scalars, [1,N] row vectors).
// Ops build a DAG of shared nodes; backward() runs a reverse topological
// sweep from a scalar, accumulating into .grad (repeated calls accumulate).
// Values are stored and reduced in double so central finite differences
// against analytic gradients are meaningful. Graphs are confined to the
// thread that built them; the grad-enable switch is thread-local.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "falldet/common.hpp"

namespace falldet {

struct TensorNode {
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    std::vector<double> grad;  // sized on first contribution
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Reads this->grad, accumulates into parents' grads.
    std::function<void(TensorNode&)> backprop;

    int64_t numel() const { return int64_t(rows) * cols; }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

    static Tensor zeros(int rows, int cols);
    static Tensor full(int rows, int cols, double fill);
    static Tensor from_vector(int rows, int cols, std::vector<double> data);
    // Fan-in scaled uniform init in [-scale, scale].
    static Tensor uniform(int rows, int cols, Rng& rng, double scale);

    bool defined() const { return node_ != nullptr; }
    int rows() const { return node_->rows; }
    int cols() const { return node_->cols; }
    int64_t numel() const { return node_->numel(); }
    std::span<const double> value() const { return node_->value; }
    // Mutating values is only legitimate for leaves (parameters, inputs).
    std::span<double> value_mut() { return node_->value; }
    std::span<const double> grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool flag) {
        node_->requires_grad = flag;
        return *this;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

    double item() const {
        if (numel() != 1) throw ShapeMismatch("item: tensor is not a scalar");
        return node_->value[0];
    }

    // Reverse sweep from a scalar; seeds d(this)/d(this) = 1.
    void backward() const;

    std::shared_ptr<TensorNode> node() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

// RAII grad-mode switch (thread-local). Inference paths disable graph
// construction entirely.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Throws NumericFault if any entry is NaN or infinite. Called by every op
// on its freshly computed output.
void check_finite(const char* op, std::span<const double> values);

}  // namespace falldet
