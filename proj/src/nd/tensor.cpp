#include "atss/nd/tensor.hpp"

#include "atss/error.hpp"

#include <cmath>

namespace atss::nd {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

void require_finite(std::span<const double> values, const char* where) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + where);
    }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
    }
    auto n = std::make_shared<Node>();
    n->value.assign(numel(shape), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (values.size() != numel(shape)) {
        throw ShapeError("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                         to_string(shape));
    }
    auto t = zeros(std::move(shape), requires_grad);
    t.node_->value = std::move(values);
    return t;
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
}

Tensor Tensor::clone() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->value = node_->value;
    n->requires_grad = node_->requires_grad;
    return Tensor(std::move(n));
}

void Tape::record(const Tensor& output, std::vector<std::shared_ptr<Node>> inputs, std::function<void()> backward) {
    entries_.push_back({output.node(), std::move(inputs), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) throw ShapeError("backward() needs a scalar root");
    if (!loss.requires_grad()) throw Error("backward() root was not produced on a recording tape");
    bool on_tape = false;
    for (auto& e : entries_) {
        e.output->grad.clear();
        on_tape = on_tape || e.output == loss.node();
    }
    if (!on_tape) throw Error("backward() root is not on this tape");

    loss.node()->grad.assign(1, 1.0);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->output->grad.empty()) continue;
        require_finite(it->output->grad, "backward pass");
        it->backward();
    }
    for (const auto& e : entries_) {
        for (const auto& in : e.inputs) {
            if (in->requires_grad) require_finite(in->grad, "accumulated gradient");
        }
    }
}

}  // namespace atss::nd
