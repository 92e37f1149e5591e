#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace atss::nd {

/// Dimensions, outermost first. Empty shape is a scalar with one element.
using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Storage behind a Tensor handle. `grad` stays empty until something
/// accumulates into it; an empty grad reads as all zeros.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

/// Shared handle to a dense row-major float64 array. Copying a Tensor
/// aliases the same storage; use clone() for an independent copy.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

    std::span<const double> value() const { return node_->value; }
    std::span<double> mutable_value() { return node_->value; }
    double item() const;
    double at(std::size_t i, std::size_t j) const { return node_->value[i * node_->shape[1] + j]; }

    /// Accumulated gradient; empty span when nothing has been accumulated.
    std::span<const double> grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad.clear(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    Tensor clone() const;

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    std::shared_ptr<Node> node_;
};

/// Reverse-mode tape. Ops append one entry per output when recording and at
/// least one input requires a gradient; backward() replays entries in exact
/// reverse order. A non-recording tape is used for inference.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    std::size_t size() const { return entries_.size(); }

    void record(const Tensor& output, std::vector<std::shared_ptr<Node>> inputs, std::function<void()> backward);

    /// Seeds d(loss)/d(loss) = 1 and propagates. Gradients of leaf tensors
    /// accumulate across calls; gradients of recorded intermediates are reset
    /// at the start of every call. Throws on a non-scalar or unrecorded root
    /// and on any non-finite gradient.
    void backward(const Tensor& loss);

    void clear() { entries_.clear(); }

private:
    struct Entry {
        std::shared_ptr<Node> output;
        std::vector<std::shared_ptr<Node>> inputs;
        std::function<void()> backward;
    };

    bool recording_;
    std::vector<Entry> entries_;
};

void require_finite(std::span<const double> values, const char* where);

}  // namespace atss::nd
