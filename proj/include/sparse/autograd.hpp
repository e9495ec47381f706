#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
//
// Every backward rule is itself written with differentiable ops, so gradients
// can be differentiated again (needed by the critic's gradient penalty). When
// create_graph is off the backward pass runs with recording disabled and costs
// no more than a plain backward.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sparse::ag {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

class Function;

struct Node {
    std::vector<double> data;
    Shape shape;
    bool requires_grad = false;
    std::shared_ptr<Function> grad_fn;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor ones(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    static Tensor from(Shape shape, std::vector<double> values);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t dim() const { return static_cast<std::int64_t>(node_->shape.size()); }
    std::int64_t size(std::int64_t axis) const;
    std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }

    std::span<const double> data() const { return node_->data; }
    // Direct write access; only meaningful on leaves (parameters, inputs).
    std::span<double> mutable_data() { return node_->data; }
    const std::vector<double>& values() const { return node_->data; }
    double item() const;
    double at(std::int64_t flat_index) const { return node_->data[static_cast<std::size_t>(flat_index)]; }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    Tensor& set_requires_grad(bool on);
    const std::shared_ptr<Function>& grad_fn() const { return node_->grad_fn; }
    bool is_leaf() const { return node_->grad_fn == nullptr; }

    // Copy of the values with no history.
    Tensor detach() const;
    Node* id() const { return node_.get(); }

    // Internal: construct an op result. Drops `fn` unless recording is on and
    // some input requires grad.
    static Tensor make_result(Shape shape, std::vector<double> values, std::shared_ptr<Function> fn);

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;
};

class Function {
public:
    virtual ~Function() = default;
    virtual const char* name() const = 0;
    // One gradient per entry of `inputs`; entries not flagged in `needed` may
    // be left undefined.
    virtual std::vector<Tensor> backward(const Tensor& grad_output, const std::vector<bool>& needed) = 0;

    std::vector<Tensor> inputs;
};

// Thread-local switch for graph recording.
class GradMode {
public:
    static bool enabled();
    static void set_enabled(bool on);
};

class NoGradGuard {
public:
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

class GradModeGuard {
public:
    explicit GradModeGuard(bool on) : prev_(GradMode::enabled()) { GradMode::set_enabled(on); }
    ~GradModeGuard() { GradMode::set_enabled(prev_); }
    GradModeGuard(const GradModeGuard&) = delete;
    GradModeGuard& operator=(const GradModeGuard&) = delete;

private:
    bool prev_;
};

// d(output)/d(inputs) contracted with grad_output (ones when undefined).
// Inputs unreachable from `output` get zero tensors. With create_graph the
// returned gradients carry history and can be differentiated again.
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         const Tensor& grad_output = Tensor(), bool create_graph = false);

}  // namespace sparse::ag
