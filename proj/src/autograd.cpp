#include "sparse/autograd.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "sparse/ops.hpp"

namespace sparse::ag {

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

std::int64_t numel_of(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
    auto node = std::make_shared<Node>();
    node->data.assign(static_cast<std::size_t>(numel_of(shape)), value);
    node->shape = std::move(shape);
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return full({}, value); }

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    if (numel_of(shape) != static_cast<std::int64_t>(values.size())) {
        throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) +
                                    " values do not fit shape " + shape_str(shape));
    }
    auto node = std::make_shared<Node>();
    node->data = std::move(values);
    node->shape = std::move(shape);
    return Tensor(std::move(node));
}

std::int64_t Tensor::size(std::int64_t axis) const {
    if (axis < 0) axis += dim();
    return node_->shape.at(static_cast<std::size_t>(axis));
}

double Tensor::item() const {
    if (numel() != 1) throw std::logic_error("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    if (!is_leaf()) throw std::logic_error("requires_grad can only be set on leaves");
    node_->requires_grad = on;
    return *this;
}

Tensor Tensor::detach() const { return from(node_->shape, node_->data); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::shared_ptr<Function> fn) {
    auto node = std::make_shared<Node>();
    node->data = std::move(values);
    node->shape = std::move(shape);
    if (fn && GradMode::enabled()) {
        bool any = std::any_of(fn->inputs.begin(), fn->inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->grad_fn = std::move(fn);
        }
    }
    return Tensor(std::move(node));
}

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs, const Tensor& grad_output,
                         bool create_graph) {
    std::unordered_set<Node*> targets;
    for (const auto& t : inputs) targets.insert(t.id());

    // Post-order DFS; `reaches` marks nodes with a path to some target.
    std::vector<Tensor> order;
    std::unordered_map<Node*, bool> reaches;
    if (output.requires_grad()) {
        struct Frame {
            Tensor t;
            std::size_t next = 0;
        };
        std::vector<Frame> stack;
        stack.push_back({output});
        reaches[output.id()] = false;
        while (!stack.empty()) {
            Frame& top = stack.back();
            const auto& fn = top.t.grad_fn();
            if (fn && top.next < fn->inputs.size()) {
                const Tensor& child = fn->inputs[top.next++];
                if (child.requires_grad() && !reaches.count(child.id())) {
                    reaches[child.id()] = false;
                    stack.push_back({child});
                }
                continue;
            }
            bool r = targets.count(top.t.id()) > 0;
            if (fn) {
                for (const auto& child : fn->inputs) {
                    if (child.requires_grad() && reaches[child.id()]) r = true;
                }
            }
            reaches[top.t.id()] = r;
            order.push_back(top.t);
            stack.pop_back();
        }
    }

    GradModeGuard mode(create_graph);
    std::unordered_map<Node*, Tensor> grads;
    if (output.requires_grad()) {
        Tensor seed = grad_output.defined() ? grad_output : Tensor::ones(output.shape());
        if (seed.shape() != output.shape()) {
            throw std::invalid_argument("grad: grad_output shape " + shape_str(seed.shape()) +
                                        " does not match output " + shape_str(output.shape()));
        }
        grads[output.id()] = seed;
    }

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Tensor& t = *it;
        auto found = grads.find(t.id());
        if (found == grads.end()) continue;
        const auto& fn = t.grad_fn();
        if (!fn || !reaches[t.id()]) continue;
        std::vector<bool> needed(fn->inputs.size());
        bool any = false;
        for (std::size_t i = 0; i < fn->inputs.size(); ++i) {
            const Tensor& in = fn->inputs[i];
            needed[i] = in.requires_grad() && reaches[in.id()];
            any = any || needed[i];
        }
        if (!any) continue;
        Tensor g = found->second;
        if (!targets.count(t.id())) grads.erase(found);
        std::vector<Tensor> in_grads = fn->backward(g, needed);
        for (std::size_t i = 0; i < fn->inputs.size(); ++i) {
            if (!needed[i] || !in_grads[i].defined()) continue;
            Node* key = fn->inputs[i].id();
            auto slot = grads.find(key);
            if (slot == grads.end()) {
                grads.emplace(key, in_grads[i]);
            } else {
                slot->second = add(slot->second, in_grads[i]);
            }
        }
    }

    std::vector<Tensor> result;
    result.reserve(inputs.size());
    for (const auto& in : inputs) {
        auto found = grads.find(in.id());
        result.push_back(found != grads.end() ? found->second : Tensor::zeros(in.shape()));
    }
    return result;
}

}  // namespace sparse::ag
