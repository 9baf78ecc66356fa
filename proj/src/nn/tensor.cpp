#include "xlvin/nn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace xlvin::nn {

std::size_t numel_of(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), Scalar(0), requires_grad);
}

Tensor Tensor::full(Shape shape, Scalar v, bool requires_grad) {
    auto n = numel_of(shape);
    return from(std::move(shape), std::vector<Scalar>(n, v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<Scalar> data, bool requires_grad) {
    for (auto d : shape) require(d > 0, "tensor dimensions must be positive, got " + shape_str(shape));
    require(numel_of(shape) == data.size(),
            "data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(Scalar v, bool requires_grad) { return from({1}, {v}, requires_grad); }

std::size_t Tensor::size(std::size_t axis) const {
    require(axis < dim(), "axis out of range");
    return node_->shape[axis];
}

Scalar Tensor::item() const {
    require(numel() == 1, "item() needs a single-element tensor, got " + shape_str(shape()));
    return node_->value[0];
}

void Tensor::set_requires_grad(bool on) {
    require(!node_->backward_fn, "requires_grad can only be toggled on leaves");
    node_->requires_grad = on;
    if (!on) node_->grad.clear();
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

Tensor Tensor::clone() const {
    Tensor t = from(shape(), node_->value, node_->requires_grad);
    t.node_->grad = node_->grad;
    return t;
}

void backward(const Tensor& loss) {
    require(loss.numel() == 1, "backward needs a scalar loss, got shape " + shape_str(loss.shape()));
    if (!std::isfinite(static_cast<double>(loss.item()))) throw NumericError("loss is not finite");
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    detail::Node* root = loss.node().get();
    root->grad_buffer()[0] += Scalar(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (!n->backward_fn) continue;
        if (!n->grad.empty()) n->backward_fn(*n);
        n->grad.clear();
        n->grad.shrink_to_fit();
    }
    for (auto* n : order) {
        if (n->backward_fn) continue;
        for (auto g : n->grad) {
            if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gradient reached a leaf");
        }
    }
}

} // namespace xlvin::nn
