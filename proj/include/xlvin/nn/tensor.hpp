#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xlvin/errors.hpp"

namespace xlvin::nn {

#ifdef XLVIN_FLOAT32
using Scalar = float;
inline constexpr const char* kScalarDtype = "f32";
#else
using Scalar = double;
inline constexpr const char* kScalarDtype = "f64";
#endif

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the differentiation graph. Values are immutable once the
// producing op returns; only leaves (parameters) are written by optimizers.
struct Node {
    Shape shape;
    std::vector<Scalar> value;
    std::vector<Scalar> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates into parents' grads.
    std::function<void(Node&)> backward_fn;

    std::vector<Scalar>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), Scalar(0));
        return grad;
    }
};

} // namespace detail

// Shared handle to a graph node. Copying a Tensor aliases the same storage;
// use clone() for an independent copy.
class Tensor {
public:
    Tensor();

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, Scalar v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<Scalar> data, bool requires_grad = false);
    static Tensor scalar(Scalar v, bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::size_t dim() const { return node_->shape.size(); }
    std::size_t size(std::size_t axis) const;
    std::size_t numel() const { return node_->value.size(); }

    std::span<const Scalar> data() const { return node_->value; }
    // Writable view for leaves. Ops never call this on their inputs.
    std::span<Scalar> mutable_data() { return node_->value; }
    Scalar item() const;
    Scalar at(std::size_t i) const { return node_->value[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on);
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const Scalar> grad() const { return node_->grad; }
    void zero_grad() const { node_->grad.clear(); }

    Tensor detach() const;
    Tensor clone() const;
    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate into
// Tensor::grad(); intermediate gradients are released afterwards.
void backward(const Tensor& loss);

} // namespace xlvin::nn
