#include "xlvin/nn/params.hpp"

#include <cmath>
#include <cstring>

namespace xlvin::nn {

void ParamSet::add(std::string name, Tensor tensor, bool trainable) {
    require(!name.empty(), "parameter name must not be empty");
    require(!contains(name), "duplicate parameter name: " + name);
    tensor.set_requires_grad(trainable);
    items_.push_back({std::move(name), std::move(tensor), trainable});
}

void ParamSet::add_buffer(std::string name, Tensor tensor) {
    add(std::move(name), std::move(tensor), false);
    items_.back().buffer = true;
}

void ParamSet::extend(const ParamSet& other) {
    for (const auto& p : other.items_) {
        require(!contains(p.name), "duplicate parameter name: " + p.name);
        items_.push_back(p);
    }
}

const Parameter* ParamSet::find(const std::string& name) const {
    for (const auto& p : items_)
        if (p.name == name) return &p;
    return nullptr;
}

Parameter* ParamSet::find(const std::string& name) {
    for (auto& p : items_)
        if (p.name == name) return &p;
    return nullptr;
}

void ParamSet::set_trainable(const std::string& prefix, bool trainable) {
    for (auto& p : items_) {
        if (p.buffer || p.name.rfind(prefix, 0) != 0) continue;
        p.trainable = trainable;
        p.tensor.set_requires_grad(trainable);
    }
}

void ParamSet::copy_values_from(const ParamSet& other) {
    for (auto& p : items_) {
        const Parameter* src = other.find(p.name);
        if (!src) continue;
        require(src->tensor.shape() == p.tensor.shape(), "shape mismatch when copying parameter " + p.name);
        auto dst = p.tensor.mutable_data();
        std::copy(src->tensor.data().begin(), src->tensor.data().end(), dst.begin());
    }
}

std::size_t ParamSet::total_elements() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.tensor.numel();
    return n;
}

GradMap gradients(const Tensor& loss, const ParamSet& params) {
    for (const auto& p : params.items()) p.tensor.zero_grad();
    backward(loss);
    GradMap out;
    for (const auto& p : params.items()) {
        const auto& t = p.tensor;
        if (t.has_grad())
            out[p.name] = std::vector<Scalar>(t.grad().begin(), t.grad().end());
        else
            out[p.name] = std::vector<Scalar>(t.numel(), Scalar(0));
        t.zero_grad();
    }
    return out;
}

Scalar clip_grad_norm(GradMap& grads, Scalar max_norm) {
    Scalar sq = 0;
    for (const auto& [_, g] : grads)
        for (auto v : g) sq += v * v;
    const Scalar norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        const Scalar f = max_norm / (norm + Scalar(1e-6));
        for (auto& [_, g] : grads)
            for (auto& v : g) v *= f;
    }
    return norm;
}

std::uint64_t params_hash(const ParamSet& params, const std::string& prefix) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& p : params.items()) {
        if (p.name.rfind(prefix, 0) != 0) continue;
        mix(p.name.data(), p.name.size());
        for (auto d : p.tensor.shape()) mix(&d, sizeof d);
        mix(p.tensor.data().data(), p.tensor.numel() * sizeof(Scalar));
    }
    return h;
}

} // namespace xlvin::nn
