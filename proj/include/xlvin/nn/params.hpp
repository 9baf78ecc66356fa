#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "xlvin/nn/tensor.hpp"

namespace xlvin::nn {

struct Parameter {
    std::string name;  // dot-separated path, unique within a ParamSet
    Tensor tensor;
    bool trainable = true;
    bool buffer = false;  // state such as running statistics; never optimized
};

using GradMap = std::map<std::string, std::vector<Scalar>>;

// Ordered collection of named parameters. Holds aliases to the tensors the
// owning modules use, so optimizer writes are visible to them.
class ParamSet {
public:
    void add(std::string name, Tensor tensor, bool trainable = true);
    void add_buffer(std::string name, Tensor tensor);
    void extend(const ParamSet& other);

    const std::vector<Parameter>& items() const { return items_; }
    std::vector<Parameter>& items() { return items_; }
    const Parameter* find(const std::string& name) const;
    Parameter* find(const std::string& name);
    bool contains(const std::string& name) const { return find(name) != nullptr; }
    std::size_t size() const { return items_.size(); }

    // Marks every parameter whose name starts with prefix as (non-)trainable
    // and toggles requires-grad accordingly.
    void set_trainable(const std::string& prefix, bool trainable);

    // Copies values (not aliases) from params with matching names.
    void copy_values_from(const ParamSet& other);
    std::size_t total_elements() const;

private:
    std::vector<Parameter> items_;
};

// Runs backward(loss) and returns one gradient array per parameter, zeros for
// parameters the loss does not reach. Leaf gradients are reset afterwards.
GradMap gradients(const Tensor& loss, const ParamSet& params);

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
Scalar clip_grad_norm(GradMap& grads, Scalar max_norm);

// 64-bit FNV-1a over names, shapes and raw bytes of the selected parameters.
std::uint64_t params_hash(const ParamSet& params, const std::string& prefix = "");

using Rng = std::mt19937_64;

} // namespace xlvin::nn
