#pragma once

#include <optional>
#include <string>
#include <vector>

#include "xlvin/nn/ops.hpp"
#include "xlvin/nn/params.hpp"

namespace xlvin::nn {

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng);

class Linear {
public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng);

    // x[n,in] -> [n,out]
    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
    void register_params(ParamSet& params, const std::string& prefix) const;

    std::size_t in_features() const { return weight.size(0); }
    std::size_t out_features() const { return weight.size(1); }

    Tensor weight;  // [in,out]
    Tensor bias;    // [out]
};

struct LayerNorm {
    LayerNorm() = default;
    explicit LayerNorm(std::size_t d) : gain(Tensor::full({d}, Scalar(1))), bias(Tensor::zeros({d})) {}

    Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
    void register_params(ParamSet& params, const std::string& prefix) const;

    Tensor gain;
    Tensor bias;
};

// Stack of Linear layers with ReLU between them (none after the last).
// Optionally applies layer normalization to the output of one hidden layer,
// before its activation.
class Mlp {
public:
    Mlp() = default;
    Mlp(const std::vector<std::size_t>& dims, Rng& rng, std::optional<std::size_t> layer_norm_after = std::nullopt);

    Tensor operator()(const Tensor& x) const;
    void register_params(ParamSet& params, const std::string& prefix) const;

    std::size_t in_features() const { return layers_.front().in_features(); }
    std::size_t out_features() const { return layers_.back().out_features(); }
    const std::vector<Linear>& layers() const { return layers_; }

private:
    std::vector<Linear> layers_;
    std::optional<std::size_t> norm_index_;
    LayerNorm norm_;
};

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::size_t in_channels, std::size_t out_channels, Rng& rng);

    Tensor operator()(const Tensor& x) const { return conv2d(x, kernels); }
    void register_params(ParamSet& params, const std::string& prefix) const;

    Tensor kernels;  // [O,C,3,3]
};

class BatchNorm2d {
public:
    BatchNorm2d() = default;
    explicit BatchNorm2d(std::size_t channels);

    Tensor operator()(const Tensor& x, bool training) const;
    // Running statistics are registered as non-trainable buffers.
    void register_params(ParamSet& params, const std::string& prefix) const;

    Tensor gamma;
    Tensor beta;
    mutable BatchNormStats stats;
};

} // namespace xlvin::nn
