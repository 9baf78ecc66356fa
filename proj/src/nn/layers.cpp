#include "xlvin/nn/layers.hpp"

#include <cmath>

namespace xlvin::nn {

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
    const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<Scalar> v(numel_of(shape));
    for (auto& x : v) x = static_cast<Scalar>(dist(rng));
    return Tensor::from(std::move(shape), std::move(v));
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(uniform_init({in, out}, in, rng)), bias(uniform_init({out}, in, rng)) {}

void Linear::register_params(ParamSet& params, const std::string& prefix) const {
    params.add(prefix + ".weight", weight);
    params.add(prefix + ".bias", bias);
}

void LayerNorm::register_params(ParamSet& params, const std::string& prefix) const {
    params.add(prefix + ".gain", gain);
    params.add(prefix + ".bias", bias);
}

Mlp::Mlp(const std::vector<std::size_t>& dims, Rng& rng, std::optional<std::size_t> layer_norm_after)
    : norm_index_(layer_norm_after) {
    require(dims.size() >= 2, "Mlp needs at least input and output sizes");
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) layers_.emplace_back(dims[i], dims[i + 1], rng);
    if (norm_index_) {
        require(*norm_index_ + 1 < layers_.size(), "layer norm must follow a hidden layer");
        norm_ = LayerNorm(dims[*norm_index_ + 1]);
    }
}

Tensor Mlp::operator()(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i](h);
        if (i + 1 == layers_.size()) break;
        if (norm_index_ && *norm_index_ == i) h = norm_(h);
        h = relu(h);
    }
    return h;
}

void Mlp::register_params(ParamSet& params, const std::string& prefix) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].register_params(params, prefix + "." + std::to_string(i));
    if (norm_index_) norm_.register_params(params, prefix + ".norm");
}

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, Rng& rng)
    : kernels(uniform_init({out_channels, in_channels, 3, 3}, in_channels * 9, rng)) {}

void Conv2d::register_params(ParamSet& params, const std::string& prefix) const {
    params.add(prefix + ".kernels", kernels);
}

BatchNorm2d::BatchNorm2d(std::size_t channels)
    : gamma(Tensor::full({channels}, Scalar(1))), beta(Tensor::zeros({channels})), stats(channels) {}

Tensor BatchNorm2d::operator()(const Tensor& x, bool training) const {
    return batch_norm(x, gamma, beta, stats, training);
}

void BatchNorm2d::register_params(ParamSet& params, const std::string& prefix) const {
    params.add(prefix + ".gamma", gamma);
    params.add(prefix + ".beta", beta);
    params.add_buffer(prefix + ".running_mean", stats.running_mean);
    params.add_buffer(prefix + ".running_var", stats.running_var);
}

} // namespace xlvin::nn
