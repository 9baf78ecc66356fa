#include "xlvin/nn/adam.hpp"

#include <cmath>

namespace xlvin::nn {

void adam_step(ParamSet& params, const GradMap& grads, AdamState& state, const AdamConfig& config) {
    for (const auto& p : params.items()) {
        if (!p.trainable || p.buffer) continue;
        auto it = grads.find(p.name);
        require(it != grads.end(), "adam_step: missing gradient for trainable parameter " + p.name);
        require(it->second.size() == p.tensor.numel(), "adam_step: gradient size mismatch for " + p.name);
    }
    state.step += 1;
    const auto t = static_cast<Scalar>(state.step);
    const Scalar bc1 = 1 - std::pow(config.beta1, t);
    const Scalar bc2 = 1 - std::pow(config.beta2, t);
    for (auto& p : params.items()) {
        if (!p.trainable || p.buffer) continue;
        const auto& g = grads.at(p.name);
        auto& m = state.first_moment[p.name];
        auto& v = state.second_moment[p.name];
        if (m.empty()) m.assign(g.size(), Scalar(0));
        if (v.empty()) v.assign(g.size(), Scalar(0));
        auto w = p.tensor.mutable_data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = config.beta1 * m[i] + (1 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1 - config.beta2) * g[i] * g[i];
            const Scalar mhat = m[i] / bc1;
            const Scalar vhat = v[i] / bc2;
            w[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

} // namespace xlvin::nn
