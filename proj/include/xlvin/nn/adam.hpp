#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xlvin/nn/params.hpp"

namespace xlvin::nn {

struct AdamConfig {
    Scalar lr = 1e-3;
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar eps = 1e-8;
};

struct AdamState {
    std::map<std::string, std::vector<Scalar>> first_moment;
    std::map<std::string, std::vector<Scalar>> second_moment;
    std::uint64_t step = 0;
};

// Bias-corrected Adam update of every trainable, non-buffer parameter.
// Throws ContractViolation when a trainable parameter has no gradient entry.
void adam_step(ParamSet& params, const GradMap& grads, AdamState& state, const AdamConfig& config);

} // namespace xlvin::nn
