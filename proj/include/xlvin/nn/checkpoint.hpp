#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlvin/nn/adam.hpp"
#include "xlvin/nn/params.hpp"

namespace xlvin::nn {

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<Scalar> data;
    bool trainable = true;
    bool buffer = false;
};

// On-disk layout:
//   8 bytes   magic "XLVCKPT1"
//   8 bytes   manifest length L (uint64, little-endian)
//   L bytes   UTF-8 JSON manifest
//   rest      raw little-endian float arrays; manifest offsets are relative
//             to the start of this section
struct Checkpoint {
    std::vector<NamedArray> arrays;
    std::optional<AdamState> adam;
    nlohmann::json metadata = nlohmann::json::object();

    const NamedArray* find(const std::string& name) const;
    bool has_prefix(const std::string& prefix) const;
};

Checkpoint make_checkpoint(const ParamSet& params, const AdamState* adam = nullptr,
                           nlohmann::json metadata = nlohmann::json::object());
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies stored values into every parameter of `params` whose name starts
// with prefix. Throws if one of them is absent or has a different shape.
void restore(const Checkpoint& ckpt, ParamSet& params, const std::string& prefix = "");

} // namespace xlvin::nn
