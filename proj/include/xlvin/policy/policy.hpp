#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlvin/envs/env.hpp"
#include "xlvin/executor/executor.hpp"
#include "xlvin/transe/transe.hpp"

namespace xlvin::policy {

using nn::Rng;
using nn::Tensor;

// (A^(K+1) - 1) / (A - 1) nodes for A >= 2, K + 1 for A = 1.
std::size_t tree_node_count(std::size_t n_actions, std::size_t depth);
std::size_t tree_edge_count(std::size_t n_actions, std::size_t depth);

// Breadth-first latent expansion of one or more roots. Nodes are stored
// level-major: all roots, then every depth-1 node, and so on, so the nodes of
// depth <= d form the prefix [0, level_ends[d]). The children of the j-th
// node of level d are the consecutive rows A*j .. A*j + A - 1 of level d + 1.
struct LatentGraph {
    std::size_t n_roots = 0;
    std::size_t n_actions = 0;
    std::size_t depth = 0;
    Tensor embeddings;  // [N, k]
    std::vector<std::vector<std::size_t>> levels;
    std::vector<std::size_t> level_ends;
    std::vector<std::size_t> parent;  // per edge
    std::vector<std::size_t> child;
    std::vector<std::size_t> action;

    std::size_t n_nodes() const { return level_ends.empty() ? 0 : level_ends.back(); }
    std::size_t n_edges() const { return parent.size(); }
};

// roots [B, k]; child = parent + T(parent, a) for every node above depth K.
LatentGraph expand_tree(const Tensor& roots, std::size_t depth, const transe::TransitionModel& transition);

struct PolicyConfig {
    transe::EncoderConfig encoder;
    std::size_t n_actions = 2;
    std::size_t depth = 2;
    std::size_t transition_hidden = 64;
    std::size_t head_hidden = 64;
    // false gives the model-free baseline: no transition model, no executor,
    // and a zero vector in place of the planned embedding.
    bool planning = true;
    // Discount fed to the edge lift at deployment, edge input (0, discount).
    double edge_discount = 0.9;
};

struct PolicyOutput {
    Tensor logits;  // [B, A]
    Tensor value;   // [B, 1]
    Tensor h;       // [B, k]
    Tensor chi;     // [B, k]
};

class XlvinPolicy {
public:
    XlvinPolicy() = default;
    XlvinPolicy(const PolicyConfig& config, Rng& rng);

    // input is an encoder batch. `training` selects batch statistics in the
    // maze encoder; policy optimization uses running statistics.
    PolicyOutput plan(const Tensor& input, bool training = false) const;
    PolicyOutput plan(const envs::Observation& obs) const;

    // Copies parameter values from a pretrained model. The executor must be
    // frozen and match the latent size.
    void load_transe(const transe::TranseModel& pretrained);
    void load_executor(const executor::Executor& pretrained);

    // Encoder, transition, actor and value heads are trainable; the executor
    // is registered frozen. The baseline registers neither transition nor
    // executor.
    nn::ParamSet params() const;

    const PolicyConfig& config() const { return config_; }
    const transe::TranseModel& transe() const { return model_; }
    const executor::Executor& executor() const { return executor_; }
    std::size_t latent_dim() const { return config_.encoder.latent_dim; }

private:
    PolicyConfig config_;
    transe::TranseModel model_;
    executor::Executor executor_;
    nn::Mlp actor_;
    nn::Mlp critic_;
};

} // namespace xlvin::policy
