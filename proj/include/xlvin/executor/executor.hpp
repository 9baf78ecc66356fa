#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlvin/mdp/mdp.hpp"
#include "xlvin/nn/layers.hpp"

namespace xlvin::executor {

using nn::Rng;
using nn::Tensor;

inline constexpr std::size_t kEdgeDim = 16;

// Directed graph for message passing. Messages flow from dst back into src,
// the direction of a Bellman backup: node i aggregates over its successors.
struct ExecGraph {
    std::size_t n_nodes = 0;
    std::vector<std::size_t> src;
    std::vector<std::size_t> dst;
    // Raw edge inputs (reward, discount) per edge, row-major [E,2].
    std::vector<double> edge_inputs;
    std::size_t root = 0;

    std::size_t n_edges() const { return src.size(); }
    void add_edge(std::size_t from, std::size_t to, double reward, double discount);
    std::vector<std::vector<std::size_t>> successors() const;
};

// Throws ContractViolation on bad endpoints or mismatched arrays.
void validate(const ExecGraph& g);

// One node per state, one edge s -> s' per action of a deterministic MDP,
// edge input (R(s,a), discount).
ExecGraph graph_from_mdp(const mdp::DiscreteMdp& mdp);

class Executor {
public:
    Executor() = default;
    Executor(std::size_t latent_dim, Rng& rng, std::size_t edge_dim = kEdgeDim);

    // [E,2] raw (reward, discount) -> [E, edge_dim]
    Tensor lift_edges(const std::vector<double>& edge_inputs) const;
    // Edge features for a latent tree: the same lift of (0, discount) on
    // every edge.
    Tensor deployment_edges(std::size_t n_edges, double discount) const;

    // One synchronous step: m_i = max over edges (i -> j) of M(h_i, h_j, e_ij),
    // h_i <- LN(U(h_i, m_i)). Only nodes [0, n_active) are updated and
    // returned; edges whose source lies outside that prefix are skipped.
    Tensor mp_step(const Tensor& h, const std::vector<std::size_t>& src, const std::vector<std::size_t>& dst,
                   const Tensor& edges, std::size_t n_active) const;
    Tensor mp_step(const ExecGraph& g, const Tensor& h) const;

    // K steps over the whole graph; returns every node embedding.
    Tensor run(const ExecGraph& g, const Tensor& h, std::size_t k_steps) const;

    // Pretraining-only encoders between scalar values and latents.
    Tensor lift_values(const Tensor& v) const;  // [N,1] -> [N,k]
    Tensor readout(const Tensor& h) const;      // [N,k] -> [N,1]

    // Frozen executors register every tensor as non-trainable, which also
    // turns off their requires-grad flag.
    void register_params(nn::ParamSet& params, const std::string& prefix = "executor") const;
    std::size_t latent_dim() const { return latent_dim_; }
    bool frozen() const { return frozen_; }
    void freeze() { frozen_ = true; }

private:
    std::size_t latent_dim_ = 0;
    std::size_t edge_dim_ = 0;
    bool frozen_ = false;
    nn::Mlp message_;
    nn::Mlp update_;
    nn::LayerNorm norm_;
    nn::Mlp edge_lift_;
    nn::Mlp value_lift_;
    nn::Mlp readout_;
};

// Same as run() but computes χ of every root only: at step t the nodes
// deeper than K - t can no longer influence a root, so they are dropped.
// Requires a level-major node order where nodes of depth <= d form a prefix
// of length level_ends[d]; returns the first level_ends[0] rows.
Tensor run_pruned(const Executor& ex, const Tensor& h, const std::vector<std::size_t>& src,
                  const std::vector<std::size_t>& dst, const Tensor& edges, const std::vector<std::size_t>& level_ends);

struct ExecutorSample {
    std::size_t trajectory = 0;
    std::size_t step = 0;  // predicts iterates[step + 1] from iterates[step]
};

// Rewards and values of each MDP are divided by its largest |R(s,a)| before
// lifting and predictions are scaled back. The Bellman backup commutes with
// this scaling, and it keeps rare high-value MDPs inside the trained range.
struct ExecutorDataset {
    std::vector<mdp::ViTrajectory> trajectories;
    std::vector<ExecGraph> graphs;  // edge inputs hold the scaled rewards
    std::vector<double> scales;
    std::vector<ExecutorSample> samples;
};

ExecutorDataset make_executor_dataset(std::vector<mdp::ViTrajectory> trajectories);

struct ExecutorTrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 32;  // (graph, step) samples per Adam step
    double lr = 2e-3;
    double final_lr = 1e-5;  // cosine decay from lr over all epochs
    std::uint64_t seed = 0;
};

struct ExecutorReport {
    double initial_mse = 0.0;
    double final_mse = 0.0;
    std::vector<double> epoch_mse;
};

// Trains every executor parameter on single VI steps with mean-squared
// error, then freezes the executor. Throws if it is already frozen.
ExecutorReport pretrain_executor(Executor& ex, const ExecutorDataset& data, const ExecutorTrainConfig& config);

// One predicted VI step V_t -> V_{t+1} on a deterministic MDP, with the same
// reward scaling as pretraining.
mdp::ValueTable predict_step(const Executor& ex, const mdp::DiscreteMdp& mdp, const mdp::ValueTable& v);

// Mean squared error of one predicted step over every sample and state.
double executor_mse(const Executor& ex, const ExecutorDataset& data, std::size_t batch_size = 64);
// Same metric for the predictor V_{t+1} := V_t.
double copy_baseline_mse(const ExecutorDataset& data);

} // namespace xlvin::executor
