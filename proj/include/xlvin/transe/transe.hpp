#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlvin/envs/env.hpp"
#include "xlvin/nn/adam.hpp"
#include "xlvin/nn/layers.hpp"

namespace xlvin::transe {

using nn::Rng;
using nn::Tensor;

enum class EncoderMode { MazeCnn, ControlMlp };

struct EncoderConfig {
    EncoderMode mode = EncoderMode::ControlMlp;
    // Observation shape without the batch axis: {dim} or {channels, h, w}.
    std::vector<std::size_t> observation_shape{4};
    std::size_t latent_dim = 50;
    std::size_t hidden = 64;
    // Control inputs are mapped to (x - offset) * scale before the MLP.
    std::vector<double> input_offset;
    std::vector<double> input_scale;
};

// Maze CNN: 3 x (conv3x3, batch norm, ReLU), global average pooling, MLP.
EncoderConfig maze_encoder_config(std::size_t channels = 128, std::size_t latent_dim = 10);
// Control MLP with per-environment hidden width (64 / 32 / 16) and fixed
// input normalization derived from each system's physical ranges.
EncoderConfig control_encoder_config(const std::string& env_name, std::size_t latent_dim = 50);

class Encoder {
public:
    Encoder() = default;
    Encoder(const EncoderConfig& config, Rng& rng);

    // Packs raw observations into the batched input tensor, applying the
    // fixed input normalization. Throws on a shape mismatch.
    Tensor batch(const std::vector<envs::Observation>& obs) const;
    Tensor batch(const std::vector<const envs::Observation*>& obs) const;

    // [N, ...] -> [N, k]. `training` selects batch statistics in batch norm.
    Tensor operator()(const Tensor& input, bool training) const;

    void register_params(nn::ParamSet& params, const std::string& prefix = "encoder") const;
    const EncoderConfig& config() const { return config_; }
    std::size_t latent_dim() const { return config_.latent_dim; }

private:
    EncoderConfig config_;
    std::vector<nn::Conv2d> convs_;
    std::vector<nn::BatchNorm2d> norms_;
    nn::Mlp head_;
    Tensor offset_;
    Tensor scale_;
};

// T(h, a): MLP over [h || one-hot(a)], hidden F, layer norm after the second
// layer. Predicted successor embedding is h + T(h, a).
class TransitionModel {
public:
    TransitionModel() = default;
    TransitionModel(std::size_t latent_dim, std::size_t n_actions, std::size_t hidden, Rng& rng);

    // h[N,k], one action per row -> translation [N,k].
    Tensor operator()(const Tensor& h, const std::vector<std::size_t>& actions) const;
    // h[N,k] -> translations for every action, row n * A + a.
    Tensor all_actions(const Tensor& h) const;

    void register_params(nn::ParamSet& params, const std::string& prefix = "transition") const;
    std::size_t n_actions() const { return n_actions_; }
    std::size_t latent_dim() const { return latent_dim_; }

private:
    Tensor one_hot(const std::vector<std::size_t>& actions) const;

    std::size_t latent_dim_ = 0;
    std::size_t n_actions_ = 0;
    nn::Mlp mlp_;
};

inline constexpr double kMargin = 1.0;

// Squared Euclidean distance per row: [N,k] x [N,k] -> [N].
Tensor squared_distance(const Tensor& a, const Tensor& b);

// mean_n d(z_s + delta, z_next) + max(0, margin - d(z_neg, z_next)).
Tensor transe_loss(const Tensor& z_s, const Tensor& delta, const Tensor& z_next, const Tensor& z_neg,
                   double margin = kMargin);

// Uniform with replacement from [0, pool_size).
std::vector<std::size_t> sample_negatives(std::size_t pool_size, std::size_t count, Rng& rng);

template <typename T>
std::vector<T> sample_negatives(const std::vector<T>& pool, std::size_t count, Rng& rng) {
    std::vector<T> out;
    out.reserve(count);
    for (auto i : sample_negatives(pool.size(), count, rng)) out.push_back(pool[i]);
    return out;
}

struct TranseModel {
    Encoder encoder;
    TransitionModel transition;

    TranseModel() = default;
    TranseModel(const EncoderConfig& config, std::size_t n_actions, std::size_t transition_hidden, Rng& rng);

    nn::ParamSet params() const;
};

struct TransitionData {
    std::vector<envs::Observation> obs;
    std::vector<std::size_t> actions;
    std::vector<envs::Observation> next_obs;

    std::size_t size() const { return actions.size(); }
};

// Uniform-random policy; episodes are reset with seeds drawn from `seed`.
TransitionData collect_random_transitions(envs::Env& env, std::size_t n, std::uint64_t seed);

// Loss on rows `idx` of `data`, negatives drawn from the same rows. s and s'
// are encoded in one pass so batch statistics are shared.
Tensor transe_objective(const TranseModel& model, const TransitionData& data, const std::vector<std::size_t>& idx,
                        Rng& rng, bool training, double margin = kMargin);

struct PretrainConfig {
    std::size_t n_transitions = 10000;
    std::size_t epochs = 50;
    std::size_t batch_size = 512;
    double lr = 1e-3;
    double margin = kMargin;
    std::uint64_t seed = 0;
};

struct PretrainReport {
    double initial_loss = 0.0;  // full-data loss before the first step
    double final_loss = 0.0;    // full-data loss after the last epoch
    std::vector<double> epoch_losses;
};

// Adam on the TransE objective over pre-collected transitions.
PretrainReport pretrain_transe(TranseModel& model, const TransitionData& data, const PretrainConfig& config);

// Mean loss over all of `data` in batches, evaluation mode.
double evaluate_transe(const TranseModel& model, const TransitionData& data, std::uint64_t seed,
                       std::size_t batch_size = 512, double margin = kMargin);

} // namespace xlvin::transe
