#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "xlvin/envs/env.hpp"
#include "xlvin/nn/adam.hpp"
#include "xlvin/policy/policy.hpp"

namespace xlvin::ppo {

using nn::Rng;
using policy::XlvinPolicy;

struct TrainerConfig {
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip = 0.2;
    std::size_t ppo_epochs = 4;
    std::size_t minibatches = 4;
    double value_coef = 0.5;
    double entropy_coef = 0.01;
    double max_grad_norm = 0.5;
    double lr = 2.5e-4;
    double transe_coef = 0.001;
    // Standalone TransE refit on the current buffer after every this many
    // updates; 0 disables it.
    std::size_t transe_refit_every = 0;
    std::size_t transe_refit_epochs = 1;
    // false: a step-cap timeout ends the episode like any terminal state;
    // true: the value of the final state is bootstrapped instead.
    bool bootstrap_truncation = false;
    // Divide rewards by the running std of the discounted return, clipped to
    // +-reward_clip, before computing advantages.
    bool normalize_rewards = true;
    // Batch norm uses batch statistics (and updates its running statistics)
    // in the loss forward pass; rollouts and evaluation always use eval mode.
    bool batch_norm_train = true;
    double reward_clip = 10.0;
    std::size_t n_envs = 8;
    std::uint64_t seed = 0;
    std::string env = "cartpole";
    std::string regime;
};

// Throws ContractViolation naming the first bad field.
void validate(const TrainerConfig& config);

struct EpisodeStats {
    double episode_return = 0.0;
    std::size_t length = 0;
    bool success = false;
    bool truncated = false;
};

// Parallel per-step arrays; episodes are stored contiguously in the order
// they finished.
struct RolloutBuffer {
    std::vector<envs::Observation> obs;
    std::vector<envs::Observation> next_obs;
    std::vector<std::size_t> actions;
    std::vector<double> rewards;
    std::vector<std::uint8_t> dones;      // last step of an episode
    std::vector<std::uint8_t> terminals;  // ended in a terminal state; no bootstrap
    std::vector<double> values;
    std::vector<double> next_values;  // V(s_{t+1}); bootstraps step-cap truncations
    std::vector<double> log_probs;
    std::vector<double> returns;
    std::vector<double> advantages;
    std::vector<EpisodeStats> episodes;

    std::size_t size() const { return actions.size(); }
    std::size_t env_steps() const { return size(); }
    // Throws if the per-step arrays differ in length.
    void check() const;
};

enum class ActionMode { Sample, Greedy, Uniform };

// Starts episode i on env and returns its first observation.
using EpisodeStart = std::function<envs::Observation(envs::Env& env, std::size_t episode)>;

// Plays n episodes with the pool's environments stepping in lockstep and one
// batched policy call per step. Deterministic given rng and the start rule.
RolloutBuffer run_episodes(const XlvinPolicy& policy, const std::vector<envs::Env*>& pool, std::size_t n_episodes,
                           const EpisodeStart& start, ActionMode mode, Rng& rng);

// run_episodes with episode seeds drawn from rng.
RolloutBuffer collect_rollouts(const XlvinPolicy& policy, const std::vector<envs::Env*>& pool,
                               std::size_t n_trajectories, Rng& rng, ActionMode mode = ActionMode::Sample);

// delta_t = r_t + gamma V(s_{t+1}) (1 - terminal_t) - V(s_t),
// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}, returns = A + V.
void compute_gae(RolloutBuffer& buffer, double gamma, double lambda);

// Running scale of discounted returns across rollouts (mean and variance
// merged batch-wise, starting from variance 1 with a tiny prior count).
class RewardNormalizer {
public:
    RewardNormalizer(double gamma, double clip);
    // Updates the statistics with this buffer's discounted returns, then
    // rescales its rewards in place. Episode returns are left untouched.
    void apply(RolloutBuffer& buffer);
    double scale() const;

private:
    double gamma_, clip_;
    double count_ = 1e-4, mean_ = 0.0, var_ = 1.0;
};

// Applies the timeout rule of config (see bootstrap_truncation), then GAE.
void prepare_advantages(RolloutBuffer& buffer, const TrainerConfig& config);

// Mean 0 and population std 1; only centres when the spread is ~0.
std::vector<double> normalize_advantages(const std::vector<double>& advantages);

// Recomputes values, next values and log-probabilities under the current
// policy, then GAE. Used when a fixed buffer is trained on repeatedly.
void refresh_buffer(const XlvinPolicy& policy, RolloutBuffer& buffer, const TrainerConfig& config);

struct LossTerms {
    nn::Tensor total;
    double policy_loss = 0.0;  // -mean clipped surrogate
    double surrogate = 0.0;    // mean unclipped ratio * advantage
    double value_loss = 0.0;
    double entropy = 0.0;
    double transe_loss = 0.0;
    double clip_fraction = 0.0;
};

// PPO objective on rows idx: clipped surrogate + value_coef * value MSE
// - entropy_coef * entropy + transe_coef * TransE loss (planning agents only,
// negatives from the same rows).
LossTerms ppo_loss(const XlvinPolicy& policy, const RolloutBuffer& buffer, const std::vector<std::size_t>& idx,
                   const std::vector<double>& advantages, const TrainerConfig& config, Rng& rng);

struct UpdateReport {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double transe_loss = 0.0;
    double surrogate = 0.0;
    std::size_t steps = 0;
};

// ppo_epochs passes over the buffer in `minibatches` shuffled minibatches,
// gradient-norm clipping and an Adam step per minibatch. Frozen executor
// parameters are never written. Requires GAE to have been computed.
UpdateReport ppo_update(XlvinPolicy& policy, const RolloutBuffer& buffer, const TrainerConfig& config,
                        nn::AdamState& adam, Rng& rng);

// A few epochs of the plain TransE objective on the buffer's transitions,
// written straight into the policy's encoder and transition model. No-op for
// the baseline.
void refit_transe(XlvinPolicy& policy, const RolloutBuffer& buffer, const TrainerConfig& config, std::uint64_t seed);

// Calls refit_transe when `updates_done` is a positive multiple of
// config.transe_refit_every.
void maybe_refit_transe(XlvinPolicy& policy, const RolloutBuffer& buffer, const TrainerConfig& config,
                        std::size_t updates_done);

using EnvFactory = std::function<std::unique_ptr<envs::Env>()>;

struct EvalResult {
    double mean = 0.0;
    double std = 0.0;
    double success_rate = 0.0;
    std::vector<double> returns;
};

// Greedy (argmax) play, n_episodes per seed; mean and population std over
// every episode of every seed.
EvalResult evaluate(const XlvinPolicy& policy, const EnvFactory& factory, std::size_t n_episodes,
                    const std::vector<std::uint64_t>& seeds, std::size_t pool_size = 16);

} // namespace xlvin::ppo
