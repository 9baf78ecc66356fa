#pragma once

#include <memory>
#include <optional>
#include <string>

#include "xlvin/cli/config.hpp"
#include "xlvin/envs/env.hpp"
#include "xlvin/executor/executor.hpp"
#include "xlvin/policy/policy.hpp"
#include "xlvin/ppo/metrics.hpp"
#include "xlvin/ppo/training.hpp"
#include "xlvin/transe/transe.hpp"

namespace xlvin::cli {

// Missing or unreadable artifact a stage depends on; maps to exit code 1.
class MissingArtifact : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::unique_ptr<envs::Env> make_env(const RunConfig& config);
std::size_t action_count(const RunConfig& config);
transe::EncoderConfig encoder_config(const RunConfig& config);
policy::PolicyConfig policy_config(const RunConfig& config);
std::size_t latent_dim(const RunConfig& config);
std::size_t transition_hidden(const RunConfig& config);

struct TranseStage {
    transe::TranseModel model;
    transe::PretrainReport report;
    double held_out_loss = 0.0;
};

// Uniform-random transitions from the configured environment, then TransE.
TranseStage run_pretrain_transe(const RunConfig& config);

// Synthetic graphs for the configured executor variant: R random
// deterministic graphs, CP binary failure trees, maze graphs of random mazes.
std::vector<mdp::DiscreteMdp> executor_graphs(const RunConfig& config, std::size_t count, std::uint64_t first_seed);

struct ExecutorStage {
    executor::Executor model;
    executor::ExecutorReport report;
    double held_out_mse = 0.0;
    double held_out_copy_mse = 0.0;
};

ExecutorStage run_pretrain_executor(const RunConfig& config);

// Policy for the configured agent. The XLVIN agent needs both pretrained
// parts; the baseline takes an optional encoder.
policy::XlvinPolicy build_policy(const RunConfig& config, const transe::TranseModel* transe,
                                 const executor::Executor* executor);

struct TrainOutcome {
    std::optional<ppo::ControlResult> control;
    std::optional<ppo::CurriculumResult> curriculum;
};

ppo::TrainerConfig trainer_config(const RunConfig& config);
ppo::CurriculumConfig curriculum_config(const RunConfig& config);

// Control regime or maze curriculum, depending on env.
TrainOutcome run_training(const RunConfig& config, policy::XlvinPolicy& policy, ppo::MetricsLog* log);

// Greedy evaluation used after training: eval_episodes on the seed
// seed + kEvalSeedOffset. For mazes, success rate on held-out mazes per
// difficulty up to max_difficulty is reported in `success_rate`.
ppo::EvalResult run_evaluation(const RunConfig& config, const policy::XlvinPolicy& policy);

// Checkpoint helpers; load_* throw MissingArtifact when the file is absent.
void save_transe(const std::string& path, const transe::TranseModel& model, const RunConfig& config);
transe::TranseModel load_transe(const std::string& path, const RunConfig& config);
void save_executor(const std::string& path, const executor::Executor& model, const RunConfig& config);
executor::Executor load_executor(const std::string& path, const RunConfig& config);
void save_policy(const std::string& path, const policy::XlvinPolicy& policy, const RunConfig& config);
policy::XlvinPolicy load_policy(const std::string& path, const RunConfig& config);

} // namespace xlvin::cli
