#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "xlvin/envs/maze.hpp"
#include "xlvin/ppo/metrics.hpp"
#include "xlvin/ppo/ppo.hpp"

namespace xlvin::ppo {

// How a control run spends its interaction budget.
struct ControlRegime {
    std::size_t rounds = 1;
    std::size_t trajectories_per_round = 10;
    std::size_t updates_per_round = 1;
    // PPO epochs per update; 0 keeps TrainerConfig::ppo_epochs.
    std::size_t epochs_per_update = 0;

    std::size_t total_trajectories() const { return rounds * trajectories_per_round; }
};

// CartPole: 10 trajectories once, then a single PPO update of 100 epochs on
// that buffer, clipped against the collecting policy. Acrobot and
// MountainCar: 20 rounds of 5 trajectories, one update per round.
ControlRegime control_regime(const std::string& env, const TrainerConfig& config);

struct ControlResult {
    std::size_t trajectories = 0;
    std::size_t env_steps = 0;
    EvalResult eval;
    std::vector<UpdateReport> updates;
};

inline constexpr std::uint64_t kEvalSeedOffset = 0x5eed0000u;

// Runs the regime for config.env and evaluates the final policy greedily
// over eval_episodes episodes. Interaction is counted and checked against the
// regime budget.
ControlResult train_control(XlvinPolicy& policy, const TrainerConfig& config, MetricsLog* log = nullptr,
                            std::size_t eval_episodes = 100);

struct CurriculumConfig {
    std::size_t maze_size = 8;
    int max_difficulty = 10;
    std::size_t window = 1000;
    double threshold = 0.95;
    std::size_t max_level_trajectories = 1'000'000;
    // 0 disables the overall budget.
    std::size_t max_total_trajectories = 0;
    std::size_t trajectories_per_round = 16;
    std::size_t test_mazes = 100;
    bool test_large = false;  // also report 16x16 held-out success
    std::uint64_t seed = 0;
};

struct LevelLog {
    int difficulty = 0;
    bool passed = false;
    std::size_t trajectories = 0;
    double window_success = 0.0;
    double test_success = kMissing;
    double test_success_large = kMissing;
};

// Rolling-window bookkeeping for the continual maze.
class CurriculumState {
public:
    explicit CurriculumState(const CurriculumConfig& config);

    // Records one finished episode at the current difficulty. Returns true
    // when this episode completes the level; the difficulty then moves up by
    // one and the window starts empty.
    bool record(bool success);

    int difficulty() const { return difficulty_; }
    double window_success() const;
    std::size_t window_size() const { return window_.size(); }
    // Episodes still to play before the window is full.
    std::size_t until_full() const { return config_.window - window_.size(); }
    std::size_t total_trajectories() const { return total_; }
    std::size_t level_trajectories() const { return level_; }
    bool failed() const { return failed_; }
    bool finished() const { return failed_ || difficulty_ > config_.max_difficulty; }
    const std::vector<LevelLog>& log() const { return log_; }
    std::vector<LevelLog>& log() { return log_; }

private:
    CurriculumConfig config_;
    int difficulty_ = 1;
    std::deque<std::uint8_t> window_;
    std::size_t successes_ = 0;
    std::size_t total_ = 0;
    std::size_t level_ = 0;
    bool failed_ = false;
    std::vector<LevelLog> log_;
};

// Training mazes of one difficulty: seed -> first generated maze of that
// difficulty along a seed chain. Training seeds keep the top bit clear.
envs::MazeSampler difficulty_sampler(std::size_t size, int difficulty);
// Held-out mazes of one difficulty from the seed range with the top bit set.
envs::MazeDataset held_out_mazes(std::size_t size, int difficulty, std::size_t count);

struct RoundResult {
    std::vector<bool> successes;  // per episode, in play order
    std::size_t env_steps = 0;
    UpdateReport update;
};

class CurriculumAgent {
public:
    virtual ~CurriculumAgent() = default;
    // Plays and learns from n episodes on mazes from sampler.
    virtual RoundResult train_round(const envs::MazeSampler& sampler, std::size_t n, std::uint64_t seed) = 0;
    // Greedy success rate on the given mazes.
    virtual double test_success(const envs::MazeDataset& mazes) = 0;
};

// Follows a BFS shortest path; never learns.
class BfsOracleAgent final : public CurriculumAgent {
public:
    explicit BfsOracleAgent(std::size_t maze_size) : size_(maze_size) {}
    RoundResult train_round(const envs::MazeSampler& sampler, std::size_t n, std::uint64_t seed) override;
    double test_success(const envs::MazeDataset& mazes) override;

private:
    std::size_t size_;
};

class PpoMazeAgent final : public CurriculumAgent {
public:
    PpoMazeAgent(XlvinPolicy& policy, const TrainerConfig& config, std::size_t maze_size);
    RoundResult train_round(const envs::MazeSampler& sampler, std::size_t n, std::uint64_t seed) override;
    double test_success(const envs::MazeDataset& mazes) override;

private:
    XlvinPolicy& policy_;
    TrainerConfig config_;
    std::size_t size_;
    nn::AdamState adam_;
    Rng rng_;
    RewardNormalizer normalizer_;
    std::size_t updates_ = 0;
};

// Greedy success rate of policy on each maze in turn.
double maze_success(const XlvinPolicy& policy, const envs::MazeDataset& mazes, std::size_t pool_size = 16);

struct CurriculumResult {
    std::vector<LevelLog> levels;
    int highest_passed = 0;
    bool failed = false;  // level or overall budget exhausted
    std::size_t total_trajectories = 0;
    std::size_t env_steps = 0;
};

// Difficulty 1 upwards; after each passed level the agent is tested on
// held-out mazes of exactly that difficulty and the level is never sampled
// again. A round never asks for more episodes than it takes to fill the
// window.
CurriculumResult run_curriculum(CurriculumAgent& agent, const CurriculumConfig& config, MetricsLog* log = nullptr);

} // namespace xlvin::ppo
