#pragma once

#include <functional>
#include <map>
#include <string>

#include "xlvin/envs/env.hpp"
#include "xlvin/envs/maze_grid.hpp"

namespace xlvin::envs {

inline constexpr double kObstacleDensity = 0.3;
inline constexpr std::size_t kMaxGenerationRejections = 1000;

inline constexpr double kMazeGoalReward = 1.0;
inline constexpr double kMazeWallReward = -1.0;
inline constexpr double kMazeMoveReward = -0.01;

// Obstacles i.i.d. Bernoulli(density), start and goal uniform over distinct
// free cells, rejection-sampled until the goal is reachable. Only sizes 8
// and 16 are supported.
MazeGrid maze_generate(std::size_t size, std::uint64_t seed, double obstacle_density = kObstacleDensity);

using MazeDataset = std::vector<MazeGrid>;

// Mazes for seeds first_seed, first_seed + 1, ...
MazeDataset generate_dataset(std::size_t size, std::size_t count, std::uint64_t first_seed,
                             double obstacle_density = kObstacleDensity);

// Walks seeds from first_seed and keeps at most per_difficulty mazes of each
// difficulty in [1, max_difficulty]. Stops once every bucket is full or after
// max_seeds candidates.
MazeDataset generate_stratified(std::size_t size, std::size_t per_difficulty, int max_difficulty,
                                std::uint64_t first_seed, std::size_t max_seeds = 1'000'000,
                                double obstacle_density = kObstacleDensity);

std::map<int, std::size_t> difficulty_histogram(const MazeDataset& mazes);

void save_jsonl(const MazeDataset& mazes, const std::string& path);
MazeDataset load_jsonl(const std::string& path);

// Default episode cap: 64 steps for 8x8, 256 for 16x16.
inline std::size_t maze_step_cap(std::size_t size) { return size * size; }

// Channels [obstacles, agent one-hot, goal one-hot], each size x size.
Observation maze_observation(const MazeGrid& maze, Cell agent);

using MazeSampler = std::function<MazeGrid(std::uint64_t seed)>;

// 8-direction grid navigation. The maze for each episode comes from the
// sampler (default: maze_generate with the reset seed).
class MazeEnv : public Env {
public:
    explicit MazeEnv(std::size_t size, MazeSampler sampler = {});

    Observation reset(std::uint64_t seed) override;
    StepResult step(std::size_t action) override;
    std::size_t n_actions() const override { return kMazeActions; }
    std::vector<std::size_t> observation_shape() const override { return {3, size_, size_}; }
    std::size_t step_limit() const override { return step_cap_; }
    std::string name() const override { return "maze"; }

    // Starts an episode on a specific maze.
    Observation reset_to(const MazeGrid& maze);

    void set_sampler(MazeSampler sampler) { sampler_ = std::move(sampler); }
    void set_step_cap(std::size_t cap) { step_cap_ = cap; }
    const MazeGrid& maze() const { return maze_; }
    Cell agent() const { return agent_; }

protected:
    virtual Observation observe() const;
    // Reward for a terminating move; `goal` tells goal entry from wall hit.
    virtual double terminal_reward(bool goal) const { return goal ? kMazeGoalReward : kMazeWallReward; }

    std::size_t size_;
    std::size_t step_cap_;
    MazeSampler sampler_;
    MazeGrid maze_;
    Cell agent_;
};

// Maze whose reward model depends on two scalars a, b ~ U(0,1) drawn at
// reset. When a + b > 1 the goal pays -1 and walls pay +1. The observation is
// padded by one pixel: the top border of the obstacle channel holds a, the
// left border holds b, the bottom and right borders are walls (1).
class ContextualMazeEnv final : public MazeEnv {
public:
    explicit ContextualMazeEnv(std::size_t size, MazeSampler sampler = {});

    Observation reset(std::uint64_t seed) override;
    std::vector<std::size_t> observation_shape() const override { return {3, size_ + 2, size_ + 2}; }
    std::string name() const override { return "contextual-maze"; }

    // Starts an episode on a given maze and context.
    Observation reset_to(const MazeGrid& maze, double a, double b);

    double a() const { return a_; }
    double b() const { return b_; }
    bool inverted() const { return a_ + b_ > 1.0; }

private:
    Observation observe() const override;
    double terminal_reward(bool goal) const override;

    double a_ = 0.0;
    double b_ = 0.0;
};

} // namespace xlvin::envs
