#include "xlvin/envs/maze.hpp"

#include <fstream>
#include <random>

#include "xlvin/errors.hpp"

namespace xlvin::envs {

MazeGrid maze_generate(std::size_t size, std::uint64_t seed, double obstacle_density) {
    require(size == 8 || size == 16, "maze size must be 8 or 16, got " + std::to_string(size));
    require(obstacle_density >= 0.0 && obstacle_density < 1.0, "obstacle density must lie in [0,1)");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution wall(obstacle_density);
    MazeGrid m;
    m.size = size;
    m.seed = seed;
    m.obstacles.resize(size * size);
    for (std::size_t attempt = 0; attempt < kMaxGenerationRejections; ++attempt) {
        std::vector<Cell> free_cells;
        for (std::size_t i = 0; i < size * size; ++i) {
            m.obstacles[i] = wall(rng) ? 1 : 0;
            if (!m.obstacles[i]) free_cells.push_back({static_cast<int>(i / size), static_cast<int>(i % size)});
        }
        if (free_cells.size() < 2) continue;
        std::uniform_int_distribution<std::size_t> pick(0, free_cells.size() - 1);
        m.start = free_cells[pick(rng)];
        do {
            m.goal = free_cells[pick(rng)];
        } while (m.goal == m.start);
        const int d = bfs_distances(m, m.start)[m.index(m.goal)];
        if (d <= 0) continue;
        m.difficulty = d;
        return m;
    }
    throw GenerationError("maze generation exceeded " + std::to_string(kMaxGenerationRejections) +
                          " rejections (seed " + std::to_string(seed) + ")");
}

MazeDataset generate_dataset(std::size_t size, std::size_t count, std::uint64_t first_seed, double obstacle_density) {
    MazeDataset out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(maze_generate(size, first_seed + i, obstacle_density));
    return out;
}

MazeDataset generate_stratified(std::size_t size, std::size_t per_difficulty, int max_difficulty,
                                std::uint64_t first_seed, std::size_t max_seeds, double obstacle_density) {
    require(max_difficulty >= 1, "max_difficulty must be positive");
    std::vector<std::size_t> filled(static_cast<std::size_t>(max_difficulty) + 1, 0);
    std::size_t open = static_cast<std::size_t>(max_difficulty);
    MazeDataset out;
    for (std::size_t i = 0; i < max_seeds && open > 0; ++i) {
        MazeGrid m = maze_generate(size, first_seed + i, obstacle_density);
        if (m.difficulty > max_difficulty) continue;
        auto& n = filled[static_cast<std::size_t>(m.difficulty)];
        if (n >= per_difficulty) continue;
        if (++n == per_difficulty) --open;
        out.push_back(std::move(m));
    }
    return out;
}

std::map<int, std::size_t> difficulty_histogram(const MazeDataset& mazes) {
    std::map<int, std::size_t> h;
    for (const auto& m : mazes) ++h[m.difficulty];
    return h;
}

void save_jsonl(const MazeDataset& mazes, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (const auto& m : mazes) out << to_json(m).dump() << '\n';
}

MazeDataset load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open maze dataset " + path);
    MazeDataset out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(maze_from_json(nlohmann::json::parse(line)));
    }
    return out;
}

Observation maze_observation(const MazeGrid& maze, Cell agent) {
    const std::size_t n = maze.size * maze.size;
    Observation obs(3 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) obs[i] = maze.obstacles[i];
    obs[n + maze.index(agent)] = 1.0;
    obs[2 * n + maze.index(maze.goal)] = 1.0;
    return obs;
}

MazeEnv::MazeEnv(std::size_t size, MazeSampler sampler)
    : size_(size), step_cap_(maze_step_cap(size)), sampler_(std::move(sampler)) {
    require(size >= 2, "maze size must be at least 2");
}

Observation MazeEnv::reset(std::uint64_t seed) {
    return reset_to(sampler_ ? sampler_(seed) : maze_generate(size_, seed));
}

Observation MazeEnv::reset_to(const MazeGrid& maze) {
    require(maze.size == size_, "maze size does not match the environment");
    maze_ = maze;
    agent_ = maze.start;
    steps_ = 0;
    done_ = false;
    return observe();
}

Observation MazeEnv::observe() const { return maze_observation(maze_, agent_); }

StepResult MazeEnv::step(std::size_t action) {
    check_step(action);
    const Cell next{agent_.row + kMoves[action].row, agent_.col + kMoves[action].col};
    StepResult r;
    if (!maze_.free(next)) {
        // the agent stays put; the episode ends
        r.reward = terminal_reward(false);
        r.done = true;
    } else {
        agent_ = next;
        if (agent_ == maze_.goal) {
            r.reward = terminal_reward(true);
            r.done = true;
        } else {
            r.reward = kMazeMoveReward;
        }
    }
    // success = the episode ended on a positive reward
    r.success = r.done && r.reward > 0.0;
    finish_step(r);
    r.observation = observe();
    return r;
}

ContextualMazeEnv::ContextualMazeEnv(std::size_t size, MazeSampler sampler) : MazeEnv(size, std::move(sampler)) {}

Observation ContextualMazeEnv::reset(std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double a = u(rng);
    const double b = u(rng);
    return reset_to(sampler_ ? sampler_(seed) : maze_generate(size_, seed), a, b);
}

Observation ContextualMazeEnv::reset_to(const MazeGrid& maze, double a, double b) {
    require(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0, "context scalars must lie in [0,1]");
    a_ = a;
    b_ = b;
    return MazeEnv::reset_to(maze);
}

Observation ContextualMazeEnv::observe() const {
    const std::size_t w = size_ + 2;
    const std::size_t plane = w * w;
    Observation obs(3 * plane, 0.0);
    for (std::size_t r = 0; r < w; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            double v;
            if (r == 0) v = a_;
            else if (c == 0) v = b_;
            else if (r == w - 1 || c == w - 1) v = 1.0;
            else v = maze_.obstacles[(r - 1) * size_ + (c - 1)];
            obs[r * w + c] = v;
        }
    }
    obs[plane + (agent_.row + 1) * w + (agent_.col + 1)] = 1.0;
    obs[2 * plane + (maze_.goal.row + 1) * w + (maze_.goal.col + 1)] = 1.0;
    return obs;
}

double ContextualMazeEnv::terminal_reward(bool goal) const {
    const double normal = MazeEnv::terminal_reward(goal);
    return inverted() ? -normal : normal;
}

} // namespace xlvin::envs
