#include "xlvin/ppo/training.hpp"

#include <algorithm>

#include "xlvin/envs/control.hpp"
#include "xlvin/errors.hpp"

namespace xlvin::ppo {

ControlRegime control_regime(const std::string& env, const TrainerConfig&) {
    ControlRegime r;
    if (env == "cartpole") {
        r.rounds = 1;
        r.trajectories_per_round = 10;
        r.updates_per_round = 1;
        r.epochs_per_update = 100;
    } else if (env == "acrobot" || env == "mountaincar") {
        r.rounds = 20;
        r.trajectories_per_round = 5;
        r.updates_per_round = 1;
    } else {
        throw ContractViolation("no control regime for environment " + env);
    }
    return r;
}

ControlResult train_control(XlvinPolicy& policy, const TrainerConfig& config, MetricsLog* log,
                            std::size_t eval_episodes) {
    validate(config);
    const ControlRegime regime = control_regime(config.env, config);
    std::vector<std::unique_ptr<envs::Env>> owned;
    std::vector<envs::Env*> pool;
    for (std::size_t i = 0; i < std::min(config.n_envs, regime.trajectories_per_round); ++i) {
        owned.push_back(envs::make_control_env(config.env));
        pool.push_back(owned.back().get());
    }
    TrainerConfig update_config = config;
    if (regime.epochs_per_update > 0) update_config.ppo_epochs = regime.epochs_per_update;
    Rng rng(config.seed);
    nn::AdamState adam;
    RewardNormalizer normalizer(config.gamma, config.reward_clip);
    ControlResult result;
    for (std::size_t round = 0; round < regime.rounds; ++round) {
        RolloutBuffer buffer = collect_rollouts(policy, pool, regime.trajectories_per_round, rng);
        result.trajectories += buffer.episodes.size();
        result.env_steps += buffer.env_steps();
        if (config.normalize_rewards) normalizer.apply(buffer);
        prepare_advantages(buffer, config);
        for (std::size_t u = 0; u < regime.updates_per_round; ++u) {
            result.updates.push_back(ppo_update(policy, buffer, update_config, adam, rng));
            maybe_refit_transe(policy, buffer, config, result.updates.size());
            if (log) {
                const auto& rep = result.updates.back();
                MetricsRow row;
                row.env_steps = result.env_steps;
                row.trajectories = result.trajectories;
                row.ppo_loss = rep.policy_loss;
                row.value_loss = rep.value_loss;
                row.entropy = rep.entropy;
                row.transe_loss = rep.transe_loss;
                log->write(row);
            }
        }
    }
    if (result.trajectories != regime.total_trajectories())
        throw std::logic_error("interaction budget mismatch: " + std::to_string(result.trajectories) + " trajectories");

    const std::string env = config.env;
    result.eval = evaluate(policy, [env] { return envs::make_control_env(env); }, eval_episodes,
                           {config.seed + kEvalSeedOffset});
    if (log) {
        MetricsRow row;
        row.env_steps = result.env_steps;
        row.trajectories = result.trajectories;
        row.eval_mean = result.eval.mean;
        row.eval_std = result.eval.std;
        log->write(row);
    }
    return result;
}

CurriculumState::CurriculumState(const CurriculumConfig& config) : config_(config) {
    require(config.window > 0, "window must be positive");
    require(config.threshold > 0.0 && config.threshold <= 1.0, "threshold must lie in (0, 1]");
    require(config.max_difficulty >= 1, "max_difficulty must be at least 1");
}

double CurriculumState::window_success() const {
    return window_.empty() ? 0.0 : static_cast<double>(successes_) / static_cast<double>(window_.size());
}

bool CurriculumState::record(bool success) {
    require(!finished(), "curriculum already finished");
    ++total_;
    ++level_;
    window_.push_back(success);
    successes_ += success;
    if (window_.size() > config_.window) {
        successes_ -= window_.front();
        window_.pop_front();
    }
    if (window_.size() == config_.window && window_success() >= config_.threshold) {
        log_.push_back({difficulty_, true, level_, window_success()});
        ++difficulty_;
        window_.clear();
        successes_ = 0;
        level_ = 0;
        return true;
    }
    if (level_ > config_.max_level_trajectories) {
        log_.push_back({difficulty_, false, level_, window_success()});
        failed_ = true;
    }
    return false;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t kTestBit = 1ULL << 63;

} // namespace

envs::MazeSampler difficulty_sampler(std::size_t size, int difficulty) {
    require(difficulty >= 1, "difficulty must be at least 1");
    return [size, difficulty](std::uint64_t seed) {
        std::uint64_t s = seed;
        for (std::size_t attempt = 0; attempt < 1'000'000; ++attempt) {
            s = splitmix(s);
            auto m = envs::maze_generate(size, s & ~kTestBit);
            if (m.difficulty == difficulty) return m;
        }
        throw GenerationError("no maze of difficulty " + std::to_string(difficulty) + " found");
    };
}

envs::MazeDataset held_out_mazes(std::size_t size, int difficulty, std::size_t count) {
    auto all = envs::generate_stratified(size, count, difficulty, kTestBit);
    envs::MazeDataset out;
    for (auto& m : all)
        if (m.difficulty == difficulty) out.push_back(std::move(m));
    if (out.size() < count)
        throw GenerationError("only " + std::to_string(out.size()) + " held-out mazes of difficulty " +
                              std::to_string(difficulty));
    return out;
}

RoundResult BfsOracleAgent::train_round(const envs::MazeSampler& sampler, std::size_t n, std::uint64_t seed) {
    RoundResult r;
    envs::MazeEnv env(size_, sampler);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        env.reset(rng());
        bool success = false;
        for (auto a : envs::shortest_path_actions(env.maze())) {
            const auto res = env.step(a);
            ++r.env_steps;
            success = res.success;
            if (res.done) break;
        }
        r.successes.push_back(success);
    }
    return r;
}

double BfsOracleAgent::test_success(const envs::MazeDataset& mazes) {
    std::size_t wins = 0;
    for (const auto& m : mazes) {
        envs::MazeEnv env(m.size);
        env.reset_to(m);
        bool success = false;
        for (auto a : envs::shortest_path_actions(m)) {
            const auto res = env.step(a);
            success = res.success;
            if (res.done) break;
        }
        wins += success;
    }
    return mazes.empty() ? 0.0 : static_cast<double>(wins) / static_cast<double>(mazes.size());
}

PpoMazeAgent::PpoMazeAgent(XlvinPolicy& policy, const TrainerConfig& config, std::size_t maze_size)
    : policy_(policy), config_(config), size_(maze_size), rng_(config.seed),
      normalizer_(config.gamma, config.reward_clip) {
    validate(config);
}

RoundResult PpoMazeAgent::train_round(const envs::MazeSampler& sampler, std::size_t n, std::uint64_t seed) {
    std::vector<std::unique_ptr<envs::MazeEnv>> owned;
    std::vector<envs::Env*> pool;
    for (std::size_t i = 0; i < std::min(config_.n_envs, n); ++i) {
        owned.push_back(std::make_unique<envs::MazeEnv>(size_, sampler));
        pool.push_back(owned.back().get());
    }
    Rng rng(seed);
    RolloutBuffer buffer = collect_rollouts(policy_, pool, n, rng);
    if (config_.normalize_rewards) normalizer_.apply(buffer);
    prepare_advantages(buffer, config_);
    RoundResult r;
    r.update = ppo_update(policy_, buffer, config_, adam_, rng_);
    maybe_refit_transe(policy_, buffer, config_, ++updates_);
    r.env_steps = buffer.env_steps();
    for (const auto& e : buffer.episodes) r.successes.push_back(e.success);
    return r;
}

double PpoMazeAgent::test_success(const envs::MazeDataset& mazes) { return maze_success(policy_, mazes); }

double maze_success(const XlvinPolicy& policy, const envs::MazeDataset& mazes, std::size_t pool_size) {
    require(!mazes.empty(), "no mazes to test on");
    std::vector<std::unique_ptr<envs::MazeEnv>> owned;
    std::vector<envs::Env*> pool;
    for (std::size_t i = 0; i < std::min(pool_size, mazes.size()); ++i) {
        owned.push_back(std::make_unique<envs::MazeEnv>(mazes[0].size));
        pool.push_back(owned.back().get());
    }
    Rng rng(0);
    const auto buf = run_episodes(
        policy, pool, mazes.size(),
        [&mazes](envs::Env& env, std::size_t i) { return static_cast<envs::MazeEnv&>(env).reset_to(mazes[i]); },
        ActionMode::Greedy, rng);
    std::size_t wins = 0;
    for (const auto& e : buf.episodes) wins += e.success;
    return static_cast<double>(wins) / static_cast<double>(mazes.size());
}

CurriculumResult run_curriculum(CurriculumAgent& agent, const CurriculumConfig& config, MetricsLog* log) {
    require(config.trajectories_per_round > 0, "trajectories_per_round must be positive");
    CurriculumState state(config);
    CurriculumResult result;
    std::uint64_t round = 0;
    while (!state.finished()) {
        if (config.max_total_trajectories > 0 && result.total_trajectories >= config.max_total_trajectories) {
            result.failed = true;
            break;
        }
        const int d = state.difficulty();
        std::size_t n = config.trajectories_per_round;
        if (state.until_full() > 0) n = std::min(n, state.until_full());
        if (config.max_total_trajectories > 0)
            n = std::min(n, config.max_total_trajectories - result.total_trajectories);
        const auto sampler = difficulty_sampler(config.maze_size, d);
        const RoundResult rr = agent.train_round(sampler, n, config.seed * 0x100000001b3ULL + round++);
        result.total_trajectories += rr.successes.size();
        result.env_steps += rr.env_steps;

        bool passed = false;
        for (bool s : rr.successes) {
            if (state.record(s)) {
                passed = true;
                break;
            }
            if (state.failed()) break;
        }
        if (log) {
            MetricsRow row;
            row.env_steps = result.env_steps;
            row.trajectories = result.total_trajectories;
            row.difficulty = d;
            row.train_success_window = passed ? state.log().back().window_success : state.window_success();
            row.ppo_loss = rr.update.policy_loss;
            row.value_loss = rr.update.value_loss;
            row.entropy = rr.update.entropy;
            row.transe_loss = rr.update.transe_loss;
            log->write(row);
        }
        if (passed) {
            auto& level = state.log().back();
            level.test_success = agent.test_success(held_out_mazes(config.maze_size, d, config.test_mazes));
            if (config.test_large) level.test_success_large = agent.test_success(held_out_mazes(16, d, config.test_mazes));
            result.highest_passed = d;
            if (log) {
                MetricsRow row;
                row.env_steps = result.env_steps;
                row.trajectories = result.total_trajectories;
                row.difficulty = d;
                row.eval_mean = level.test_success;
                log->write(row);
            }
        }
    }
    result.failed = result.failed || state.failed();
    result.levels = state.log();
    return result;
}

} // namespace xlvin::ppo
