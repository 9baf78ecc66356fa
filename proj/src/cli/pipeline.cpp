#include "xlvin/cli/pipeline.hpp"

#include <cmath>
#include <filesystem>

#include "xlvin/envs/control.hpp"
#include "xlvin/envs/maze.hpp"
#include "xlvin/errors.hpp"
#include "xlvin/mdp/generators.hpp"
#include "xlvin/nn/checkpoint.hpp"

namespace xlvin::cli {

using nn::Rng;

namespace {

constexpr std::uint64_t kHeldOutSeed = 1'000'000;
constexpr double kMazeGraphDiscount = 0.99;

nn::Checkpoint read_checkpoint(const std::string& path, const std::string& component) {
    if (path.empty()) throw MissingArtifact("no " + component + " checkpoint given (set " + component + "_checkpoint)");
    if (!std::filesystem::exists(path))
        throw MissingArtifact(component + " checkpoint not found: " + path);
    return nn::load_checkpoint(path);
}

nlohmann::json checkpoint_metadata(const RunConfig& config, const std::string& kind) {
    // Locations are not model properties; leaving them out keeps checkpoints
    // of identical runs byte-identical wherever they are written.
    auto m = config_map(config);
    for (const char* key : {"output_dir", "transe_checkpoint", "executor_checkpoint", "policy_checkpoint"}) m.erase(key);
    return {{"kind", kind}, {"config", m}};
}

} // namespace

std::unique_ptr<envs::Env> make_env(const RunConfig& config) {
    if (config.env == "maze") return std::make_unique<envs::MazeEnv>(config.maze_size);
    return envs::make_control_env(config.env);
}

std::size_t action_count(const RunConfig& config) { return make_env(config)->n_actions(); }

std::size_t latent_dim(const RunConfig& config) {
    if (config.latent_dim > 0) return config.latent_dim;
    return config.env == "maze" ? 10 : 50;
}

transe::EncoderConfig encoder_config(const RunConfig& config) {
    if (config.env == "maze") return transe::maze_encoder_config(config.maze_channels, latent_dim(config));
    return transe::control_encoder_config(config.env, latent_dim(config));
}

std::size_t transition_hidden(const RunConfig& config) {
    return config.transition_hidden > 0 ? config.transition_hidden : encoder_config(config).hidden;
}

policy::PolicyConfig policy_config(const RunConfig& config) {
    policy::PolicyConfig p;
    p.encoder = encoder_config(config);
    p.n_actions = action_count(config);
    p.depth = config.depth;
    p.transition_hidden = transition_hidden(config);
    p.head_hidden = config.head_hidden;
    p.planning = config.agent == "xlvin";
    p.edge_discount = config.edge_discount;
    return p;
}

TranseStage run_pretrain_transe(const RunConfig& config) {
    validate_config(config);
    auto env = make_env(config);
    const auto data = transe::collect_random_transitions(*env, config.transe_transitions, config.seed);
    const auto held_out = transe::collect_random_transitions(*env, std::max<std::size_t>(2, config.transe_transitions / 5),
                                                             config.seed + kHeldOutSeed);
    Rng rng(config.seed);
    TranseStage out{transe::TranseModel(encoder_config(config), env->n_actions(), transition_hidden(config), rng), {}, 0};
    transe::PretrainConfig pc;
    pc.n_transitions = config.transe_transitions;
    pc.epochs = config.transe_epochs;
    pc.batch_size = config.transe_batch;
    pc.lr = config.transe_lr;
    pc.seed = config.seed;
    out.report = transe::pretrain_transe(out.model, data, pc);
    out.held_out_loss = transe::evaluate_transe(out.model, held_out, config.seed);
    return out;
}

std::vector<mdp::DiscreteMdp> executor_graphs(const RunConfig& config, std::size_t count, std::uint64_t first_seed) {
    std::vector<mdp::DiscreteMdp> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = first_seed + i;
        if (config.executor == "R") {
            out.push_back(mdp::gen_random_deterministic(config.exec_states, config.exec_actions, seed));
        } else if (config.executor == "CP") {
            out.push_back(mdp::gen_cartpole_tree(config.exec_tree_depth, seed));
        } else {
            mdp::MazeMdpOptions o;
            o.discount = kMazeGraphDiscount;
            out.push_back(mdp::maze_to_mdp(envs::maze_generate(config.maze_size, seed), o).mdp);
        }
    }
    return out;
}

ExecutorStage run_pretrain_executor(const RunConfig& config) {
    validate_config(config);
    auto dataset = [&](std::size_t count, std::uint64_t first) {
        std::vector<mdp::ViTrajectory> traj;
        for (const auto& m : executor_graphs(config, count, first)) traj.push_back(mdp::vi_trajectory(m, config.exec_tol));
        return executor::make_executor_dataset(std::move(traj));
    };
    const auto train = dataset(config.exec_graphs, config.seed);
    const auto held_out = dataset(std::max<std::size_t>(1, config.exec_graphs / 3), config.seed + kHeldOutSeed);
    Rng rng(config.seed);
    ExecutorStage out{executor::Executor(latent_dim(config), rng), {}, 0, 0};
    executor::ExecutorTrainConfig tc;
    tc.epochs = config.exec_epochs;
    tc.batch_size = config.exec_batch;
    tc.lr = config.exec_lr;
    tc.final_lr = config.exec_final_lr;
    tc.seed = config.seed;
    out.report = executor::pretrain_executor(out.model, train, tc);
    out.held_out_mse = executor::executor_mse(out.model, held_out);
    out.held_out_copy_mse = executor::copy_baseline_mse(held_out);
    return out;
}

policy::XlvinPolicy build_policy(const RunConfig& config, const transe::TranseModel* transe,
                                 const executor::Executor* executor) {
    validate_config(config);
    Rng rng(config.seed);
    policy::XlvinPolicy p(policy_config(config), rng);
    if (config.agent == "xlvin") {
        if (!transe) throw MissingArtifact("the xlvin agent needs a pretrained TransE model (encoder + transition)");
        if (!executor) throw MissingArtifact("the xlvin agent needs a pretrained executor");
        p.load_transe(*transe);
        p.load_executor(*executor);
    } else if (transe) {
        p.load_transe(*transe);
    }
    return p;
}

ppo::TrainerConfig trainer_config(const RunConfig& config) {
    ppo::TrainerConfig t = config.trainer;
    t.env = config.env;
    t.seed = config.seed;
    return t;
}

ppo::CurriculumConfig curriculum_config(const RunConfig& config) {
    ppo::CurriculumConfig c = config.curriculum;
    c.maze_size = config.maze_size;
    c.seed = config.seed;
    return c;
}

TrainOutcome run_training(const RunConfig& config, policy::XlvinPolicy& policy, ppo::MetricsLog* log) {
    validate_config(config);
    TrainOutcome out;
    if (config.env == "maze") {
        ppo::PpoMazeAgent agent(policy, trainer_config(config), config.maze_size);
        out.curriculum = ppo::run_curriculum(agent, curriculum_config(config), log);
    } else {
        out.control = ppo::train_control(policy, trainer_config(config), log, config.eval_episodes);
    }
    return out;
}

ppo::EvalResult run_evaluation(const RunConfig& config, const policy::XlvinPolicy& policy) {
    validate_config(config);
    if (config.env != "maze") {
        const auto factory = [&config] { return make_env(config); };
        return ppo::evaluate(policy, factory, config.eval_episodes, {config.seed + ppo::kEvalSeedOffset});
    }
    ppo::EvalResult r;
    for (int d = 1; d <= config.curriculum.max_difficulty; ++d) {
        const auto mazes = ppo::held_out_mazes(config.maze_size, d, config.curriculum.test_mazes);
        r.returns.push_back(ppo::maze_success(policy, mazes));
    }
    double sum = 0.0;
    for (double x : r.returns) sum += x;
    r.mean = sum / static_cast<double>(r.returns.size());
    double var = 0.0;
    for (double x : r.returns) var += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(var / static_cast<double>(r.returns.size()));
    r.success_rate = r.mean;
    return r;
}

void save_transe(const std::string& path, const transe::TranseModel& model, const RunConfig& config) {
    nn::save_checkpoint(path, nn::make_checkpoint(model.params(), nullptr, checkpoint_metadata(config, "transe")));
}

transe::TranseModel load_transe(const std::string& path, const RunConfig& config) {
    const auto ck = read_checkpoint(path, "transe");
    Rng rng(config.seed);
    transe::TranseModel m(encoder_config(config), action_count(config), transition_hidden(config), rng);
    auto ps = m.params();
    nn::restore(ck, ps);
    return m;
}

void save_executor(const std::string& path, const executor::Executor& model, const RunConfig& config) {
    nn::ParamSet ps;
    model.register_params(ps);
    nn::save_checkpoint(path, nn::make_checkpoint(ps, nullptr, checkpoint_metadata(config, "executor")));
}

executor::Executor load_executor(const std::string& path, const RunConfig& config) {
    const auto ck = read_checkpoint(path, "executor");
    Rng rng(config.seed);
    executor::Executor ex(latent_dim(config), rng);
    nn::ParamSet ps;
    ex.register_params(ps);
    nn::restore(ck, ps);
    ex.freeze();
    return ex;
}

void save_policy(const std::string& path, const policy::XlvinPolicy& policy, const RunConfig& config) {
    nn::save_checkpoint(path, nn::make_checkpoint(policy.params(), nullptr, checkpoint_metadata(config, "policy")));
}

policy::XlvinPolicy load_policy(const std::string& path, const RunConfig& config) {
    const auto ck = read_checkpoint(path, "policy");
    Rng rng(config.seed);
    policy::XlvinPolicy p(policy_config(config), rng);
    auto ps = p.params();
    nn::restore(ck, ps);
    return p;
}

} // namespace xlvin::cli
