#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "xlvin/ppo/ppo.hpp"
#include "xlvin/ppo/training.hpp"

namespace xlvin::cli {

// Bad configuration or command line; maps to exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string env = "cartpole";  // cartpole | acrobot | mountaincar | maze
    std::string agent = "xlvin";   // xlvin | ppo
    std::string executor = "CP";   // R | CP | maze
    std::size_t depth = 2;
    std::size_t latent_dim = 0;  // 0: 10 for mazes, 50 for control
    std::size_t transition_hidden = 0;  // 0: the encoder's hidden width
    std::size_t head_hidden = 64;
    double edge_discount = 0.9;
    std::uint64_t seed = 0;
    std::size_t eval_episodes = 100;
    bool log_wall_time = false;

    ppo::TrainerConfig trainer;

    std::size_t transe_transitions = 10000;
    std::size_t transe_epochs = 50;
    std::size_t transe_batch = 512;
    double transe_lr = 1e-3;

    std::size_t exec_graphs = 100;
    std::size_t exec_states = 20;
    std::size_t exec_actions = 8;
    std::size_t exec_tree_depth = 4;
    std::size_t exec_epochs = 25;
    std::size_t exec_batch = 32;
    double exec_lr = 2e-3;
    double exec_final_lr = 1e-5;
    double exec_tol = 1e-3;

    std::size_t maze_size = 8;
    std::size_t maze_channels = 128;
    std::size_t maze_count = 1000;
    ppo::CurriculumConfig curriculum;

    std::string output_dir = "runs/default";
    std::string transe_checkpoint;
    std::string executor_checkpoint;
    std::string policy_checkpoint;
};

// Every key accepted in a config file or --set override, in serialization
// order.
std::vector<std::string> config_keys();
std::string config_get(const RunConfig& config, const std::string& key);
// Throws ConfigError naming the key for unknown keys and unparsable values.
void config_set(RunConfig& config, const std::string& key, const std::string& value);

// "key = value" lines; blank lines and lines starting with # are ignored.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path);
// "key=value"
void apply_override(RunConfig& config, const std::string& assignment);
std::string serialize_config(const RunConfig& config);
std::map<std::string, std::string> config_map(const RunConfig& config);

// Field-level checks; throws ConfigError.
void validate_config(const RunConfig& config);

} // namespace xlvin::cli
