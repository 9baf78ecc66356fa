#include "xlvin/cli/config.hpp"

#include "xlvin/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace xlvin::cli {

namespace {

struct Field {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

template <class T>
T parse_unsigned(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (v.empty() || r.ec != std::errc() || r.ptr != end) bad_value(key, v, "a non-negative integer");
    return out;
}

int parse_int(const std::string& key, const std::string& v) {
    int out = 0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (v.empty() || r.ec != std::errc() || r.ptr != end) bad_value(key, v, "an integer");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        bad_value(key, v, "a number");
    }
    if (used != v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, v, "a boolean");
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class Access>
Field size_field(std::string key, Access acc) {
    return {key, [acc](const RunConfig& c) { return std::to_string(acc(const_cast<RunConfig&>(c))); },
            [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_unsigned<std::size_t>(key, v); }};
}
template <class Access>
Field u64_field(std::string key, Access acc) {
    return {key, [acc](const RunConfig& c) { return std::to_string(acc(const_cast<RunConfig&>(c))); },
            [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_unsigned<std::uint64_t>(key, v); }};
}
template <class Access>
Field int_field(std::string key, Access acc) {
    return {key, [acc](const RunConfig& c) { return std::to_string(acc(const_cast<RunConfig&>(c))); },
            [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_int(key, v); }};
}
template <class Access>
Field double_field(std::string key, Access acc) {
    return {key, [acc](const RunConfig& c) { return fmt(acc(const_cast<RunConfig&>(c))); },
            [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_double(key, v); }};
}
template <class Access>
Field bool_field(std::string key, Access acc) {
    return {key, [acc](const RunConfig& c) { return std::string(acc(const_cast<RunConfig&>(c)) ? "true" : "false"); },
            [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_bool(key, v); }};
}
template <class Access>
Field string_field(std::string key, Access acc) {
    return {key, [acc](const RunConfig& c) { return acc(const_cast<RunConfig&>(c)); },
            [acc](RunConfig& c, const std::string& v) { acc(c) = v; }};
}

#define XLVIN_AT(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        string_field("env", XLVIN_AT(env)),
        string_field("agent", XLVIN_AT(agent)),
        string_field("executor", XLVIN_AT(executor)),
        size_field("depth", XLVIN_AT(depth)),
        size_field("latent_dim", XLVIN_AT(latent_dim)),
        size_field("transition_hidden", XLVIN_AT(transition_hidden)),
        size_field("head_hidden", XLVIN_AT(head_hidden)),
        double_field("edge_discount", XLVIN_AT(edge_discount)),
        u64_field("seed", XLVIN_AT(seed)),
        size_field("eval_episodes", XLVIN_AT(eval_episodes)),
        bool_field("log_wall_time", XLVIN_AT(log_wall_time)),

        double_field("gamma", XLVIN_AT(trainer.gamma)),
        double_field("gae_lambda", XLVIN_AT(trainer.gae_lambda)),
        double_field("clip", XLVIN_AT(trainer.clip)),
        size_field("ppo_epochs", XLVIN_AT(trainer.ppo_epochs)),
        size_field("minibatches", XLVIN_AT(trainer.minibatches)),
        double_field("value_coef", XLVIN_AT(trainer.value_coef)),
        double_field("entropy_coef", XLVIN_AT(trainer.entropy_coef)),
        double_field("max_grad_norm", XLVIN_AT(trainer.max_grad_norm)),
        double_field("lr", XLVIN_AT(trainer.lr)),
        double_field("transe_coef", XLVIN_AT(trainer.transe_coef)),
        size_field("transe_refit_every", XLVIN_AT(trainer.transe_refit_every)),
        size_field("transe_refit_epochs", XLVIN_AT(trainer.transe_refit_epochs)),
        bool_field("bootstrap_truncation", XLVIN_AT(trainer.bootstrap_truncation)),
        bool_field("normalize_rewards", XLVIN_AT(trainer.normalize_rewards)),
        bool_field("batch_norm_train", XLVIN_AT(trainer.batch_norm_train)),
        double_field("reward_clip", XLVIN_AT(trainer.reward_clip)),
        size_field("n_envs", XLVIN_AT(trainer.n_envs)),
        string_field("regime", XLVIN_AT(trainer.regime)),

        size_field("transe_transitions", XLVIN_AT(transe_transitions)),
        size_field("transe_epochs", XLVIN_AT(transe_epochs)),
        size_field("transe_batch", XLVIN_AT(transe_batch)),
        double_field("transe_lr", XLVIN_AT(transe_lr)),

        size_field("exec_graphs", XLVIN_AT(exec_graphs)),
        size_field("exec_states", XLVIN_AT(exec_states)),
        size_field("exec_actions", XLVIN_AT(exec_actions)),
        size_field("exec_tree_depth", XLVIN_AT(exec_tree_depth)),
        size_field("exec_epochs", XLVIN_AT(exec_epochs)),
        size_field("exec_batch", XLVIN_AT(exec_batch)),
        double_field("exec_lr", XLVIN_AT(exec_lr)),
        double_field("exec_final_lr", XLVIN_AT(exec_final_lr)),
        double_field("exec_tol", XLVIN_AT(exec_tol)),

        size_field("maze_size", XLVIN_AT(maze_size)),
        size_field("maze_channels", XLVIN_AT(maze_channels)),
        size_field("maze_count", XLVIN_AT(maze_count)),
        int_field("max_difficulty", XLVIN_AT(curriculum.max_difficulty)),
        size_field("curriculum_window", XLVIN_AT(curriculum.window)),
        double_field("curriculum_threshold", XLVIN_AT(curriculum.threshold)),
        size_field("max_level_trajectories", XLVIN_AT(curriculum.max_level_trajectories)),
        size_field("max_total_trajectories", XLVIN_AT(curriculum.max_total_trajectories)),
        size_field("trajectories_per_round", XLVIN_AT(curriculum.trajectories_per_round)),
        size_field("test_mazes", XLVIN_AT(curriculum.test_mazes)),
        bool_field("test_large", XLVIN_AT(curriculum.test_large)),

        string_field("output_dir", XLVIN_AT(output_dir)),
        string_field("transe_checkpoint", XLVIN_AT(transe_checkpoint)),
        string_field("executor_checkpoint", XLVIN_AT(executor_checkpoint)),
        string_field("policy_checkpoint", XLVIN_AT(policy_checkpoint)),
    };
    return table;
}

#undef XLVIN_AT

const Field& find_field(const std::string& key) {
    for (const auto& f : fields())
        if (f.key == key) return f;
    throw ConfigError("unknown config key '" + key + "'");
}

} // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
}

std::string config_get(const RunConfig& config, const std::string& key) { return find_field(key).get(config); }

void config_set(RunConfig& config, const std::string& key, const std::string& value) {
    find_field(key).set(config, value);
}

RunConfig parse_config(const std::string& text, RunConfig base) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string value = trim(t.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        config_set(base, trim(t.substr(0, eq)), value);
    }
    return base;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void apply_override(RunConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    config_set(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string serialize_config(const RunConfig& config) {
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
    return out;
}

std::map<std::string, std::string> config_map(const RunConfig& config) {
    std::map<std::string, std::string> out;
    for (const auto& f : fields()) out[f.key] = f.get(config);
    return out;
}

void validate_config(const RunConfig& c) {
    auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
    if (c.env != "cartpole" && c.env != "acrobot" && c.env != "mountaincar" && c.env != "maze")
        fail("env", "must be cartpole, acrobot, mountaincar or maze");
    if (c.agent != "xlvin" && c.agent != "ppo") fail("agent", "must be xlvin or ppo");
    if (c.executor != "R" && c.executor != "CP" && c.executor != "maze") fail("executor", "must be R, CP or maze");
    if (c.head_hidden == 0) fail("head_hidden", "must be positive");
    if (c.edge_discount < 0 || c.edge_discount > 1) fail("edge_discount", "must lie in [0, 1]");
    if (c.eval_episodes == 0) fail("eval_episodes", "must be positive");
    if (c.transe_transitions < 2) fail("transe_transitions", "must be at least 2");
    if (c.transe_epochs == 0) fail("transe_epochs", "must be positive");
    if (c.transe_batch < 2) fail("transe_batch", "must be at least 2");
    if (c.transe_lr <= 0) fail("transe_lr", "must be positive");
    if (c.exec_graphs == 0) fail("exec_graphs", "must be positive");
    if (c.exec_states < 2) fail("exec_states", "must be at least 2");
    if (c.exec_actions == 0) fail("exec_actions", "must be positive");
    if (c.exec_tree_depth == 0) fail("exec_tree_depth", "must be positive");
    if (c.exec_epochs == 0) fail("exec_epochs", "must be positive");
    if (c.exec_batch == 0) fail("exec_batch", "must be positive");
    if (c.exec_lr <= 0) fail("exec_lr", "must be positive");
    if (c.exec_final_lr < 0) fail("exec_final_lr", "must be non-negative");
    if (c.exec_tol <= 0) fail("exec_tol", "must be positive");
    if (c.maze_size < 4) fail("maze_size", "must be at least 4");
    if (c.maze_channels == 0) fail("maze_channels", "must be positive");
    if (c.maze_count == 0) fail("maze_count", "must be positive");
    if (c.curriculum.max_difficulty < 1) fail("max_difficulty", "must be at least 1");
    if (c.curriculum.window == 0) fail("curriculum_window", "must be positive");
    if (c.curriculum.threshold <= 0 || c.curriculum.threshold > 1) fail("curriculum_threshold", "must lie in (0, 1]");
    if (c.curriculum.trajectories_per_round == 0) fail("trajectories_per_round", "must be positive");
    if (c.curriculum.test_mazes == 0) fail("test_mazes", "must be positive");
    if (c.output_dir.empty()) fail("output_dir", "must not be empty");
    try {
        ppo::validate(c.trainer);
    } catch (const ContractViolation& e) {
        throw ConfigError(e.what());
    }
}

} // namespace xlvin::cli
