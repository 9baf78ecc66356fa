#include "xlvin/cli/app.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xlvin/cli/config.hpp"
#include "xlvin/cli/embeddings.hpp"
#include "xlvin/cli/manifest.hpp"
#include "xlvin/cli/pipeline.hpp"
#include "xlvin/envs/maze.hpp"
#include "xlvin/errors.hpp"

namespace xlvin::cli {

namespace fs = std::filesystem;

std::string resolve_output_dir(const std::string& output_dir) {
    const fs::path p(output_dir);
    const char* root = std::getenv(kOutputRootVar);
    if (p.is_relative() && root && *root) return (fs::path(root) / p).string();
    return p.string();
}

namespace {

struct Options {
    std::string config_file;
    std::vector<std::string> overrides;
    std::string output_dir;
    std::string run_dir;
    std::string input;
    std::uint64_t maze_seed = 0;
    bool pretrain = false;
};

RunConfig build_config(const Options& o) {
    RunConfig c = o.config_file.empty() ? RunConfig{} : load_config(o.config_file);
    for (const auto& s : o.overrides) apply_override(c, s);
    if (!o.output_dir.empty()) c.output_dir = o.output_dir;
    validate_config(c);
    return c;
}

std::string prepare_dir(const RunConfig& c) {
    const std::string dir = resolve_output_dir(c.output_dir);
    fs::create_directories(dir);
    return dir;
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

nlohmann::json eval_json(const ppo::EvalResult& r) {
    return {{"mean", r.mean}, {"std", r.std}, {"success_rate", r.success_rate}, {"returns", r.returns}};
}

// Loads the run's config and resolves its checkpoint paths against the run
// directory.
RunConfig run_config(const Options& o) {
    if (o.run_dir.empty()) throw ConfigError("--run is required");
    const std::string cfg_path = in_dir(o.run_dir, "config.txt");
    if (!fs::exists(cfg_path)) throw MissingArtifact("run directory has no config.txt: " + o.run_dir);
    RunConfig c = load_config(cfg_path);
    for (const auto& s : o.overrides) apply_override(c, s);
    validate_config(c);
    return c;
}

int cmd_pretrain_transe(const Options& o, std::ostream& out) {
    RunConfig c = build_config(o);
    const std::string dir = prepare_dir(c);
    const auto stage = run_pretrain_transe(c);
    save_transe(in_dir(dir, "transe.ckpt"), stage.model, c);
    write_json(in_dir(dir, "transe_report.json"), {{"initial_loss", stage.report.initial_loss},
                                                  {"final_loss", stage.report.final_loss},
                                                  {"epoch_losses", stage.report.epoch_losses},
                                                  {"held_out_loss", stage.held_out_loss}});
    write_manifest(dir, c, {"transe.ckpt", "transe_report.json"});
    out << "transe loss " << stage.report.initial_loss << " -> " << stage.report.final_loss << " (held-out "
        << stage.held_out_loss << ")\n";
    return kExitOk;
}

int cmd_pretrain_executor(const Options& o, std::ostream& out) {
    RunConfig c = build_config(o);
    const std::string dir = prepare_dir(c);
    const auto stage = run_pretrain_executor(c);
    save_executor(in_dir(dir, "executor.ckpt"), stage.model, c);
    write_json(in_dir(dir, "executor_report.json"), {{"initial_mse", stage.report.initial_mse},
                                                    {"final_mse", stage.report.final_mse},
                                                    {"epoch_mse", stage.report.epoch_mse},
                                                    {"held_out_mse", stage.held_out_mse},
                                                    {"held_out_copy_mse", stage.held_out_copy_mse}});
    write_manifest(dir, c, {"executor.ckpt", "executor_report.json"});
    out << "executor mse " << stage.report.initial_mse << " -> " << stage.report.final_mse << " (held-out "
        << stage.held_out_mse << ", copy baseline " << stage.held_out_copy_mse << ")\n";
    return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
    RunConfig c = build_config(o);
    const std::string dir = prepare_dir(c);
    std::vector<std::string> files;
    std::optional<transe::TranseModel> tm;
    std::optional<executor::Executor> ex;
    if (c.agent == "xlvin") {
        if (o.pretrain && c.transe_checkpoint.empty()) {
            tm = run_pretrain_transe(c).model;
            save_transe(in_dir(dir, "transe.ckpt"), *tm, c);
            c.transe_checkpoint = fs::absolute(in_dir(dir, "transe.ckpt")).string();
            files.push_back("transe.ckpt");
        } else {
            tm = load_transe(c.transe_checkpoint, c);
        }
        if (o.pretrain && c.executor_checkpoint.empty()) {
            ex = run_pretrain_executor(c).model;
            save_executor(in_dir(dir, "executor.ckpt"), *ex, c);
            c.executor_checkpoint = fs::absolute(in_dir(dir, "executor.ckpt")).string();
            files.push_back("executor.ckpt");
        } else {
            ex = load_executor(c.executor_checkpoint, c);
        }
    } else if (!c.transe_checkpoint.empty()) {
        tm = load_transe(c.transe_checkpoint, c);
    }
    auto policy = build_policy(c, tm ? &*tm : nullptr, ex ? &*ex : nullptr);

    TrainOutcome outcome;
    {
        ppo::MetricsLog log(in_dir(dir, "metrics.csv"), c.log_wall_time);
        outcome = run_training(c, policy, &log);
    }
    files.push_back("metrics.csv");
    save_policy(in_dir(dir, "policy.ckpt"), policy, c);
    c.policy_checkpoint = "policy.ckpt";
    files.push_back("policy.ckpt");

    nlohmann::json result;
    if (outcome.control) {
        const auto& r = *outcome.control;
        result = {{"trajectories", r.trajectories}, {"env_steps", r.env_steps}, {"eval", eval_json(r.eval)}};
        out << c.env << " " << c.agent << " eval " << r.eval.mean << " +- " << r.eval.std << " over "
            << r.eval.returns.size() << " episodes\n";
    } else {
        const auto& r = *outcome.curriculum;
        std::ofstream levels(in_dir(dir, "levels.csv"));
        levels << "difficulty,passed,trajectories,window_success,test_success_8,test_success_16\n";
        levels.precision(17);
        for (const auto& l : r.levels)
            levels << l.difficulty << "," << l.passed << "," << l.trajectories << "," << l.window_success << ","
                   << l.test_success << "," << l.test_success_large << "\n";
        levels.close();
        files.push_back("levels.csv");
        const auto ev = run_evaluation(c, policy);
        result = {{"trajectories", r.total_trajectories}, {"env_steps", r.env_steps},
                  {"highest_passed", r.highest_passed},    {"failed", r.failed},
                  {"eval", eval_json(ev)}};
        out << "maze curriculum passed difficulty " << r.highest_passed << " after " << r.total_trajectories
            << " trajectories" << (r.failed ? " (failed)" : "") << "\n";
    }
    write_json(in_dir(dir, "eval.json"), result);
    files.push_back("eval.json");
    write_manifest(dir, c, files);
    return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
    const RunConfig c = run_config(o);
    const std::string ckpt = c.policy_checkpoint.empty() ? "policy.ckpt" : c.policy_checkpoint;
    const fs::path p(ckpt);
    const auto policy = load_policy(p.is_relative() ? in_dir(o.run_dir, ckpt) : ckpt, c);
    const auto r = run_evaluation(c, policy);
    write_json(in_dir(o.run_dir, "evaluate.json"), eval_json(r));
    out.precision(17);
    out << "eval_mean " << r.mean << "\neval_std " << r.std << "\n";
    return kExitOk;
}

int cmd_export_embeddings(const Options& o, std::ostream& out) {
    const RunConfig c = run_config(o);
    if (c.env != "maze") throw ConfigError("export-embeddings needs a maze run (env = maze)");
    const std::string ckpt = c.policy_checkpoint.empty() ? "policy.ckpt" : c.policy_checkpoint;
    const fs::path p(ckpt);
    const auto policy = load_policy(p.is_relative() ? in_dir(o.run_dir, ckpt) : ckpt, c);
    const auto maze = envs::maze_generate(c.maze_size, o.maze_seed);
    const auto e = embed_maze(policy, maze);
    write_embeddings(e, in_dir(o.run_dir, "embeddings_points.csv"), in_dir(o.run_dir, "embeddings_edges.csv"));
    out << "embedded " << e.points.size() << " cells, " << e.edges.size() << " transition edges\n";
    return kExitOk;
}

int cmd_gen_mazes(const Options& o, std::ostream& out) {
    RunConfig c = build_config(o);
    const std::string dir = prepare_dir(c);
    const auto mazes = envs::generate_dataset(c.maze_size, c.maze_count, c.seed);
    envs::save_jsonl(mazes, in_dir(dir, "mazes.jsonl"));
    write_manifest(dir, c, {"mazes.jsonl"});
    out << "wrote " << mazes.size() << " mazes to " << in_dir(dir, "mazes.jsonl") << "\n";
    return kExitOk;
}

int cmd_stats(const Options& o, std::ostream& out) {
    if (o.input.empty()) throw ConfigError("--input is required");
    if (!fs::exists(o.input)) throw MissingArtifact("maze dataset not found: " + o.input);
    const auto mazes = envs::load_jsonl(o.input);
    out << "difficulty,count\n";
    for (const auto& [d, n] : envs::difficulty_histogram(mazes)) out << d << "," << n << "\n";
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Implicit planning agents: pretraining, training and analysis"};
    app.require_subcommand(1);
    Options o;
    auto add_config = [&o](CLI::App* sub) {
        sub->add_option("-c,--config", o.config_file, "flat key = value config file");
        sub->add_option("--set", o.overrides, "override one key, key=value (repeatable)");
    };
    auto add_output = [&o](CLI::App* sub) { sub->add_option("-o,--output", o.output_dir, "output directory"); };
    auto add_run = [&o](CLI::App* sub) {
        sub->add_option("--run", o.run_dir, "completed run directory")->required();
        sub->add_option("--set", o.overrides, "override one key, key=value (repeatable)");
    };

    auto* transe_cmd = app.add_subcommand("pretrain-transe", "fit encoder and transition model on random transitions");
    add_config(transe_cmd);
    add_output(transe_cmd);
    auto* exec_cmd = app.add_subcommand("pretrain-executor", "fit the message-passing executor to value iteration");
    add_config(exec_cmd);
    add_output(exec_cmd);
    auto* train_cmd = app.add_subcommand("train", "train a policy with PPO");
    add_config(train_cmd);
    add_output(train_cmd);
    train_cmd->add_flag("--pretrain", o.pretrain, "run missing pretraining stages first");
    auto* eval_cmd = app.add_subcommand("evaluate", "greedy evaluation of a trained policy");
    add_run(eval_cmd);
    auto* emb_cmd = app.add_subcommand("export-embeddings", "PCA of state embeddings for one maze");
    add_run(emb_cmd);
    emb_cmd->add_option("--maze-seed", o.maze_seed, "seed of the maze to embed");
    auto* gen_cmd = app.add_subcommand("gen-mazes", "generate a maze dataset");
    add_config(gen_cmd);
    add_output(gen_cmd);
    auto* stats_cmd = app.add_subcommand("stats", "difficulty histogram of a maze dataset");
    stats_cmd->add_option("--input", o.input, "mazes.jsonl")->required();

    std::vector<std::string> argv_store{"xlvin"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUserError;
    }

    try {
        if (transe_cmd->parsed()) return cmd_pretrain_transe(o, out);
        if (exec_cmd->parsed()) return cmd_pretrain_executor(o, out);
        if (train_cmd->parsed()) return cmd_train(o, out);
        if (eval_cmd->parsed()) return cmd_evaluate(o, out);
        if (emb_cmd->parsed()) return cmd_export_embeddings(o, out);
        if (gen_cmd->parsed()) return cmd_gen_mazes(o, out);
        if (stats_cmd->parsed()) return cmd_stats(o, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const MissingArtifact& e) {
        err << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const std::exception& e) {
        err << "runtime failure: " << e.what() << "\n";
        return kExitRuntimeError;
    }
    return kExitUserError;
}

} // namespace xlvin::cli
