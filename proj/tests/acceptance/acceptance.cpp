// Acceptance suite: one PASS/FAIL line per criterion. With no arguments every
// criterion runs; otherwise only the listed numbers. Exit status is 0 iff all
// selected criteria pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "xlvin/cli/app.hpp"
#include "xlvin/cli/config.hpp"
#include "xlvin/cli/pipeline.hpp"
#include "xlvin/envs/control.hpp"
#include "xlvin/envs/maze.hpp"
#include "xlvin/mdp/generators.hpp"
#include "xlvin/mdp/mdp.hpp"
#include "xlvin/nn/layers.hpp"
#include "xlvin/nn/ops.hpp"
#include "xlvin/policy/policy.hpp"
#include "xlvin/ppo/ppo.hpp"
#include "xlvin/transe/transe.hpp"

#ifndef XLVIN_CONFIG_DIR
#error "XLVIN_CONFIG_DIR must point at the shipped experiment configs"
#endif

using namespace xlvin;
namespace fs = std::filesystem;
using nn::Tensor;
using testing::gradcheck;
using testing::random_tensor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

std::string join(const std::vector<double>& v, int precision = 4) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i], precision);
    return "[" + s + "]";
}

cli::RunConfig experiment(const std::string& name) {
    return cli::load_config(std::string(XLVIN_CONFIG_DIR) + "/" + name + ".conf");
}

// ---------------------------------------------------------------- 1

Outcome autodiff() {
    constexpr double kTol = 1e-4;
    constexpr int kInstances = 10;
    std::mt19937_64 rng(2024);
    std::map<std::string, double> worst;
    auto check = [&](const std::string& name, const std::function<Tensor(const std::vector<Tensor>&)>& f,
                     std::vector<Tensor> in) { worst[name] = std::max(worst[name], gradcheck(f, std::move(in), rng)); };
    // Inputs kept away from kinks (relu at 0, clamp bounds) and ties (max ops).
    auto away = [&](nn::Shape s, double kink) {
        Tensor t = random_tensor(std::move(s), rng);
        for (auto& v : t.mutable_data())
            if (std::abs(v - kink) < 0.05) v = kink + (v >= kink ? 0.1 : -0.1);
        return t;
    };
    auto distinct = [&](nn::Shape s) {
        const std::size_t n = nn::numel_of(s);
        std::vector<nn::Scalar> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n);
        std::shuffle(v.begin(), v.end(), rng);
        return Tensor::from(std::move(s), std::move(v), true);
    };
    for (int inst = 0; inst < kInstances; ++inst) {
        auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
        check("add", [](auto& x) { return nn::add(x[0], x[1]); }, {a, b});
        check("sub", [](auto& x) { return nn::sub(x[0], x[1]); }, {a, b});
        check("mul", [](auto& x) { return nn::mul(x[0], x[1]); }, {a, b});
        check("scale", [](auto& x) { return nn::scale(x[0], 0.3); }, {a});
        check("add_scalar", [](auto& x) { return nn::add_scalar(x[0], 0.7); }, {a});
        check("neg", [](auto& x) { return nn::neg(x[0]); }, {a});
        check("square", [](auto& x) { return nn::square(x[0]); }, {a});
        check("exp", [](auto& x) { return nn::exp(x[0]); }, {a});
        check("log", [](auto& x) { return nn::log(x[0]); }, {random_tensor({3, 4}, rng, 0.5, 2.0)});
        check("relu", [](auto& x) { return nn::relu(x[0]); }, {away({4, 5}, 0.0)});
        Tensor c = away({4, 5}, 0.5);
        for (auto& v : c.mutable_data())
            if (std::abs(v + 0.5) < 0.05) v = -0.7;
        check("clamp", [](auto& x) { return nn::clamp(x[0], -0.5, 0.5); }, {c});
        Tensor m1 = distinct({4, 5}), m2 = distinct({4, 5});
        for (auto& v : m2.mutable_data()) v += 0.013;
        check("minimum", [](auto& x) { return nn::minimum(x[0], x[1]); }, {m1, m2});
        check("reshape", [](auto& x) { return nn::reshape(x[0], {4, 3}); }, {a});
        auto w = random_tensor({4, 2}, rng), bias = random_tensor({2}, rng);
        check("matmul", [](auto& x) { return nn::matmul(x[0], x[1]); }, {a, w});
        check("linear", [](auto& x) { return nn::linear(x[0], x[1], x[2]); }, {a, w, bias});
        check("add_row", [](auto& x) { return nn::add_row(x[0], x[1]); }, {a, random_tensor({4}, rng)});
        check("sum", [](auto& x) { return nn::sum(x[0]); }, {a});
        check("mean", [](auto& x) { return nn::mean(x[0]); }, {a});
        check("sum_cols", [](auto& x) { return nn::sum_cols(x[0]); }, {a});
        auto g = random_tensor({4}, rng), be = random_tensor({4}, rng);
        check("layer_norm", [](auto& x) { return nn::layer_norm(x[0], x[1], x[2]); }, {a, g, be});
        auto logits = random_tensor({3, 5}, rng, -2, 2);
        check("softmax", [](auto& x) { return nn::softmax(x[0]); }, {logits});
        check("log_softmax", [](auto& x) { return nn::log_softmax(x[0]); }, {logits});
        auto narrow = random_tensor({3, 2}, rng);
        check("concat_cols", [](auto& x) { return nn::concat_cols({x[0], x[1]}); }, {narrow, a});
        auto rows = random_tensor({2, 4}, rng);
        check("concat_rows", [](auto& x) { return nn::concat_rows({x[0], x[1]}); }, {a, rows});
        check("slice_rows", [](auto& x) { return nn::slice_rows(x[0], 1, 3); }, {a});
        check("gather_rows", [](auto& x) { return nn::gather_rows(x[0], {2, 0, 2, 1}); }, {a});
        check("pick", [](auto& x) { return nn::pick(x[0], {3, 0, 1}); }, {a});
        const std::vector<std::size_t> seg = {0, 2, 0, 1, 2, 0};
        check("segment_max", [&](auto& x) { return nn::segment_max(x[0], seg, 4); }, {distinct({6, 3})});
        check("max_reduce", [](auto& x) { return nn::max_reduce(x[0]); }, {distinct({6, 3})});
        auto img = random_tensor({2, 2, 4, 5}, rng), k = random_tensor({3, 2, 3, 3}, rng);
        check("conv2d", [](auto& x) { return nn::conv2d(x[0], x[1]); }, {img, k});
        check("global_avg_pool", [](auto& x) { return nn::global_avg_pool(x[0]); }, {img});
        auto bimg = random_tensor({3, 2, 3, 3}, rng), bg = random_tensor({2}, rng), bb = random_tensor({2}, rng);
        nn::BatchNormStats stats(2);
        check("batch_norm(train)", [&](auto& x) { return nn::batch_norm(x[0], x[1], x[2], stats, true); },
              {bimg, bg, bb});
        check("batch_norm(eval)", [&](auto& x) { return nn::batch_norm(x[0], x[1], x[2], stats, false); },
              {bimg, bg, bb});
    }
    double max_err = 0.0;
    std::string worst_op;
    for (const auto& [name, e] : worst)
        if (e >= max_err) {
            max_err = e;
            worst_op = name;
        }
    return {max_err < kTol, std::to_string(worst.size()) + " primitives x " + std::to_string(kInstances) +
                                " instances, max relative error " + fmt(max_err, 3) + " (" + worst_op + ")"};
}

// ---------------------------------------------------------------- 2

// Plain triple-loop Bellman backup, independent of vi_step.
mdp::ValueTable brute_backup(const mdp::DiscreteMdp& m, const mdp::ValueTable& v) {
    mdp::ValueTable out(m.n_states, 0.0);
    for (std::size_t s = 0; s < m.n_states; ++s) {
        if (m.terminal[s]) continue;
        double best = -1e300;
        for (std::size_t a = 0; a < m.n_actions; ++a) {
            double q = m.reward[s * m.n_actions + a];
            for (std::size_t t = 0; t < m.n_states; ++t)
                q += m.discount * m.transition[(s * m.n_actions + a) * m.n_states + t] * v[t];
            best = std::max(best, q);
        }
        out[s] = best;
    }
    return out;
}

Outcome vi_oracle() {
    double worst_residual = 0.0, worst_gap = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto m = mdp::gen_random_deterministic(20, 8, seed, 0.9);
        const auto sol = mdp::vi_solve(m);
        worst_residual = std::max(worst_residual, mdp::sup_distance(sol.values, mdp::vi_step(m, sol.values)));
        mdp::ValueTable v(m.n_states, 0.0);
        for (int i = 0; i < 2000; ++i) v = brute_backup(m, v);
        worst_gap = std::max(worst_gap, mdp::sup_distance(v, sol.values));
    }
    return {worst_residual <= 1e-8 && worst_gap <= 1e-6,
            "100 MDPs (20 states, 8 actions, gamma 0.9): max Bellman residual " + fmt(worst_residual, 3) +
                ", max gap to brute force " + fmt(worst_gap, 3)};
}

// ---------------------------------------------------------------- 3

Outcome executor_imitation() {
    cli::RunConfig c;
    c.executor = "R";
    c.seed = 0;
    const auto stage = cli::run_pretrain_executor(c);
    const double ratio = stage.held_out_mse / stage.held_out_copy_mse;
    return {ratio < 0.1, "random deterministic graphs: held-out mse " + fmt(stage.held_out_mse, 3) +
                             ", copy baseline " + fmt(stage.held_out_copy_mse, 3) + ", ratio " + fmt(ratio, 3)};
}

// ---------------------------------------------------------------- 4

std::size_t closed_form_nodes(std::size_t a, std::size_t k) {
    if (a == 1) return k + 1;
    std::size_t p = 1;
    for (std::size_t i = 0; i <= k; ++i) p *= a;
    return (p - 1) / (a - 1);
}

Outcome tree_counts() {
    nn::Rng rng(4);
    std::size_t cases = 0, bad = 0;
    for (std::size_t a = 1; a <= 8; ++a) {
        transe::TransitionModel t(3, a, 8, rng);
        const auto root = random_tensor({1, 3}, rng, -1, 1, false);
        for (std::size_t k = 0; k <= 4; ++k) {
            const auto g = policy::expand_tree(root, k, t);
            const std::size_t n = closed_form_nodes(a, k);
            ++cases;
            if (g.n_nodes() != n || g.n_edges() != n - 1 || g.embeddings.size(0) != n) ++bad;
        }
    }
    return {bad == 0, std::to_string(cases) + " (|A|, K) shapes, " + std::to_string(bad) + " mismatches"};
}

// ---------------------------------------------------------------- 5

Outcome freezing() {
    cli::RunConfig c = experiment("cartpole");
    c.seed = 5;
    c.transe_transitions = 500;
    c.transe_epochs = 2;
    c.exec_graphs = 8;
    c.exec_epochs = 2;
    const auto tm = cli::run_pretrain_transe(c).model;
    const auto ex = cli::run_pretrain_executor(c).model;
    auto pol = cli::build_policy(c, &tm, &ex);
    const auto before = nn::params_hash(pol.params(), "executor.");
    const auto enc_before = nn::params_hash(pol.params(), "encoder.");

    auto env = envs::make_control_env("cartpole");
    std::vector<envs::Env*> pool{env.get()};
    ppo::TrainerConfig tc = cli::trainer_config(c);
    nn::Rng rng(5);
    nn::AdamState adam;
    std::size_t updates = 0;
    bool same = true;
    for (int round = 0; round < 10; ++round) {
        auto buffer = ppo::collect_rollouts(pol, pool, 2, rng);
        ppo::prepare_advantages(buffer, tc);
        ppo::ppo_update(pol, buffer, tc, adam, rng);
        ++updates;
        same = same && nn::params_hash(pol.params(), "executor.") == before;
    }
    const bool encoder_moved = nn::params_hash(pol.params(), "encoder.") != enc_before;
    return {same && encoder_moved, "executor hash unchanged after each of " + std::to_string(updates) +
                                       " PPO updates: " + (same ? "yes" : "no") +
                                       "; encoder trained meanwhile: " + (encoder_moved ? "yes" : "no")};
}

// ---------------------------------------------------------------- 6-8

double control_score(cli::RunConfig c, const std::string& agent, std::uint64_t seed) {
    c.agent = agent;
    c.seed = seed;
    std::optional<transe::TranseModel> tm;
    std::optional<executor::Executor> ex;
    if (agent == "xlvin") {
        tm = cli::run_pretrain_transe(c).model;
        ex = cli::run_pretrain_executor(c).model;
    }
    auto pol = cli::build_policy(c, tm ? &*tm : nullptr, ex ? &*ex : nullptr);
    const auto outcome = cli::run_training(c, pol, nullptr);
    return outcome.control->eval.mean;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

Outcome cartpole() {
    const auto c = experiment("cartpole");
    std::vector<double> x, b;
    for (std::uint64_t s = 0; s < 3; ++s) {
        x.push_back(control_score(c, "xlvin", s));
        b.push_back(control_score(c, "ppo", s));
    }
    const double mx = mean_of(x), mb = mean_of(b);
    return {mx >= 150.0 && mx >= mb + 30.0, "XLVIN-" + c.executor + " " + join(x) + " mean " + fmt(mx) + "; PPO " +
                                                join(b) + " mean " + fmt(mb) + " (need >= 150 and >= PPO + 30)"};
}

Outcome sparse(const std::string& env, double floor, double threshold) {
    const auto c = experiment(env);
    std::vector<double> x, b;
    for (std::uint64_t s = 0; s < 5; ++s) {
        x.push_back(control_score(c, "xlvin", s));
        b.push_back(control_score(c, "ppo", s));
    }
    const auto above = std::count_if(x.begin(), x.end(), [&](double v) { return v > threshold; });
    const bool baseline_floor = std::all_of(b.begin(), b.end(), [&](double v) { return v == floor; });
    return {above >= 3 && baseline_floor, "XLVIN-" + c.executor + " " + join(x) + ", " + std::to_string(above) +
                                              "/5 above " + fmt(threshold) + "; PPO " + join(b) +
                                              (baseline_floor ? " (all at " : " (not all at ") + fmt(floor) + ")"};
}

// ---------------------------------------------------------------- 9

Outcome continual_maze() {
    // Driver check: the scripted BFS agent passes each level within 1,001 episodes.
    ppo::CurriculumConfig oc;
    oc.max_difficulty = 10;
    oc.test_mazes = 20;
    ppo::BfsOracleAgent oracle(oc.maze_size);
    const auto o = ppo::run_curriculum(oracle, oc);
    bool oracle_ok = !o.failed && o.highest_passed == oc.max_difficulty;
    std::size_t oracle_worst = 0;
    for (const auto& l : o.levels) {
        oracle_ok = oracle_ok && l.passed && l.trajectories <= 1001;
        oracle_worst = std::max(oracle_worst, l.trajectories);
    }

    cli::RunConfig c = experiment("maze");
    const auto tm = cli::run_pretrain_transe(c).model;
    const auto ex = cli::run_pretrain_executor(c).model;
    auto pol = cli::build_policy(c, &tm, &ex);
    const auto r = *cli::run_training(c, pol, nullptr).curriculum;

    bool levels_ok = true;
    std::vector<double> tests;
    std::string per_level;
    for (const auto& l : r.levels) {
        if (!l.passed) continue;
        tests.push_back(l.test_success);
        if (l.difficulty <= 4 && !(l.test_success >= 0.85)) levels_ok = false;
        per_level += " d" + std::to_string(l.difficulty) + ":" + std::to_string(l.trajectories) + " traj/test " +
                     fmt(l.test_success, 3);
    }
    const bool agent_ok = r.highest_passed >= 4 && r.total_trajectories <= 200000 && levels_ok;
    return {oracle_ok && agent_ok,
            "BFS oracle passed " + std::to_string(o.highest_passed) + " levels, max " + std::to_string(oracle_worst) +
                " episodes per level; XLVIN passed difficulty " + std::to_string(r.highest_passed) + " after " +
                std::to_string(r.total_trajectories) + " trajectories" + (r.failed ? " (stopped: budget)" : "") +
                ";" + (per_level.empty() ? " no level passed" : per_level)};
}

// ---------------------------------------------------------------- 10

Outcome contextual_maze() {
    envs::ContextualMazeEnv env(8);
    std::size_t inverted = 0, bad = 0;
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        auto obs = env.reset(seed);
        const double a = env.a(), b = env.b();
        const std::size_t w = 10;
        for (std::size_t col = 0; col < w; ++col) bad += obs[col] != a;
        for (std::size_t row = 1; row < w; ++row) bad += obs[row * w] != b;
        if (a + b <= 1.0) continue;
        ++inverted;
        const auto maze = env.maze();
        // Goal reached along a shortest path: -1 on the final step.
        auto path = envs::shortest_path_actions(maze);
        envs::StepResult last;
        for (auto act : path) last = env.step(act);
        bad += !(last.done && last.reward == -1.0);
        // Every wall (off-grid or obstacle) from the start: +1.
        for (std::size_t act = 0; act < envs::kMazeActions; ++act) {
            const envs::Cell to{maze.start.row + envs::kMoves[act].row, maze.start.col + envs::kMoves[act].col};
            if (maze.free(to)) continue;
            env.reset_to(maze, a, b);
            const auto r = env.step(act);
            bad += !(r.done && r.reward == 1.0);
        }
        env.reset_to(maze, a, b);
    }
    return {bad == 0 && inverted > 0, "400 contexts (" + std::to_string(inverted) +
                                          " with a + b > 1): " + std::to_string(bad) + " violations"};
}

// ---------------------------------------------------------------- 11

Tensor row(std::vector<nn::Scalar> v) {
    const std::size_t n = v.size();
    return Tensor::from({1, n}, std::move(v));
}

Outcome transe_analytics() {
    struct Case {
        Tensor zs, delta, znext, zneg;
        double expect;
    };
    // Positive term |z(s) + T - z'|^2 plus hinge max(0, 1 - |z~ - z'|^2).
    std::vector<Case> cases = {
        {row({0, 0}), row({1, 0}), row({1, 0}), row({3, 0}), 0.0},
        {row({0, 0}), row({1, 0}), row({1, 0}), row({1, 0}), 1.0},
        {row({0, 0}), row({1, 0}), row({1, 1}), row({1, 1}), 2.0},
        {row({0.5, -0.5}), row({0.25, 0.25}), row({1, 0}), row({1.5, 0}), 0.125 + 0.75},
    };
    double worst = 0.0;
    for (const auto& c : cases)
        worst = std::max(worst, std::abs(transe::transe_loss(c.zs, c.delta, c.znext, c.zneg).item() - c.expect));
    nn::Rng rng(11);
    double min_loss = 1e300;
    for (int i = 0; i < 10000; ++i) {
        const std::size_t n = 1 + rng() % 6;
        auto r = [&](double s) { return random_tensor({n, 3}, rng, -s, s, false); };
        min_loss = std::min(min_loss, transe::transe_loss(r(2), r(1), r(2), r(2)).item());
    }
    return {worst <= 1e-12 && min_loss >= 0.0, std::to_string(cases.size()) + " hand examples, max error " +
                                                   fmt(worst, 3) + "; min loss over 10000 random batches " +
                                                   fmt(min_loss, 3)};
}

// ---------------------------------------------------------------- 12

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome reproducibility() {
    const auto root = fs::temp_directory_path() / "xlvin_acceptance_repro";
    fs::remove_all(root);
    auto train = [&](const std::string& name, const std::vector<std::string>& sets) {
        std::vector<std::string> args{"train", "--pretrain", "-o", (root / name).string()};
        for (const auto& s : sets) {
            args.push_back("--set");
            args.push_back(s);
        }
        std::ostringstream out, err;
        const int code = cli::run_cli(args, out, err);
        if (code != cli::kExitOk) throw std::runtime_error("train failed: " + err.str());
    };
    const std::vector<std::string> control{"env=mountaincar", "seed=3", "transe_transitions=1000", "transe_epochs=3",
                                           "exec_graphs=10",   "exec_epochs=3", "eval_episodes=5"};
    const std::vector<std::string> maze{"env=maze",          "seed=3",          "executor=maze",
                                        "maze_channels=8",   "transe_transitions=500", "transe_epochs=1",
                                        "exec_graphs=4",     "exec_epochs=1",   "max_difficulty=2",
                                        "curriculum_window=40", "curriculum_threshold=0.3",
                                        "max_total_trajectories=400", "test_mazes=10"};
    std::size_t compared = 0, identical = 0;
    for (const auto& [name, sets] : {std::pair{"control", control}, std::pair{"maze", maze}}) {
        train(std::string(name) + "_a", sets);
        train(std::string(name) + "_b", sets);
        for (const char* f : {"metrics.csv", "policy.ckpt"}) {
            const auto a = slurp(root / (std::string(name) + "_a") / f);
            const auto b = slurp(root / (std::string(name) + "_b") / f);
            ++compared;
            identical += !a.empty() && a == b;
        }
    }
    fs::remove_all(root);
    return {identical == compared, std::to_string(identical) + "/" + std::to_string(compared) +
                                       " artifact pairs byte-identical (metrics.csv, policy.ckpt; control and maze)"};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"autodiff correctness", autodiff},
        {"value iteration oracle", vi_oracle},
        {"executor imitation", executor_imitation},
        {"tree combinatorics", tree_counts},
        {"executor freezing", freezing},
        {"CartPole, 10 trajectories", cartpole},
        {"MountainCar, 100 trajectories", [] { return sparse("mountaincar", -200.0, -198.0); }},
        {"Acrobot, 100 trajectories", [] { return sparse("acrobot", -500.0, -450.0); }},
        {"continual maze", continual_maze},
        {"contextual maze", contextual_maze},
        {"TransE analytics", transe_analytics},
        {"reproducibility", reproducibility},
    };
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));

    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const std::size_t id = i + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        all = all && o.pass;
        std::cout << "criterion " << id << " (" << criteria[i].first << "): " << (o.pass ? "PASS" : "FAIL") << " | "
                  << o.detail << " | " << fmt(secs, 3) << " s" << std::endl;
    }
    return all ? 0 : 1;
}
