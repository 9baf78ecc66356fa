#include "xlvin/mdp/generators.hpp"

#include <random>

#include "xlvin/errors.hpp"

namespace xlvin::mdp {

DiscreteMdp gen_random_deterministic(std::size_t n_states, std::size_t n_actions, std::uint64_t seed,
                                     double discount) {
    DiscreteMdp m(n_states, n_actions, discount);
    m.generator = "random-deterministic";
    m.seed = seed;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n_states - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t s = 0; s < n_states; ++s) {
        for (std::size_t a = 0; a < n_actions; ++a) {
            m.p(s, a, pick(rng)) = 1.0;
            m.r(s, a) = normal(rng);
        }
    }
    return m;
}

DiscreteMdp gen_cartpole_tree(std::size_t depth, std::uint64_t seed, const CartpoleTreeOptions& options) {
    require(depth >= 1, "cartpole tree depth must be at least 1");
    const std::size_t n = (std::size_t{1} << (depth + 1)) - 1;
    const std::size_t first_leaf = (std::size_t{1} << depth) - 1;
    DiscreteMdp m(n, 2, options.discount);
    m.generator = "cartpole-tree";
    m.seed = seed;

    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(options.fail_probability);
    std::vector<bool> failing(n, false);
    for (std::size_t leaf = first_leaf; leaf < n; ++leaf) failing[leaf] = coin(rng);
    failing[first_leaf] = true;  // all-left
    failing[n - 1] = true;       // all-right

    for (std::size_t s = 0; s < first_leaf; ++s) {
        for (std::size_t a = 0; a < 2; ++a) {
            const std::size_t child = 2 * s + 1 + a;
            m.p(s, a, child) = 1.0;
            m.r(s, a) = failing[child] ? 0.0 : 1.0;
        }
    }
    for (std::size_t leaf = first_leaf; leaf < n; ++leaf) m.make_terminal(leaf);
    return m;
}

MazeMdp maze_to_mdp(const envs::MazeGrid& maze, const MazeMdpOptions& options) {
    require(maze.in_bounds(maze.goal) && maze.in_bounds(maze.start), "start/goal out of bounds");
    if (envs::bfs_distances(maze, maze.start)[maze.index(maze.goal)] <= 0)
        throw GenerationError("maze goal is not reachable from the start cell");
    envs::validate(maze);
    MazeMdp out;
    out.state_of_cell.assign(maze.size * maze.size, -1);
    for (int r = 0; r < static_cast<int>(maze.size); ++r)
        for (int c = 0; c < static_cast<int>(maze.size); ++c) {
            envs::Cell cell{r, c};
            if (maze.blocked(cell)) continue;
            out.state_of_cell[maze.index(cell)] = static_cast<long>(out.cell_of_state.size());
            out.cell_of_state.push_back(cell);
        }
    const std::size_t n_free = out.cell_of_state.size();
    out.goal_state = static_cast<std::size_t>(out.state_of_cell[maze.index(maze.goal)]);
    out.failure_state = options.single_terminal ? out.goal_state : n_free;
    const std::size_t n_states = options.single_terminal ? n_free : n_free + 1;

    DiscreteMdp& m = out.mdp;
    m = DiscreteMdp(n_states, envs::kMazeActions, options.discount);
    m.generator = options.single_terminal ? "maze-single-terminal" : "maze";
    m.seed = maze.seed;
    for (std::size_t s = 0; s < n_free; ++s) {
        if (s == out.goal_state) continue;
        const envs::Cell c = out.cell_of_state[s];
        for (std::size_t a = 0; a < envs::kMazeActions; ++a) {
            const envs::Cell next{c.row + envs::kMoves[a].row, c.col + envs::kMoves[a].col};
            if (!maze.free(next)) {
                m.p(s, a, out.failure_state) = 1.0;
                m.r(s, a) = -1.0;
            } else if (next == maze.goal) {
                m.p(s, a, out.goal_state) = 1.0;
                m.r(s, a) = 1.0;
            } else {
                m.p(s, a, static_cast<std::size_t>(out.state_of_cell[maze.index(next)])) = 1.0;
                m.r(s, a) = -0.01;
            }
        }
    }
    m.make_terminal(out.goal_state);
    if (!options.single_terminal) m.make_terminal(out.failure_state);
    return out;
}

} // namespace xlvin::mdp
