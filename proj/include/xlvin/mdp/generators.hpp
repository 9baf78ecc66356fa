#pragma once

#include <cstdint>

#include "xlvin/envs/maze_grid.hpp"
#include "xlvin/mdp/mdp.hpp"

namespace xlvin::mdp {

// Default discount for synthetic executor-pretraining graphs.
inline constexpr double kSyntheticDiscount = 0.9;

// Random deterministic graph: every (s, a) jumps to a uniformly drawn state
// and earns a standard-normal reward.
DiscreteMdp gen_random_deterministic(std::size_t n_states, std::size_t n_actions, std::uint64_t seed,
                                     double discount = kSyntheticDiscount);

struct CartpoleTreeOptions {
    // Probability that a leaf other than the all-left / all-right ones fails.
    double fail_probability = 0.25;
    double discount = kSyntheticDiscount;
};

// Full binary tree of the given depth. Node i has children 2i+1 (action 0,
// "left") and 2i+2 (action 1, "right"); leaves are terminal. Entering a
// failing leaf pays 0, every other transition pays 1.
DiscreteMdp gen_cartpole_tree(std::size_t depth, std::uint64_t seed, const CartpoleTreeOptions& options = {});

struct MazeMdpOptions {
    double discount = 0.99;
    // Merge the failure state into the goal so a single terminal node
    // receives every terminating edge.
    bool single_terminal = false;
};

// Cell index of each free cell, in row-major order; the failure state (when
// present) follows the last free cell.
struct MazeMdp {
    DiscreteMdp mdp;
    std::vector<long> state_of_cell;  // -1 for obstacles
    std::vector<envs::Cell> cell_of_state;
    std::size_t goal_state = 0;
    std::size_t failure_state = 0;
};

// One state per free cell, 8 deterministic moves. Moving off-grid or into an
// obstacle pays -1 and enters an absorbing failure state; entering the goal
// pays +1 (goal is terminal); any other move pays -0.01.
MazeMdp maze_to_mdp(const envs::MazeGrid& maze, const MazeMdpOptions& options = {});

} // namespace xlvin::mdp
