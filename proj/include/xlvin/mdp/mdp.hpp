#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace xlvin::mdp {

/// Explicit finite MDP with dense tables.
///
/// Terminal states are modelled as zero-reward self-loops on every action, so
/// the Bellman backup needs no special case for them beyond pinning their
/// value to zero.
struct DiscreteMdp {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> transition;  // [s][a][s'] row-major
    std::vector<double> reward;      // [s][a]
    double discount = 0.9;
    std::vector<std::uint8_t> terminal;  // per state
    std::string generator = "manual";
    std::uint64_t seed = 0;

    DiscreteMdp() = default;
    DiscreteMdp(std::size_t states, std::size_t actions, double gamma);

    double& p(std::size_t s, std::size_t a, std::size_t s2) {
        return transition[(s * n_actions + a) * n_states + s2];
    }
    double p(std::size_t s, std::size_t a, std::size_t s2) const {
        return transition[(s * n_actions + a) * n_states + s2];
    }
    double& r(std::size_t s, std::size_t a) { return reward[s * n_actions + a]; }
    double r(std::size_t s, std::size_t a) const { return reward[s * n_actions + a]; }
    bool is_terminal(std::size_t s) const { return terminal[s] != 0; }

    // Makes s absorbing: self-loop with reward 0 under every action.
    void make_terminal(std::size_t s);

    // Successor of a deterministic (s, a), or n_states if the row is not one-hot.
    std::size_t successor(std::size_t s, std::size_t a) const;

    bool operator==(const DiscreteMdp&) const = default;
};

// Checks probability rows, terminal convention and discount range.
void validate(const DiscreteMdp& mdp);

nlohmann::json to_json(const DiscreteMdp& mdp);
DiscreteMdp mdp_from_json(const nlohmann::json& j);

using ValueTable = std::vector<double>;

// One application of the Bellman optimality operator. Terminal states stay 0.
ValueTable vi_step(const DiscreteMdp& mdp, const ValueTable& v);

// max_s |a[s] - b[s]|
double sup_distance(const ValueTable& a, const ValueTable& b);

struct ViSolution {
    ValueTable values;
    std::size_t iterations = 0;
};

// Iterates from V_0 = 0 and returns the first iterate V with
// ||V - vi_step(V)||_inf <= tol. Throws ConvergenceError past max_iters.
ViSolution vi_solve(const DiscreteMdp& mdp, double tol = 1e-8, std::size_t max_iters = 10000);

struct ViTrajectory {
    DiscreteMdp mdp;
    std::vector<ValueTable> iterates;  // V_0 = 0, ..., V_T
};

// Same stopping rule as vi_solve; keeps every intermediate iterate.
ViTrajectory vi_trajectory(const DiscreteMdp& mdp, double tol = 1e-8, std::size_t max_iters = 10000);

} // namespace xlvin::mdp
