#include "xlvin/mdp/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xlvin/errors.hpp"

namespace xlvin::mdp {

DiscreteMdp::DiscreteMdp(std::size_t states, std::size_t actions, double gamma)
    : n_states(states),
      n_actions(actions),
      transition(states * actions * states, 0.0),
      reward(states * actions, 0.0),
      discount(gamma),
      terminal(states, 0) {
    require(states > 0 && actions > 0, "MDP needs at least one state and one action");
}

void DiscreteMdp::make_terminal(std::size_t s) {
    terminal[s] = 1;
    for (std::size_t a = 0; a < n_actions; ++a) {
        for (std::size_t s2 = 0; s2 < n_states; ++s2) p(s, a, s2) = s2 == s ? 1.0 : 0.0;
        r(s, a) = 0.0;
    }
}

std::size_t DiscreteMdp::successor(std::size_t s, std::size_t a) const {
    for (std::size_t s2 = 0; s2 < n_states; ++s2)
        if (p(s, a, s2) == 1.0) return s2;
    return n_states;
}

void validate(const DiscreteMdp& mdp) {
    require(mdp.n_states > 0 && mdp.n_actions > 0, "MDP sizes must be positive");
    require(mdp.transition.size() == mdp.n_states * mdp.n_actions * mdp.n_states, "transition table size mismatch");
    require(mdp.reward.size() == mdp.n_states * mdp.n_actions, "reward table size mismatch");
    require(mdp.terminal.size() == mdp.n_states, "terminal flags size mismatch");
    require(mdp.discount >= 0.0 && mdp.discount < 1.0, "discount must lie in [0,1)");
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            double total = 0.0;
            for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) {
                require(mdp.p(s, a, s2) >= 0.0, "negative transition probability");
                total += mdp.p(s, a, s2);
            }
            require(std::abs(total - 1.0) <= 1e-12, "transition row does not sum to 1");
            require(std::isfinite(mdp.r(s, a)), "non-finite reward");
            if (mdp.is_terminal(s)) {
                require(mdp.p(s, a, s) == 1.0 && mdp.r(s, a) == 0.0, "terminal state must be a zero-reward self-loop");
            }
        }
    }
}

nlohmann::json to_json(const DiscreteMdp& mdp) {
    return {{"n_states", mdp.n_states}, {"n_actions", mdp.n_actions}, {"transition", mdp.transition},
            {"reward", mdp.reward},     {"discount", mdp.discount},   {"terminal", mdp.terminal},
            {"generator", mdp.generator}, {"seed", mdp.seed}};
}

DiscreteMdp mdp_from_json(const nlohmann::json& j) {
    DiscreteMdp m;
    m.n_states = j.at("n_states").get<std::size_t>();
    m.n_actions = j.at("n_actions").get<std::size_t>();
    m.transition = j.at("transition").get<std::vector<double>>();
    m.reward = j.at("reward").get<std::vector<double>>();
    m.discount = j.at("discount").get<double>();
    m.terminal = j.at("terminal").get<std::vector<std::uint8_t>>();
    m.generator = j.value("generator", "manual");
    m.seed = j.value("seed", std::uint64_t{0});
    validate(m);
    return m;
}

ValueTable vi_step(const DiscreteMdp& mdp, const ValueTable& v) {
    require(v.size() == mdp.n_states, "value table size mismatch");
    ValueTable out(mdp.n_states, 0.0);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        if (mdp.is_terminal(s)) continue;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            const double* row = &mdp.transition[(s * mdp.n_actions + a) * mdp.n_states];
            double expect = 0.0;
            for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2)
                if (row[s2] != 0.0) expect += row[s2] * v[s2];
            best = std::max(best, mdp.r(s, a) + mdp.discount * expect);
        }
        out[s] = best;
    }
    return out;
}

double sup_distance(const ValueTable& a, const ValueTable& b) {
    require(a.size() == b.size(), "value tables differ in size");
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

ViSolution vi_solve(const DiscreteMdp& mdp, double tol, std::size_t max_iters) {
    require(mdp.discount < 1.0, "vi_solve requires discount < 1");
    ValueTable v(mdp.n_states, 0.0);
    for (std::size_t it = 0; it <= max_iters; ++it) {
        ValueTable next = vi_step(mdp, v);
        if (sup_distance(next, v) <= tol) return {std::move(v), it};
        v = std::move(next);
    }
    throw ConvergenceError("value iteration did not reach tolerance within " + std::to_string(max_iters) +
                           " iterations");
}

ViTrajectory vi_trajectory(const DiscreteMdp& mdp, double tol, std::size_t max_iters) {
    require(mdp.discount < 1.0, "vi_trajectory requires discount < 1");
    ViTrajectory traj{mdp, {ValueTable(mdp.n_states, 0.0)}};
    for (std::size_t it = 0; it <= max_iters; ++it) {
        ValueTable next = vi_step(mdp, traj.iterates.back());
        if (sup_distance(next, traj.iterates.back()) <= tol) return traj;
        traj.iterates.push_back(std::move(next));
    }
    throw ConvergenceError("value iteration trajectory exceeded " + std::to_string(max_iters) + " iterations");
}

} // namespace xlvin::mdp
