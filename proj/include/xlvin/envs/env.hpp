#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace xlvin::envs {

using Observation = std::vector<double>;

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool done = false;
    bool success = false;    // goal reached (mazes, MountainCar, Acrobot)
    bool truncated = false;  // ended by the step cap
};

// Common interface for every environment. Randomness is drawn only in
// reset(), from the seed it is given, so reset/step sequences replay exactly.
class Env {
public:
    virtual ~Env() = default;

    virtual Observation reset(std::uint64_t seed) = 0;
    // Throws ContractViolation for an out-of-range action or a finished episode.
    virtual StepResult step(std::size_t action) = 0;

    virtual std::size_t n_actions() const = 0;
    // {dim} for control tasks, {channels, height, width} for mazes.
    virtual std::vector<std::size_t> observation_shape() const = 0;
    virtual std::size_t step_limit() const = 0;
    virtual std::string name() const = 0;

    bool done() const { return done_; }
    std::size_t steps() const { return steps_; }

protected:
    void check_step(std::size_t action) const;
    // Bumps the counter and applies the step cap to `r`.
    void finish_step(StepResult& r);

    bool done_ = true;
    std::size_t steps_ = 0;
};

} // namespace xlvin::envs
