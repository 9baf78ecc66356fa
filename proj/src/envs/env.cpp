#include "xlvin/envs/env.hpp"

#include "xlvin/errors.hpp"

namespace xlvin::envs {

void Env::check_step(std::size_t action) const {
    require(!done_, name() + ": step called on a finished episode; call reset first");
    require(action < n_actions(), name() + ": action " + std::to_string(action) + " out of range");
}

void Env::finish_step(StepResult& r) {
    ++steps_;
    if (!r.done && steps_ >= step_limit()) {
        r.done = true;
        r.truncated = true;
    }
    done_ = r.done;
}

} // namespace xlvin::envs
