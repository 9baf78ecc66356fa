#pragma once

#include <array>

#include "xlvin/envs/env.hpp"

namespace xlvin::envs {

struct CartPoleParams {
    double gravity = 9.8;
    double cart_mass = 1.0;
    double pole_mass = 0.1;
    double half_length = 0.5;
    double force = 10.0;
    double dt = 0.02;
    double angle_limit_deg = 15.0;
    double x_limit = 2.4;
    std::size_t max_steps = 200;
};

// State (x, x_dot, theta, theta_dot). Action 0 pushes left, 1 pushes right.
// Reward +1 per step, including the terminating one.
class CartPole final : public Env {
public:
    using State = std::array<double, 4>;

    explicit CartPole(CartPoleParams params = {}) : p_(params) {}

    Observation reset(std::uint64_t seed) override;
    StepResult step(std::size_t action) override;
    std::size_t n_actions() const override { return 2; }
    std::vector<std::size_t> observation_shape() const override { return {4}; }
    std::size_t step_limit() const override { return p_.max_steps; }
    std::string name() const override { return "cartpole"; }

    const State& state() const { return s_; }
    void set_state(const State& s);

    // Pure one-step dynamics, no termination logic.
    static State dynamics(const CartPoleParams& p, const State& s, std::size_t action);

private:
    CartPoleParams p_;
    State s_{};
};

struct AcrobotParams {
    double link_length_1 = 1.0;
    double link_mass_1 = 1.0;
    double link_mass_2 = 1.0;
    double link_com_1 = 0.5;
    double link_com_2 = 0.5;
    double link_moi = 1.0;
    double gravity = 9.8;
    double dt = 0.2;
    double max_vel_1 = 4.0 * 3.14159265358979323846;
    double max_vel_2 = 9.0 * 3.14159265358979323846;
    std::size_t max_steps = 500;
};

// State (theta1, theta2, dtheta1, dtheta2); observation
// [cos t1, sin t1, cos t2, sin t2, dt1, dt2]. Actions 0/1/2 apply torque
// -1/0/+1 on the middle joint. Reward -1 on every step.
class Acrobot final : public Env {
public:
    using State = std::array<double, 4>;

    explicit Acrobot(AcrobotParams params = {}) : p_(params) {}

    Observation reset(std::uint64_t seed) override;
    StepResult step(std::size_t action) override;
    std::size_t n_actions() const override { return 3; }
    std::vector<std::size_t> observation_shape() const override { return {6}; }
    std::size_t step_limit() const override { return p_.max_steps; }
    std::string name() const override { return "acrobot"; }

    const State& state() const { return s_; }
    void set_state(const State& s);

    // One RK4 step of length dt, without angle wrapping or velocity clipping.
    static State rk4(const AcrobotParams& p, const State& s, double torque);
    static double energy(const AcrobotParams& p, const State& s);
    static double tip_height(const State& s);

private:
    Observation observe() const;

    AcrobotParams p_;
    State s_{};
};

struct MountainCarParams {
    double min_position = -1.2;
    double max_position = 0.6;
    double max_speed = 0.07;
    double goal_position = 0.5;
    double force = 0.001;
    double gravity = 0.0025;
    std::size_t max_steps = 200;
};

// State (position, velocity). Actions 0/1/2 = reverse/none/forward.
// Reward -1 on every step.
class MountainCar final : public Env {
public:
    using State = std::array<double, 2>;

    explicit MountainCar(MountainCarParams params = {}) : p_(params) {}

    Observation reset(std::uint64_t seed) override;
    StepResult step(std::size_t action) override;
    std::size_t n_actions() const override { return 3; }
    std::vector<std::size_t> observation_shape() const override { return {2}; }
    std::size_t step_limit() const override { return p_.max_steps; }
    std::string name() const override { return "mountaincar"; }

    const State& state() const { return s_; }
    void set_state(const State& s);

    static State dynamics(const MountainCarParams& p, const State& s, std::size_t action);

private:
    MountainCarParams p_;
    State s_{};
};

// "cartpole", "acrobot" or "mountaincar" with default parameters.
std::unique_ptr<Env> make_control_env(const std::string& name);

} // namespace xlvin::envs
