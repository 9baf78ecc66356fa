#include "xlvin/envs/control.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "xlvin/errors.hpp"

namespace xlvin::envs {

namespace {

double wrap_angle(double x) {
    constexpr double pi = std::numbers::pi;
    x = std::fmod(x + pi, 2.0 * pi);
    if (x < 0) x += 2.0 * pi;
    return x - pi;
}

} // namespace

// ---- CartPole ----

CartPole::State CartPole::dynamics(const CartPoleParams& p, const State& s, std::size_t action) {
    const double force = action == 1 ? p.force : -p.force;
    const double total_mass = p.cart_mass + p.pole_mass;
    const double pml = p.pole_mass * p.half_length;
    const double cos_t = std::cos(s[2]);
    const double sin_t = std::sin(s[2]);
    const double temp = (force + pml * s[3] * s[3] * sin_t) / total_mass;
    const double theta_acc =
        (p.gravity * sin_t - cos_t * temp) / (p.half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
    const double x_acc = temp - pml * theta_acc * cos_t / total_mass;
    // semi-implicit Euler: velocities first, positions with the new velocities
    State n = s;
    n[1] = s[1] + p.dt * x_acc;
    n[0] = s[0] + p.dt * n[1];
    n[3] = s[3] + p.dt * theta_acc;
    n[2] = s[2] + p.dt * n[3];
    return n;
}

Observation CartPole::reset(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (auto& v : s_) v = u(rng);
    steps_ = 0;
    done_ = false;
    return {s_.begin(), s_.end()};
}

void CartPole::set_state(const State& s) {
    s_ = s;
    steps_ = 0;
    done_ = false;
}

StepResult CartPole::step(std::size_t action) {
    check_step(action);
    s_ = dynamics(p_, s_, action);
    StepResult r;
    r.observation.assign(s_.begin(), s_.end());
    r.reward = 1.0;
    const double limit = p_.angle_limit_deg * std::numbers::pi / 180.0;
    r.done = std::abs(s_[2]) > limit || std::abs(s_[0]) > p_.x_limit;
    finish_step(r);
    // surviving to the cap counts as success
    r.success = r.truncated;
    return r;
}

// ---- Acrobot ----

namespace {

Acrobot::State acrobot_derivs(const AcrobotParams& p, const Acrobot::State& s, double torque) {
    const double m1 = p.link_mass_1, m2 = p.link_mass_2, l1 = p.link_length_1;
    const double lc1 = p.link_com_1, lc2 = p.link_com_2, i1 = p.link_moi, i2 = p.link_moi, g = p.gravity;
    const double t1 = s[0], t2 = s[1], dt1 = s[2], dt2 = s[3];
    constexpr double half_pi = std::numbers::pi / 2.0;
    const double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * std::cos(t2)) + i1 + i2;
    const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(t2)) + i2;
    const double phi2 = m2 * lc2 * g * std::cos(t1 + t2 - half_pi);
    const double phi1 = -m2 * l1 * lc2 * dt2 * dt2 * std::sin(t2) - 2.0 * m2 * l1 * lc2 * dt2 * dt1 * std::sin(t2) +
                        (m1 * lc1 + m2 * l1) * g * std::cos(t1 - half_pi) + phi2;
    const double ddt2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dt1 * dt1 * std::sin(t2) - phi2) /
                        (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    const double ddt1 = -(d2 * ddt2 + phi1) / d1;
    return {dt1, dt2, ddt1, ddt2};
}

} // namespace

Acrobot::State Acrobot::rk4(const AcrobotParams& p, const State& s, double torque) {
    auto axpy = [](const State& a, double h, const State& k) {
        State out;
        for (std::size_t i = 0; i < 4; ++i) out[i] = a[i] + h * k[i];
        return out;
    };
    const double h = p.dt;
    const State k1 = acrobot_derivs(p, s, torque);
    const State k2 = acrobot_derivs(p, axpy(s, h / 2, k1), torque);
    const State k3 = acrobot_derivs(p, axpy(s, h / 2, k2), torque);
    const State k4 = acrobot_derivs(p, axpy(s, h, k3), torque);
    State out;
    for (std::size_t i = 0; i < 4; ++i) out[i] = s[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    return out;
}

double Acrobot::energy(const AcrobotParams& p, const State& s) {
    const double m1 = p.link_mass_1, m2 = p.link_mass_2, l1 = p.link_length_1;
    const double lc1 = p.link_com_1, lc2 = p.link_com_2, i1 = p.link_moi, i2 = p.link_moi, g = p.gravity;
    const double t1 = s[0], t2 = s[1], dt1 = s[2], dt2 = s[3];
    const double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * std::cos(t2)) + i1 + i2;
    const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(t2)) + i2;
    const double d3 = m2 * lc2 * lc2 + i2;
    const double kinetic = 0.5 * (d1 * dt1 * dt1 + 2.0 * d2 * dt1 * dt2 + d3 * dt2 * dt2);
    const double potential = -(m1 * lc1 + m2 * l1) * g * std::cos(t1) - m2 * lc2 * g * std::cos(t1 + t2);
    return kinetic + potential;
}

double Acrobot::tip_height(const State& s) { return -std::cos(s[0]) - std::cos(s[0] + s[1]); }

Observation Acrobot::observe() const {
    return {std::cos(s_[0]), std::sin(s_[0]), std::cos(s_[1]), std::sin(s_[1]), s_[2], s_[3]};
}

Observation Acrobot::reset(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto& v : s_) v = u(rng);
    steps_ = 0;
    done_ = false;
    return observe();
}

void Acrobot::set_state(const State& s) {
    s_ = s;
    steps_ = 0;
    done_ = false;
}

StepResult Acrobot::step(std::size_t action) {
    check_step(action);
    State n = rk4(p_, s_, static_cast<double>(action) - 1.0);
    n[0] = wrap_angle(n[0]);
    n[1] = wrap_angle(n[1]);
    n[2] = std::clamp(n[2], -p_.max_vel_1, p_.max_vel_1);
    n[3] = std::clamp(n[3], -p_.max_vel_2, p_.max_vel_2);
    s_ = n;
    StepResult r;
    r.observation = observe();
    r.reward = -1.0;
    r.done = tip_height(s_) > 1.0;
    r.success = r.done;
    finish_step(r);
    return r;
}

// ---- MountainCar ----

MountainCar::State MountainCar::dynamics(const MountainCarParams& p, const State& s, std::size_t action) {
    double velocity = s[1] + (static_cast<double>(action) - 1.0) * p.force - std::cos(3.0 * s[0]) * p.gravity;
    velocity = std::clamp(velocity, -p.max_speed, p.max_speed);
    double position = std::clamp(s[0] + velocity, p.min_position, p.max_position);
    if (position == p.min_position && velocity < 0) velocity = 0.0;
    return {position, velocity};
}

Observation MountainCar::reset(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.6, -0.4);
    s_ = {u(rng), 0.0};
    steps_ = 0;
    done_ = false;
    return {s_.begin(), s_.end()};
}

void MountainCar::set_state(const State& s) {
    s_ = s;
    steps_ = 0;
    done_ = false;
}

StepResult MountainCar::step(std::size_t action) {
    check_step(action);
    s_ = dynamics(p_, s_, action);
    StepResult r;
    r.observation.assign(s_.begin(), s_.end());
    r.reward = -1.0;
    r.done = s_[0] >= p_.goal_position;
    r.success = r.done;
    finish_step(r);
    return r;
}

std::unique_ptr<Env> make_control_env(const std::string& name) {
    if (name == "cartpole") return std::make_unique<CartPole>();
    if (name == "acrobot") return std::make_unique<Acrobot>();
    if (name == "mountaincar") return std::make_unique<MountainCar>();
    throw ContractViolation("unknown control environment: " + name);
}

} // namespace xlvin::envs
