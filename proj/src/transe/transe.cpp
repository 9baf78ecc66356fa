#include "xlvin/transe/transe.hpp"

#include <algorithm>
#include <numeric>

#include "xlvin/errors.hpp"

namespace xlvin::transe {

using nn::Scalar;

EncoderConfig maze_encoder_config(std::size_t channels, std::size_t latent_dim) {
    EncoderConfig c;
    c.mode = EncoderMode::MazeCnn;
    c.observation_shape = {3, 0, 0};  // spatial size is free
    c.latent_dim = latent_dim;
    c.hidden = channels;
    return c;
}

EncoderConfig control_encoder_config(const std::string& env_name, std::size_t latent_dim) {
    EncoderConfig c;
    c.mode = EncoderMode::ControlMlp;
    c.latent_dim = latent_dim;
    if (env_name == "cartpole") {
        c.hidden = 64;
        c.observation_shape = {4};
        c.input_offset = {0, 0, 0, 0};
        c.input_scale = {1 / 2.4, 1 / 2.0, 1 / 0.2618, 1 / 2.0};
    } else if (env_name == "acrobot") {
        c.hidden = 32;
        c.observation_shape = {6};
        c.input_offset = {0, 0, 0, 0, 0, 0};
        c.input_scale = {1, 1, 1, 1, 1 / (4 * 3.14159265358979), 1 / (9 * 3.14159265358979)};
    } else if (env_name == "mountaincar") {
        c.hidden = 16;
        c.observation_shape = {2};
        c.input_offset = {-0.3, 0.0};
        c.input_scale = {1 / 0.9, 1 / 0.07};
    } else {
        throw ContractViolation("no control encoder defaults for environment '" + env_name + "'");
    }
    return c;
}

Encoder::Encoder(const EncoderConfig& config, Rng& rng) : config_(config) {
    require(config.latent_dim > 0 && config.hidden > 0, "encoder sizes must be positive");
    if (config.mode == EncoderMode::MazeCnn) {
        require(config.observation_shape.size() == 3, "maze encoder expects a {C,H,W} observation shape");
        std::size_t in = config.observation_shape[0];
        for (int i = 0; i < 3; ++i) {
            convs_.emplace_back(in, config.hidden, rng);
            norms_.emplace_back(config.hidden);
            in = config.hidden;
        }
        head_ = nn::Mlp({config.hidden, config.hidden, config.latent_dim}, rng);
    } else {
        require(config.observation_shape.size() == 1, "control encoder expects a flat observation shape");
        const std::size_t d = config.observation_shape[0];
        if (config_.input_offset.empty()) config_.input_offset.assign(d, 0.0);
        if (config_.input_scale.empty()) config_.input_scale.assign(d, 1.0);
        require(config_.input_offset.size() == d && config_.input_scale.size() == d,
                "input normalization length does not match the observation");
        head_ = nn::Mlp({d, config.hidden, config.hidden, config.latent_dim}, rng);
        offset_ = Tensor::from({d}, {config_.input_offset.begin(), config_.input_offset.end()});
        scale_ = Tensor::from({d}, {config_.input_scale.begin(), config_.input_scale.end()});
    }
}

Tensor Encoder::batch(const std::vector<envs::Observation>& obs) const {
    std::vector<const envs::Observation*> ptrs;
    ptrs.reserve(obs.size());
    for (const auto& o : obs) ptrs.push_back(&o);
    return batch(ptrs);
}

Tensor Encoder::batch(const std::vector<const envs::Observation*>& obs) const {
    require(!obs.empty(), "encoder batch is empty");
    const std::size_t n = obs.size();
    const std::size_t d = obs.front()->size();
    std::vector<Scalar> data(n * d);
    if (config_.mode == EncoderMode::ControlMlp) {
        require(d == config_.observation_shape[0], "observation has " + std::to_string(d) + " entries, encoder expects " +
                                                       std::to_string(config_.observation_shape[0]));
        const auto off = offset_.data();
        const auto sc = scale_.data();
        for (std::size_t i = 0; i < n; ++i) {
            require(obs[i]->size() == d, "observations in a batch differ in size");
            for (std::size_t j = 0; j < d; ++j) data[i * d + j] = static_cast<Scalar>(((*obs[i])[j] - off[j]) * sc[j]);
        }
        return Tensor::from({n, d}, std::move(data));
    }
    const std::size_t c = config_.observation_shape[0];
    require(d % c == 0, "maze observation is not a multiple of the channel count");
    std::size_t side = 0;
    while ((side + 1) * (side + 1) * c <= d) ++side;
    require(side * side * c == d, "maze observation is not square");
    for (std::size_t i = 0; i < n; ++i) {
        require(obs[i]->size() == d, "observations in a batch differ in size");
        std::copy(obs[i]->begin(), obs[i]->end(), data.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return Tensor::from({n, c, side, side}, std::move(data));
}

Tensor Encoder::operator()(const Tensor& input, bool training) const {
    if (config_.mode == EncoderMode::ControlMlp) {
        require(input.dim() == 2 && input.size(1) == config_.observation_shape[0], "control encoder input shape mismatch");
        return head_(input);
    }
    require(input.dim() == 4 && input.size(1) == config_.observation_shape[0], "maze encoder input shape mismatch");
    Tensor h = input;
    for (std::size_t i = 0; i < convs_.size(); ++i) h = nn::relu(norms_[i](convs_[i](h), training));
    return head_(nn::global_avg_pool(h));
}

void Encoder::register_params(nn::ParamSet& params, const std::string& prefix) const {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        convs_[i].register_params(params, prefix + ".conv" + std::to_string(i));
        norms_[i].register_params(params, prefix + ".bn" + std::to_string(i));
    }
    head_.register_params(params, prefix + ".mlp");
    if (config_.mode == EncoderMode::ControlMlp) {
        params.add_buffer(prefix + ".input_offset", offset_);
        params.add_buffer(prefix + ".input_scale", scale_);
    }
}

TransitionModel::TransitionModel(std::size_t latent_dim, std::size_t n_actions, std::size_t hidden, Rng& rng)
    : latent_dim_(latent_dim), n_actions_(n_actions), mlp_({latent_dim + n_actions, hidden, hidden, latent_dim}, rng, 1) {
    require(n_actions > 0, "transition model needs at least one action");
}

Tensor TransitionModel::one_hot(const std::vector<std::size_t>& actions) const {
    std::vector<Scalar> data(actions.size() * n_actions_, Scalar(0));
    for (std::size_t i = 0; i < actions.size(); ++i) {
        require(actions[i] < n_actions_, "action " + std::to_string(actions[i]) + " out of range");
        data[i * n_actions_ + actions[i]] = 1;
    }
    return Tensor::from({actions.size(), n_actions_}, std::move(data));
}

Tensor TransitionModel::operator()(const Tensor& h, const std::vector<std::size_t>& actions) const {
    require(h.dim() == 2 && h.size(1) == latent_dim_, "transition input must be [N, k]");
    require(h.size(0) == actions.size(), "one action per embedding row required");
    return mlp_(nn::concat_cols({h, one_hot(actions)}));
}

Tensor TransitionModel::all_actions(const Tensor& h) const {
    require(h.dim() == 2 && h.size(1) == latent_dim_, "transition input must be [N, k]");
    const std::size_t n = h.size(0);
    std::vector<std::size_t> rows(n * n_actions_), acts(n * n_actions_);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < n_actions_; ++a) {
            rows[i * n_actions_ + a] = i;
            acts[i * n_actions_ + a] = a;
        }
    return mlp_(nn::concat_cols({nn::gather_rows(h, rows), one_hot(acts)}));
}

void TransitionModel::register_params(nn::ParamSet& params, const std::string& prefix) const {
    mlp_.register_params(params, prefix + ".mlp");
}

Tensor squared_distance(const Tensor& a, const Tensor& b) { return nn::sum_cols(nn::square(nn::sub(a, b))); }

Tensor transe_loss(const Tensor& z_s, const Tensor& delta, const Tensor& z_next, const Tensor& z_neg, double margin) {
    require(z_s.dim() == 2 && z_s.size(0) > 0, "transe_loss needs a non-empty [N, k] batch");
    const Tensor positive = squared_distance(nn::add(z_s, delta), z_next);
    const Tensor hinge = nn::relu(nn::add_scalar(nn::neg(squared_distance(z_neg, z_next)), static_cast<Scalar>(margin)));
    return nn::mean(nn::add(positive, hinge));
}

std::vector<std::size_t> sample_negatives(std::size_t pool_size, std::size_t count, Rng& rng) {
    require(pool_size > 0, "negative pool is empty");
    std::uniform_int_distribution<std::size_t> pick(0, pool_size - 1);
    std::vector<std::size_t> out(count);
    for (auto& i : out) i = pick(rng);
    return out;
}

TranseModel::TranseModel(const EncoderConfig& config, std::size_t n_actions, std::size_t transition_hidden, Rng& rng)
    : encoder(config, rng), transition(config.latent_dim, n_actions, transition_hidden, rng) {}

nn::ParamSet TranseModel::params() const {
    nn::ParamSet ps;
    encoder.register_params(ps, "encoder");
    transition.register_params(ps, "transition");
    return ps;
}

TransitionData collect_random_transitions(envs::Env& env, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> act(0, env.n_actions() - 1);
    TransitionData data;
    data.obs.reserve(n);
    data.next_obs.reserve(n);
    data.actions.reserve(n);
    envs::Observation obs = env.reset(rng());
    while (data.size() < n) {
        const std::size_t a = act(rng);
        auto r = env.step(a);
        data.obs.push_back(obs);
        data.actions.push_back(a);
        data.next_obs.push_back(r.observation);
        obs = r.done ? env.reset(rng()) : std::move(r.observation);
    }
    return data;
}

Tensor transe_objective(const TranseModel& model, const TransitionData& data, const std::vector<std::size_t>& idx,
                        Rng& rng, bool training, double margin) {
    require(!idx.empty(), "transe batch is empty");
    const std::size_t b = idx.size();
    std::vector<const envs::Observation*> both;
    both.reserve(2 * b);
    std::vector<std::size_t> actions;
    actions.reserve(b);
    for (auto i : idx) {
        both.push_back(&data.obs.at(i));
        actions.push_back(data.actions[i]);
    }
    for (auto i : idx) both.push_back(&data.next_obs[i]);
    const Tensor z = model.encoder(model.encoder.batch(both), training);
    const Tensor z_s = nn::slice_rows(z, 0, b);
    const Tensor z_next = nn::slice_rows(z, b, 2 * b);
    const Tensor z_neg = nn::gather_rows(z_s, sample_negatives(b, b, rng));
    return transe_loss(z_s, model.transition(z_s, actions), z_next, z_neg, margin);
}

double evaluate_transe(const TranseModel& model, const TransitionData& data, std::uint64_t seed, std::size_t batch_size,
                       double margin) {
    require(data.size() > 0, "no transitions to evaluate");
    Rng rng(seed);
    double total = 0.0;
    for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
        const std::size_t end = std::min(data.size(), begin + batch_size);
        std::vector<std::size_t> idx(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        total += static_cast<double>(transe_objective(model, data, idx, rng, false, margin).item()) * idx.size();
    }
    return total / static_cast<double>(data.size());
}

PretrainReport pretrain_transe(TranseModel& model, const TransitionData& data, const PretrainConfig& config) {
    require(data.size() > 0, "no transitions to pretrain on");
    require(config.batch_size > 0, "batch size must be positive");
    Rng rng(config.seed);
    nn::ParamSet params = model.params();
    nn::AdamState adam;
    const nn::AdamConfig adam_cfg{.lr = static_cast<Scalar>(config.lr)};

    PretrainReport report;
    report.initial_loss = evaluate_transe(model, data, config.seed, config.batch_size, config.margin);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_total = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
            const Tensor loss = transe_objective(model, data, idx, rng, true, config.margin);
            epoch_total += static_cast<double>(loss.item()) * idx.size();
            auto grads = nn::gradients(loss, params);
            nn::adam_step(params, grads, adam, adam_cfg);
        }
        report.epoch_losses.push_back(epoch_total / static_cast<double>(order.size()));
    }
    report.final_loss = evaluate_transe(model, data, config.seed, config.batch_size, config.margin);
    return report;
}

} // namespace xlvin::transe
