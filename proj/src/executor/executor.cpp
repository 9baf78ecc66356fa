#include "xlvin/executor/executor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "xlvin/errors.hpp"
#include "xlvin/nn/adam.hpp"

namespace xlvin::executor {

using nn::Scalar;

void ExecGraph::add_edge(std::size_t from, std::size_t to, double reward, double discount) {
    src.push_back(from);
    dst.push_back(to);
    edge_inputs.push_back(reward);
    edge_inputs.push_back(discount);
}

std::vector<std::vector<std::size_t>> ExecGraph::successors() const {
    std::vector<std::vector<std::size_t>> out(n_nodes);
    for (std::size_t e = 0; e < src.size(); ++e) out[src[e]].push_back(dst[e]);
    return out;
}

void validate(const ExecGraph& g) {
    require(g.n_nodes > 0, "graph has no nodes");
    require(g.src.size() == g.dst.size() && g.edge_inputs.size() == 2 * g.src.size(), "edge arrays differ in length");
    require(g.root < g.n_nodes, "root out of range");
    for (std::size_t e = 0; e < g.src.size(); ++e)
        require(g.src[e] < g.n_nodes && g.dst[e] < g.n_nodes, "edge endpoint out of range");
}

ExecGraph graph_from_mdp(const mdp::DiscreteMdp& m) {
    ExecGraph g;
    g.n_nodes = m.n_states;
    for (std::size_t s = 0; s < m.n_states; ++s)
        for (std::size_t a = 0; a < m.n_actions; ++a) {
            const std::size_t next = m.successor(s, a);
            require(next < m.n_states, "executor graphs need deterministic transitions");
            g.add_edge(s, next, m.r(s, a), m.discount);
        }
    return g;
}

Executor::Executor(std::size_t latent_dim, Rng& rng, std::size_t edge_dim)
    : latent_dim_(latent_dim),
      edge_dim_(edge_dim),
      message_({2 * latent_dim + edge_dim, latent_dim, latent_dim}, rng),
      update_({2 * latent_dim, latent_dim, latent_dim}, rng),
      norm_(latent_dim),
      edge_lift_({2, edge_dim, edge_dim}, rng),
      value_lift_({1, latent_dim, latent_dim}, rng),
      readout_({latent_dim, latent_dim, 1}, rng) {
    require(latent_dim > 0 && edge_dim > 0, "executor sizes must be positive");
}

Tensor Executor::lift_edges(const std::vector<double>& edge_inputs) const {
    require(!edge_inputs.empty() && edge_inputs.size() % 2 == 0, "edge inputs must be [E,2]");
    return edge_lift_(Tensor::from({edge_inputs.size() / 2, 2}, {edge_inputs.begin(), edge_inputs.end()}));
}

Tensor Executor::deployment_edges(std::size_t n_edges, double discount) const {
    const Tensor one = lift_edges({0.0, discount});
    return nn::gather_rows(one, std::vector<std::size_t>(n_edges, 0));
}

Tensor Executor::mp_step(const Tensor& h, const std::vector<std::size_t>& src, const std::vector<std::size_t>& dst,
                         const Tensor& edges, std::size_t n_active) const {
    require(h.dim() == 2 && h.size(1) == latent_dim_, "node embeddings must be [N, k]");
    require(n_active > 0 && n_active <= h.size(0), "active prefix out of range");
    require(src.size() == dst.size() && (src.empty() || edges.size(0) == src.size()), "edge arrays differ in length");
    std::vector<std::size_t> keep_src, keep_dst, keep_edge;
    for (std::size_t e = 0; e < src.size(); ++e) {
        if (src[e] >= n_active) continue;
        keep_src.push_back(src[e]);
        keep_dst.push_back(dst[e]);
        keep_edge.push_back(e);
    }
    const Tensor self = n_active == h.size(0) ? h : nn::slice_rows(h, 0, n_active);
    Tensor messages;
    if (keep_src.empty()) {
        messages = Tensor::zeros({n_active, latent_dim_});
    } else {
        const bool all_edges = keep_edge.size() == src.size();
        const Tensor e = all_edges ? edges : nn::gather_rows(edges, keep_edge);
        const Tensor per_edge =
            message_(nn::concat_cols({nn::gather_rows(h, keep_src), nn::gather_rows(h, keep_dst), e}));
        messages = nn::segment_max(per_edge, keep_src, n_active);
    }
    return norm_(update_(nn::concat_cols({self, messages})));
}

Tensor Executor::mp_step(const ExecGraph& g, const Tensor& h) const {
    require(h.size(0) == g.n_nodes, "embedding rows must match the graph");
    if (g.n_edges() == 0) return mp_step(h, {}, {}, Tensor::zeros({1, edge_dim_}), g.n_nodes);
    return mp_step(h, g.src, g.dst, lift_edges(g.edge_inputs), g.n_nodes);
}

Tensor Executor::run(const ExecGraph& g, const Tensor& h, std::size_t k_steps) const {
    validate(g);
    require(h.size(0) == g.n_nodes, "embedding rows must match the graph");
    if (k_steps == 0) return h;
    if (g.n_edges() == 0) {
        Tensor out = h;
        for (std::size_t k = 0; k < k_steps; ++k) out = mp_step(g, out);
        return out;
    }
    const Tensor edges = lift_edges(g.edge_inputs);
    Tensor out = h;
    for (std::size_t k = 0; k < k_steps; ++k) out = mp_step(out, g.src, g.dst, edges, g.n_nodes);
    return out;
}

Tensor Executor::lift_values(const Tensor& v) const { return value_lift_(v); }
Tensor Executor::readout(const Tensor& h) const { return readout_(h); }

void Executor::register_params(nn::ParamSet& params, const std::string& prefix) const {
    message_.register_params(params, prefix + ".message");
    update_.register_params(params, prefix + ".update");
    norm_.register_params(params, prefix + ".norm");
    edge_lift_.register_params(params, prefix + ".edge_lift");
    value_lift_.register_params(params, prefix + ".value_lift");
    readout_.register_params(params, prefix + ".readout");
    if (frozen_) params.set_trainable(prefix + ".", false);
}

Tensor run_pruned(const Executor& ex, const Tensor& h, const std::vector<std::size_t>& src,
                  const std::vector<std::size_t>& dst, const Tensor& edges, const std::vector<std::size_t>& level_ends) {
    require(!level_ends.empty() && level_ends.back() == h.size(0), "level prefix lengths must end at the node count");
    const std::size_t k_steps = level_ends.size() - 1;
    if (k_steps == 0) return nn::slice_rows(h, 0, level_ends[0]);
    Tensor out = h;
    for (std::size_t t = 1; t <= k_steps; ++t) out = ex.mp_step(out, src, dst, edges, level_ends[k_steps - t]);
    return out;
}

ExecutorDataset make_executor_dataset(std::vector<mdp::ViTrajectory> trajectories) {
    ExecutorDataset d;
    d.trajectories = std::move(trajectories);
    for (std::size_t i = 0; i < d.trajectories.size(); ++i) {
        const auto& m = d.trajectories[i].mdp;
        double scale = 0.0;
        for (double r : m.reward) scale = std::max(scale, std::abs(r));
        if (scale == 0.0) scale = 1.0;
        ExecGraph g = graph_from_mdp(m);
        for (std::size_t e = 0; e < g.n_edges(); ++e) g.edge_inputs[2 * e] /= scale;
        d.graphs.push_back(std::move(g));
        d.scales.push_back(scale);
        for (std::size_t t = 0; t + 1 < d.trajectories[i].iterates.size(); ++t) d.samples.push_back({i, t});
    }
    return d;
}

namespace {

struct Batch {
    std::vector<std::size_t> src, dst;
    std::vector<double> edge_inputs;
    std::vector<Scalar> values, targets;  // scaled
    std::vector<double> node_scale;
};

Batch make_batch(const ExecutorDataset& data, const std::vector<std::size_t>& sample_ids) {
    Batch b;
    std::size_t offset = 0;
    for (auto id : sample_ids) {
        const auto& s = data.samples[id];
        const auto& g = data.graphs[s.trajectory];
        const auto& iters = data.trajectories[s.trajectory].iterates;
        for (std::size_t e = 0; e < g.n_edges(); ++e) {
            b.src.push_back(offset + g.src[e]);
            b.dst.push_back(offset + g.dst[e]);
        }
        b.edge_inputs.insert(b.edge_inputs.end(), g.edge_inputs.begin(), g.edge_inputs.end());
        const double scale = data.scales[s.trajectory];
        for (double v : iters[s.step]) b.values.push_back(static_cast<Scalar>(v / scale));
        for (double v : iters[s.step + 1]) b.targets.push_back(static_cast<Scalar>(v / scale));
        b.node_scale.insert(b.node_scale.end(), g.n_nodes, scale);
        offset += g.n_nodes;
    }
    return b;
}

Tensor batch_prediction(const Executor& ex, const Batch& b) {
    const std::size_t n = b.values.size();
    const Tensor h = ex.lift_values(Tensor::from({n, 1}, b.values));
    return ex.readout(ex.mp_step(h, b.src, b.dst, ex.lift_edges(b.edge_inputs), n));
}

Tensor batch_mse(const Executor& ex, const Batch& b) {
    const std::size_t n = b.values.size();
    return nn::mean(nn::square(nn::sub(batch_prediction(ex, b), Tensor::from({n, 1}, b.targets))));
}

} // namespace

mdp::ValueTable predict_step(const Executor& ex, const mdp::DiscreteMdp& mdp, const mdp::ValueTable& v) {
    require(v.size() == mdp.n_states, "value table size must match the MDP");
    const auto data = make_executor_dataset({mdp::ViTrajectory{mdp, {v, v}}});
    const Tensor pred = batch_prediction(ex, make_batch(data, {0}));
    mdp::ValueTable out(v.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(pred.at(i)) * data.scales[0];
    return out;
}

double executor_mse(const Executor& ex, const ExecutorDataset& data, std::size_t batch_size) {
    require(!data.samples.empty(), "executor dataset is empty");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t begin = 0; begin < data.samples.size(); begin += batch_size) {
        std::vector<std::size_t> ids(std::min(batch_size, data.samples.size() - begin));
        std::iota(ids.begin(), ids.end(), begin);
        const Batch b = make_batch(data, ids);
        const Tensor pred = batch_prediction(ex, b);
        for (std::size_t i = 0; i < b.targets.size(); ++i) {
            const double d = (static_cast<double>(pred.at(i)) - static_cast<double>(b.targets[i])) * b.node_scale[i];
            total += d * d;
        }
        count += b.targets.size();
    }
    return total / static_cast<double>(count);
}

double copy_baseline_mse(const ExecutorDataset& data) {
    require(!data.samples.empty(), "executor dataset is empty");
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& s : data.samples) {
        const auto& it = data.trajectories[s.trajectory].iterates;
        for (std::size_t i = 0; i < it[s.step].size(); ++i) {
            const double d = it[s.step][i] - it[s.step + 1][i];
            total += d * d;
        }
        count += it[s.step].size();
    }
    return total / static_cast<double>(count);
}

ExecutorReport pretrain_executor(Executor& ex, const ExecutorDataset& data, const ExecutorTrainConfig& config) {
    require(!data.samples.empty(), "executor dataset is empty");
    require(config.batch_size > 0, "batch size must be positive");
    require(!ex.frozen(), "executor is frozen");
    nn::ParamSet params;
    ex.register_params(params);
    Rng rng(config.seed);
    nn::AdamState adam;
    nn::AdamConfig adam_cfg;
    const std::size_t steps_per_epoch = (data.samples.size() + config.batch_size - 1) / config.batch_size;
    const double total_steps = static_cast<double>(std::max<std::size_t>(1, config.epochs * steps_per_epoch));
    std::size_t step = 0;

    ExecutorReport report;
    report.initial_mse = executor_mse(ex, data);
    std::vector<std::size_t> order(data.samples.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            const std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            const Tensor loss = batch_mse(ex, make_batch(data, ids));
            total += static_cast<double>(loss.item()) * static_cast<double>(ids.size());
            const double progress = static_cast<double>(step++) / total_steps;
            adam_cfg.lr = static_cast<Scalar>(config.final_lr + 0.5 * (config.lr - config.final_lr) *
                                                                      (1.0 + std::cos(std::numbers::pi * progress)));
            auto grads = nn::gradients(loss, params);
            nn::adam_step(params, grads, adam, adam_cfg);
        }
        report.epoch_mse.push_back(total / static_cast<double>(order.size()));
    }
    report.final_mse = executor_mse(ex, data);
    ex.freeze();
    params.set_trainable("executor.", false);
    return report;
}

} // namespace xlvin::executor
