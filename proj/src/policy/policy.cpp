#include "xlvin/policy/policy.hpp"

#include <numeric>

#include "xlvin/errors.hpp"

namespace xlvin::policy {

std::size_t tree_node_count(std::size_t n_actions, std::size_t depth) {
    require(n_actions > 0, "action count must be positive");
    std::size_t total = 0, level = 1;
    for (std::size_t d = 0; d <= depth; ++d) {
        total += level;
        level *= n_actions;
    }
    return total;
}

std::size_t tree_edge_count(std::size_t n_actions, std::size_t depth) { return tree_node_count(n_actions, depth) - 1; }

LatentGraph expand_tree(const Tensor& roots, std::size_t depth, const transe::TransitionModel& transition) {
    require(roots.dim() == 2 && roots.size(1) == transition.latent_dim(), "roots must be [B, k]");
    const std::size_t a = transition.n_actions();
    LatentGraph g;
    g.n_roots = roots.size(0);
    g.n_actions = a;
    g.depth = depth;

    std::vector<Tensor> level_tensors{roots};
    std::size_t begin = 0, width = g.n_roots;
    g.levels.emplace_back(width);
    std::iota(g.levels[0].begin(), g.levels[0].end(), 0);
    g.level_ends.push_back(width);
    for (std::size_t d = 0; d < depth; ++d) {
        const Tensor& level = level_tensors.back();
        std::vector<std::size_t> repeat;
        repeat.reserve(width * a);
        for (std::size_t j = 0; j < width; ++j) repeat.insert(repeat.end(), a, j);
        level_tensors.push_back(nn::add(nn::gather_rows(level, repeat), transition.all_actions(level)));

        const std::size_t next_begin = begin + width;
        std::vector<std::size_t> next(width * a);
        std::iota(next.begin(), next.end(), next_begin);
        for (std::size_t j = 0; j < width; ++j)
            for (std::size_t act = 0; act < a; ++act) {
                g.parent.push_back(begin + j);
                g.child.push_back(next_begin + j * a + act);
                g.action.push_back(act);
            }
        g.levels.push_back(std::move(next));
        begin = next_begin;
        width *= a;
        g.level_ends.push_back(begin + width);
    }
    g.embeddings = depth == 0 ? roots : nn::concat_rows(level_tensors);
    return g;
}

XlvinPolicy::XlvinPolicy(const PolicyConfig& config, Rng& rng) : config_(config) {
    require(config.n_actions > 0, "action count must be positive");
    const std::size_t k = config.encoder.latent_dim;
    // planning components come last so a baseline built from the same seed
    // shares the encoder and head initialization
    model_.encoder = transe::Encoder(config.encoder, rng);
    actor_ = nn::Mlp({2 * k, config.head_hidden, config.n_actions}, rng);
    critic_ = nn::Mlp({2 * k, config.head_hidden, 1}, rng);
    if (config.planning) {
        model_.transition = transe::TransitionModel(k, config.n_actions, config.transition_hidden, rng);
        executor_ = executor::Executor(k, rng);
        executor_.freeze();
    }
    // registration sets requires-grad on every trainable tensor
    params();
}

PolicyOutput XlvinPolicy::plan(const Tensor& input, bool training) const {
    PolicyOutput out;
    out.h = model_.encoder(input, training);
    const std::size_t b = out.h.size(0), k = out.h.size(1);
    if (!config_.planning) {
        out.chi = Tensor::zeros({b, k});
    } else if (config_.depth == 0) {
        out.chi = out.h;
    } else {
        const LatentGraph g = expand_tree(out.h, config_.depth, model_.transition);
        const Tensor edges = executor_.deployment_edges(g.n_edges(), config_.edge_discount);
        out.chi = executor::run_pruned(executor_, g.embeddings, g.parent, g.child, edges, g.level_ends);
    }
    const Tensor z = nn::concat_cols({out.h, out.chi});
    out.logits = actor_(z);
    out.value = critic_(z);
    return out;
}

PolicyOutput XlvinPolicy::plan(const envs::Observation& obs) const {
    return plan(model_.encoder.batch(std::vector<envs::Observation>{obs}));
}

void XlvinPolicy::load_transe(const transe::TranseModel& pretrained) {
    nn::ParamSet mine;
    model_.encoder.register_params(mine);
    if (config_.planning) model_.transition.register_params(mine);
    nn::ParamSet theirs = pretrained.params();
    for (const auto& p : mine.items())
        require(theirs.contains(p.name), "pretrained model lacks parameter " + p.name);
    mine.copy_values_from(theirs);
}

void XlvinPolicy::load_executor(const executor::Executor& pretrained) {
    require(config_.planning, "the baseline has no executor");
    require(pretrained.frozen(), "executor must be pretrained and frozen");
    require(pretrained.latent_dim() == latent_dim(), "executor latent size does not match the encoder");
    executor_ = pretrained;
    params();
}

nn::ParamSet XlvinPolicy::params() const {
    nn::ParamSet ps;
    model_.encoder.register_params(ps);
    if (config_.planning) {
        model_.transition.register_params(ps);
        executor_.register_params(ps);
    }
    actor_.register_params(ps, "actor");
    critic_.register_params(ps, "value");
    return ps;
}

} // namespace xlvin::policy
