#include "xlvin/ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xlvin/errors.hpp"
#include "xlvin/transe/transe.hpp"

namespace xlvin::ppo {

using nn::Scalar;
using nn::Tensor;

void validate(const TrainerConfig& c) {
    auto non_negative = [](double v, const char* field) {
        require(std::isfinite(v) && v >= 0.0, std::string(field) + " must be a non-negative number");
    };
    non_negative(c.value_coef, "value_coef");
    non_negative(c.entropy_coef, "entropy_coef");
    non_negative(c.transe_coef, "transe_coef");
    non_negative(c.clip, "clip");
    non_negative(c.max_grad_norm, "max_grad_norm");
    require(c.gamma >= 0.0 && c.gamma <= 1.0, "gamma must lie in [0, 1]");
    require(c.gae_lambda >= 0.0 && c.gae_lambda <= 1.0, "gae_lambda must lie in [0, 1]");
    require(c.lr > 0.0 && std::isfinite(c.lr), "lr must be positive");
    require(c.ppo_epochs > 0, "ppo_epochs must be positive");
    require(c.minibatches > 0, "minibatches must be positive");
    require(c.n_envs > 0, "n_envs must be positive");
    require(c.transe_refit_epochs > 0, "transe_refit_epochs must be positive");
    require(c.reward_clip > 0.0 && std::isfinite(c.reward_clip), "reward_clip must be positive");
}

void RolloutBuffer::check() const {
    const std::size_t n = actions.size();
    require(obs.size() == n && next_obs.size() == n && rewards.size() == n && dones.size() == n &&
                terminals.size() == n && values.size() == n && next_values.size() == n && log_probs.size() == n,
            "rollout arrays differ in length");
    require(returns.empty() || returns.size() == n, "returns length differs");
    require(advantages.empty() || advantages.size() == n, "advantages length differs");
}

namespace {

struct Step {
    envs::Observation obs, next_obs;
    std::size_t action = 0;
    double reward = 0, value = 0, next_value = 0, log_prob = 0;
    bool done = false, terminal = false;
};

struct Slot {
    envs::Env* env = nullptr;
    envs::Observation obs;
    std::vector<Step> steps;
    EpisodeStats stats;
    bool active = false;
};

std::size_t sample_categorical(const std::vector<double>& probs, Rng& rng) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (std::size_t a = 0; a < probs.size(); ++a) {
        acc += probs[a];
        if (u < acc) return a;
    }
    return probs.size() - 1;
}

} // namespace

RolloutBuffer run_episodes(const XlvinPolicy& policy, const std::vector<envs::Env*>& pool, std::size_t n_episodes,
                           const EpisodeStart& start, ActionMode mode, Rng& rng) {
    require(!pool.empty(), "environment pool is empty");
    const std::size_t n_actions = policy.config().n_actions;
    std::vector<Slot> slots(pool.size());
    std::size_t started = 0, finished = 0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        slots[i].env = pool[i];
        require(pool[i]->n_actions() == n_actions, "environment and policy disagree on the action count");
    }
    auto launch = [&](Slot& s) {
        s.obs = start(*s.env, started++);
        s.steps.clear();
        s.stats = {};
        s.active = true;
    };
    for (auto& s : slots)
        if (started < n_episodes) launch(s);

    RolloutBuffer out;
    auto flush = [&](Slot& s) {
        for (auto& st : s.steps) {
            out.obs.push_back(std::move(st.obs));
            out.next_obs.push_back(std::move(st.next_obs));
            out.actions.push_back(st.action);
            out.rewards.push_back(st.reward);
            out.dones.push_back(st.done);
            out.terminals.push_back(st.terminal);
            out.values.push_back(st.value);
            out.next_values.push_back(st.next_value);
            out.log_probs.push_back(st.log_prob);
        }
        out.episodes.push_back(s.stats);
        ++finished;
        s.active = false;
    };

    while (finished < n_episodes) {
        std::vector<std::size_t> live;
        std::vector<const envs::Observation*> batch;
        for (std::size_t i = 0; i < slots.size(); ++i)
            if (slots[i].active) {
                live.push_back(i);
                batch.push_back(&slots[i].obs);
            }
        const auto out_p = policy.plan(policy.transe().encoder.batch(batch));
        const Tensor logp = nn::log_softmax(out_p.logits);

        std::vector<std::size_t> needs_bootstrap;
        for (std::size_t r = 0; r < live.size(); ++r) {
            Slot& s = slots[live[r]];
            const double value = out_p.value.at(r);
            if (!s.steps.empty()) s.steps.back().next_value = value;

            std::vector<double> probs(n_actions);
            for (std::size_t a = 0; a < n_actions; ++a) probs[a] = std::exp(logp.at(r * n_actions + a));
            std::size_t action = 0;
            if (mode == ActionMode::Sample) {
                action = sample_categorical(probs, rng);
            } else if (mode == ActionMode::Greedy) {
                action = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
            } else {
                action = std::uniform_int_distribution<std::size_t>(0, n_actions - 1)(rng);
            }

            auto res = s.env->step(action);
            Step st;
            st.obs = std::move(s.obs);
            st.next_obs = res.observation;
            st.action = action;
            st.reward = res.reward;
            st.value = value;
            st.log_prob = mode == ActionMode::Uniform ? -std::log(static_cast<double>(n_actions))
                                                      : static_cast<double>(logp.at(r * n_actions + action));
            st.done = res.done;
            st.terminal = res.done && !res.truncated;
            s.stats.episode_return += res.reward;
            s.stats.length += 1;
            s.steps.push_back(std::move(st));
            s.obs = std::move(res.observation);
            if (res.done) {
                s.stats.success = res.success;
                s.stats.truncated = res.truncated;
                if (res.truncated) needs_bootstrap.push_back(live[r]);
            }
        }
        if (!needs_bootstrap.empty()) {
            std::vector<const envs::Observation*> tail;
            for (auto i : needs_bootstrap) tail.push_back(&slots[i].obs);
            const auto v = policy.plan(policy.transe().encoder.batch(tail)).value;
            for (std::size_t j = 0; j < needs_bootstrap.size(); ++j)
                slots[needs_bootstrap[j]].steps.back().next_value = v.at(j);
        }
        for (auto i : live) {
            Slot& s = slots[i];
            if (!s.steps.back().done) continue;
            flush(s);
            if (started < n_episodes) launch(s);
        }
    }
    return out;
}

RolloutBuffer collect_rollouts(const XlvinPolicy& policy, const std::vector<envs::Env*>& pool,
                               std::size_t n_trajectories, Rng& rng, ActionMode mode) {
    require(n_trajectories > 0, "need at least one trajectory");
    return run_episodes(
        policy, pool, n_trajectories, [&rng](envs::Env& env, std::size_t) { return env.reset(rng()); }, mode, rng);
}

void compute_gae(RolloutBuffer& b, double gamma, double lambda) {
    b.check();
    const std::size_t n = b.size();
    b.advantages.assign(n, 0.0);
    b.returns.assign(n, 0.0);
    double next_adv = 0.0;
    for (std::size_t t = n; t-- > 0;) {
        if (b.dones[t]) next_adv = 0.0;
        const double bootstrap = b.terminals[t] ? 0.0 : b.next_values[t];
        const double delta = b.rewards[t] + gamma * bootstrap - b.values[t];
        const double adv = delta + gamma * lambda * next_adv;
        b.advantages[t] = adv;
        b.returns[t] = adv + b.values[t];
        next_adv = adv;
        require(std::isfinite(adv), "non-finite advantage");
    }
}

std::vector<double> normalize_advantages(const std::vector<double>& adv) {
    require(!adv.empty(), "no advantages to normalize");
    const double n = static_cast<double>(adv.size());
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> out(adv.size());
    for (std::size_t i = 0; i < adv.size(); ++i) out[i] = sd > 1e-12 ? (adv[i] - mean) / sd : adv[i] - mean;
    return out;
}

RewardNormalizer::RewardNormalizer(double gamma, double clip) : gamma_(gamma), clip_(clip) {
    require(gamma >= 0.0 && gamma <= 1.0 && clip > 0.0, "reward normalizer needs gamma in [0,1] and a positive clip");
}

double RewardNormalizer::scale() const { return std::sqrt(var_ + 1e-8); }

void RewardNormalizer::apply(RolloutBuffer& b) {
    b.check();
    const std::size_t n = b.size();
    if (n == 0) return;
    std::vector<double> ret(n);
    double running = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        running = running * gamma_ + b.rewards[i];
        ret[i] = running;
        if (b.dones[i]) running = 0.0;
    }
    const double bn = static_cast<double>(n);
    const double bmean = std::accumulate(ret.begin(), ret.end(), 0.0) / bn;
    double bvar = 0.0;
    for (double r : ret) bvar += (r - bmean) * (r - bmean);
    bvar /= bn;
    const double total = count_ + bn, delta = bmean - mean_;
    mean_ += delta * bn / total;
    var_ = (var_ * count_ + bvar * bn + delta * delta * count_ * bn / total) / total;
    count_ = total;
    const double s = scale();
    for (auto& r : b.rewards) r = std::clamp(r / s, -clip_, clip_);
}

void prepare_advantages(RolloutBuffer& b, const TrainerConfig& config) {
    b.check();
    if (!config.bootstrap_truncation)
        for (std::size_t i = 0; i < b.size(); ++i) b.terminals[i] = b.terminals[i] || b.dones[i];
    compute_gae(b, config.gamma, config.gae_lambda);
}

void refresh_buffer(const XlvinPolicy& policy, RolloutBuffer& b, const TrainerConfig& config) {
    b.check();
    const std::size_t n = b.size(), a = policy.config().n_actions;
    const std::size_t chunk = 256;
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t end = std::min(n, begin + chunk);
        std::vector<const envs::Observation*> cur, nxt;
        for (std::size_t i = begin; i < end; ++i) {
            cur.push_back(&b.obs[i]);
            nxt.push_back(&b.next_obs[i]);
        }
        const auto& enc = policy.transe().encoder;
        const auto p = policy.plan(enc.batch(cur));
        const auto v_next = policy.plan(enc.batch(nxt)).value;
        const Tensor logp = nn::log_softmax(p.logits);
        for (std::size_t i = begin; i < end; ++i) {
            b.values[i] = p.value.at(i - begin);
            b.next_values[i] = v_next.at(i - begin);
            b.log_probs[i] = logp.at((i - begin) * a + b.actions[i]);
        }
    }
    prepare_advantages(b, config);
}

LossTerms ppo_loss(const XlvinPolicy& policy, const RolloutBuffer& b, const std::vector<std::size_t>& idx,
                   const std::vector<double>& advantages, const TrainerConfig& config, Rng& rng) {
    require(!idx.empty(), "empty minibatch");
    require(advantages.size() == b.size() && b.returns.size() == b.size(), "advantages and returns must be computed");
    const std::size_t m = idx.size();
    const auto& enc = policy.transe().encoder;

    std::vector<const envs::Observation*> obs;
    std::vector<std::size_t> acts;
    std::vector<Scalar> adv, old_logp, ret;
    for (auto i : idx) {
        obs.push_back(&b.obs[i]);
        acts.push_back(b.actions[i]);
        adv.push_back(static_cast<Scalar>(advantages[i]));
        old_logp.push_back(static_cast<Scalar>(b.log_probs[i]));
        ret.push_back(static_cast<Scalar>(b.returns[i]));
    }
    const auto out = policy.plan(enc.batch(obs), config.batch_norm_train);
    const Tensor logp_all = nn::log_softmax(out.logits);
    const Tensor logp = nn::pick(logp_all, acts);  // [m]
    const Tensor adv_t = Tensor::from({m}, adv);
    const Tensor ratio = nn::exp(nn::sub(logp, Tensor::from({m}, old_logp)));
    const Tensor surr1 = nn::mul(ratio, adv_t);
    const Tensor surr2 = nn::mul(nn::clamp(ratio, static_cast<Scalar>(1 - config.clip), static_cast<Scalar>(1 + config.clip)), adv_t);
    const Tensor policy_loss = nn::neg(nn::mean(nn::minimum(surr1, surr2)));
    const Tensor value_loss = nn::mean(nn::square(nn::sub(nn::reshape(out.value, {m}), Tensor::from({m}, ret))));
    const Tensor entropy = nn::neg(nn::scale(nn::sum(nn::mul(nn::exp(logp_all), logp_all)), Scalar(1) / static_cast<Scalar>(m)));

    LossTerms terms;
    Tensor total = nn::add(policy_loss, nn::sub(nn::scale(value_loss, static_cast<Scalar>(config.value_coef)),
                                                nn::scale(entropy, static_cast<Scalar>(config.entropy_coef))));
    if (policy.config().planning && config.transe_coef > 0.0) {
        std::vector<const envs::Observation*> next;
        for (auto i : idx) next.push_back(&b.next_obs[i]);
        const Tensor z_next = enc(enc.batch(next), false);
        const Tensor delta = policy.transe().transition(out.h, acts);
        const Tensor z_neg = nn::gather_rows(out.h, transe::sample_negatives(m, m, rng));
        const Tensor tl = transe::transe_loss(out.h, delta, z_next, z_neg);
        terms.transe_loss = tl.item();
        total = nn::add(total, nn::scale(tl, static_cast<Scalar>(config.transe_coef)));
    }
    terms.total = total;
    terms.policy_loss = policy_loss.item();
    terms.value_loss = value_loss.item();
    terms.entropy = entropy.item();
    double surr = 0.0, clipped = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        surr += surr1.at(i);
        clipped += std::abs(ratio.at(i) - 1.0) > config.clip;
    }
    terms.surrogate = surr / static_cast<double>(m);
    terms.clip_fraction = clipped / static_cast<double>(m);
    return terms;
}

UpdateReport ppo_update(XlvinPolicy& policy, const RolloutBuffer& buffer, const TrainerConfig& config,
                        nn::AdamState& adam, Rng& rng) {
    validate(config);
    require(buffer.size() > 0, "rollout buffer is empty");
    buffer.check();
    require(buffer.advantages.size() == buffer.size(), "compute GAE before the update");
    const auto adv = normalize_advantages(buffer.advantages);
    nn::ParamSet params = policy.params();
    const nn::AdamConfig adam_cfg{.lr = static_cast<Scalar>(config.lr)};

    UpdateReport report;
    std::vector<std::size_t> order(buffer.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t n_mb = std::min(config.minibatches, buffer.size());
    for (std::size_t epoch = 0; epoch < config.ppo_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t mb = 0; mb < n_mb; ++mb) {
            const std::size_t begin = mb * buffer.size() / n_mb, end = (mb + 1) * buffer.size() / n_mb;
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            const auto terms = ppo_loss(policy, buffer, idx, adv, config, rng);
            auto grads = nn::gradients(terms.total, params);
            nn::clip_grad_norm(grads, static_cast<Scalar>(config.max_grad_norm));
            nn::adam_step(params, grads, adam, adam_cfg);
            report.policy_loss += terms.policy_loss;
            report.value_loss += terms.value_loss;
            report.entropy += terms.entropy;
            report.transe_loss += terms.transe_loss;
            report.surrogate += terms.surrogate;
            ++report.steps;
        }
    }
    const double s = static_cast<double>(report.steps);
    report.policy_loss /= s;
    report.value_loss /= s;
    report.entropy /= s;
    report.transe_loss /= s;
    report.surrogate /= s;
    return report;
}

void refit_transe(XlvinPolicy& policy, const RolloutBuffer& buffer, const TrainerConfig& config, std::uint64_t seed) {
    if (!policy.config().planning || buffer.size() < 2) return;
    transe::TranseModel shared = policy.transe();  // tensors are shared handles
    transe::TransitionData data{buffer.obs, buffer.actions, buffer.next_obs};
    transe::PretrainConfig pc;
    pc.epochs = config.transe_refit_epochs;
    pc.n_transitions = data.size();
    pc.batch_size = std::min<std::size_t>(512, data.size());
    pc.seed = seed;
    transe::pretrain_transe(shared, data, pc);
    (void)policy.params();
}

void maybe_refit_transe(XlvinPolicy& policy, const RolloutBuffer& buffer, const TrainerConfig& config,
                        std::size_t updates_done) {
    if (config.transe_refit_every == 0 || updates_done == 0 || updates_done % config.transe_refit_every != 0) return;
    refit_transe(policy, buffer, config, config.seed + updates_done);
}

EvalResult evaluate(const XlvinPolicy& policy, const EnvFactory& factory, std::size_t n_episodes,
                    const std::vector<std::uint64_t>& seeds, std::size_t pool_size) {
    require(n_episodes > 0 && !seeds.empty(), "evaluation needs episodes and seeds");
    EvalResult r;
    std::size_t successes = 0;
    for (auto seed : seeds) {
        std::vector<std::unique_ptr<envs::Env>> owned;
        std::vector<envs::Env*> pool;
        for (std::size_t i = 0; i < std::min(pool_size, n_episodes); ++i) {
            owned.push_back(factory());
            pool.push_back(owned.back().get());
        }
        Rng rng(seed);
        const auto buf = collect_rollouts(policy, pool, n_episodes, rng, ActionMode::Greedy);
        for (const auto& e : buf.episodes) {
            r.returns.push_back(e.episode_return);
            successes += e.success;
        }
    }
    const double n = static_cast<double>(r.returns.size());
    r.mean = std::accumulate(r.returns.begin(), r.returns.end(), 0.0) / n;
    double var = 0.0;
    for (double x : r.returns) var += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(var / n);
    r.success_rate = static_cast<double>(successes) / n;
    return r;
}

} // namespace xlvin::ppo
