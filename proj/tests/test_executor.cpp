#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "xlvin/errors.hpp"
#include "xlvin/executor/executor.hpp"
#include "xlvin/mdp/generators.hpp"

using namespace xlvin;
using namespace xlvin::executor;
using nn::Scalar;

namespace {

using Vec = std::vector<double>;

// Plain-loop forward pass reading weights straight from the parameter set.
struct Reference {
    const nn::ParamSet& ps;

    const nn::Tensor& t(const std::string& name) const { return ps.find(name)->tensor; }

    Vec linear(const std::string& prefix, const Vec& x, bool relu) const {
        const auto& w = t(prefix + ".weight");
        const auto& b = t(prefix + ".bias");
        const std::size_t in = w.size(0), out = w.size(1);
        Vec y(out);
        for (std::size_t o = 0; o < out; ++o) {
            double acc = b.at(o);
            for (std::size_t i = 0; i < in; ++i) acc += x[i] * w.at(i * out + o);
            y[o] = relu ? std::max(0.0, acc) : acc;
        }
        return y;
    }
    Vec mlp2(const std::string& prefix, const Vec& x) const {
        return linear(prefix + ".1", linear(prefix + ".0", x, true), false);
    }
    Vec layer_norm(const Vec& x) const {
        const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
        double var = 0;
        for (double v : x) var += (v - mean) * (v - mean);
        var /= x.size();
        Vec y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            y[i] = (x[i] - mean) / std::sqrt(var + 1e-5) * t("executor.norm.gain").at(i) + t("executor.norm.bias").at(i);
        return y;
    }
    static Vec cat(Vec a, const Vec& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    }

    std::vector<Vec> step(const ExecGraph& g, const std::vector<Vec>& h) const {
        const std::size_t k = h[0].size();
        std::vector<Vec> out;
        for (std::size_t i = 0; i < g.n_nodes; ++i) {
            Vec m(k, 0.0);
            bool any = false;
            for (std::size_t e = 0; e < g.n_edges(); ++e) {
                if (g.src[e] != i) continue;
                const Vec edge = mlp2("executor.edge_lift", {g.edge_inputs[2 * e], g.edge_inputs[2 * e + 1]});
                const Vec msg = mlp2("executor.message", cat(cat(h[i], h[g.dst[e]]), edge));
                for (std::size_t c = 0; c < k; ++c) m[c] = any ? std::max(m[c], msg[c]) : msg[c];
                any = true;
            }
            out.push_back(layer_norm(mlp2("executor.update", cat(h[i], m))));
        }
        return out;
    }
};

ExecGraph random_graph(std::size_t n, std::size_t edges, Rng& rng) {
    ExecGraph g;
    g.n_nodes = n;
    std::uniform_int_distribution<std::size_t> node(0, n - 1);
    std::normal_distribution<double> r(0.0, 1.0);
    for (std::size_t e = 0; e < edges; ++e) g.add_edge(node(rng), node(rng), r(rng), 0.9);
    return g;
}

std::vector<Vec> rows(const Tensor& t) {
    std::vector<Vec> out(t.size(0), Vec(t.size(1)));
    for (std::size_t i = 0; i < t.size(0); ++i)
        for (std::size_t j = 0; j < t.size(1); ++j) out[i][j] = t.at(i * t.size(1) + j);
    return out;
}

Tensor to_tensor(const std::vector<Vec>& v) {
    std::vector<Scalar> flat;
    for (const auto& r : v) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor::from({v.size(), v[0].size()}, std::move(flat));
}

void set(nn::ParamSet& ps, const std::string& name, const std::vector<Scalar>& values) {
    auto data = ps.find(name)->tensor.mutable_data();
    ASSERT_EQ(data.size(), values.size()) << name;
    std::copy(values.begin(), values.end(), data.begin());
}

void expect_rows_near(const Tensor& a, const Tensor& b, double tol) {
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.at(i), b.at(i), tol) << "element " << i;
}

} // namespace

TEST(MpStep, MatchesPlainLoopReference) {
    Rng rng(1);
    Executor ex(6, rng);
    nn::ParamSet ps;
    ex.register_params(ps);
    const Reference ref{ps};
    for (int trial = 0; trial < 10; ++trial) {
        // sparse enough that some nodes have no successors
        const auto g = random_graph(12, 8, rng);
        const auto h = xlvin::testing::random_tensor({12, 6}, rng, -1, 1, false);
        const auto expected = ref.step(g, rows(h));
        expect_rows_near(ex.mp_step(g, h), to_tensor(expected), 1e-10);
    }
}

TEST(MpStep, EmptyNeighbourhoodUsesZeroMessage) {
    Rng rng(2);
    Executor ex(4, rng);
    nn::ParamSet ps;
    ex.register_params(ps);
    const Reference ref{ps};
    ExecGraph g;
    g.n_nodes = 3;
    g.add_edge(0, 1, 0.5, 0.9);
    const auto h = xlvin::testing::random_tensor({3, 4}, rng, -1, 1, false);
    const auto out = rows(ex.mp_step(g, h));
    for (std::size_t i : {1u, 2u}) {
        const Vec expected = ref.layer_norm(ref.mlp2("executor.update", Reference::cat(rows(h)[i], Vec(4, 0.0))));
        for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(out[i][c], expected[c], 1e-12);
    }
    ExecGraph lonely;
    lonely.n_nodes = 2;
    EXPECT_EQ(ex.mp_step(lonely, nn::slice_rows(h, 0, 2)).shape(), (nn::Shape{2, 4}));
}

TEST(MpStep, HandEvaluatedTwoNodeGraph) {
    Rng rng(3);
    Executor ex(2, rng, 1);
    nn::ParamSet ps;
    ex.register_params(ps);
    // e = relu(r) -> r
    set(ps, "executor.edge_lift.0.weight", {1, 0});
    set(ps, "executor.edge_lift.0.bias", {0});
    set(ps, "executor.edge_lift.1.weight", {1});
    set(ps, "executor.edge_lift.1.bias", {0});
    // hidden = relu(h_j0 + e, h_i0); message = (hidden0, 1 - hidden1)
    set(ps, "executor.message.0.weight", {0, 1, 0, 0, 1, 0, 0, 0, 1, 0});
    set(ps, "executor.message.0.bias", {0, 0});
    set(ps, "executor.message.1.weight", {1, 0, 0, -1});
    set(ps, "executor.message.1.bias", {0, 1});
    // hidden = relu(h_i0 + m0, m1 - h_i1); out = (2 hidden0, hidden1 - 1)
    set(ps, "executor.update.0.weight", {1, 0, 0, -1, 1, 0, 0, 1});
    set(ps, "executor.update.0.bias", {0, 0});
    set(ps, "executor.update.1.weight", {2, 0, 0, 1});
    set(ps, "executor.update.1.bias", {0, -1});
    set(ps, "executor.norm.gain", {1, 2});
    set(ps, "executor.norm.bias", {0, 0.5});

    ExecGraph g;
    g.n_nodes = 2;
    g.add_edge(0, 1, 3.0, 0.9);
    const auto h = Tensor::from({2, 2}, {0.5, -1.0, 2.0, 1.0});
    const auto out = ex.mp_step(g, h);

    // node 0: e = 3, m = (5, 0.5), U -> (11, 0.5), mean 5.75, deviation 5.25
    // node 1: m = 0, U hidden relu(2, -1) = (2, 0) -> (4, -1), mean 1.5, deviation 2.5
    const double n0 = 5.25 / std::sqrt(5.25 * 5.25 + 1e-5);
    const double n1 = 2.5 / std::sqrt(2.5 * 2.5 + 1e-5);
    EXPECT_NEAR(out.at(0), n0, 1e-12);
    EXPECT_NEAR(out.at(1), -2 * n0 + 0.5, 1e-12);
    EXPECT_NEAR(out.at(2), n1, 1e-12);
    EXPECT_NEAR(out.at(3), -2 * n1 + 0.5, 1e-12);
}

TEST(MpStep, PermutationInvariant) {
    Rng rng(4);
    Executor ex(5, rng);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 9;
        const auto g = random_graph(n, 25, rng);
        const auto h = xlvin::testing::random_tensor({n, 5}, rng, -1, 1, false);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        ExecGraph pg;
        pg.n_nodes = n;
        for (std::size_t e = 0; e < g.n_edges(); ++e)
            pg.add_edge(perm[g.src[e]], perm[g.dst[e]], g.edge_inputs[2 * e], g.edge_inputs[2 * e + 1]);
        std::vector<std::size_t> inverse(n);
        for (std::size_t i = 0; i < n; ++i) inverse[perm[i]] = i;
        const auto ph = nn::gather_rows(h, inverse);
        const auto a = ex.mp_step(g, h), b = ex.mp_step(pg, ph);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(a.at(i * 5 + c), b.at(perm[i] * 5 + c), 1e-12);
    }
}

TEST(MpStep, EdgeOrderAndDuplicateEdgesDoNotMatter) {
    Rng rng(5);
    Executor ex(5, rng);
    for (int trial = 0; trial < 10; ++trial) {
        const auto g = random_graph(7, 20, rng);
        const auto h = xlvin::testing::random_tensor({7, 5}, rng, -1, 1, false);
        const auto base = ex.mp_step(g, h);

        std::vector<std::size_t> order(g.n_edges());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        ExecGraph shuffled, duplicated = g;
        shuffled.n_nodes = g.n_nodes;
        for (auto e : order) shuffled.add_edge(g.src[e], g.dst[e], g.edge_inputs[2 * e], g.edge_inputs[2 * e + 1]);
        for (std::size_t e = 0; e < g.n_edges(); e += 3)
            duplicated.add_edge(g.src[e], g.dst[e], g.edge_inputs[2 * e], g.edge_inputs[2 * e + 1]);
        expect_rows_near(ex.mp_step(shuffled, h), base, 1e-12);
        expect_rows_near(ex.mp_step(duplicated, h), base, 1e-12);
    }
}

TEST(MpStep, InvalidGraphThrows) {
    Rng rng(6);
    Executor ex(3, rng);
    ExecGraph g;
    g.n_nodes = 2;
    g.add_edge(0, 2, 0.0, 0.9);
    EXPECT_THROW(ex.run(g, Tensor::zeros({2, 3}), 1), ContractViolation);
    g.dst[0] = 1;
    EXPECT_THROW(ex.mp_step(g, Tensor::zeros({3, 3})), ContractViolation);
}

TEST(RunExecutor, ZeroStepsReturnsInput) {
    Rng rng(7);
    Executor ex(4, rng);
    const auto g = random_graph(5, 10, rng);
    const auto h = xlvin::testing::random_tensor({5, 4}, rng, -1, 1, false);
    const auto out = ex.run(g, h, 0);
    for (std::size_t i = 0; i < h.numel(); ++i) EXPECT_EQ(out.at(i), h.at(i));
}

TEST(RunExecutor, OneStepOnStarEqualsMpStep) {
    Rng rng(8);
    Executor ex(4, rng);
    ExecGraph star;
    star.n_nodes = 6;
    for (std::size_t j = 1; j < 6; ++j) star.add_edge(0, j, 0.1 * j, 0.9);
    const auto h = xlvin::testing::random_tensor({6, 4}, rng, -1, 1, false);
    expect_rows_near(ex.run(star, h, 1), ex.mp_step(star, h), 0.0);
    expect_rows_near(ex.run(star, h, 3), ex.mp_step(star, ex.mp_step(star, ex.mp_step(star, h))), 0.0);
}

TEST(RunExecutor, HundredNodesDeterministicAndFinite) {
    Rng rng(9);
    Executor ex(16, rng);
    const auto g = random_graph(100, 400, rng);
    const auto h = xlvin::testing::random_tensor({100, 16}, rng, -3, 3, false);
    const auto a = ex.run(g, h, 4), b = ex.run(g, h, 4);
    for (std::size_t i = 0; i < a.numel(); ++i) {
        EXPECT_TRUE(std::isfinite(a.at(i)));
        EXPECT_EQ(a.at(i), b.at(i));
    }
}

TEST(RunExecutor, PrunedRunMatchesFullRunAtRoots) {
    Rng rng(10);
    Executor ex(6, rng);
    // two full trees, branching 3, depth 2, stored level-major: roots, then
    // depth-1 nodes, then leaves
    const std::size_t a = 3, roots = 2;
    const std::vector<std::size_t> level_ends{roots, roots * (1 + a), roots * (1 + a + a * a)};
    ExecGraph g;
    g.n_nodes = level_ends.back();
    for (std::size_t r = 0; r < roots; ++r)
        for (std::size_t i = 0; i < a; ++i) {
            const std::size_t child = roots + r * a + i;
            g.add_edge(r, child, 0.0, 0.9);
            for (std::size_t j = 0; j < a; ++j) g.add_edge(child, level_ends[1] + (r * a + i) * a + j, 0.0, 0.9);
        }
    const auto h = xlvin::testing::random_tensor({g.n_nodes, 6}, rng, -1, 1, false);
    const auto full = ex.run(g, h, 2);
    const auto pruned = run_pruned(ex, h, g.src, g.dst, ex.lift_edges(g.edge_inputs), level_ends);
    ASSERT_EQ(pruned.shape(), (nn::Shape{roots, 6}));
    for (std::size_t i = 0; i < pruned.numel(); ++i) EXPECT_NEAR(pruned.at(i), full.at(i), 1e-12);
    const auto zero = run_pruned(ex, h, g.src, g.dst, ex.lift_edges(g.edge_inputs), {g.n_nodes});
    EXPECT_EQ(zero.shape(), h.shape());
}

TEST(RunExecutor, GradientsMatchFiniteDifferences) {
    Rng rng(11);
    Executor ex(3, rng, 4);
    nn::ParamSet ps;
    ex.register_params(ps);
    std::vector<Tensor> inputs;
    for (const auto& p : ps.items())
        if (p.name.find("lift") == std::string::npos && p.name.find("readout") == std::string::npos)
            inputs.push_back(p.tensor);
    const auto g = random_graph(5, 9, rng);
    const auto h = xlvin::testing::random_tensor({5, 3}, rng, -1, 1, false);
    const auto edges = Tensor::from({9, 4}, std::vector<Scalar>(36, 0.3));
    auto f = [&](const std::vector<Tensor>&) {
        Tensor out = h;
        for (int k = 0; k < 2; ++k) out = ex.mp_step(out, g.src, g.dst, edges, 5);
        return out;
    };
    EXPECT_LT(xlvin::testing::gradcheck(f, inputs, rng, 1e-6), 1e-4);
}

TEST(ExecutorDataset, OneSamplePerConsecutivePair) {
    std::vector<mdp::ViTrajectory> trajectories;
    for (std::uint64_t s = 0; s < 3; ++s)
        trajectories.push_back(mdp::vi_trajectory(mdp::gen_random_deterministic(20, 8, s), 1e-3));
    std::size_t pairs = 0;
    for (const auto& t : trajectories) pairs += t.iterates.size() - 1;
    const auto data = make_executor_dataset(trajectories);
    EXPECT_EQ(data.samples.size(), pairs);
    EXPECT_EQ(data.graphs[0].n_edges(), 160u);
    EXPECT_THROW(executor_mse(Executor(), ExecutorDataset{}), ContractViolation);

    mdp::DiscreteMdp stochastic(2, 1, 0.9);
    stochastic.p(0, 0, 0) = stochastic.p(0, 0, 1) = 0.5;
    stochastic.p(1, 0, 1) = 1.0;
    EXPECT_THROW(graph_from_mdp(stochastic), ContractViolation);
}

class Pretrained : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        std::vector<mdp::ViTrajectory> train, held;
        for (std::uint64_t s = 0; s < 100; ++s)
            train.push_back(mdp::vi_trajectory(mdp::gen_random_deterministic(20, 8, s), 1e-3));
        for (std::uint64_t s = 0; s < 30; ++s)
            held.push_back(mdp::vi_trajectory(mdp::gen_random_deterministic(20, 8, 100000 + s), 1e-3));
        train_ = new ExecutorDataset(make_executor_dataset(std::move(train)));
        held_ = new ExecutorDataset(make_executor_dataset(std::move(held)));
        Rng rng(12);
        ex_ = new Executor(50, rng);
        ExecutorTrainConfig cfg;
        cfg.epochs = 25;
        report_ = new ExecutorReport(pretrain_executor(*ex_, *train_, cfg));
    }
    static void TearDownTestSuite() {
        delete train_;
        delete held_;
        delete ex_;
        delete report_;
    }
    static inline ExecutorDataset* train_ = nullptr;
    static inline ExecutorDataset* held_ = nullptr;
    static inline Executor* ex_ = nullptr;
    static inline ExecutorReport* report_ = nullptr;
};

TEST_F(Pretrained, TrainingLossFallsBelowTenthOfFirstEpoch) {
    ASSERT_EQ(report_->epoch_mse.size(), 25u);
    EXPECT_LT(report_->final_mse, 0.1 * report_->epoch_mse.front())
        << "first epoch " << report_->epoch_mse.front() << " final " << report_->final_mse;
}

TEST_F(Pretrained, ReturnsFrozenExecutor) {
    EXPECT_TRUE(ex_->frozen());
    nn::ParamSet ps;
    ex_->register_params(ps);
    for (const auto& p : ps.items()) {
        EXPECT_FALSE(p.trainable) << p.name;
        EXPECT_FALSE(p.tensor.requires_grad()) << p.name;
    }
    EXPECT_THROW(pretrain_executor(*ex_, *train_, ExecutorTrainConfig{}), ContractViolation);
}

TEST_F(Pretrained, HeldOutBeatsCopyBaseline) {
    const double model = executor_mse(*ex_, *held_), copy = copy_baseline_mse(*held_);
    EXPECT_LT(model, copy) << "model " << model << " copy " << copy;
}

TEST_F(Pretrained, SelfLoopFromZeroPredictsOne) {
    mdp::DiscreteMdp m(1, 1, 0.9);
    m.p(0, 0, 0) = 1.0;
    m.r(0, 0) = 1.0;
    const double v1 = predict_step(*ex_, m, {0.0})[0];
    EXPECT_NEAR(v1, mdp::vi_step(m, {0.0})[0], 0.2);
    EXPECT_NEAR(v1, 1.0, 0.2);
}
