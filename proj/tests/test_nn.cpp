#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "gradcheck.hpp"
#include "xlvin/nn/adam.hpp"
#include "xlvin/nn/checkpoint.hpp"
#include "xlvin/nn/layers.hpp"

using namespace xlvin;
using namespace xlvin::nn;
using xlvin::testing::gradcheck;
using xlvin::testing::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;
constexpr int kInstances = 10;

// Values uniformly in [-1,1] but at least `gap` away from `kink`.
Tensor away_from(Shape shape, std::mt19937_64& rng, double kink, double gap) {
    Tensor t = random_tensor(std::move(shape), rng);
    for (auto& v : t.mutable_data())
        if (std::abs(v - kink) < gap) v = static_cast<Scalar>(kink + (v >= kink ? gap : -gap) * 2);
    return t;
}

// Distinct, well-separated values in random order.
Tensor spread(Shape shape, std::mt19937_64& rng) {
    const std::size_t n = numel_of(shape);
    std::vector<Scalar> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<Scalar>(-1.0 + 2.0 * static_cast<double>(i) / n);
    std::shuffle(v.begin(), v.end(), rng);
    return Tensor::from(std::move(shape), std::move(v), true);
}

} // namespace

TEST(Backward, SquareAtThree) {
    Tensor x = Tensor::scalar(3.0, true);
    backward(mul(x, x));
    ASSERT_TRUE(x.has_grad());
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, DisconnectedParameterGetsZero) {
    ParamSet ps;
    Tensor x = Tensor::scalar(2.0);
    Tensor p = Tensor::scalar(5.0);
    ps.add("x", x);
    ps.add("p", p);
    auto g = gradients(square(x), ps);
    EXPECT_DOUBLE_EQ(g.at("x")[0], 4.0);
    EXPECT_DOUBLE_EQ(g.at("p")[0], 0.0);
}

TEST(Backward, NonScalarLossIsContractViolation) {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    EXPECT_THROW(backward(square(x)), ContractViolation);
}

TEST(Backward, NanLossIsNumericError) {
    Tensor x = Tensor::scalar(std::nan(""), true);
    EXPECT_THROW(backward(square(x)), NumericError);
}

TEST(Backward, MlpMatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    for (int inst = 0; inst < kInstances; ++inst) {
        Rng init(100 + inst);
        Mlp mlp({5, 8, 8, 3}, init);
        ParamSet ps;
        mlp.register_params(ps, "mlp");
        std::vector<Tensor> inputs;
        for (const auto& p : ps.items()) inputs.push_back(p.tensor);
        Tensor x = random_tensor({1, 5}, rng, -1, 1, false);
        double err = gradcheck([&](const std::vector<Tensor>&) { return mlp(x); }, inputs, rng);
        EXPECT_LT(err, kGradTol) << "instance " << inst;
    }
}

TEST(GradCheck, ElementwiseOps) {
    std::mt19937_64 rng(11);
    for (int inst = 0; inst < kInstances; ++inst) {
        auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
        EXPECT_LT(gradcheck([](auto& in) { return add(in[0], in[1]); }, {a, b}, rng), kGradTol);
        EXPECT_LT(gradcheck([](auto& in) { return sub(in[0], in[1]); }, {a, b}, rng), kGradTol);
        EXPECT_LT(gradcheck([](auto& in) { return mul(in[0], in[1]); }, {a, b}, rng), kGradTol);
        EXPECT_LT(gradcheck([](auto& in) { return scale(square(in[0]), 0.3); }, {a}, rng), kGradTol);
        EXPECT_LT(gradcheck([](auto& in) { return exp(in[0]); }, {a}, rng), kGradTol);
        auto pos = random_tensor({3, 4}, rng, 0.5, 2.0);
        EXPECT_LT(gradcheck([](auto& in) { return log(in[0]); }, {pos}, rng), kGradTol);
        EXPECT_LT(gradcheck([](auto& in) { return sum_cols(in[0]); }, {a}, rng), kGradTol);
        EXPECT_LT(gradcheck([](auto& in) { return mean(in[0]); }, {a}, rng), kGradTol);
    }
}

TEST(GradCheck, PiecewiseOps) {
    std::mt19937_64 rng(12);
    for (int inst = 0; inst < kInstances; ++inst) {
        auto a = away_from({4, 5}, rng, 0.0, 0.05);
        EXPECT_LT(gradcheck([](auto& in) { return relu(in[0]); }, {a}, rng), kGradTol);
        auto c = away_from({4, 5}, rng, 0.5, 0.05);
        for (auto& v : c.mutable_data())
            if (std::abs(v + 0.5) < 0.05) v = -0.7;
        EXPECT_LT(gradcheck([](auto& in) { return clamp(in[0], -0.5, 0.5); }, {c}, rng), kGradTol);
        auto x = spread({4, 5}, rng), y = spread({4, 5}, rng);
        for (auto& v : y.mutable_data()) v += 0.013;
        EXPECT_LT(gradcheck([](auto& in) { return minimum(in[0], in[1]); }, {x, y}, rng), kGradTol);
    }
}

TEST(GradCheck, MatmulAndLinear) {
    std::mt19937_64 rng(13);
    for (int inst = 0; inst < kInstances; ++inst) {
        auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng), bias = random_tensor({2}, rng);
        EXPECT_LT(gradcheck([](auto& in) { return matmul(in[0], in[1]); }, {a, b}, rng), kGradTol);
        EXPECT_LT(gradcheck([](auto& in) { return linear(in[0], in[1], in[2]); }, {a, b, bias}, rng), kGradTol);
    }
}

TEST(GradCheck, Conv2d) {
    std::mt19937_64 rng(14);
    for (int inst = 0; inst < kInstances; ++inst) {
        auto x = random_tensor({2, 2, 4, 5}, rng), k = random_tensor({3, 2, 3, 3}, rng);
        EXPECT_LT(gradcheck([](auto& in) { return conv2d(in[0], in[1]); }, {x, k}, rng), kGradTol);
    }
}

TEST(GradCheck, Normalizations) {
    std::mt19937_64 rng(15);
    for (int inst = 0; inst < kInstances; ++inst) {
        auto x = random_tensor({3, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
        EXPECT_LT(gradcheck([](auto& in) { return layer_norm(in[0], in[1], in[2]); }, {x, g, b}, rng), kGradTol);

        auto img = random_tensor({3, 2, 3, 3}, rng), gamma = random_tensor({2}, rng), beta = random_tensor({2}, rng);
        BatchNormStats stats(2);
        EXPECT_LT(gradcheck([&](auto& in) { return batch_norm(in[0], in[1], in[2], stats, true); },
                            {img, gamma, beta}, rng),
                  kGradTol);
        EXPECT_LT(gradcheck([&](auto& in) { return batch_norm(in[0], in[1], in[2], stats, false); },
                            {img, gamma, beta}, rng),
                  kGradTol);
    }
}

TEST(GradCheck, SoftmaxFamily) {
    std::mt19937_64 rng(16);
    for (int inst = 0; inst < kInstances; ++inst) {
        auto x = random_tensor({3, 5}, rng, -2, 2);
        EXPECT_LT(gradcheck([](auto& in) { return softmax(in[0]); }, {x}, rng), kGradTol);
        EXPECT_LT(gradcheck([](auto& in) { return log_softmax(in[0]); }, {x}, rng), kGradTol);
    }
}

TEST(GradCheck, Reductions) {
    std::mt19937_64 rng(17);
    for (int inst = 0; inst < kInstances; ++inst) {
        auto x = spread({6, 3}, rng);
        std::vector<std::size_t> seg = {0, 2, 0, 1, 2, 0};
        EXPECT_LT(gradcheck([&](auto& in) { return segment_max(in[0], seg, 4); }, {x}, rng), kGradTol);
        EXPECT_LT(gradcheck([](auto& in) { return max_reduce(in[0]); }, {x}, rng), kGradTol);
        auto img = random_tensor({2, 3, 2, 2}, rng);
        EXPECT_LT(gradcheck([](auto& in) { return global_avg_pool(in[0]); }, {img}, rng), kGradTol);
    }
}

TEST(GradCheck, IndexingAndConcat) {
    std::mt19937_64 rng(18);
    for (int inst = 0; inst < kInstances; ++inst) {
        auto a = random_tensor({3, 2}, rng), b = random_tensor({3, 4}, rng);
        EXPECT_LT(gradcheck([](auto& in) { return concat_cols({in[0], in[1]}); }, {a, b}, rng), kGradTol);
        EXPECT_LT(gradcheck([](auto& in) { return gather_rows(in[0], {2, 0, 2, 1}); }, {b}, rng), kGradTol);
        EXPECT_LT(gradcheck([](auto& in) { return pick(in[0], {3, 0, 1}); }, {b}, rng), kGradTol);
        EXPECT_LT(gradcheck([](auto& in) { return reshape(in[0], {4, 3}); }, {b}, rng), kGradTol);
        auto c = random_tensor({2, 4}, rng);
        EXPECT_LT(gradcheck([](auto& in) { return concat_rows({in[0], in[1]}); }, {b, c}, rng), kGradTol);
        EXPECT_LT(gradcheck([](auto& in) { return slice_rows(in[0], 1, 3); }, {b}, rng), kGradTol);
    }
}

TEST(Conv2d, IdentityKernel) {
    std::mt19937_64 rng(1);
    auto x = random_tensor({1, 5, 6}, rng, -1, 1, false);
    std::vector<Scalar> k(9, 0.0);
    k[4] = 1.0;
    auto y = conv2d(x, Tensor::from({1, 1, 3, 3}, k));
    ASSERT_EQ(y.shape(), x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y.at(i), x.at(i));
}

TEST(Conv2d, OnesKernelCountsOverlap) {
    auto y = conv2d(Tensor::full({1, 4, 4}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0));
    EXPECT_DOUBLE_EQ(y.at(1 * 4 + 1), 9.0);
    EXPECT_DOUBLE_EQ(y.at(0), 4.0);
    EXPECT_DOUBLE_EQ(y.at(15), 4.0);
    EXPECT_DOUBLE_EQ(y.at(1), 6.0);
}

TEST(Conv2d, ChannelMismatchThrows) {
    EXPECT_THROW(conv2d(Tensor::zeros({2, 4, 4}), Tensor::zeros({1, 3, 3, 3})), ContractViolation);
}

TEST(LayerNorm, ConstantInputGivesZeros) {
    auto y = layer_norm(Tensor::full({5}, 3.0), Tensor::full({5}, 1.0), Tensor::zeros({5}));
    for (auto v : y.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(LayerNorm, NormalizesMeanAndVariance) {
    std::mt19937_64 rng(3);
    for (int inst = 0; inst < 20; ++inst) {
        auto x = random_tensor({16}, rng, -5, 5, false);
        auto y = layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}));
        double mu = std::accumulate(y.data().begin(), y.data().end(), 0.0) / 16;
        double var = 0;
        for (auto v : y.data()) var += (v - mu) * (v - mu);
        var /= 16;
        EXPECT_NEAR(mu, 0.0, 1e-9);
        EXPECT_NEAR(var, 1.0, 1e-3);
    }
}

TEST(LayerNorm, TwoElementHandValue) {
    // mean 2, variance 1 -> +-1/sqrt(1 + eps)
    auto y = layer_norm(Tensor::from({2}, {1.0, 3.0}), Tensor::full({2}, 1.0), Tensor::zeros({2}));
    const double delta = 1.0 - 1.0 / std::sqrt(1.0 + 1e-5);
    EXPECT_NEAR(y.at(0), -1.0 + delta, 1e-15);
    EXPECT_NEAR(y.at(1), 1.0 - delta, 1e-15);
}

TEST(Softmax, RowsAreProbabilityVectors) {
    std::mt19937_64 rng(4);
    auto p = softmax(random_tensor({8, 7}, rng, -30, 30, false));
    for (std::size_t i = 0; i < 8; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 7; ++j) {
            EXPECT_GE(p.at(i * 7 + j), 0.0);
            s += p.at(i * 7 + j);
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(MaxReduce, TiesRouteToFirstRow) {
    Tensor x = Tensor::from({3, 1}, {2.0, 2.0, 1.0}, true);
    backward(sum(max_reduce(x)));
    EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
    EXPECT_DOUBLE_EQ(x.grad()[2], 0.0);
}

TEST(SegmentMax, EmptySegmentIsZero) {
    auto y = segment_max(Tensor::from({2, 2}, {-3.0, -4.0, -1.0, -5.0}), {1, 1}, 3);
    EXPECT_DOUBLE_EQ(y.at(0), 0.0);
    EXPECT_DOUBLE_EQ(y.at(2), -1.0);
    EXPECT_DOUBLE_EQ(y.at(3), -4.0);
    EXPECT_DOUBLE_EQ(y.at(4), 0.0);
}

TEST(Relu, GradientAtZeroIsZero) {
    Tensor x = Tensor::from({3}, {0.0, 1.0, -1.0}, true);
    backward(sum(relu(x)));
    EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], 1.0);
    EXPECT_DOUBLE_EQ(x.grad()[2], 0.0);
}

TEST(BatchNorm, RunningStatsUseMomentum) {
    BatchNormStats stats(1);
    Tensor x = Tensor::from({2, 1, 1, 2}, {1.0, 3.0, 5.0, 7.0});
    batch_norm(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), stats, true);
    EXPECT_NEAR(stats.running_mean.at(0), 0.1 * 4.0, 1e-12);
    // unbiased variance of {1,3,5,7} is 20/3
    EXPECT_NEAR(stats.running_var.at(0), 0.9 + 0.1 * 20.0 / 3.0, 1e-12);
    auto y = batch_norm(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), stats, false);
    EXPECT_NEAR(y.at(0), (1.0 - 0.4) / std::sqrt(stats.running_var.at(0) + 1e-5), 1e-12);
}

TEST(Ops, DoNotMutateInputs) {
    std::mt19937_64 rng(5);
    auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 3}, rng);
    const std::vector<Scalar> a0(a.data().begin(), a.data().end());
    auto loss = sum(softmax(relu(matmul(a, b))));
    backward(loss);
    for (std::size_t i = 0; i < a0.size(); ++i) EXPECT_EQ(a.at(i), a0[i]);
}

TEST(Ops, ForwardBackwardDeterministic) {
    auto run = [] {
        Rng init(9);
        Mlp mlp({4, 6, 2}, init);
        ParamSet ps;
        mlp.register_params(ps, "m");
        std::mt19937_64 rng(2);
        auto x = random_tensor({5, 4}, rng, -1, 1, false);
        auto g = gradients(sum(square(mlp(x))), ps);
        return g;
    };
    EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    ParamSet ps;
    ps.add("w", Tensor::from({3}, {1.0, -2.0, 0.5}));
    AdamState st;
    for (int i = 0; i < 5; ++i) adam_step(ps, {{"w", {0.0, 0.0, 0.0}}}, st, {});
    EXPECT_EQ(std::vector<Scalar>(ps.find("w")->tensor.data().begin(), ps.find("w")->tensor.data().end()),
              (std::vector<Scalar>{1.0, -2.0, 0.5}));
    EXPECT_EQ(st.step, 5u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    ParamSet ps;
    ps.add("w", Tensor::from({2}, {1.0, 1.0}));
    AdamState st;
    AdamConfig cfg;
    cfg.lr = 0.01;
    adam_step(ps, {{"w", {3.0, -0.2}}}, st, cfg);
    EXPECT_NEAR(ps.find("w")->tensor.at(0), 1.0 - 0.01, 1e-9);
    EXPECT_NEAR(ps.find("w")->tensor.at(1), 1.0 + 0.01, 1e-9);
}

TEST(Adam, QuadraticDecreasesMonotonically) {
    ParamSet ps;
    Tensor x = Tensor::scalar(1.0);
    ps.add("x", x);
    AdamState st;
    AdamConfig cfg;
    cfg.lr = 0.1;
    double prev = 1.0;
    for (int i = 0; i < 3; ++i) {
        adam_step(ps, gradients(square(x), ps), st, cfg);
        EXPECT_LT(x.at(0), prev);
        prev = x.at(0);
    }
}

TEST(Adam, MissingGradientIsContractViolation) {
    ParamSet ps;
    ps.add("a", Tensor::scalar(1.0));
    AdamState st;
    EXPECT_THROW(adam_step(ps, {}, st, {}), ContractViolation);
}

TEST(Adam, FrozenParametersUntouched) {
    ParamSet ps;
    ps.add("frozen", Tensor::scalar(1.0), false);
    ps.add("live", Tensor::scalar(1.0));
    AdamState st;
    adam_step(ps, {{"live", {1.0}}, {"frozen", {1.0}}}, st, {});
    EXPECT_EQ(ps.find("frozen")->tensor.at(0), 1.0);
    EXPECT_NE(ps.find("live")->tensor.at(0), 1.0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        Rng init(trial);
        Mlp mlp({3, 4, 2}, init, 0);
        BatchNorm2d bn(2);
        ParamSet ps;
        mlp.register_params(ps, "model.mlp");
        bn.register_params(ps, "model.bn");
        ps.set_trainable("model.mlp.0", false);
        AdamState st;
        auto g = gradients(sum(square(mlp(random_tensor({2, 3}, rng, -1, 1, false)))), ps);
        adam_step(ps, g, st, {});
        const auto path = (std::filesystem::temp_directory_path() / ("xlvin_ckpt_" + std::to_string(trial))).string();
        save_checkpoint(path, make_checkpoint(ps, &st, {{"note", "roundtrip"}}));
        auto back = load_checkpoint(path);
        std::filesystem::remove(path);

        ASSERT_EQ(back.arrays.size(), ps.size());
        for (const auto& p : ps.items()) {
            const auto* a = back.find(p.name);
            ASSERT_NE(a, nullptr);
            EXPECT_EQ(a->shape, p.tensor.shape());
            EXPECT_EQ(a->trainable, p.trainable);
            EXPECT_EQ(a->buffer, p.buffer);
            EXPECT_EQ(0, std::memcmp(a->data.data(), p.tensor.data().data(), a->data.size() * sizeof(Scalar)));
        }
        ASSERT_TRUE(back.adam.has_value());
        EXPECT_EQ(back.adam->step, st.step);
        EXPECT_EQ(back.adam->first_moment, st.first_moment);
        EXPECT_EQ(back.adam->second_moment, st.second_moment);
        EXPECT_EQ(back.metadata.at("note"), "roundtrip");

        ParamSet fresh;
        Rng other(999);
        Mlp mlp2({3, 4, 2}, other, 0);
        mlp2.register_params(fresh, "model.mlp");
        restore(back, fresh, "model.mlp");
        EXPECT_EQ(params_hash(fresh), params_hash(ps, "model.mlp"));
    }
}
