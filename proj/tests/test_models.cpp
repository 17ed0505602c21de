#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "msid/checkpoint.hpp"
#include "msid/models.hpp"
#include "support/test_support.hpp"

using namespace msid;
using msid::testing::compare_gradients;
using msid::testing::rand_tensor;

namespace {

TransitionSpec small_ll(std::size_t d = 3, std::size_t k = 4, std::size_t width = 16) {
    TransitionSpec t;
    t.kind = TransitionKind::kLocallyLinear;
    t.state_dim = d;
    t.mixtures = k;
    t.beta_hidden = width;
    return t;
}

TransitionSpec small_fc(std::size_t d = 3, std::vector<std::size_t> hidden = {8, 8}) {
    TransitionSpec t;
    t.kind = TransitionKind::kFullyConnected;
    t.state_dim = d;
    t.hidden = std::move(hidden);
    return t;
}

ObservationSpec projection_obs(std::vector<std::size_t> idx = {0}) {
    ObservationSpec o;
    o.kind = ObservationKind::kProjection;
    o.projection = std::move(idx);
    return o;
}

ObservationSpec decoder_obs(std::size_t out_dim = 9, std::vector<std::size_t> hidden = {12}) {
    ObservationSpec o;
    o.kind = ObservationKind::kMlpDecoder;
    o.hidden = std::move(hidden);
    o.output_dim = out_dim;
    return o;
}

void set_all(Variable& v, double value) {
    for (std::size_t i = 0; i < v.value.size(); ++i) v.value.at(i) = value;
}

}  // namespace

TEST(InitParams, DeterministicGivenSeed) {
    auto a = init_params(small_ll(), projection_obs(), 99);
    auto b = init_params(small_ll(), projection_obs(), 99);
    ASSERT_EQ(a.tensors.size(), b.tensors.size());
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
        EXPECT_EQ(a.tensors[i].name, b.tensors[i].name);
        EXPECT_EQ(a.tensors[i].value, b.tensors[i].value);
    }
    auto c = init_params(small_ll(), projection_obs(), 100);
    bool differs = false;
    for (std::size_t i = 0; i < a.tensors.size(); ++i) differs |= !(a.tensors[i].value == c.tensors[i].value);
    EXPECT_TRUE(differs);
}

TEST(InitParams, LocallyLinearLayout) {
    TransitionSpec t = small_ll(3, 32, 1024);
    auto p = init_params(t, projection_obs(), 1);
    std::size_t a_count = 0;
    for (const auto& v : p.tensors) {
        if (v.name.rfind("f.A.", 0) == 0) {
            ++a_count;
            EXPECT_EQ(v.value.rows(), 3u);
            EXPECT_EQ(v.value.cols(), 3u);
        }
        EXPECT_TRUE(v.requires_grad);
    }
    EXPECT_EQ(a_count, 32u);
    EXPECT_NE(p.find("f.beta.w0"), nullptr);
    EXPECT_NE(p.find("f.beta.b1"), nullptr);
}

TEST(InitParams, FreshLocallyLinearIsNearIdentity) {
    auto p = init_params(small_ll(3, 32, 64), projection_obs(), 7);
    ModelEvaluator eval(p);
    Rng rng(55);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor x({1, 3});
        double norm = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            x.at(i) = rng.normal();
            norm += x.at(i) * x.at(i);
        }
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < 3; ++i) x.at(i) /= norm;  // unit vector
        Tensor y = eval.transition(x);
        double diff = 0.0;
        for (std::size_t i = 0; i < 3; ++i) diff += (y.at(i) - x.at(i)) * (y.at(i) - x.at(i));
        EXPECT_LE(std::sqrt(diff), 0.1);
    }
}

TEST(TransitionFc, ZeroWeightsGiveExactIdentity) {
    auto p = init_params(small_fc(), projection_obs(), 3);
    for (auto& v : p.tensors) set_all(v, 0.0);
    ModelEvaluator eval(p);
    Rng rng(5);
    Tensor x = rand_tensor(rng, 4, 3, -2.0, 2.0);
    EXPECT_EQ(eval.transition(x), x);
}

TEST(TransitionFc, SingleLinearLayerResidual) {
    TransitionSpec t = small_fc(1, {});
    auto p = init_params(t, projection_obs(), 3);
    p.find("f.w0")->value(0, 0) = 0.5;
    p.find("f.b0")->value(0, 0) = 0.0;
    ModelEvaluator eval(p);
    Tensor y = eval.transition(Tensor::matrix({{2.0}}));
    EXPECT_DOUBLE_EQ(y(0, 0), 3.0);
}

TEST(TransitionFc, StateGradientMatchesFiniteDifferences) {
    auto p = init_params(small_fc(3, {6}), projection_obs(), 11);
    Rng rng(13);
    std::vector<Tensor> leaves = {rand_tensor(rng, 2, 3)};
    auto build = [&](Graph& g, std::vector<Variable>& v) {
        ModelBinding bind(g, p);
        return g.sum_sq(bind.transition(g.leaf(v[0])));
    };
    EXPECT_LT(compare_gradients(leaves, build).max_rel_err, 1e-5);
}

TEST(TransitionLl, SingleZeroMixtureIsIdentity) {
    auto p = init_params(small_ll(2, 1, 8), projection_obs({0}), 17);
    set_all(*p.find("f.A.0"), 0.0);
    ModelEvaluator eval(p);
    Rng rng(19);
    Tensor x = rand_tensor(rng, 3, 2);
    EXPECT_EQ(eval.transition(x), x);
}

TEST(TransitionLl, ForcedMixtureWeights) {
    // beta net forced to softmax(b1) = [0.3, 0.7]; A1 = I, A2 = -I.
    auto p = init_params(small_ll(3, 2, 8), projection_obs(), 23);
    set_all(*p.find("f.beta.w0"), 0.0);
    set_all(*p.find("f.beta.b0"), 0.0);
    set_all(*p.find("f.beta.w1"), 0.0);
    p.find("f.beta.b1")->value(0, 0) = std::log(0.3);
    p.find("f.beta.b1")->value(0, 1) = std::log(0.7);
    p.find("f.A.0")->value = Tensor::identity(3);
    p.find("f.A.1")->value = Tensor::identity(3);
    for (std::size_t i = 0; i < 9; ++i) p.find("f.A.1")->value.at(i) *= -1.0;

    ModelEvaluator eval(p);
    Rng rng(29);
    Tensor x = rand_tensor(rng, 2, 3, -3.0, 3.0);
    Tensor y = eval.transition(x);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y.at(i), 0.6 * x.at(i), 1e-12);
}

TEST(TransitionLl, AppliesMatrixOnColumnConvention) {
    // A x with A = [[0,1],[0,0]] maps (x1, x2) -> (x2, 0).
    auto p = init_params(small_ll(2, 1, 4), projection_obs({0}), 31);
    set_all(*p.find("f.beta.w0"), 0.0);
    set_all(*p.find("f.beta.b0"), 0.0);
    set_all(*p.find("f.beta.w1"), 0.0);
    set_all(*p.find("f.beta.b1"), 0.0);  // softmax of single logit -> weight 1
    p.find("f.A.0")->value = Tensor::matrix({{0.0, 1.0}, {0.0, 0.0}});
    ModelEvaluator eval(p);
    Tensor y = eval.transition(Tensor::matrix({{5.0, 2.0}}));
    EXPECT_DOUBLE_EQ(y(0, 0), 5.0 + 2.0);
    EXPECT_DOUBLE_EQ(y(0, 1), 2.0 + 0.0);
}

TEST(TransitionLl, MixtureWeightsOnSimplex) {
    auto p = init_params(small_ll(3, 5, 16), projection_obs(), 37);
    Rng rng(41);
    Graph g;
    ModelBinding bind(g, p);
    // Reach into the beta network: logits then softmax, same path as transition.
    Tensor x = rand_tensor(rng, 6, 3, -10.0, 10.0);
    Value xv = g.input(x);
    Value h = g.relu(g.add_rowvec(g.matmul(xv, g.leaf(*p.find("f.beta.w0"))), g.leaf(*p.find("f.beta.b0"))));
    Value logits = g.add_rowvec(g.matmul(h, g.leaf(*p.find("f.beta.w1"))), g.leaf(*p.find("f.beta.b1")));
    const Tensor& w = g.value(g.softmax_rows(logits));
    for (std::size_t i = 0; i < w.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < w.cols(); ++j) {
            EXPECT_GE(w(i, j), 0.0);
            sum += w(i, j);
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Observe, ProjectionReturnsSelectedCoordinates) {
    auto p = init_params(small_ll(3, 2, 8), projection_obs({0}), 43);
    ModelEvaluator eval(p);
    Tensor y = eval.observe(Tensor::matrix({{1.5, -2.0, 7.0}}));
    EXPECT_EQ(y.cols(), 1u);
    EXPECT_DOUBLE_EQ(y(0, 0), 1.5);
}

TEST(Observe, DecoderZeroFinalLayerGivesHalf) {
    auto p = init_params(small_ll(3, 2, 8), decoder_obs(9, {12}), 47);
    set_all(*p.find("g.w1"), 0.0);
    set_all(*p.find("g.b1"), 0.0);
    ModelEvaluator eval(p);
    Rng rng(53);
    Tensor y = eval.observe(rand_tensor(rng, 2, 3));
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_DOUBLE_EQ(y.at(i), 0.5);
}

TEST(Observe, DecoderOutputsStrictlyInsideUnitInterval) {
    auto p = init_params(small_fc(3, {8}), decoder_obs(16, {8}), 59);
    ModelEvaluator eval(p);
    Rng rng(61);
    Tensor y = eval.observe(rand_tensor(rng, 5, 3, -20.0, 20.0));
    for (std::size_t i = 0; i < y.size(); ++i) {
        EXPECT_GT(y.at(i), 0.0);
        EXPECT_LT(y.at(i), 1.0);
    }
}

TEST(Iterate, ZeroStepsReturnsInput) {
    auto p = init_params(small_ll(2, 2, 8), projection_obs({0}), 67);
    Graph g;
    ModelBinding bind(g, p);
    Tensor x = Tensor::matrix({{0.4, -0.2}});
    auto states = bind.iterate(g.input(x), 0);
    ASSERT_EQ(states.size(), 1u);
    EXPECT_EQ(g.value(states[0]), x);
}

TEST(Iterate, DoublingMapRollout) {
    // f(x) = 2x via the residual fully connected family with gamma(x) = x.
    TransitionSpec t = small_fc(1, {});
    auto p = init_params(t, projection_obs({0}), 71);
    p.find("f.w0")->value(0, 0) = 1.0;
    p.find("f.b0")->value(0, 0) = 0.0;
    Graph g;
    ModelBinding bind(g, p);
    auto states = bind.iterate(g.input(Tensor::matrix({{1.0}})), 3);
    ASSERT_EQ(states.size(), 4u);
    const double expected[] = {1.0, 2.0, 4.0, 8.0};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(g.value(states[i]).item(), expected[i]);
}

TEST(Iterate, CompositionIsBitwise) {
    auto p = init_params(small_ll(3, 3, 16), projection_obs(), 73);
    Rng rng(79);
    Tensor x = rand_tensor(rng, 2, 3);

    Graph g1;
    ModelBinding b1(g1, p);
    auto full = b1.iterate(g1.input(x), 7);

    Graph g2;
    ModelBinding b2(g2, p);
    auto first = b2.iterate(g2.input(x), 3);
    Tensor mid = g2.value(first.back());
    Graph g3;
    ModelBinding b3(g3, p);
    auto second = b3.iterate(g3.input(mid), 4);

    EXPECT_EQ(g1.value(full.back()), g3.value(second.back()));
}

TEST(Iterate, NonFiniteStateReportsStepIndex) {
    TransitionSpec t = small_fc(1, {});
    auto p = init_params(t, projection_obs({0}), 83);
    p.find("f.w0")->value(0, 0) = 1e200;  // explodes after two applications
    Graph g;
    ModelBinding bind(g, p);
    try {
        bind.iterate(g.input(Tensor::matrix({{1.0}})), 5);
        FAIL() << "expected numeric_error";
    } catch (const numeric_error& e) {
        EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos) << e.what();
    }
}

TEST(Gradients, ObserveAfterIterateBothFamilies) {
    Rng rng(89);
    for (int family = 0; family < 2; ++family) {
        TransitionSpec t = family == 0 ? small_fc(3, {6}) : small_ll(3, 2, 6);
        for (int obs = 0; obs < 2; ++obs) {
            ObservationSpec o = obs == 0 ? projection_obs({0, 2}) : decoder_obs(4, {5});
            auto p = init_params(t, o, 97 + family * 10 + obs);
            std::vector<Tensor> leaves = {rand_tensor(rng, 2, 3)};
            Tensor target = rand_tensor(rng, 2, o.measurement_dim(), 0.1, 0.9);
            auto build = [&](Graph& g, std::vector<Variable>& v) {
                ModelBinding bind(g, p);
                auto states = bind.iterate(g.leaf(v[0]), 5);
                return g.sum_sq(g.sub(bind.observe(states.back()), g.input(target)));
            };
            EXPECT_LT(compare_gradients(leaves, build).max_rel_err, 1e-5)
                << "family " << family << " obs " << obs;
        }
    }
}

TEST(Gradients, ThetaGradientsMatchFiniteDifferences) {
    // Gradient flow into the network weights through a 10-step rollout.
    auto p = init_params(small_ll(2, 2, 4), projection_obs({0}), 103);
    Rng rng(107);
    Tensor x0 = rand_tensor(rng, 1, 2);
    Tensor target = rand_tensor(rng, 1, 1);

    std::vector<Tensor> leaves;
    for (const auto& v : p.tensors) leaves.push_back(v.value);
    auto build = [&](Graph& g, std::vector<Variable>& v) {
        ModelBinding bind(g, p.transition, p.observation, v);
        auto states = bind.iterate(g.input(x0), 10);
        return g.sum_sq(g.sub(bind.observe(states.back()), g.input(target)));
    };
    auto result = compare_gradients(leaves, build);
    EXPECT_LT(result.max_rel_err, 1e-5) << "worst tensor " << p.tensors[result.worst_leaf].name;
}

TEST(Checkpoint, BitExactRoundTrip) {
    auto p = init_params(small_ll(3, 4, 8), decoder_obs(6, {7}), 109);
    std::vector<NamedTensor> named;
    for (const auto& v : p.tensors) named.push_back({v.name, v.value});

    std::string path = std::filesystem::temp_directory_path() / "msid_test_roundtrip.ssmp";
    save_ssmp(path, named);
    auto loaded = load_ssmp(path);
    ASSERT_EQ(loaded.size(), named.size());
    for (std::size_t i = 0; i < named.size(); ++i) {
        EXPECT_EQ(loaded[i].name, named[i].name);
        EXPECT_EQ(loaded[i].tensor, named[i].tensor);
    }
    std::remove(path.c_str());
}

TEST(Checkpoint, RejectsForeignFile) {
    std::string path = std::filesystem::temp_directory_path() / "msid_test_bad.ssmp";
    std::ofstream os(path, std::ios::binary);
    os << "not a checkpoint";
    os.close();
    EXPECT_THROW(load_ssmp(path), io_error);
    std::remove(path.c_str());
}

TEST(Specs, ValidationErrors) {
    TransitionSpec t = small_ll();
    t.state_dim = 0;
    EXPECT_THROW(t.validate(), std::invalid_argument);

    ObservationSpec o = projection_obs({0, 0});
    EXPECT_THROW(o.validate(3), std::invalid_argument);
    o = projection_obs({5});
    EXPECT_THROW(o.validate(3), std::invalid_argument);
}

TEST(Specs, DimensionMismatchAtForward) {
    auto p = init_params(small_ll(3, 2, 4), projection_obs(), 113);
    ModelEvaluator eval(p);
    EXPECT_THROW(eval.transition(Tensor::zeros(2, 4)), std::invalid_argument);
    EXPECT_THROW(eval.observe(Tensor::zeros(2, 4)), std::invalid_argument);
}
